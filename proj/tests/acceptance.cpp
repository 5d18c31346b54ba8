// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.
#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dicex_cli.hpp"
#include "support/checks.hpp"

using namespace dicex;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) { return std::chrono::duration<double>(Clock::now() - start).count(); }

int failures = 0;

void report(int n, bool ok, const std::string& detail) {
  std::printf("%s criterion %d: %s\n", ok ? "PASS" : "FAIL", n, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

const fs::path kSource{DICEX_SOURCE_DIR};

ExperimentConfig desk_config() { return load_experiment_config((kSource / "configs" / "desk.json").string()); }

void math_oracles() {
  const auto start = Clock::now();
  struct Item {
    const char* name;
    checks::OracleSummary s;
    double tol;
  };
  const std::vector<Item> items{
      {"dice", checks::dice_vs_oracle(60, 8), 0.0},
      {"kernel", checks::kernel_vs_oracle(40, 5), 1e-15},
      {"determinant", checks::determinant_vs_cofactor(60, 7), 1e-10},
      {"sparsity", checks::sparsity_vs_oracle(40, 4), 1e-15},
      {"proximity", checks::proximity_vs_oracle(40, 3), 1e-14},
      {"mad", checks::mad_vs_oracle(50, 17), 1e-12},
      {"summarize", checks::summarize_vs_oracle(40, 21), 1e-12},
  };
  const double elapsed = seconds_since(start);
  bool ok = elapsed < 10.0;
  std::string bad;
  for (const auto& it : items)
    if (it.s.fixtures < 20 || it.s.worst > it.tol) {
      ok = false;
      bad += std::string(" ") + it.name;
    }
  report(1, ok, fmt("7 oracle suites, >= 40 fixtures each, %.2f s", elapsed) + (bad.empty() ? "" : "; mismatch:" + bad));
}

void gradient() {
  const auto start = Clock::now();
  const auto s = checks::total_gradient_vs_fd(50, 12);
  const double elapsed = seconds_since(start);
  report(2, s.fixtures == 50 && s.worst < 1e-4 && elapsed < 30.0,
         fmt("50 configs, worst relative error %.2e, %.2f s", s.worst, elapsed));
}

void ttest() {
  double worst = 0.0;
  int n = 0;
  for (const auto& f : checks::ttest_fixtures()) {
    const auto r = paired_t_test(f.a, f.b);
    worst = std::max({worst, std::abs(r.t_statistic - f.t) / std::max(1.0, std::abs(f.t)), std::abs(r.p_value - f.p)});
    if (r.degrees_of_freedom != f.dof) worst = 1.0;
    ++n;
  }
  report(3, n == 10 && worst < 1e-6, fmt("%.0f fixtures, worst deviation %.2e", n, worst));
}

void desk_mlp() {
  auto cfg = desk_config();
  cfg.backends = {Backend::Mlp};
  const auto start = Clock::now();
  const auto r = run_experiment(cfg);
  const double elapsed = seconds_since(start);
  const auto& cell = r.cells.at(0);
  if (!cell.ok) {
    report(4, false, "mlp cell failed: " + cell.error);
    report(5, false, "mlp cell failed");
    return;
  }
  const double vb = summarize(cell.method("baseline").metric("validity")).mean;
  const double ve = summarize(cell.method("extended").metric("validity")).mean;
  report(4, vb >= 0.95 && ve >= 0.95 && elapsed < 120.0,
         fmt("validity %.3f at lambda_r 0, %.3f at 0.4, %.1f s", vb, ve, elapsed));
  const auto& t = cell.test("robustness");
  const bool ok5 = !t.degenerate && t.result.mean_difference > 0 && t.result.p_value < 0.05;
  report(5, ok5, fmt("robustness gain %.4f, p = %.2e", t.result.mean_difference,
                     t.degenerate ? 1.0 : t.result.p_value));
}

void trace_convergence() {
  auto cfg = desk_config();
  cfg.backends = {Backend::Mlp};
  cfg.cf.max_iterations = 200;
  cfg.cf.convergence_tol = 0.0;
  const auto cells = prepare_cells(cfg);
  const auto& cell = cells.at(0);
  if (!cell.model) {
    report(6, false, "mlp cell failed: " + cell.error);
    return;
  }
  int stable = 0, full = 0;
  const auto n = cell.queries.rows();
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = run_instance(cfg, cell, i, cfg.cf.weights.lambda_r, false);
    const auto& tr = r.trace;
    full += tr.size() == 201;
    const double a = tr[tr.size() - 11].robustness_loss, b = tr.back().robustness_loss;
    const double rel = a == b ? 0.0 : std::abs(b - a) / std::abs(a);
    stable += rel < 0.01;
  }
  const double share = static_cast<double>(stable) / static_cast<double>(n);
  report(6, share >= 0.9 && full == static_cast<int>(n),
         fmt("%.0f of %.0f traces change < 1%% over the last 10 of 200 iterations", stable, static_cast<double>(n)));
}

void constant_fidelity(const fs::path& bench_dir) {
  const auto ds = make_synthetic_dataset(1000, 7);
  const auto mad = feature_mad(ds);
  const ConstantPredictor model(0.8);
  std::mt19937_64 gen(11);
  bool all_one = true;
  for (int n = 0; n < 10; ++n) {
    const auto x = checks::random_encoded(gen, ds.layout());
    Matrix cfs(0, x.size());
    for (int i = 0; i < 10; ++i) cfs.append_row(checks::random_encoded(gen, ds.layout()));
    for (double r : kDefaultRadiusFactors)
      all_one = all_one && fidelity_score(model, ds.layout(), x, cfs, mad, r, kDefaultNeighborCount, gen()) == 1.0;
  }
  const auto table = csv::read_file((bench_dir / "fidelity.csv").string());
  const bool shape = table.header == std::vector<std::string>{"dataset", "backend", "method", "radius", "mean", "std"} &&
                     table.rows.size() == 1 * 2 * 2 * 3;
  report(7, all_one && shape,
         fmt("constant model fidelity %.3f at all radii; fidelity.csv has %.0f rows", all_one ? 1.0 : 0.0,
             static_cast<double>(table.rows.size())));
}

void time_ratio(const fs::path& bench_dir) {
  const auto j = nlohmann::json::parse(slurp(bench_dir / "timing.json"));
  double worst = 0.0;
  std::string detail;
  for (const auto& c : j.at("cells")) {
    const double r = c.at("time_ratio").get<double>();
    worst = std::max(worst, r);
    detail += " " + c.at("backend").get<std::string>() + fmt(" %.2fx", r);
  }
  report(8, j.at("cells").size() == 2 && worst < 2.0, "generation time ratio" + detail);
}

}  // namespace

int main() {
  const auto root = fs::temp_directory_path() / "dicex_acceptance";
  fs::remove_all(root);
  const auto config = (kSource / "configs" / "desk.json").string();

  math_oracles();
  gradient();
  ttest();
  desk_mlp();
  trace_convergence();

  std::ostringstream log, err;
  const auto start = Clock::now();
  const int code_a = cli::run_cli({"bench", "--config", config, "--out", (root / "a").string()}, log, err);
  const double full = seconds_since(start);
  const int code_b = cli::run_cli({"bench", "--config", config, "--out", (root / "b").string()}, log, err);

  constant_fidelity(root / "a");
  time_ratio(root / "a");
  const auto ra = slurp(root / "a" / "report.json"), rb = slurp(root / "b" / "report.json");
  report(9, code_a == 0 && code_b == 0 && !ra.empty() && ra == rb,
         fmt("two bench runs, report.json %.0f bytes, identical = %.0f", static_cast<double>(ra.size()), ra == rb));
  const auto grid = csv::read_file((root / "a" / "grid_lambda_r.csv").string());
  report(10, code_a == 0 && full < 300.0 && grid.rows.size() == 2 * 6,
         fmt("full desk bench with %.0f grid rows in %.1f s", static_cast<double>(grid.rows.size()), full) +
             (err.str().empty() ? "" : "; " + err.str()));

  fs::remove_all(root);
  return failures == 0 ? 0 : 1;
}
