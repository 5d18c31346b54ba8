#pragma once

// End-to-end comparison of the robust generator (lambda_r > 0) against the
// ablation baseline (lambda_r = 0) on every (dataset, backend) cell: model
// training, paired counterfactual generation, quality metrics, 1-NN fidelity
// and paired t-tests, plus the lambda_r grid search.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "dicex/cfgen.hpp"
#include "dicex/csv.hpp"
#include "dicex/data.hpp"
#include "dicex/fidelity.hpp"
#include "dicex/metrics.hpp"
#include "dicex/model.hpp"
#include "dicex/rng.hpp"
#include "dicex/stats.hpp"

namespace dicex {

enum class Backend { Mlp, Forest };

inline std::string to_string(Backend b) { return b == Backend::Mlp ? "mlp" : "forest"; }

inline Backend parse_backend(const std::string& s) {
  if (s == "mlp") return Backend::Mlp;
  if (s == "forest") return Backend::Forest;
  fail(ErrorCode::InvalidArgument, "unknown backend '" + s + "' (expected mlp or forest)");
}

struct DatasetSource {
  std::string name;
  std::string csv_path;
  std::string schema_path;
  // Use the bundled generator instead of files.
  bool synthetic = false;
  std::size_t synthetic_rows = 1000;
  std::uint64_t synthetic_seed = 7;

  static DatasetSource bundled(std::size_t rows = 1000, std::uint64_t seed = 7) {
    DatasetSource s;
    s.name = "synthetic";
    s.synthetic = true;
    s.synthetic_rows = rows;
    s.synthetic_seed = seed;
    return s;
  }

  Dataset load() const {
    if (synthetic) return make_synthetic_dataset(synthetic_rows, synthetic_seed);
    return load_csv(csv_path, load_schema(schema_path));
  }
};

struct ExperimentConfig {
  std::vector<DatasetSource> datasets{DatasetSource::bundled()};
  std::vector<Backend> backends{Backend::Mlp, Backend::Forest};
  std::size_t n_instances = 50;
  std::size_t k = 10;
  CfConfig cf;  // lambda_r here is the extended method's weight
  TrainConfig train;
  ForestConfig forest;
  double split_ratio = 0.8;
  // Share of the training split used for fitting; the rest drives early stopping.
  double fit_ratio = 0.9;
  std::size_t fidelity_count = kDefaultNeighborCount;
  std::vector<double> radii = kDefaultRadiusFactors;
  int robustness_trials = kDefaultRobustnessTrials;
  double sparsity_tol = kDefaultSparsityTol;
  double alpha = 0.05;
  std::vector<double> lambda_grid{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  bool run_grid = true;
  std::uint64_t master_seed = 0;
  std::size_t threads = 0;  // 0 = hardware concurrency

  void validate() const {
    require(!datasets.empty(), ErrorCode::InvalidArgument, "no datasets configured");
    require(!backends.empty(), ErrorCode::InvalidArgument, "no backends configured");
    require(n_instances >= 2, ErrorCode::InvalidArgument, "n_instances must be >= 2 for paired tests");
    require(k >= 1, ErrorCode::InvalidArgument, "k must be >= 1");
    require(split_ratio > 0 && split_ratio < 1 && fit_ratio > 0 && fit_ratio < 1, ErrorCode::InvalidArgument,
            "split ratios must be in (0,1)");
    require(fidelity_count >= 1 && !radii.empty(), ErrorCode::InvalidArgument, "invalid fidelity settings");
    for (double r : radii) require(r > 0, ErrorCode::InvalidArgument, "radius factors must be > 0");
    require(robustness_trials >= 1, ErrorCode::InvalidArgument, "robustness_trials must be >= 1");
    for (double l : lambda_grid) require(l >= 0 && l <= 1, ErrorCode::InvalidArgument, "grid values must be in [0,1]");
    for (const auto& d : datasets) {
      require(!d.name.empty(), ErrorCode::InvalidArgument, "dataset without a name");
      if (!d.synthetic) {
        require(std::filesystem::exists(d.csv_path), ErrorCode::Io, "missing data file " + d.csv_path);
        require(std::filesystem::exists(d.schema_path), ErrorCode::Io, "missing schema file " + d.schema_path);
      }
    }
    CfConfig probe = cf;
    probe.k = k;
    probe.validate();
    train.validate();
  }
};

// ---------------------------------------------------------------------------
// Config (de)serialization

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j, const std::filesystem::path& base = {}) {
  ExperimentConfig cfg;
  try {
    auto resolve = [&](const std::string& p) {
      std::filesystem::path path(p);
      if (path.is_relative() && !base.empty()) path = base / path;
      return path.string();
    };
    if (j.contains("datasets")) {
      cfg.datasets.clear();
      for (const auto& dj : j.at("datasets")) {
        DatasetSource s;
        s.name = dj.at("name").get<std::string>();
        if (dj.value("generator", std::string()) == "synthetic") {
          s.synthetic = true;
          s.synthetic_rows = dj.value("rows", std::size_t{1000});
          s.synthetic_seed = dj.value("seed", std::uint64_t{7});
        } else {
          s.csv_path = resolve(dj.at("csv").get<std::string>());
          s.schema_path = resolve(dj.at("schema").get<std::string>());
        }
        cfg.datasets.push_back(std::move(s));
      }
    }
    if (j.contains("backends")) {
      cfg.backends.clear();
      for (const auto& b : j.at("backends")) cfg.backends.push_back(parse_backend(b.get<std::string>()));
    }
    cfg.n_instances = j.value("n_instances", cfg.n_instances);
    cfg.k = j.value("k", cfg.k);
    cfg.master_seed = j.value("master_seed", cfg.master_seed);
    cfg.threads = j.value("threads", cfg.threads);
    cfg.split_ratio = j.value("split_ratio", cfg.split_ratio);
    cfg.fit_ratio = j.value("fit_ratio", cfg.fit_ratio);
    cfg.robustness_trials = j.value("robustness_trials", cfg.robustness_trials);
    cfg.sparsity_tol = j.value("sparsity_tol", cfg.sparsity_tol);
    cfg.alpha = j.value("alpha", cfg.alpha);
    cfg.run_grid = j.value("run_grid", cfg.run_grid);
    if (j.contains("lambda_grid")) cfg.lambda_grid = j.at("lambda_grid").get<std::vector<double>>();
    if (j.contains("fidelity")) {
      const auto& fj = j.at("fidelity");
      cfg.fidelity_count = fj.value("count", cfg.fidelity_count);
      if (fj.contains("radii")) cfg.radii = fj.at("radii").get<std::vector<double>>();
    }
    if (j.contains("cf")) {
      const auto& c = j.at("cf");
      cfg.cf.weights.lambda_p = c.value("lambda_p", cfg.cf.weights.lambda_p);
      cfg.cf.weights.lambda_d = c.value("lambda_d", cfg.cf.weights.lambda_d);
      cfg.cf.weights.lambda_r = c.value("lambda_r", cfg.cf.weights.lambda_r);
      cfg.cf.p_norm = c.value("p_norm", cfg.cf.p_norm);
      cfg.cf.max_iterations = c.value("max_iterations", cfg.cf.max_iterations);
      cfg.cf.learning_rate = c.value("learning_rate", cfg.cf.learning_rate);
      cfg.cf.perturbation_scale = c.value("perturbation_scale", cfg.cf.perturbation_scale);
      cfg.cf.binarize_threshold = c.value("binarize_threshold", cfg.cf.binarize_threshold);
      cfg.cf.soft_binarize_temperature = c.value("soft_binarize_temperature", cfg.cf.soft_binarize_temperature);
      cfg.cf.diag_jitter = c.value("diag_jitter", cfg.cf.diag_jitter);
      cfg.cf.convergence_tol = c.value("convergence_tol", cfg.cf.convergence_tol);
      if (c.value("literal_robustness_sign", false)) cfg.cf.robustness_sign = RobustnessSign::Literal;
    }
    if (j.contains("train")) {
      const auto& t = j.at("train");
      cfg.train.learning_rate = t.value("learning_rate", cfg.train.learning_rate);
      cfg.train.epochs = t.value("epochs", cfg.train.epochs);
      cfg.train.batch_train = t.value("batch_train", cfg.train.batch_train);
      cfg.train.batch_eval = t.value("batch_eval", cfg.train.batch_eval);
      cfg.train.early_stopping_patience = t.value("patience", cfg.train.early_stopping_patience);
      cfg.train.hidden = t.value("hidden", cfg.train.hidden);
    }
    if (j.contains("forest")) cfg.forest.n_estimators = j.at("forest").value("n_estimators", cfg.forest.n_estimators);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidArgument, std::string("bad experiment config: ") + e.what());
  }
  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::Io, "cannot open config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidArgument, path + ": " + e.what());
  }
  return experiment_config_from_json(j, std::filesystem::path(path).parent_path());
}

inline nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json datasets = nlohmann::json::array();
  for (const auto& d : cfg.datasets) {
    if (d.synthetic)
      datasets.push_back({{"name", d.name}, {"generator", "synthetic"}, {"rows", d.synthetic_rows},
                          {"seed", d.synthetic_seed}});
    else
      datasets.push_back({{"name", d.name}, {"csv", d.csv_path}, {"schema", d.schema_path}});
  }
  std::vector<std::string> backends;
  for (auto b : cfg.backends) backends.push_back(to_string(b));
  return {{"datasets", datasets},
          {"backends", backends},
          {"n_instances", cfg.n_instances},
          {"k", cfg.k},
          {"master_seed", cfg.master_seed},
          {"split_ratio", cfg.split_ratio},
          {"fit_ratio", cfg.fit_ratio},
          {"robustness_trials", cfg.robustness_trials},
          {"sparsity_tol", cfg.sparsity_tol},
          {"alpha", cfg.alpha},
          {"lambda_grid", cfg.lambda_grid},
          {"fidelity", {{"count", cfg.fidelity_count}, {"radii", cfg.radii}}},
          {"cf",
           {{"lambda_p", cfg.cf.weights.lambda_p},
            {"lambda_d", cfg.cf.weights.lambda_d},
            {"lambda_r", cfg.cf.weights.lambda_r},
            {"p_norm", cfg.cf.p_norm},
            {"max_iterations", cfg.cf.max_iterations},
            {"learning_rate", cfg.cf.learning_rate},
            {"perturbation_scale", cfg.cf.perturbation_scale},
            {"binarize_threshold", cfg.cf.binarize_threshold},
            {"soft_binarize_temperature", cfg.cf.soft_binarize_temperature},
            {"diag_jitter", cfg.cf.diag_jitter},
            {"convergence_tol", cfg.cf.convergence_tol},
            {"literal_robustness_sign", cfg.cf.robustness_sign == RobustnessSign::Literal}}},
          {"train",
           {{"learning_rate", cfg.train.learning_rate},
            {"epochs", cfg.train.epochs},
            {"batch_train", cfg.train.batch_train},
            {"batch_eval", cfg.train.batch_eval},
            {"patience", cfg.train.early_stopping_patience},
            {"hidden", cfg.train.hidden}}},
          {"forest", {{"n_estimators", cfg.forest.n_estimators}}}};
}

// ---------------------------------------------------------------------------
// Report types

inline const std::vector<std::string> kMethods{"baseline", "extended"};
inline const std::vector<std::string> kQualityMetrics{"validity", "proximity", "sparsity", "diversity", "robustness"};

struct InstanceResult {
  std::size_t test_index = 0;
  int desired_class = 1;
  bool found_valid = false;
  int iterations = 0;
  double final_total_loss = 0.0;
  double final_robustness_loss = 0.0;
  MetricsReport metrics;
  std::vector<double> fidelity;  // one per radius factor
  LossTrace trace;
};

struct MethodResult {
  std::string method;
  double lambda_r = 0.0;
  std::vector<InstanceResult> instances;

  std::vector<double> metric(const std::string& name) const {
    std::vector<double> out;
    for (const auto& r : instances) {
      const auto& m = r.metrics;
      if (name == "validity") out.push_back(m.validity);
      else if (name == "proximity") out.push_back(m.proximity);
      else if (name == "sparsity") out.push_back(m.sparsity);
      else if (name == "diversity") out.push_back(m.diversity);
      else if (name == "robustness") out.push_back(m.robustness);
      else if (name == "generation_time") out.push_back(m.generation_time);
      else fail(ErrorCode::InvalidArgument, "unknown metric " + name);
    }
    return out;
  }

  std::vector<double> fidelity_at(std::size_t radius_index) const {
    std::vector<double> out;
    for (const auto& r : instances) out.push_back(r.fidelity.at(radius_index));
    return out;
  }
};

struct NamedTest {
  std::string metric;
  bool degenerate = false;
  PairedTestResult result;  // only mean_difference is meaningful when degenerate
};

struct CellReport {
  std::string dataset;
  Backend backend = Backend::Mlp;
  bool ok = false;
  std::string error;
  double test_accuracy = 0.0;
  std::vector<MethodResult> methods;  // baseline, extended
  std::vector<NamedTest> tests;       // extended - baseline
  NamedTest time_test;
  double time_ratio = 0.0;            // mean extended time / mean baseline time

  const MethodResult& method(const std::string& name) const {
    for (const auto& m : methods)
      if (m.method == name) return m;
    fail(ErrorCode::InvalidArgument, "no method " + name);
  }

  const NamedTest& test(const std::string& metric) const {
    for (const auto& t : tests)
      if (t.metric == metric) return t;
    fail(ErrorCode::InvalidArgument, "no test for " + metric);
  }
};

struct GridRow {
  std::string dataset;
  Backend backend = Backend::Mlp;
  double lambda_r = 0.0;
  double robustness = 0.0;       // mean reported robustness score
  double robustness_loss = 0.0;  // mean final traced robustness loss
  double total_loss = 0.0;       // mean final traced total loss
  double validity = 0.0;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<CellReport> cells;
  std::vector<GridRow> grid;

  bool all_ok() const {
    return std::all_of(cells.begin(), cells.end(), [](const CellReport& c) { return c.ok; });
  }
};

// ---------------------------------------------------------------------------
// Pipeline

namespace detail {

inline constexpr std::uint64_t kSplitStream = 21;
inline constexpr std::uint64_t kFitStream = 22;
inline constexpr std::uint64_t kSampleStream = 23;
inline constexpr std::uint64_t kTrainStream = 24;
inline constexpr std::uint64_t kInstanceStream = 25;
inline constexpr std::uint64_t kEvalStream = 26;
inline constexpr std::uint64_t kFidelityStream = 27;

inline void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& body) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < n; i += threads) {
        try {
          body(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace detail

// Everything a cell needs after training: the model, the encoded layout, the
// sampled query rows and the training-split MAD.
struct PreparedCell {
  std::string dataset;
  std::size_t dataset_index = 0;
  Backend backend = Backend::Mlp;
  std::optional<TrainedModel> model;
  Layout layout;
  std::vector<double> mad;
  std::vector<std::size_t> test_indices;
  Matrix queries;
  double test_accuracy = 0.0;
  std::string error;
};

inline std::vector<PreparedCell> prepare_cells(const ExperimentConfig& cfg) {
  std::vector<PreparedCell> cells;
  for (std::size_t di = 0; di < cfg.datasets.size(); ++di) {
    const auto& source = cfg.datasets[di];
    std::optional<Dataset> train, fit, val, test;
    std::vector<std::size_t> picked;
    std::string data_error;
    try {
      const Dataset ds = source.load();
      auto [tr, te] = train_test_split(ds, cfg.split_ratio, derive_seed(cfg.master_seed, detail::kSplitStream, di));
      auto [f, v] = train_test_split(tr, cfg.fit_ratio, derive_seed(cfg.master_seed, detail::kFitStream, di));
      require(te.size() >= cfg.n_instances, ErrorCode::InvalidArgument,
              "test split has " + std::to_string(te.size()) + " rows, fewer than n_instances");
      std::vector<std::size_t> order(te.size());
      std::iota(order.begin(), order.end(), 0);
      Rng rng(derive_seed(cfg.master_seed, detail::kSampleStream, di));
      rng.shuffle(order);
      picked.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cfg.n_instances));
      train.emplace(std::move(tr));
      test.emplace(std::move(te));
      fit.emplace(std::move(f));
      val.emplace(std::move(v));
    } catch (const std::exception& e) {
      data_error = e.what();
    }
    for (auto backend : cfg.backends) {
      PreparedCell cell;
      cell.dataset = source.name;
      cell.dataset_index = di;
      cell.backend = backend;
      if (!data_error.empty()) {
        cell.error = data_error;
        cells.push_back(std::move(cell));
        continue;
      }
      try {
        cell.layout = train->layout();
        cell.mad = feature_mad(*train);
        cell.test_indices = picked;
        cell.queries = test->rows.select_rows(picked);
        const std::uint64_t seed = derive_seed(cfg.master_seed, detail::kTrainStream, di * 2 + (backend == Backend::Forest));
        if (backend == Backend::Mlp) {
          TrainConfig tc = cfg.train;
          tc.seed = seed;
          cell.model = train_mlp(*fit, *val, tc);
        } else {
          ForestConfig fc = cfg.forest;
          fc.seed = seed;
          cell.model = train_forest(*train, fc);
        }
        cell.test_accuracy = accuracy(as_predictor(*cell.model), *test);
      } catch (const std::exception& e) {
        cell.error = e.what();
        cell.model.reset();
      }
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

inline std::uint64_t instance_seed(const ExperimentConfig& cfg, const PreparedCell& cell, std::size_t i) {
  return derive_seed(cfg.master_seed, detail::kInstanceStream, cell.dataset_index * 1000003ULL + i);
}

inline CfConfig instance_cf_config(const ExperimentConfig& cfg, const PreparedCell& cell, std::size_t i,
                                   double lambda_r) {
  CfConfig c = cfg.cf;
  c.k = cfg.k;
  c.weights.lambda_r = lambda_r;
  c.seed = instance_seed(cfg, cell, i);
  c.desired_class = 1 - predict_class(as_predictor(*cell.model), cell.queries.row(i));
  return c;
}

// Generates and scores one instance. Both methods draw from the same seeds so
// the comparison is paired.
inline InstanceResult run_instance(const ExperimentConfig& cfg, const PreparedCell& cell, std::size_t i,
                                   double lambda_r, bool with_fidelity) {
  const auto& model = *cell.model;
  const auto& predictor = as_predictor(model);
  const CfConfig c = instance_cf_config(cfg, cell, i, lambda_r);
  const auto x = cell.queries.row(i);

  const auto start = std::chrono::steady_clock::now();
  CounterfactualSet set = generate(model, cell.layout, x, c);
  const auto stop = std::chrono::steady_clock::now();

  InstanceResult r;
  r.test_index = cell.test_indices[i];
  r.desired_class = c.desired_class;
  r.found_valid = set.found_valid;
  r.iterations = set.iterations;
  r.final_total_loss = set.trace.back().total_loss;
  r.final_robustness_loss = set.trace.back().robustness_loss;
  r.metrics = evaluate(set, predictor, cell.layout, c, cfg.robustness_trials, derive_seed(c.seed, detail::kEvalStream),
                       cfg.sparsity_tol);
  r.metrics.generation_time = std::chrono::duration<double>(stop - start).count();
  if (with_fidelity)
    for (std::size_t ri = 0; ri < cfg.radii.size(); ++ri)
      r.fidelity.push_back(fidelity_score(predictor, cell.layout, x, set.cfs, cell.mad, cfg.radii[ri],
                                          cfg.fidelity_count, derive_seed(c.seed, detail::kFidelityStream, ri)));
  r.trace = std::move(set.trace);
  return r;
}

inline NamedTest named_test(const std::string& metric, const std::vector<double>& extended,
                            const std::vector<double>& baseline, double alpha) {
  NamedTest t;
  t.metric = metric;
  try {
    t.result = paired_t_test(extended, baseline, alpha);
  } catch (const DegenerateDifferencesError& e) {
    t.degenerate = true;
    t.result.mean_difference = e.mean_difference();
    t.result.degrees_of_freedom = static_cast<int>(extended.size()) - 1;
  }
  return t;
}

inline CellReport run_cell(const ExperimentConfig& cfg, const PreparedCell& cell) {
  CellReport report;
  report.dataset = cell.dataset;
  report.backend = cell.backend;
  report.test_accuracy = cell.test_accuracy;
  if (!cell.model) {
    report.error = cell.error;
    return report;
  }
  try {
    const double lambdas[] = {0.0, cfg.cf.weights.lambda_r};
    for (std::size_t m = 0; m < 2; ++m) {
      MethodResult method;
      method.method = kMethods[m];
      method.lambda_r = lambdas[m];
      method.instances.resize(cell.queries.rows());
      detail::parallel_for(cell.queries.rows(), cfg.threads, [&](std::size_t i) {
        method.instances[i] = run_instance(cfg, cell, i, lambdas[m], true);
      });
      report.methods.push_back(std::move(method));
    }
    const auto& base = report.methods[0];
    const auto& ext = report.methods[1];
    for (const auto& metric : kQualityMetrics)
      report.tests.push_back(named_test(metric, ext.metric(metric), base.metric(metric), cfg.alpha));
    for (std::size_t ri = 0; ri < cfg.radii.size(); ++ri)
      report.tests.push_back(named_test("fidelity@" + csv::format_double(cfg.radii[ri]), ext.fidelity_at(ri),
                                        base.fidelity_at(ri), cfg.alpha));
    const auto tb = base.metric("generation_time");
    const auto te = ext.metric("generation_time");
    report.time_test = named_test("generation_time", te, tb, cfg.alpha);
    const double mb = std::accumulate(tb.begin(), tb.end(), 0.0);
    const double me = std::accumulate(te.begin(), te.end(), 0.0);
    report.time_ratio = mb > 0 ? me / mb : 0.0;
    report.ok = true;
  } catch (const std::exception& e) {
    report.ok = false;
    report.error = e.what();
    report.methods.clear();
    report.tests.clear();
  }
  return report;
}

inline std::vector<GridRow> grid_search_lambda_r(const ExperimentConfig& cfg, const std::vector<PreparedCell>& cells,
                                                 const std::vector<double>& grid) {
  for (double l : grid) require(l >= 0 && l <= 1, ErrorCode::InvalidArgument, "grid values must be in [0,1]");
  std::vector<GridRow> rows;
  for (const auto& cell : cells) {
    if (!cell.model) continue;
    for (double lambda : grid) {
      std::vector<InstanceResult> results(cell.queries.rows());
      detail::parallel_for(cell.queries.rows(), cfg.threads,
                           [&](std::size_t i) { results[i] = run_instance(cfg, cell, i, lambda, false); });
      GridRow row;
      row.dataset = cell.dataset;
      row.backend = cell.backend;
      row.lambda_r = lambda;
      for (const auto& r : results) {
        row.robustness += r.metrics.robustness;
        row.robustness_loss += r.final_robustness_loss;
        row.total_loss += r.final_total_loss;
        row.validity += r.metrics.validity;
      }
      const double n = static_cast<double>(results.size());
      row.robustness /= n;
      row.robustness_loss /= n;
      row.total_loss /= n;
      row.validity /= n;
      rows.push_back(row);
    }
  }
  return rows;
}

inline std::vector<GridRow> grid_search_lambda_r(const ExperimentConfig& cfg, const std::vector<double>& grid) {
  cfg.validate();
  return grid_search_lambda_r(cfg, prepare_cells(cfg), grid);
}

inline ExperimentReport run_experiment(const ExperimentConfig& cfg, bool with_grid) {
  cfg.validate();
  ExperimentReport report;
  report.config = cfg;
  const auto cells = prepare_cells(cfg);
  for (const auto& cell : cells) report.cells.push_back(run_cell(cfg, cell));
  if (with_grid) report.grid = grid_search_lambda_r(cfg, cells, cfg.lambda_grid);
  return report;
}

inline ExperimentReport run_experiment(const ExperimentConfig& cfg) { return run_experiment(cfg, false); }

// ---------------------------------------------------------------------------
// Output

inline nlohmann::json to_json(const NamedTest& t) {
  nlohmann::json j{{"metric", t.metric}, {"mean_difference", t.result.mean_difference},
                   {"degrees_of_freedom", t.result.degrees_of_freedom}, {"degenerate", t.degenerate}};
  if (t.degenerate) {
    j["t_statistic"] = nullptr;
    j["p_value"] = nullptr;
    j["p_value_sci"] = nullptr;
    j["significant"] = false;
    j["bold"] = false;
  } else {
    j["t_statistic"] = t.result.t_statistic;
    j["p_value"] = t.result.p_value;
    j["p_value_sci"] = format_p_value(t.result.p_value);
    j["significant"] = t.result.significant;
    j["bold"] = t.result.p_value < 0.05;
  }
  return j;
}

inline FidelityReport fidelity_report(const MethodResult& m, const std::vector<double>& radii) {
  FidelityReport out;
  for (std::size_t ri = 0; ri < radii.size(); ++ri) {
    const auto s = summarize(m.fidelity_at(ri));
    out.push_back({radii[ri], s.mean, s.std});
  }
  return out;
}

// The deterministic part of the report; wall-clock timings are kept out so
// identical seeds give byte-identical output.
inline nlohmann::json report_to_json(const ExperimentReport& report) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& cell : report.cells) {
    nlohmann::json cj{{"dataset", cell.dataset}, {"backend", to_string(cell.backend)},
                      {"status", cell.ok ? "ok" : "failed"}, {"test_accuracy", cell.test_accuracy}};
    if (!cell.ok) {
      cj["error"] = cell.error;
      cells.push_back(std::move(cj));
      continue;
    }
    nlohmann::json methods = nlohmann::json::object();
    for (const auto& m : cell.methods) {
      nlohmann::json agg = nlohmann::json::object();
      for (const auto& metric : kQualityMetrics) {
        const auto s = summarize(m.metric(metric));
        agg[metric] = {{"mean", s.mean}, {"std", s.std}};
      }
      nlohmann::json fid = nlohmann::json::array();
      for (const auto& f : fidelity_report(m, report.config.radii))
        fid.push_back({{"radius", f.radius_factor}, {"mean", f.mean}, {"std", f.std}});
      nlohmann::json instances = nlohmann::json::array();
      for (const auto& r : m.instances)
        instances.push_back({{"test_index", r.test_index},
                             {"desired_class", r.desired_class},
                             {"found_valid", r.found_valid},
                             {"iterations", r.iterations},
                             {"final_total_loss", r.final_total_loss},
                             {"metrics", to_json(r.metrics, false)},
                             {"fidelity", r.fidelity}});
      methods[m.method] = {{"lambda_r", m.lambda_r}, {"aggregate", agg}, {"fidelity", fid}, {"instances", instances}};
    }
    cj["methods"] = std::move(methods);
    nlohmann::json tests = nlohmann::json::array();
    for (const auto& t : cell.tests) tests.push_back(to_json(t));
    cj["paired_tests"] = std::move(tests);
    cells.push_back(std::move(cj));
  }
  nlohmann::json grid = nlohmann::json::array();
  for (const auto& g : report.grid)
    grid.push_back({{"dataset", g.dataset}, {"backend", to_string(g.backend)}, {"lambda_r", g.lambda_r},
                    {"robustness", g.robustness}, {"robustness_loss", g.robustness_loss},
                    {"total_loss", g.total_loss}, {"validity", g.validity}});
  return {{"format", "dicex-report"}, {"version", 1}, {"config", experiment_config_to_json(report.config)},
          {"cells", cells}, {"grid_lambda_r", grid}};
}

inline nlohmann::json timing_to_json(const ExperimentReport& report) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& cell : report.cells) {
    if (!cell.ok) continue;
    nlohmann::json cj{{"dataset", cell.dataset}, {"backend", to_string(cell.backend)}, {"time_ratio", cell.time_ratio},
                      {"paired_test", to_json(cell.time_test)}};
    for (const auto& m : cell.methods) {
      const auto s = summarize(m.metric("generation_time"));
      cj["mean_time_" + m.method] = s.mean;
    }
    cells.push_back(std::move(cj));
  }
  return {{"cells", cells}};
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::Io, "cannot write " + path.string());
  out << text;
  require(static_cast<bool>(out), ErrorCode::Io, "write failed for " + path.string());
}

inline void write_grid_csv(std::ostream& out, const std::vector<GridRow>& grid) {
  out << "dataset,backend,lambda_r,robustness,robustness_loss,total_loss,validity\n";
  for (const auto& g : grid)
    csv::write_row(out, {g.dataset, to_string(g.backend), csv::format_double(g.lambda_r),
                         csv::format_double(g.robustness), csv::format_double(g.robustness_loss),
                         csv::format_double(g.total_loss), csv::format_double(g.validity)});
}

// Writes report.json, timing.json, metrics.csv, fidelity.csv, traces/ and,
// when a grid was run, grid_lambda_r.csv.
inline void write_report(const ExperimentReport& report, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "traces");
  write_text(dir / "report.json", report_to_json(report).dump(2) + "\n");
  write_text(dir / "timing.json", timing_to_json(report).dump(2) + "\n");

  std::ofstream metrics(dir / "metrics.csv");
  std::ofstream fidelity(dir / "fidelity.csv");
  require(metrics && fidelity, ErrorCode::Io, "cannot write CSV outputs in " + dir.string());
  metrics << "dataset,backend,method,instance,validity,proximity,sparsity,diversity,robustness,generation_time\n";
  fidelity << "dataset,backend,method,radius,mean,std\n";
  for (const auto& cell : report.cells) {
    if (!cell.ok) continue;
    const auto backend = to_string(cell.backend);
    for (const auto& m : cell.methods) {
      for (std::size_t i = 0; i < m.instances.size(); ++i) {
        const auto& r = m.instances[i].metrics;
        csv::write_row(metrics, {cell.dataset, backend, m.method, std::to_string(i), csv::format_double(r.validity),
                                 csv::format_double(r.proximity), csv::format_double(r.sparsity),
                                 csv::format_double(r.diversity), csv::format_double(r.robustness),
                                 csv::format_double(r.generation_time)});
      }
      for (const auto& f : fidelity_report(m, report.config.radii))
        csv::write_row(fidelity, {cell.dataset, backend, m.method, csv::format_double(f.radius_factor),
                                  csv::format_double(f.mean), csv::format_double(f.std)});
      if (m.method != "extended") continue;
      for (std::size_t i = 0; i < m.instances.size(); ++i) {
        std::ofstream trace(dir / "traces" / (cell.dataset + "_" + backend + "_" + std::to_string(i) + ".csv"));
        require(static_cast<bool>(trace), ErrorCode::Io, "cannot write trace file");
        write_trace_csv(trace, m.instances[i].trace);
      }
    }
  }
  if (!report.grid.empty()) {
    std::ofstream grid(dir / "grid_lambda_r.csv");
    require(static_cast<bool>(grid), ErrorCode::Io, "cannot write grid_lambda_r.csv");
    write_grid_csv(grid, report.grid);
  }
}

}  // namespace dicex
