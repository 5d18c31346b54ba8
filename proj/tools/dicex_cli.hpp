#pragma once

// Command-line front end. `run_cli` is kept separate from main() so the test
// suites can drive the subcommands in-process.
//
// Exit codes: 0 ok, 1 usage error, 2 I/O or data error, 3 training failure,
// 4 no valid counterfactual, 5 benchmark cell failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dicex/dicex.hpp"

namespace dicex::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kIo = 2,
  kTraining = 3,
  kNoValid = 4,
  kCellFailed = 5,
};

inline int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::DimensionMismatch:
      return kUsage;
    case ErrorCode::TrainingFailure:
    case ErrorCode::NonFiniteLoss:
      return kTraining;
    default:
      return kIo;
  }
}

inline std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  for (const auto& field : csv::split_line(text)) out.push_back(parse_number(field, "list value"));
  return out;
}

struct Options {
  std::string data, schema, model, out, config, instance, cfs, backend = "mlp";
  int row = -1;
  std::size_t k = 10;
  double lambda_p = 0.5, lambda_d = 1.0, lambda_r = 0.4;
  std::uint64_t seed = 0;
  std::size_t instances = 50;
  int trials = kDefaultRobustnessTrials;
  std::string radii = "0.5,1,2";
  std::string grid = "0,0.2,0.4,0.6,0.8,1";
  std::size_t neighbors = kDefaultNeighborCount;
  int epochs = 10;
  double train_lr = 0.001;
  std::size_t batch = 16, eval_batch = 4, hidden = 32, trees = 100;
  int patience = 3;
  double split = 0.8;
  int max_iterations = 500;
  double cf_lr = 0.05;
  double perturbation = 0.05;
  int p_norm = 1;
  bool encoded = false;
  bool literal_sign = false;
  std::size_t rows = 1000;
  std::size_t threads = 0;
};

namespace detail {

inline Dataset load_dataset(const Options& o) {
  require(!o.schema.empty(), ErrorCode::Io, "--schema is required");
  require(std::filesystem::exists(o.schema), ErrorCode::Io, "schema not found: " + o.schema);
  require(std::filesystem::exists(o.data), ErrorCode::Io, "data not found: " + o.data);
  return load_csv(o.data, load_schema(o.schema));
}

inline std::vector<double> query_row(const Options& o, const Encoder& encoder) {
  if (!o.instance.empty()) return encoder.encode_text(csv::split_line(o.instance));
  require(!o.data.empty() && o.row >= 0, ErrorCode::InvalidArgument, "give --instance or --data with --row");
  const auto table = csv::read_file(o.data);
  require(static_cast<std::size_t>(o.row) < table.rows.size(), ErrorCode::InvalidArgument, "--row out of range");
  std::vector<std::string> fields;
  for (const auto& f : encoder.schema().features) {
    const auto it = std::find(table.header.begin(), table.header.end(), f.name);
    require(it != table.header.end(), ErrorCode::MissingColumn, "CSV lacks column '" + f.name + "'");
    fields.push_back(table.rows[static_cast<std::size_t>(o.row)][static_cast<std::size_t>(it - table.header.begin())]);
  }
  return encoder.encode_text(fields);
}

inline CfConfig cf_config(const Options& o) {
  CfConfig c;
  c.k = o.k;
  c.weights = {o.lambda_p, o.lambda_d, o.lambda_r};
  c.seed = o.seed;
  c.max_iterations = o.max_iterations;
  c.learning_rate = o.cf_lr;
  c.perturbation_scale = o.perturbation;
  c.p_norm = o.p_norm;
  if (o.literal_sign) c.robustness_sign = RobustnessSign::Literal;
  return c;
}

inline void write_cfs(std::ostream& out, const CounterfactualSet& set, const Encoder& encoder, bool encoded) {
  std::vector<std::string> header;
  if (encoded) {
    for (std::size_t j = 0; j < set.cfs.cols(); ++j) header.push_back("e" + std::to_string(j));
  } else {
    for (const auto& f : encoder.schema().features) header.push_back(f.name);
  }
  header.push_back("predicted_class");
  header.push_back("valid");
  csv::write_row(out, header);
  for (std::size_t i = 0; i < set.cfs.rows(); ++i) {
    std::vector<std::string> fields;
    if (encoded) {
      for (double v : set.cfs.row(i)) fields.push_back(csv::format_double(v));
    } else {
      for (const auto& v : encoder.decode(set.cfs.row(i))) fields.push_back(to_string(v));
    }
    fields.push_back(std::to_string(set.achieved_class[i]));
    fields.push_back(set.achieved_class[i] == set.desired_class ? "1" : "0");
    csv::write_row(out, fields);
  }
}

// Reads counterfactual rows (raw units, schema column names) from a CSV.
inline Matrix read_cfs(const std::string& path, const Encoder& encoder) {
  const auto table = csv::read_file(path);
  Matrix cfs(0, encoder.encoded_width());
  for (const auto& row : table.rows) {
    std::vector<std::string> fields;
    for (const auto& f : encoder.schema().features) {
      const auto it = std::find(table.header.begin(), table.header.end(), f.name);
      require(it != table.header.end(), ErrorCode::MissingColumn, path + " lacks column '" + f.name + "'");
      fields.push_back(row[static_cast<std::size_t>(it - table.header.begin())]);
    }
    cfs.append_row(encoder.encode_text(fields));
  }
  return cfs;
}

inline nlohmann::json metrics_json(const MetricsReport& m, const FidelityReport& fid) {
  auto j = to_json(m);
  nlohmann::json f = nlohmann::json::array();
  for (const auto& r : fid) f.push_back({{"radius", r.radius_factor}, {"fidelity", r.mean}});
  j["fidelity"] = f;
  return j;
}

inline FidelityReport single_fidelity(const Predictor& p, const Layout& layout, std::span<const double> x,
                                      const Matrix& cfs, const std::vector<double>& mad,
                                      const std::vector<double>& radii, std::size_t count, std::uint64_t seed) {
  FidelityReport out;
  for (std::size_t i = 0; i < radii.size(); ++i)
    out.push_back({radii[i], fidelity_score(p, layout, x, cfs, mad, radii[i], count, derive_seed(seed, 27, i)), 0.0});
  return out;
}

inline void print_metrics(std::ostream& os, const MetricsReport& m) {
  os << "validity " << m.validity << "\nproximity " << m.proximity << "\nsparsity " << m.sparsity
     << "\ndiversity " << m.diversity << "\nrobustness " << m.robustness << '\n';
}

// ---------------------------------------------------------------------------
// Subcommands

inline int cmd_synth(const Options& o, std::ostream& os) {
  const auto ds = make_synthetic_dataset(o.rows, o.seed == 0 ? 7 : o.seed);
  std::filesystem::create_directories(o.out);
  {
    std::ofstream out(std::filesystem::path(o.out) / "synthetic.csv");
    require(static_cast<bool>(out), ErrorCode::Io, "cannot write synthetic.csv");
    write_csv(out, ds);
  }
  write_text(std::filesystem::path(o.out) / "synthetic.schema.json", schema_to_json(ds.schema()).dump(2) + "\n");
  os << "wrote " << ds.size() << " rows to " << o.out << '\n';
  return kOk;
}

inline int cmd_train(const Options& o, std::ostream& os) {
  const Dataset ds = load_dataset(o);
  auto [train, test] = train_test_split(ds, o.split, derive_seed(o.seed, 21));
  ModelBundle bundle{MlpModel{}, train.schema(), feature_mad(train)};
  const Backend backend = parse_backend(o.backend);
  if (backend == Backend::Mlp) {
    TrainConfig tc;
    tc.learning_rate = o.train_lr;
    tc.epochs = o.epochs;
    tc.batch_train = o.batch;
    tc.batch_eval = o.eval_batch;
    tc.early_stopping_patience = o.patience;
    tc.hidden = o.hidden;
    tc.seed = o.seed;
    auto [fit, val] = train_test_split(train, 0.9, derive_seed(o.seed, 22));
    std::vector<EpochLog> history;
    bundle.model = train_mlp(fit, val, tc, &history);
    for (const auto& h : history)
      os << "epoch " << h.epoch << " train_loss " << h.train_loss << " val_loss " << h.val_loss << " val_accuracy "
         << h.val_accuracy << '\n';
  } else {
    ForestConfig fc;
    fc.n_estimators = o.trees;
    fc.seed = o.seed;
    bundle.model = train_forest(train, fc);
  }
  const double acc = accuracy(as_predictor(bundle.model), test);
  save_bundle(bundle, o.out);
  os << "held-out accuracy " << acc << '\n' << "model written to " << o.out << '\n';
  return kOk;
}

inline int cmd_explain(const Options& o, std::ostream& os) {
  require(std::filesystem::exists(o.model), ErrorCode::Io, "model not found: " + o.model);
  const auto bundle = load_bundle(o.model);
  const Encoder encoder(bundle.schema);
  const auto x = query_row(o, encoder);
  const auto& predictor = as_predictor(bundle.model);
  CfConfig c = cf_config(o);
  c.desired_class = 1 - predict_class(predictor, x);
  const auto start = std::chrono::steady_clock::now();
  const auto set = generate(bundle.model, encoder.layout(), x, c);
  const auto stop = std::chrono::steady_clock::now();
  auto metrics = evaluate(set, predictor, encoder.layout(), c, o.trials, derive_seed(o.seed, 26));
  metrics.generation_time = std::chrono::duration<double>(stop - start).count();

  const std::filesystem::path dir(o.out);
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "counterfactuals.csv");
    std::ofstream trace(dir / "trace.csv");
    require(out && trace, ErrorCode::Io, "cannot write into " + o.out);
    write_cfs(out, set, encoder, o.encoded);
    write_trace_csv(trace, set.trace);
  }
  auto j = to_json(metrics);
  j["desired_class"] = set.desired_class;
  j["found_valid"] = set.found_valid;
  j["iterations"] = set.iterations;
  write_text(dir / "metrics.json", j.dump(2) + "\n");

  os << "desired class " << set.desired_class << ", " << set.cfs.rows() << " counterfactuals written to " << o.out
     << '\n';
  print_metrics(os, metrics);
  if (!set.found_valid) {
    os << "no valid counterfactual found; best-effort set written\n";
    return kNoValid;
  }
  return kOk;
}

inline int cmd_evaluate(const Options& o, std::ostream& os) {
  require(std::filesystem::exists(o.model), ErrorCode::Io, "model not found: " + o.model);
  require(std::filesystem::exists(o.cfs), ErrorCode::Io, "counterfactual file not found: " + o.cfs);
  const auto bundle = load_bundle(o.model);
  const Encoder encoder(bundle.schema);
  const auto x = query_row(o, encoder);
  const auto& predictor = as_predictor(bundle.model);
  CounterfactualSet set;
  set.cfs = read_cfs(o.cfs, encoder);
  require(set.cfs.rows() >= 1, ErrorCode::EmptyInput, "no counterfactual rows in " + o.cfs);
  set.origin = x;
  set.desired_class = 1 - predict_class(predictor, x);
  CfConfig c = cf_config(o);
  c.desired_class = set.desired_class;
  const auto metrics = evaluate(set, predictor, encoder.layout(), c, o.trials, derive_seed(o.seed, 26));
  const auto fid = single_fidelity(predictor, encoder.layout(), x, set.cfs, bundle.feature_mad, parse_list(o.radii),
                                   o.neighbors, o.seed);
  const auto j = metrics_json(metrics, fid);
  if (!o.out.empty()) write_text(o.out, j.dump(2) + "\n");
  os << j.dump(2) << '\n';
  return kOk;
}

inline ExperimentConfig bench_config(const Options& o, const CLI::App& sub) {
  ExperimentConfig cfg = o.config.empty() ? ExperimentConfig{} : load_experiment_config(o.config);
  auto given = [&](const char* flag) { return sub.count(flag) > 0; };
  if (given("--data") || given("--schema")) {
    DatasetSource s;
    s.name = std::filesystem::path(o.data).stem().string();
    s.csv_path = o.data;
    s.schema_path = o.schema;
    cfg.datasets = {s};
  }
  if (given("--backend")) cfg.backends = {parse_backend(o.backend)};
  if (given("--instances")) cfg.n_instances = o.instances;
  if (given("--k")) cfg.k = o.k;
  if (given("--lambda-p")) cfg.cf.weights.lambda_p = o.lambda_p;
  if (given("--lambda-d")) cfg.cf.weights.lambda_d = o.lambda_d;
  if (given("--lambda-r")) cfg.cf.weights.lambda_r = o.lambda_r;
  if (given("--seed")) cfg.master_seed = o.seed;
  if (given("--trials")) cfg.robustness_trials = o.trials;
  if (given("--radii")) cfg.radii = parse_list(o.radii);
  if (given("--neighbors")) cfg.fidelity_count = o.neighbors;
  if (given("--grid")) cfg.lambda_grid = parse_list(o.grid);
  if (given("--max-iterations")) cfg.cf.max_iterations = o.max_iterations;
  if (given("--threads")) cfg.threads = o.threads;
  return cfg;
}

inline int cmd_bench(const Options& o, const CLI::App& sub, std::ostream& os) {
  const auto cfg = bench_config(o, sub);
  const auto report = run_experiment(cfg, cfg.run_grid);
  write_report(report, o.out);
  for (const auto& cell : report.cells) {
    os << cell.dataset << '/' << to_string(cell.backend) << ": " << (cell.ok ? "ok" : "FAILED " + cell.error);
    if (cell.ok) {
      const auto& rob = cell.test("robustness");
      os << ", robustness diff " << rob.result.mean_difference;
      if (!rob.degenerate) os << " (p=" << format_p_value(rob.result.p_value) << ")";
      os << ", time ratio " << cell.time_ratio;
    }
    os << '\n';
  }
  os << "report written to " << o.out << '\n';
  return report.all_ok() ? kOk : kCellFailed;
}

inline int cmd_grid(const Options& o, const CLI::App& sub, std::ostream& os) {
  const auto cfg = bench_config(o, sub);
  const auto rows = grid_search_lambda_r(cfg, cfg.lambda_grid);
  std::filesystem::create_directories(o.out);
  std::ofstream out(std::filesystem::path(o.out) / "grid_lambda_r.csv");
  require(static_cast<bool>(out), ErrorCode::Io, "cannot write grid_lambda_r.csv");
  write_grid_csv(out, rows);
  write_grid_csv(os, rows);
  const std::size_t expected = cfg.lambda_grid.size() * cfg.datasets.size() * cfg.backends.size();
  return rows.size() == expected ? kOk : kCellFailed;
}

}  // namespace detail

inline int run_cli(int argc, const char* const* argv, std::ostream& os = std::cout, std::ostream& es = std::cerr) {
  CLI::App app{"Robust counterfactual explanations for binary tabular classifiers"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  Options o;

  auto add_weights = [&](CLI::App* s) {
    s->add_option("--k", o.k, "Counterfactuals per query")->check(CLI::PositiveNumber);
    s->add_option("--lambda-p", o.lambda_p, "Proximity weight")->check(CLI::NonNegativeNumber);
    s->add_option("--lambda-d", o.lambda_d, "Diversity weight")->check(CLI::NonNegativeNumber);
    s->add_option("--lambda-r", o.lambda_r, "Robustness weight (0 = baseline)")->check(CLI::NonNegativeNumber);
    s->add_option("--trials", o.trials, "Perturbation trials for the robustness score")->check(CLI::PositiveNumber);
    s->add_option("--seed", o.seed, "Random seed");
  };
  auto add_query = [&](CLI::App* s) {
    s->add_option("--model", o.model, "Model file")->required();
    s->add_option("--instance", o.instance, "Query row in raw units, comma separated in schema order");
    s->add_option("--data", o.data, "CSV to take the query row from");
    s->add_option("--row", o.row, "Row index in --data");
  };
  auto add_generation = [&](CLI::App* s) {
    s->add_option("--max-iterations", o.max_iterations, "Optimizer iteration budget")->check(CLI::NonNegativeNumber);
    s->add_option("--cf-learning-rate", o.cf_lr, "Counterfactual optimizer step size")->check(CLI::PositiveNumber);
    s->add_option("--perturbation", o.perturbation, "Std of the robustness perturbation")
        ->check(CLI::NonNegativeNumber);
    s->add_option("--p-norm", o.p_norm, "Proximity norm")->check(CLI::IsMember({1, 2}));
    s->add_flag("--literal-sign", o.literal_sign, "Subtract the robustness term instead of penalizing it");
  };
  auto add_experiment = [&](CLI::App* s) {
    s->add_option("--config", o.config, "Experiment config JSON (flags override it)");
    s->add_option("--data", o.data, "Dataset CSV (replaces the configured datasets)");
    s->add_option("--schema", o.schema, "Schema JSON for --data");
    s->add_option("--backend", o.backend, "Restrict to one backend")->check(CLI::IsMember({"mlp", "forest"}));
    s->add_option("--instances", o.instances, "Test instances per dataset")->check(CLI::Range(2, 1000000));
    s->add_option("--radii", o.radii, "MAD radius factors for fidelity");
    s->add_option("--neighbors", o.neighbors, "Synthetic neighbours per fidelity estimate")->check(CLI::PositiveNumber);
    s->add_option("--grid", o.grid, "lambda_r grid");
    s->add_option("--threads", o.threads, "Worker threads (0 = all cores)");
    s->add_option("--max-iterations", o.max_iterations, "Optimizer iteration budget")->check(CLI::NonNegativeNumber);
    s->add_option("--out", o.out, "Output directory")->required();
    add_weights(s);
  };

  auto* synth = app.add_subcommand("synth", "Write the bundled synthetic dataset and its schema");
  synth->add_option("--out", o.out, "Output directory")->required();
  synth->add_option("--rows", o.rows, "Rows to generate")->check(CLI::PositiveNumber);
  synth->add_option("--seed", o.seed, "Generator seed (0 = bundled default 7)");

  auto* train = app.add_subcommand("train", "Train a model and write it as JSON");
  train->add_option("--data", o.data, "Training CSV")->required();
  train->add_option("--schema", o.schema, "Schema JSON");
  train->add_option("--backend", o.backend, "Model backend")->check(CLI::IsMember({"mlp", "forest"}));
  train->add_option("--out", o.out, "Model output path")->required();
  train->add_option("--epochs", o.epochs, "Training epochs")->check(CLI::PositiveNumber);
  train->add_option("--learning-rate", o.train_lr, "Adam learning rate")->check(CLI::PositiveNumber);
  train->add_option("--batch", o.batch, "Training batch size")->check(CLI::PositiveNumber);
  train->add_option("--eval-batch", o.eval_batch, "Evaluation batch size")->check(CLI::PositiveNumber);
  train->add_option("--patience", o.patience, "Early-stopping patience (epochs)")->check(CLI::PositiveNumber);
  train->add_option("--hidden", o.hidden, "MLP hidden width")->check(CLI::PositiveNumber);
  train->add_option("--trees", o.trees, "Forest estimators")->check(CLI::PositiveNumber);
  train->add_option("--split", o.split, "Train share of the stratified split")->check(CLI::Range(0.01, 0.99));
  train->add_option("--seed", o.seed, "Random seed");

  auto* explain = app.add_subcommand("explain", "Generate counterfactuals for one query");
  add_query(explain);
  add_weights(explain);
  add_generation(explain);
  explain->add_option("--out", o.out, "Output directory")->required();
  explain->add_flag("--encoded", o.encoded, "Write encoded [0,1] rows instead of raw units");

  auto* evaluate_cmd = app.add_subcommand("evaluate", "Score a counterfactual file against a query");
  add_query(evaluate_cmd);
  add_weights(evaluate_cmd);
  evaluate_cmd->add_option("--cfs", o.cfs, "Counterfactual CSV in raw units")->required();
  evaluate_cmd->add_option("--radii", o.radii, "MAD radius factors for fidelity");
  evaluate_cmd->add_option("--neighbors", o.neighbors, "Synthetic neighbours per radius")->check(CLI::PositiveNumber);
  evaluate_cmd->add_option("--out", o.out, "Optional JSON output path");

  auto* bench = app.add_subcommand("bench", "Run the paired benchmark and write a report directory");
  add_experiment(bench);
  auto* grid = app.add_subcommand("grid", "Run the lambda_r grid search");
  add_experiment(grid);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, os, es);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (synth->parsed()) return detail::cmd_synth(o, os);
    if (train->parsed()) return detail::cmd_train(o, os);
    if (explain->parsed()) return detail::cmd_explain(o, os);
    if (evaluate_cmd->parsed()) return detail::cmd_evaluate(o, os);
    if (bench->parsed()) return detail::cmd_bench(o, *bench, os);
    if (grid->parsed()) return detail::cmd_grid(o, *grid, os);
  } catch (const Error& e) {
    es << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    es << "error: " << e.what() << '\n';
    return kIo;
  }
  return kUsage;
}

inline int run_cli(const std::vector<std::string>& args, std::ostream& os = std::cout,
                   std::ostream& es = std::cerr) {
  std::vector<const char*> argv{"dicex"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), os, es);
}

}  // namespace dicex::cli
