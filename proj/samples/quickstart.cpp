// Train an MLP on the bundled synthetic data and explain one test row.

#include <cstdio>

#include "dicex/dicex.hpp"

int main() {
  using namespace dicex;
  const Dataset ds = make_synthetic_dataset();
  auto [train, test] = train_test_split(ds, 0.8, 1);
  auto [fit, val] = train_test_split(train, 0.9, 2);
  const MlpModel model = train_mlp(fit, val, TrainConfig{});
  std::printf("test accuracy %.3f\n", accuracy(model, test));

  const auto x = test.rows.row_copy(0);
  CfConfig cfg;
  cfg.desired_class = 1 - predict_class(model, x);
  const auto set = generate_gradient(model, ds.encoder.layout(), x, cfg);

  std::printf("query: %s\n", csv::format_double(model.probability(x)).c_str());
  for (std::size_t i = 0; i < set.cfs.rows(); ++i) {
    const auto raw = ds.encoder.decode(set.cfs.row(i));
    std::printf("cf %zu:", i);
    for (const auto& v : raw) std::printf(" %s", to_string(v).c_str());
    std::printf("  p=%.3f\n", model.probability(set.cfs.row(i)));
  }

  const auto m = evaluate(set, model, ds.encoder.layout(), cfg, kDefaultRobustnessTrials, 3);
  std::printf("validity %.3f proximity %.3f sparsity %.3f robustness %.3f\n", m.validity, m.proximity, m.sparsity,
              m.robustness);
}
