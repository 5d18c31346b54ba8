#include <gtest/gtest.h>

#include "support/checks.hpp"

using namespace dicex;

namespace {

// Ranks with ties averaged, then Pearson on ranks.
double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto i, auto j) { return v[i] < v[j]; });
    std::vector<double> r(v.size());
    for (std::size_t s = 0; s < idx.size();) {
      std::size_t e = s;
      while (e + 1 < idx.size() && v[idx[e + 1]] == v[idx[s]]) ++e;
      for (std::size_t q = s; q <= e; ++q) r[idx[q]] = 0.5 * static_cast<double>(s + e) + 1.0;
      s = e + 1;
    }
    return r;
  };
  const auto ra = ranks(a), rb = ranks(b);
  const auto ma = summarize(ra), mb = summarize(rb);
  double cov = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) cov += (ra[i] - ma.mean) * (rb[i] - mb.mean);
  return cov / static_cast<double>(ra.size() - 1) / (ma.std * mb.std);
}

// A model that labels class 1 iff the first column exceeds a cut.
class CutPredictor final : public Predictor {
 public:
  explicit CutPredictor(double cut) : cut_(cut) {}
  double probability(std::span<const double> x) const override { return x[0] > cut_ ? 0.9 : 0.1; }

 private:
  double cut_;
};

}  // namespace

TEST(Validity, Counts) {
  const CutPredictor model(0.5);
  Matrix cfs(10, 1, 0.0);
  for (std::size_t i = 0; i < 7; ++i) cfs(i, 0) = 0.8;
  EXPECT_DOUBLE_EQ(validity(cfs, model, 1), 0.7);
  EXPECT_DOUBLE_EQ(validity(cfs, model, 0), 0.3);
  EXPECT_EQ(validity(Matrix(4, 1, 0.9), model, 1), 1.0);
  EXPECT_EQ(validity(Matrix(4, 1, 0.1), model, 1), 0.0);
}

TEST(RobustnessEval, ZeroScaleIsPerfect) {
  CfConfig cfg;
  cfg.perturbation_scale = 0.0;
  EXPECT_EQ(robustness_eval(Matrix::from_rows({{0.5, 0.49}, {0.51, 0.2}}), cfg, 10, 1), 1.0);
}

TEST(RobustnessEval, NearThresholdFixtureIsFragile) {
  CfConfig cfg;
  const auto cfs = Matrix(5, 6, 0.501);
  EXPECT_LT(robustness_eval(cfs, cfg, 10, 2), 1.0);
}

TEST(RobustnessEval, SingleTrialIsComplementOfHardLoss) {
  CfConfig cfg;
  std::mt19937_64 gen(3);
  for (int n = 0; n < 10; ++n) {
    const auto cfs = Matrix::from_rows(oracle::random_rows(gen, 4, 5));
    const std::uint64_t seed = gen();
    EXPECT_NEAR(robustness_eval(cfs, cfg, 1, seed),
                1.0 - robustness_loss(cfs, trial_seed(seed, 0), cfg, RobustnessMode::Hard), 1e-15);
  }
}

TEST(RobustnessEval, DecreasesWithPerturbationScale) {
  std::mt19937_64 gen(4);
  std::vector<double> scales, scores;
  for (int s = 0; s < 20; ++s) {
    CfConfig cfg;
    cfg.perturbation_scale = 0.01 + 0.02 * s;
    double total = 0.0;
    for (int rep = 0; rep < 5; ++rep)
      total += robustness_eval(Matrix::from_rows(oracle::random_rows(gen, 10, 5)), cfg, 10, gen());
    scales.push_back(cfg.perturbation_scale);
    scores.push_back(total / 5.0);
  }
  EXPECT_LT(spearman(scales, scores), 0.0);
}

TEST(Evaluate, DegenerateSet) {
  const auto layout = checks::mixed_schema().layout();
  const std::vector<double> x{0.2, 0.3, 0, 1, 0};
  CounterfactualSet set;
  set.cfs = Matrix(0, 5);
  for (int i = 0; i < 10; ++i) set.cfs.append_row(x);
  set.origin = x;
  set.desired_class = 1;
  CfConfig cfg;
  cfg.perturbation_scale = 0.0;
  const auto r = evaluate(set, ConstantPredictor(0.8), layout, cfg, 10, 1);
  EXPECT_EQ(r.validity, 1.0);
  EXPECT_EQ(r.proximity, 0.0);
  EXPECT_EQ(r.sparsity, 1.0);
  EXPECT_NEAR(r.diversity, 0.0, 1e-12);
  EXPECT_EQ(r.robustness, 1.0);
}

TEST(Evaluate, FieldsEqualIndividualOperations) {
  const auto layout = checks::mixed_schema().layout();
  std::mt19937_64 gen(5);
  const CutPredictor model(0.4);
  for (int n = 0; n < 10; ++n) {
    CounterfactualSet set;
    set.origin = checks::random_encoded(gen, layout);
    set.cfs = Matrix(0, 5);
    for (int i = 0; i < 6; ++i) set.cfs.append_row(checks::random_encoded(gen, layout));
    set.desired_class = 1;
    CfConfig cfg;
    cfg.desired_class = 1;
    const std::uint64_t seed = gen();
    const auto r = evaluate(set, model, layout, cfg, 7, seed);
    EXPECT_EQ(r.validity, validity(set.cfs, model, 1));
    EXPECT_EQ(r.proximity, proximity_loss(set.cfs, set.origin, cfg.p_norm));
    EXPECT_EQ(r.sparsity, sparsity(set.cfs, set.origin, layout, kDefaultSparsityTol));
    EXPECT_EQ(r.diversity, diversity_score(set.cfs, cfg.diversity_distance, 0.0));
    EXPECT_EQ(r.robustness, robustness_eval(set.cfs, cfg, 7, seed));
    const auto again = evaluate(set, model, layout, cfg, 7, seed);
    EXPECT_EQ(to_json(again, false).dump(), to_json(r, false).dump());
  }
}

TEST(Evaluate, InvalidSetIsStillScored) {
  const auto layout = checks::mixed_schema().layout();
  const std::vector<double> x{0.2, 0.3, 0, 1, 0};
  CounterfactualSet set;
  set.cfs = Matrix::from_rows({{0.25, 0.3, 0, 1, 0}, {0.2, 0.35, 0, 0, 1}});
  set.origin = x;
  set.desired_class = 1;
  const auto r = evaluate(set, ConstantPredictor(0.1), layout, CfConfig{}, 10, 1);
  EXPECT_EQ(r.validity, 0.0);
  EXPECT_GT(r.proximity, 0.0);
  EXPECT_TRUE(std::isfinite(r.diversity));
}

TEST(Evaluate, Json) {
  MetricsReport r{1, 0.5, 0.75, 0.01, 0.99, 0.2};
  const auto j = to_json(r);
  EXPECT_EQ(j.at("sparsity").get<double>(), 0.75);
  EXPECT_TRUE(j.contains("generation_time"));
  EXPECT_FALSE(to_json(r, false).contains("generation_time"));
}
