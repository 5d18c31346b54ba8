#include <gtest/gtest.h>

#include "support/checks.hpp"

using namespace dicex;

namespace {

class LinearPredictor final : public Predictor {
 public:
  double probability(std::span<const double> x) const override { return sigmoid(6.0 * (x[0] + x[1] - 1.0)); }
};

// Independent fidelity: nearest neighbour by explicit Euclidean distance,
// lowest index on ties, over the same neighbour rows.
double brute_force_fidelity(const Predictor& model, const std::vector<std::vector<double>>& train,
                            const Matrix& neighbors) {
  std::vector<int> labels;
  for (const auto& p : train) labels.push_back(model.probability(p) >= 0.5 ? 1 : 0);
  int agree = 0;
  for (std::size_t n = 0; n < neighbors.rows(); ++n) {
    const auto q = neighbors.row_copy(n);
    std::size_t best = 0;
    for (std::size_t i = 1; i < train.size(); ++i)
      if (oracle::l2(train[i], q) < oracle::l2(train[best], q)) best = i;
    agree += labels[best] == (model.probability(q) >= 0.5 ? 1 : 0);
  }
  return static_cast<double>(agree) / static_cast<double>(neighbors.rows());
}

}  // namespace

TEST(OneNn, Examples) {
  const auto single = fit_1nn(Matrix::from_rows({{0.5, 0.5}}), {1});
  EXPECT_EQ(single.predict(std::vector<double>{0.0, 0.0}), 1);
  EXPECT_EQ(single.predict(std::vector<double>{1.0, 1.0}), 1);

  const auto two = fit_1nn(Matrix::from_rows({{0.25, 0.0}, {0.75, 0.0}}), {0, 1});
  EXPECT_EQ(two.predict(std::vector<double>{0.75, 0.0}), 1);
  EXPECT_EQ(two.predict(std::vector<double>{0.5, 0.3}), 0);  // equidistant
  const auto swapped = fit_1nn(Matrix::from_rows({{0.75, 0.0}, {0.25, 0.0}}), {1, 0});
  EXPECT_EQ(swapped.predict(std::vector<double>{0.5, 0.3}), 1);

  EXPECT_THROW(fit_1nn(Matrix(0, 2), {}), Error);
}

TEST(Fidelity, ConstantModelIsPerfect) {
  const auto layout = checks::mixed_schema().layout();
  const std::vector<double> x{0.3, 0.4, 0, 1, 0};
  const auto cfs = Matrix::from_rows({{0.6, 0.4, 0, 1, 0}, {0.3, 0.9, 1, 0, 0}});
  const std::vector<double> mad{0.2, 0.25, 0.0};
  for (double r : kDefaultRadiusFactors)
    EXPECT_EQ(fidelity_score(ConstantPredictor(0.7), layout, x, cfs, mad, r, 1000, 3), 1.0);
}

TEST(Fidelity, MatchesBruteForce) {
  const auto layout = checks::mixed_schema().layout();
  const LinearPredictor model;
  std::mt19937_64 gen(4);
  for (int n = 0; n < 20; ++n) {
    // Points placed symmetrically about the boundary u + w = 1.
    const double a = std::uniform_real_distribution<double>(0.3, 0.7)(gen);
    const double off = std::uniform_real_distribution<double>(0.05, 0.2)(gen);
    const std::vector<double> x{a - off, 1.0 - a - off, 0, 1, 0};
    const auto cfs = Matrix::from_rows({{a + off, 1.0 - a + off, 0, 1, 0}, {a, 1.0 - a + 2 * off, 1, 0, 0}});
    const std::vector<double> mad{0.15, 0.2, 0.0};
    const double factor = kDefaultRadiusFactors[static_cast<std::size_t>(n) % 3];
    const std::uint64_t seed = gen();
    const double got = fidelity_score(model, layout, x, cfs, mad, factor, 100, seed);
    const auto neighbors = synthetic_neighbors(layout, x, neighborhood_radii(layout, mad, factor), 100, seed);
    std::vector<std::vector<double>> train{x, cfs.row_copy(0), cfs.row_copy(1)};
    EXPECT_DOUBLE_EQ(got, brute_force_fidelity(model, train, neighbors));
  }
}

TEST(Fidelity, EmptyCounterfactualsGiveShareOfQueryLabel) {
  const auto layout = checks::mixed_schema().layout();
  const LinearPredictor model;
  const std::vector<double> x{0.45, 0.5, 0, 1, 0};
  const std::vector<double> mad{0.2, 0.2, 0.0};
  const double got = fidelity_score(model, layout, x, Matrix(0, 5), mad, 1.0, 500, 8);
  const auto neighbors = synthetic_neighbors(layout, x, neighborhood_radii(layout, mad, 1.0), 500, 8);
  const int label = predict_class(model, x);
  int same = 0;
  for (std::size_t r = 0; r < neighbors.rows(); ++r) same += predict_class(model, neighbors.row(r)) == label;
  EXPECT_DOUBLE_EQ(got, same / 500.0);
}

TEST(Fidelity, BoundedAndDeterministic) {
  const auto ds = make_synthetic_dataset(200, 2);
  const auto forest = train_forest(ds, 10, 1);
  const auto mad = feature_mad(ds);
  std::mt19937_64 gen(6);
  for (int n = 0; n < 10; ++n) {
    const auto x = checks::random_encoded(gen, ds.layout());
    const auto cfs = Matrix::from_rows({checks::random_encoded(gen, ds.layout())});
    const std::uint64_t seed = gen();
    const double f = fidelity_score(forest, ds.layout(), x, cfs, mad, 2.0, 300, seed);
    EXPECT_GE(f, 0.0);
    EXPECT_LE(f, 1.0);
    EXPECT_EQ(f, fidelity_score(forest, ds.layout(), x, cfs, mad, 2.0, 300, seed));
  }
}

TEST(Fidelity, RejectsBadArguments) {
  const auto layout = checks::mixed_schema().layout();
  const std::vector<double> x{0.3, 0.4, 0, 1, 0};
  const std::vector<double> mad{0.2, 0.25, 0.0};
  EXPECT_THROW(fidelity_score(ConstantPredictor(0.7), layout, x, Matrix(0, 5), mad, 0.0, 10, 1), Error);
  EXPECT_THROW(fidelity_score(ConstantPredictor(0.7), layout, x, Matrix(0, 5), mad, 1.0, 0, 1), Error);
}

TEST(Fidelity, Defaults) {
  EXPECT_EQ(kDefaultRadiusFactors, (std::vector<double>{0.5, 1.0, 2.0}));
  EXPECT_EQ(kDefaultNeighborCount, 1000u);
}
