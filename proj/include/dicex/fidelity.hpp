#pragma once

// 1-NN local fidelity: a nearest-neighbour surrogate fitted on the query and
// its counterfactuals (labelled by the model) is compared with the model on
// MAD-scaled synthetic neighbours of the query.

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "dicex/data.hpp"
#include "dicex/error.hpp"
#include "dicex/linalg.hpp"
#include "dicex/model.hpp"

namespace dicex {

inline const std::vector<double> kDefaultRadiusFactors{0.5, 1.0, 2.0};
inline constexpr std::size_t kDefaultNeighborCount = 1000;

class OneNearestNeighbor {
 public:
  OneNearestNeighbor(Matrix points, std::vector<int> labels) : points_(std::move(points)), labels_(std::move(labels)) {
    require(points_.rows() >= 1, ErrorCode::EmptyInput, "1-NN needs at least one training point");
    require(points_.rows() == labels_.size(), ErrorCode::DimensionMismatch, "points/labels length");
  }

  // Label of the closest point under squared L2; the lowest index wins ties.
  int predict(std::span<const double> q) const {
    std::size_t best = 0;
    double best_d = INFINITY;
    for (std::size_t i = 0; i < points_.rows(); ++i) {
      const auto p = points_.row(i);
      double s = 0.0;
      for (std::size_t j = 0; j < q.size(); ++j) s += (p[j] - q[j]) * (p[j] - q[j]);
      if (s < best_d) {
        best_d = s;
        best = i;
      }
    }
    return labels_[best];
  }

  std::size_t size() const noexcept { return labels_.size(); }

 private:
  Matrix points_;
  std::vector<int> labels_;
};

inline OneNearestNeighbor fit_1nn(Matrix points, std::vector<int> labels) {
  return OneNearestNeighbor(std::move(points), std::move(labels));
}

// Fraction of `count` neighbours of x on which the surrogate built from
// {x} + cfs agrees with the model. `mad_per_feature` is in encoded units.
inline double fidelity_score(const Predictor& model, const Layout& layout, std::span<const double> x,
                             const Matrix& cfs, std::span<const double> mad_per_feature, double radius_factor,
                             std::size_t count, std::uint64_t seed) {
  require(radius_factor > 0.0, ErrorCode::InvalidArgument, "radius factor must be > 0");
  require(count >= 1, ErrorCode::InvalidArgument, "count must be >= 1");
  Matrix points(0, x.size());
  points.append_row(x);
  for (std::size_t i = 0; i < cfs.rows(); ++i) points.append_row(cfs.row(i));
  std::vector<int> labels;
  for (std::size_t i = 0; i < points.rows(); ++i) labels.push_back(predict_class(model, points.row(i)));
  const auto surrogate = fit_1nn(std::move(points), std::move(labels));

  const auto radii = neighborhood_radii(layout, mad_per_feature, radius_factor);
  const Matrix neighbors = synthetic_neighbors(layout, x, radii, count, seed);
  std::size_t agree = 0;
  for (std::size_t n = 0; n < neighbors.rows(); ++n)
    agree += surrogate.predict(neighbors.row(n)) == predict_class(model, neighbors.row(n)) ? 1 : 0;
  return static_cast<double>(agree) / static_cast<double>(count);
}

struct RadiusFidelity {
  double radius_factor = 0.0;
  double mean = 0.0;
  double std = 0.0;
};

using FidelityReport = std::vector<RadiusFidelity>;

}  // namespace dicex
