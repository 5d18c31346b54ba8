#pragma once

// Counterfactual generation. A set of k candidates c_1..c_k is optimized
// jointly against
//
//   total = y_loss + lambda_p * proximity - lambda_d * det(K + jitter*I)
//           + lambda_r * robustness_loss
//
// where K_ij = 1 / (1 + dist(c_i, c_j)) and robustness_loss is the mean
// Dice-Sorensen distance between binarized candidates and their perturbed
// copies clamp(c + delta). Differentiable models use Adam on the analytic
// gradient (soft binarization); any other predictor uses hill climbing with
// hard binarization.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "dicex/csv.hpp"
#include "dicex/data.hpp"
#include "dicex/error.hpp"
#include "dicex/linalg.hpp"
#include "dicex/model.hpp"
#include "dicex/rng.hpp"

namespace dicex {

enum class Distance { L1, L2 };
enum class RobustnessMode { Soft, Hard };

// Penalty minimizes +lambda_r * robustness_loss. Literal uses the opposite
// sign, i.e. the objective exactly as printed with "- lambda_r * L_rob".
enum class RobustnessSign { Penalty, Literal };

struct LossWeights {
  double lambda_p = 0.5;
  double lambda_d = 1.0;
  double lambda_r = 0.4;
};

struct CfConfig {
  std::size_t k = 10;
  int desired_class = 1;
  LossWeights weights;
  int p_norm = 1;
  Distance diversity_distance = Distance::L1;
  int max_iterations = 500;
  double learning_rate = 0.05;
  // Step size at iteration t is learning_rate / (1 + t / learning_rate_decay);
  // 0 keeps it constant. The perturbation is redrawn every step, so a constant
  // step leaves the iterates jittering around the optimum.
  double learning_rate_decay = 50.0;
  double perturbation_scale = 0.05;
  double binarize_threshold = 0.5;
  double soft_binarize_temperature = 10.0;
  double diag_jitter = 1e-4;
  double convergence_tol = 1e-6;
  int convergence_patience = 10;
  double init_noise = 0.01;
  // Hill climbing: std of a continuous mutation, and how many fruitless sweeps
  // a candidate tolerates before it is offered a random restart.
  double mutation_scale = 0.1;
  int restart_patience = 20;
  RobustnessSign robustness_sign = RobustnessSign::Penalty;
  // Optional per-encoded-column proximity weights (e.g. 1/MAD); empty means
  // the plain p-norm.
  std::vector<double> proximity_weights;
  std::uint64_t seed = 0;

  void validate() const {
    require(k >= 1, ErrorCode::InvalidArgument, "k must be >= 1");
    require(desired_class == 0 || desired_class == 1, ErrorCode::InvalidArgument, "desired_class must be 0/1");
    require(weights.lambda_p >= 0 && weights.lambda_d >= 0 && weights.lambda_r >= 0, ErrorCode::InvalidArgument,
            "loss weights must be >= 0");
    require(p_norm == 1 || p_norm == 2, ErrorCode::InvalidArgument, "p_norm must be 1 or 2");
    require(max_iterations >= 0, ErrorCode::InvalidArgument, "max_iterations must be >= 0");
    require(learning_rate > 0, ErrorCode::InvalidArgument, "learning_rate must be > 0");
    require(learning_rate_decay >= 0, ErrorCode::InvalidArgument, "learning_rate_decay must be >= 0");
    require(perturbation_scale >= 0, ErrorCode::InvalidArgument, "perturbation_scale must be >= 0");
    require(binarize_threshold > 0 && binarize_threshold < 1, ErrorCode::InvalidArgument,
            "binarize_threshold must be in (0,1)");
    require(soft_binarize_temperature > 0, ErrorCode::InvalidArgument, "temperature must be > 0");
    require(diag_jitter >= 0, ErrorCode::InvalidArgument, "diag_jitter must be >= 0");
    require(convergence_tol >= 0 && convergence_patience >= 1, ErrorCode::InvalidArgument,
            "invalid convergence settings");
    require(init_noise >= 0 && mutation_scale > 0 && restart_patience >= 1, ErrorCode::InvalidArgument,
            "invalid search settings");
    for (double w : proximity_weights)
      require(w >= 0 && std::isfinite(w), ErrorCode::InvalidArgument, "proximity weights must be >= 0");
  }
};

// ---------------------------------------------------------------------------
// Loss components

inline constexpr double kProbabilityClamp = 1e-12;

// Mean BCE of each candidate's probability against the desired class.
inline double y_loss(std::span<const double> probs, int desired_class) {
  require(!probs.empty(), ErrorCode::EmptyInput, "y_loss of no candidates");
  double sum = 0.0;
  for (double p : probs) sum += binary_cross_entropy(p, desired_class);
  return sum / static_cast<double>(probs.size());
}

inline double y_loss_derivative(double p, int desired_class) {
  if (p < kProbabilityClamp || p > 1.0 - kProbabilityClamp) return 0.0;
  return desired_class == 1 ? -1.0 / p : 1.0 / (1.0 - p);
}

// (sum_j w_j |a_j - b_j|^p)^(1/p) with w = 1 when `weights` is empty.
inline double weighted_distance(std::span<const double> a, std::span<const double> b, int p,
                                std::span<const double> weights = {}) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double w = weights.empty() ? 1.0 : weights[j];
    const double diff = std::abs(a[j] - b[j]);
    s += p == 1 ? w * diff : w * diff * diff;
  }
  return p == 1 ? s : std::sqrt(s);
}

inline double distance(std::span<const double> a, std::span<const double> b, Distance d) {
  return weighted_distance(a, b, d == Distance::L1 ? 1 : 2);
}

inline double proximity_loss(const Matrix& cfs, std::span<const double> x, int p,
                             std::span<const double> weights = {}) {
  require(cfs.cols() == x.size(), ErrorCode::DimensionMismatch, "proximity width mismatch");
  require(cfs.rows() >= 1, ErrorCode::EmptyInput, "proximity of no candidates");
  double sum = 0.0;
  for (std::size_t i = 0; i < cfs.rows(); ++i) sum += weighted_distance(cfs.row(i), x, p, weights);
  return sum / static_cast<double>(cfs.rows());
}

// 1 - (changed features) / (k * feature count). Continuous features count as
// changed when they move by more than `tol`, categorical ones when their
// argmax differs.
inline double sparsity(const Matrix& cfs, std::span<const double> x, const Layout& layout, double tol) {
  require(tol >= 0, ErrorCode::InvalidArgument, "tol must be >= 0");
  require(cfs.cols() == layout.encoded_width() && x.size() == layout.encoded_width(),
          ErrorCode::DimensionMismatch, "sparsity width mismatch");
  std::size_t changed = 0;
  for (std::size_t i = 0; i < cfs.rows(); ++i) {
    const auto c = cfs.row(i);
    for (const auto& span : layout.spans()) {
      if (span.categorical)
        changed += Layout::block_argmax(c, span) != Layout::block_argmax(x, span) ? 1 : 0;
      else
        changed += std::abs(c[span.offset] - x[span.offset]) > tol ? 1 : 0;
    }
  }
  const double total = static_cast<double>(cfs.rows() * layout.feature_count());
  return 1.0 - static_cast<double>(changed) / total;
}

inline Matrix kernel_matrix(const Matrix& cfs, Distance dist) {
  const std::size_t k = cfs.rows();
  require(k >= 1, ErrorCode::EmptyInput, "kernel of no candidates");
  Matrix K(k, k, 1.0);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j) {
      const double v = 1.0 / (1.0 + distance(cfs.row(i), cfs.row(j), dist));
      K(i, j) = v;
      K(j, i) = v;
    }
  return K;
}

// det(K + jitter * I) via partially pivoted LU.
inline double diversity_score(const Matrix& cfs, Distance dist, double jitter) {
  require(jitter >= 0, ErrorCode::InvalidArgument, "jitter must be >= 0");
  Matrix K = kernel_matrix(cfs, dist);
  for (std::size_t i = 0; i < K.rows(); ++i) K(i, i) += jitter;
  return determinant(K);
}

using BinaryVector = std::vector<std::uint8_t>;

// 2|a & b| / (|a| + |b|); two empty supports count as identical (1.0).
inline double dice_sorensen(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  require(a.size() == b.size(), ErrorCode::DimensionMismatch, "dice_sorensen length mismatch");
  std::size_t both = 0, ones = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    both += (a[i] && b[i]) ? 1 : 0;
    ones += (a[i] ? 1 : 0) + (b[i] ? 1 : 0);
  }
  if (ones == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(ones);
}

// Smoothing keeps two near-empty soft vectors at similarity 1, matching the
// hard coefficient on empty sets.
inline constexpr double kSoftDiceSmoothing = 1e-6;

// Continuous relaxation (2 sum(a*b) + s) / (sum a + sum b + s).
inline double soft_dice(std::span<const double> a, std::span<const double> b) {
  double inter = 0.0, total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += a[i] * b[i];
    total += a[i] + b[i];
  }
  return (2.0 * inter + kSoftDiceSmoothing) / (total + kSoftDiceSmoothing);
}

inline BinaryVector binarize(std::span<const double> row, double threshold) {
  BinaryVector out(row.size());
  for (std::size_t i = 0; i < row.size(); ++i) out[i] = row[i] > threshold ? 1 : 0;
  return out;
}

// k x d Gaussian(0, scale) perturbations.
inline Matrix draw_perturbation(std::size_t k, std::size_t d, double scale, std::uint64_t seed) {
  Matrix delta(k, d, 0.0);
  if (scale == 0.0) return delta;
  Rng rng(seed);
  for (auto& v : delta.data()) v = rng.normal(0.0, scale);
  return delta;
}

inline std::vector<double> perturbed_row(std::span<const double> c, std::span<const double> delta) {
  std::vector<double> out(c.size());
  for (std::size_t j = 0; j < c.size(); ++j) out[j] = std::clamp(c[j] + delta[j], 0.0, 1.0);
  return out;
}

// Mean over candidates of 1 - Dice(bin(c), bin(clamp(c + delta))).
inline double robustness_loss(const Matrix& cfs, const Matrix& delta, const CfConfig& cfg, RobustnessMode mode) {
  require(delta.rows() == cfs.rows() && delta.cols() == cfs.cols(), ErrorCode::DimensionMismatch,
          "perturbation shape mismatch");
  const double th = cfg.binarize_threshold;
  const double temp = cfg.soft_binarize_temperature;
  double sum = 0.0;
  std::vector<double> a(cfs.cols()), b(cfs.cols());
  for (std::size_t i = 0; i < cfs.rows(); ++i) {
    const auto c = cfs.row(i);
    const auto cp = perturbed_row(c, delta.row(i));
    if (mode == RobustnessMode::Hard) {
      sum += 1.0 - dice_sorensen(binarize(c, th), binarize(cp, th));
    } else {
      for (std::size_t j = 0; j < c.size(); ++j) {
        a[j] = sigmoid(temp * (c[j] - th));
        b[j] = sigmoid(temp * (cp[j] - th));
      }
      sum += 1.0 - soft_dice(a, b);
    }
  }
  return sum / static_cast<double>(cfs.rows());
}

inline double robustness_loss(const Matrix& cfs, std::uint64_t delta_seed, const CfConfig& cfg,
                              RobustnessMode mode) {
  return robustness_loss(cfs, draw_perturbation(cfs.rows(), cfs.cols(), cfg.perturbation_scale, delta_seed), cfg,
                         mode);
}

struct LossComponents {
  double y_loss = 0.0;
  double proximity = 0.0;
  double diversity = 0.0;   // det(K + jitter*I), enters the total with -lambda_d
  double robustness = 0.0;  // robustness loss (1 - Dice), enters with +/- lambda_r
  double total = 0.0;
};

inline double combine(const LossComponents& c, const CfConfig& cfg) {
  const double rob_sign = cfg.robustness_sign == RobustnessSign::Penalty ? 1.0 : -1.0;
  return c.y_loss + cfg.weights.lambda_p * c.proximity - cfg.weights.lambda_d * c.diversity +
         rob_sign * cfg.weights.lambda_r * c.robustness;
}

inline void check_finite(const LossComponents& c) {
  if (!std::isfinite(c.y_loss) || !std::isfinite(c.proximity) || !std::isfinite(c.diversity) ||
      !std::isfinite(c.robustness) || !std::isfinite(c.total))
    fail(ErrorCode::NonFiniteLoss, "non-finite loss component (y=" + csv::format_double(c.y_loss) +
                                       ", prox=" + csv::format_double(c.proximity) +
                                       ", div=" + csv::format_double(c.diversity) +
                                       ", rob=" + csv::format_double(c.robustness) + ")");
}

// Components from precomputed candidate probabilities.
inline LossComponents loss_components(const Matrix& cfs, std::span<const double> probs, std::span<const double> x,
                                      const CfConfig& cfg, const Matrix& delta, RobustnessMode mode) {
  LossComponents c;
  c.y_loss = y_loss(probs, cfg.desired_class);
  c.proximity = proximity_loss(cfs, x, cfg.p_norm, cfg.proximity_weights);
  c.diversity = diversity_score(cfs, cfg.diversity_distance, cfg.diag_jitter);
  c.robustness = robustness_loss(cfs, delta, cfg, mode);
  c.total = combine(c, cfg);
  check_finite(c);
  return c;
}

inline std::vector<double> candidate_probabilities(const Predictor& model, const Matrix& cfs) {
  std::vector<double> probs(cfs.rows());
  for (std::size_t i = 0; i < cfs.rows(); ++i) probs[i] = model.probability(cfs.row(i));
  return probs;
}

inline LossComponents total_loss(const Matrix& cfs, std::span<const double> x, const Predictor& model,
                                 const CfConfig& cfg, const Matrix& delta,
                                 RobustnessMode mode = RobustnessMode::Soft) {
  return loss_components(cfs, candidate_probabilities(model, cfs), x, cfg, delta, mode);
}

// Soft-mode total loss and its exact gradient with respect to every candidate
// coordinate (k x d, written to `grad`). `delta` is held fixed.
inline LossComponents total_loss_and_gradient(const Matrix& cfs, std::span<const double> x, const MlpModel& model,
                                              const CfConfig& cfg, const Matrix& delta, Matrix& grad) {
  const std::size_t k = cfs.rows(), d = cfs.cols();
  require(x.size() == d && delta.rows() == k && delta.cols() == d, ErrorCode::DimensionMismatch,
          "gradient input shapes");
  grad = Matrix(k, d, 0.0);
  const double inv_k = 1.0 / static_cast<double>(k);
  const auto& wts = cfg.proximity_weights;

  std::vector<double> probs(k);
  for (std::size_t i = 0; i < k; ++i) {
    const auto c = cfs.row(i);
    probs[i] = model.probability(c);
    const double dl_dp = inv_k * y_loss_derivative(probs[i], cfg.desired_class);
    if (dl_dp != 0.0) {
      const auto df = model.input_gradient(c);
      for (std::size_t j = 0; j < d; ++j) grad(i, j) += dl_dp * df[j];
    }
  }
  const LossComponents comps = loss_components(cfs, probs, x, cfg, delta, RobustnessMode::Soft);

  // Proximity.
  const double wp = cfg.weights.lambda_p * inv_k;
  if (wp != 0.0) {
    for (std::size_t i = 0; i < k; ++i) {
      const auto c = cfs.row(i);
      if (cfg.p_norm == 1) {
        for (std::size_t j = 0; j < d; ++j) {
          const double diff = c[j] - x[j];
          const double w = wts.empty() ? 1.0 : wts[j];
          grad(i, j) += wp * w * static_cast<double>((diff > 0) - (diff < 0));
        }
      } else {
        const double norm = weighted_distance(c, x, 2, wts);
        if (norm > 0.0)
          for (std::size_t j = 0; j < d; ++j) {
            const double w = wts.empty() ? 1.0 : wts[j];
            grad(i, j) += wp * w * (c[j] - x[j]) / norm;
          }
      }
    }
  }

  // Diversity: d det(A) = det(A) * tr(A^-1 dA), A = K + jitter*I symmetric.
  if (cfg.weights.lambda_d != 0.0 && k > 1) {
    Matrix A = kernel_matrix(cfs, cfg.diversity_distance);
    for (std::size_t i = 0; i < k; ++i) A(i, i) += cfg.diag_jitter;
    const LuDecomposition lu(A);
    if (!lu.singular()) {
      const double det = lu.determinant();
      const Matrix inv = lu.inverse();
      for (std::size_t m = 0; m < k; ++m) {
        const auto cm = cfs.row(m);
        for (std::size_t j = 0; j < k; ++j) {
          if (j == m) continue;
          const auto cj = cfs.row(j);
          const double kij = A(m, j);
          // derivative of det w.r.t. K_mj (and K_jm) times dK/d dist.
          const double coeff = -cfg.weights.lambda_d * 2.0 * det * inv(m, j) * (-kij * kij);
          if (cfg.diversity_distance == Distance::L1) {
            for (std::size_t q = 0; q < d; ++q) {
              const double diff = cm[q] - cj[q];
              grad(m, q) += coeff * static_cast<double>((diff > 0) - (diff < 0));
            }
          } else {
            const double dist = distance(cm, cj, Distance::L2);
            if (dist > 0.0)
              for (std::size_t q = 0; q < d; ++q) grad(m, q) += coeff * (cm[q] - cj[q]) / dist;
          }
        }
      }
    }
  }

  // Soft robustness.
  const double rob_sign = cfg.robustness_sign == RobustnessSign::Penalty ? 1.0 : -1.0;
  const double wr = rob_sign * cfg.weights.lambda_r * inv_k;
  if (wr != 0.0) {
    const double th = cfg.binarize_threshold, temp = cfg.soft_binarize_temperature;
    std::vector<double> a(d), b(d), pass(d);
    for (std::size_t i = 0; i < k; ++i) {
      const auto c = cfs.row(i);
      const auto dl = delta.row(i);
      double inter = 0.0, total = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double raw = c[j] + dl[j];
        pass[j] = (raw > 0.0 && raw < 1.0) ? 1.0 : 0.0;
        a[j] = sigmoid(temp * (c[j] - th));
        b[j] = sigmoid(temp * (std::clamp(raw, 0.0, 1.0) - th));
        inter += a[j] * b[j];
        total += a[j] + b[j];
      }
      const double denom = total + kSoftDiceSmoothing;
      const double base = (2.0 * inter + kSoftDiceSmoothing) / (denom * denom);
      for (std::size_t j = 0; j < d; ++j) {
        const double dD_da = 2.0 * b[j] / denom - base;
        const double dD_db = 2.0 * a[j] / denom - base;
        const double da = temp * a[j] * (1.0 - a[j]);
        const double db = temp * b[j] * (1.0 - b[j]) * pass[j];
        grad(i, j) += -wr * (dD_da * da + dD_db * db);
      }
    }
  }
  return comps;
}

// ---------------------------------------------------------------------------
// Generation

struct LossRecord {
  int iteration = 0;
  double y_loss = 0.0;
  double proximity_loss = 0.0;
  double diversity_loss = 0.0;
  double robustness_loss = 0.0;
  double total_loss = 0.0;
  bool accepted = true;  // hill climbing: whether this sweep changed the set
};

using LossTrace = std::vector<LossRecord>;

inline LossRecord make_record(int iteration, const LossComponents& c, bool accepted = true) {
  return {iteration, c.y_loss, c.proximity, c.diversity, c.robustness, c.total, accepted};
}

inline void write_trace_csv(std::ostream& out, const LossTrace& trace) {
  out << "iteration,y_loss,proximity_loss,diversity_loss,robustness_loss,total_loss\n";
  for (const auto& r : trace) {
    out << r.iteration << ',' << csv::format_double(r.y_loss) << ',' << csv::format_double(r.proximity_loss) << ','
        << csv::format_double(r.diversity_loss) << ',' << csv::format_double(r.robustness_loss) << ','
        << csv::format_double(r.total_loss) << '\n';
  }
}

struct CounterfactualSet {
  Matrix cfs;                       // k x d encoded rows
  std::vector<double> origin;       // the query row
  std::vector<int> achieved_class;  // per candidate
  int desired_class = 1;
  bool found_valid = false;         // at least one candidate reaches desired_class
  int iterations = 0;
  LossTrace trace;
};

namespace detail {

// Stream identifiers for derive_seed; shared by both optimizers so the same
// seed gives the same initial candidates and perturbation streams.
inline constexpr std::uint64_t kInitStream = 11;
inline constexpr std::uint64_t kProbeStream = 12;
inline constexpr std::uint64_t kDeltaStream = 13;
inline constexpr std::uint64_t kMutationStream = 14;

inline Matrix initial_candidates(const Layout& layout, std::span<const double> x, const CfConfig& cfg) {
  const auto mask = layout.actionable_mask();
  Matrix cfs(cfg.k, x.size());
  Rng rng(derive_seed(cfg.seed, kInitStream));
  for (std::size_t i = 0; i < cfg.k; ++i) {
    auto row = cfs.row(i);
    for (std::size_t j = 0; j < x.size(); ++j) {
      row[j] = x[j];
      const double noise = rng.normal(0.0, cfg.init_noise);
      if (mask[j]) row[j] = std::clamp(x[j] + noise, 0.0, 1.0);
    }
  }
  return cfs;
}

inline void hold_fixed(Matrix& cfs, std::span<const double> x, const std::vector<bool>& mask) {
  for (std::size_t i = 0; i < cfs.rows(); ++i)
    for (std::size_t j = 0; j < x.size(); ++j)
      if (!mask[j]) cfs(i, j) = x[j];
}

inline Matrix projected(const Matrix& cfs, const Layout& layout) {
  Matrix out = cfs;
  for (std::size_t i = 0; i < out.rows(); ++i) layout.project_one_hot(out.row(i));
  return out;
}

inline bool all_reach(const Predictor& model, const Matrix& cfs, int desired) {
  for (std::size_t i = 0; i < cfs.rows(); ++i)
    if (predict_class(model, cfs.row(i)) != desired) return false;
  return true;
}

inline void finalize(CounterfactualSet& out, const Predictor& model, const Layout& layout,
                     std::span<const double> x) {
  const auto mask = layout.actionable_mask();
  for (std::size_t i = 0; i < out.cfs.rows(); ++i) {
    auto row = out.cfs.row(i);
    for (auto& v : row) v = std::clamp(v, 0.0, 1.0);
    layout.project_one_hot(row);
  }
  hold_fixed(out.cfs, x, mask);
  out.achieved_class.assign(out.cfs.rows(), 0);
  out.found_valid = false;
  for (std::size_t i = 0; i < out.cfs.rows(); ++i) {
    out.achieved_class[i] = predict_class(model, out.cfs.row(i));
    out.found_valid = out.found_valid || out.achieved_class[i] == out.desired_class;
  }
}

// Counts consecutive iterations with |delta total| < tol; convergence is only
// declared once every candidate reaches the desired class.
class ConvergenceMonitor {
 public:
  explicit ConvergenceMonitor(const CfConfig& cfg) : tol_(cfg.convergence_tol), patience_(cfg.convergence_patience) {}

  bool update(double total, bool all_valid) {
    if (has_last_ && std::abs(total - last_) < tol_) ++calm_;
    else calm_ = 0;
    last_ = total;
    has_last_ = true;
    return all_valid && calm_ >= patience_;
  }

 private:
  double tol_;
  int patience_;
  double last_ = 0.0;
  bool has_last_ = false;
  int calm_ = 0;
};

}  // namespace detail

// Joint Adam descent over all k*d coordinates of the candidate set. Each step
// uses a freshly drawn perturbation; the recorded trace and the convergence
// test use one fixed probe perturbation so that they measure the candidates
// rather than the draw.
inline CounterfactualSet generate_gradient(const MlpModel& model, const Layout& layout, std::span<const double> x,
                                           const CfConfig& cfg) {
  cfg.validate();
  require(x.size() == layout.encoded_width() && x.size() == model.input_width(), ErrorCode::DimensionMismatch,
          "query width does not match model/layout");
  const std::size_t k = cfg.k, d = x.size();
  const auto mask = layout.actionable_mask();

  CounterfactualSet out;
  out.origin.assign(x.begin(), x.end());
  out.desired_class = cfg.desired_class;
  out.cfs = detail::initial_candidates(layout, x, cfg);

  const Matrix probe = draw_perturbation(k, d, cfg.perturbation_scale, derive_seed(cfg.seed, detail::kProbeStream));
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  Matrix m1(k, d, 0.0), m2(k, d, 0.0), grad;
  detail::ConvergenceMonitor monitor(cfg);

  auto record = [&](int it) {
    const auto c = total_loss(out.cfs, x, model, cfg, probe, RobustnessMode::Soft);
    out.trace.push_back(make_record(it, c));
    return monitor.update(c.total, detail::all_reach(model, detail::projected(out.cfs, layout), cfg.desired_class));
  };

  bool converged = record(0);
  int it = 0;
  while (!converged && it < cfg.max_iterations) {
    ++it;
    const Matrix delta = draw_perturbation(k, d, cfg.perturbation_scale,
                                           derive_seed(cfg.seed, detail::kDeltaStream, static_cast<std::uint64_t>(it)));
    total_loss_and_gradient(out.cfs, x, model, cfg, delta, grad);
    const double c1 = 1.0 - std::pow(beta1, it), c2 = 1.0 - std::pow(beta2, it);
    const double lr = cfg.learning_rate_decay > 0 ? cfg.learning_rate / (1.0 + it / cfg.learning_rate_decay)
                                                  : cfg.learning_rate;
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        if (!mask[j]) continue;
        const double g = grad(i, j);
        m1(i, j) = beta1 * m1(i, j) + (1 - beta1) * g;
        m2(i, j) = beta2 * m2(i, j) + (1 - beta2) * g * g;
        const double step = lr * (m1(i, j) / c1) / (std::sqrt(m2(i, j) / c2) + eps);
        out.cfs(i, j) = std::clamp(out.cfs(i, j) - step, 0.0, 1.0);
      }
    converged = record(it);
  }
  out.iterations = it;
  detail::finalize(out, model, layout, x);
  return out;
}

// Hill climbing for models without gradients. Each sweep offers every
// candidate one mutation of a random actionable feature (Gaussian step or
// category change), or a full random restart once it has gone
// `restart_patience` sweeps without improvement. A proposal is kept only if it
// lowers the total loss (hard binarization, fixed probe perturbation).
inline CounterfactualSet generate_blackbox(const Predictor& model, const Layout& layout, std::span<const double> x,
                                           const CfConfig& cfg) {
  cfg.validate();
  require(x.size() == layout.encoded_width(), ErrorCode::DimensionMismatch, "query width does not match layout");
  const std::size_t k = cfg.k, d = x.size();
  const auto mask = layout.actionable_mask();
  std::vector<std::size_t> movable;
  for (std::size_t f = 0; f < layout.feature_count(); ++f)
    if (layout[f].actionable) movable.push_back(f);
  require(!movable.empty(), ErrorCode::InvalidArgument, "no actionable features");

  CounterfactualSet out;
  out.origin.assign(x.begin(), x.end());
  out.desired_class = cfg.desired_class;
  out.cfs = detail::projected(detail::initial_candidates(layout, x, cfg), layout);

  const Matrix probe = draw_perturbation(k, d, cfg.perturbation_scale, derive_seed(cfg.seed, detail::kProbeStream));
  auto probs = candidate_probabilities(model, out.cfs);
  auto current = loss_components(out.cfs, probs, x, cfg, probe, RobustnessMode::Hard);
  out.trace.push_back(make_record(0, current));

  auto valid_now = [&] {
    for (double p : probs)
      if (class_from_probability(p) != cfg.desired_class) return false;
    return true;
  };
  detail::ConvergenceMonitor monitor(cfg);
  bool converged = monitor.update(current.total, valid_now());

  Rng rng(derive_seed(cfg.seed, detail::kMutationStream));
  std::vector<int> stale(k, 0);
  std::vector<double> saved(d);
  int it = 0;
  while (!converged && it < cfg.max_iterations) {
    ++it;
    bool any = false;
    for (std::size_t i = 0; i < k; ++i) {
      auto row = out.cfs.row(i);
      std::copy(row.begin(), row.end(), saved.begin());
      if (stale[i] >= cfg.restart_patience) {
        for (auto f : movable) {
          const auto& span = layout[f];
          if (span.categorical) {
            const std::size_t hot = rng.index(span.width);
            for (std::size_t j = 0; j < span.width; ++j) row[span.offset + j] = j == hot ? 1.0 : 0.0;
          } else {
            row[span.offset] = rng.uniform();
          }
        }
        stale[i] = 0;
      } else {
        const auto& span = layout[movable[rng.index(movable.size())]];
        if (span.categorical) {
          const std::size_t cur = Layout::block_argmax(row, span);
          std::size_t next = rng.index(span.width - 1);
          if (next >= cur) ++next;
          for (std::size_t j = 0; j < span.width; ++j) row[span.offset + j] = j == next ? 1.0 : 0.0;
        } else {
          row[span.offset] = std::clamp(row[span.offset] + rng.normal(0.0, cfg.mutation_scale), 0.0, 1.0);
        }
      }
      const double old_p = probs[i];
      probs[i] = model.probability(row);
      const auto proposal = loss_components(out.cfs, probs, x, cfg, probe, RobustnessMode::Hard);
      if (proposal.total < current.total) {
        current = proposal;
        stale[i] = 0;
        any = true;
      } else {
        std::copy(saved.begin(), saved.end(), row.begin());
        probs[i] = old_p;
        ++stale[i];
      }
    }
    out.trace.push_back(make_record(it, current, any));
    converged = monitor.update(current.total, valid_now());
  }
  out.iterations = it;
  detail::finalize(out, model, layout, x);
  return out;
}

// Routes differentiable models to gradient descent and the rest to hill
// climbing.
inline CounterfactualSet generate(const TrainedModel& model, const Layout& layout, std::span<const double> x,
                                  const CfConfig& cfg) {
  if (const auto* mlp = std::get_if<MlpModel>(&model)) return generate_gradient(*mlp, layout, x, cfg);
  return generate_blackbox(std::get<ForestModel>(model), layout, x, cfg);
}

}  // namespace dicex
