#pragma once

// Binary classifiers behind a single probability contract: a two-layer MLP
// (ReLU hidden layer, sigmoid output) with analytic input gradients, and a
// CART random forest.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "dicex/data.hpp"
#include "dicex/error.hpp"
#include "dicex/linalg.hpp"
#include "dicex/rng.hpp"

namespace dicex {

class Predictor {
 public:
  virtual ~Predictor() = default;
  // P(class = 1 | x).
  virtual double probability(std::span<const double> x) const = 0;
};

// Ties at exactly 0.5 go to class 1.
inline int class_from_probability(double p) { return p >= 0.5 ? 1 : 0; }

inline int predict_class(const Predictor& model, std::span<const double> x) {
  return class_from_probability(model.probability(x));
}

class ConstantPredictor final : public Predictor {
 public:
  explicit ConstantPredictor(double p) : p_(p) {}
  double probability(std::span<const double>) const override { return p_; }

 private:
  double p_;
};

// ---------------------------------------------------------------------------
// MLP

class MlpModel final : public Predictor {
 public:
  MlpModel() = default;
  MlpModel(std::size_t input_width, std::size_t hidden)
      : w1_(hidden, input_width), b1_(hidden, 0.0), w2_(hidden, 0.0) {}

  // Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for every parameter.
  static MlpModel initialized(std::size_t input_width, std::size_t hidden, std::uint64_t seed) {
    require(input_width >= 1 && hidden >= 1, ErrorCode::InvalidArgument, "MLP sizes must be >= 1");
    MlpModel m(input_width, hidden);
    Rng rng(seed);
    const double a1 = 1.0 / std::sqrt(static_cast<double>(input_width));
    const double a2 = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (auto& w : m.w1_.data()) w = rng.uniform(-a1, a1);
    for (auto& b : m.b1_) b = rng.uniform(-a1, a1);
    for (auto& w : m.w2_) w = rng.uniform(-a2, a2);
    m.b2_ = rng.uniform(-a2, a2);
    return m;
  }

  std::size_t input_width() const noexcept { return w1_.cols(); }
  std::size_t hidden() const noexcept { return w1_.rows(); }

  Matrix& w1() noexcept { return w1_; }
  const Matrix& w1() const noexcept { return w1_; }
  std::vector<double>& b1() noexcept { return b1_; }
  const std::vector<double>& b1() const noexcept { return b1_; }
  std::vector<double>& w2() noexcept { return w2_; }
  const std::vector<double>& w2() const noexcept { return w2_; }
  double& b2() noexcept { return b2_; }
  double b2() const noexcept { return b2_; }

  double logit(std::span<const double> x) const {
    check_width(x);
    double z = b2_;
    for (std::size_t j = 0; j < hidden(); ++j) {
      const double pre = pre_activation(j, x);
      if (pre > 0.0) z += w2_[j] * pre;
    }
    return z;
  }

  double probability(std::span<const double> x) const override { return sigmoid(logit(x)); }

  // d probability / d x. The ReLU subgradient at 0 is taken as 0.
  std::vector<double> input_gradient(std::span<const double> x) const {
    check_width(x);
    std::vector<double> grad(input_width(), 0.0);
    double z = b2_;
    for (std::size_t j = 0; j < hidden(); ++j) {
      const double pre = pre_activation(j, x);
      if (pre <= 0.0) continue;
      z += w2_[j] * pre;
      const auto row = w1_.row(j);
      for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += w2_[j] * row[k];
    }
    const double p = sigmoid(z);
    const double slope = p * (1.0 - p);
    for (auto& g : grad) g *= slope;
    return grad;
  }

  // Smallest |pre-activation| over hidden units; finite-difference checks stay
  // away from points where this is tiny.
  double kink_margin(std::span<const double> x) const {
    double m = INFINITY;
    for (std::size_t j = 0; j < hidden(); ++j) m = std::min(m, std::abs(pre_activation(j, x)));
    return m;
  }

  bool all_finite() const {
    auto finite = [](double v) { return std::isfinite(v); };
    return std::all_of(w1_.data().begin(), w1_.data().end(), finite) &&
           std::all_of(b1_.begin(), b1_.end(), finite) && std::all_of(w2_.begin(), w2_.end(), finite) &&
           std::isfinite(b2_);
  }

  friend bool operator==(const MlpModel& a, const MlpModel& b) {
    return a.w1_ == b.w1_ && a.b1_ == b.b1_ && a.w2_ == b.w2_ && a.b2_ == b.b2_;
  }

 private:
  double pre_activation(std::size_t j, std::span<const double> x) const {
    const auto row = w1_.row(j);
    double s = b1_[j];
    for (std::size_t k = 0; k < x.size(); ++k) s += row[k] * x[k];
    return s;
  }

  void check_width(std::span<const double> x) const {
    require(x.size() == input_width(), ErrorCode::DimensionMismatch,
            "MLP expects width " + std::to_string(input_width()) + ", got " + std::to_string(x.size()));
  }

  Matrix w1_;
  std::vector<double> b1_;
  std::vector<double> w2_;
  double b2_ = 0.0;
};

inline double mlp_forward(const MlpModel& m, std::span<const double> x) { return m.probability(x); }

inline std::vector<double> mlp_input_gradient(const MlpModel& m, std::span<const double> x) {
  return m.input_gradient(x);
}

struct TrainConfig {
  double learning_rate = 0.001;
  int epochs = 10;
  std::size_t batch_train = 16;
  std::size_t batch_eval = 4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int early_stopping_patience = 3;
  std::size_t hidden = 32;
  std::uint64_t seed = 0;

  void validate() const {
    require(learning_rate > 0.0 && std::isfinite(learning_rate), ErrorCode::InvalidArgument,
            "learning_rate must be > 0");
    require(epochs >= 1, ErrorCode::InvalidArgument, "epochs must be >= 1");
    require(batch_train >= 1 && batch_eval >= 1, ErrorCode::InvalidArgument, "batch sizes must be >= 1");
    require(early_stopping_patience >= 1, ErrorCode::InvalidArgument, "patience must be >= 1");
    require(hidden >= 1, ErrorCode::InvalidArgument, "hidden width must be >= 1");
  }
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

inline double binary_cross_entropy(double p, int y) {
  const double q = std::clamp(p, 1e-12, 1.0 - 1e-12);
  return y == 1 ? -std::log(q) : -std::log(1.0 - q);
}

// Mean BCE and accuracy, evaluated in mini-batches of `batch` rows.
inline std::pair<double, double> evaluate_loss(const Predictor& model, const Dataset& ds, std::size_t batch) {
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < ds.size(); start += batch) {
    const std::size_t end = std::min(ds.size(), start + batch);
    double batch_loss = 0.0;
    for (std::size_t r = start; r < end; ++r) {
      const double p = model.probability(ds.rows.row(r));
      batch_loss += binary_cross_entropy(p, ds.labels[r]);
      correct += (class_from_probability(p) == ds.labels[r]) ? 1 : 0;
    }
    loss += batch_loss;
  }
  const double n = static_cast<double>(ds.size());
  return {loss / n, static_cast<double>(correct) / n};
}

inline double accuracy(const Predictor& model, const Dataset& ds) {
  std::size_t correct = 0;
  for (std::size_t r = 0; r < ds.size(); ++r)
    correct += (predict_class(model, ds.rows.row(r)) == ds.labels[r]) ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

namespace detail {

// Flat view of MLP parameters for the optimizer: W1, b1, W2, b2.
inline std::vector<double*> parameter_slots(MlpModel& m) {
  std::vector<double*> slots;
  for (auto& v : m.w1().data()) slots.push_back(&v);
  for (auto& v : m.b1()) slots.push_back(&v);
  for (auto& v : m.w2()) slots.push_back(&v);
  slots.push_back(&m.b2());
  return slots;
}

// Accumulates d(sum BCE)/d(params) for one row into `grad` (same order as
// parameter_slots) and returns the row's BCE.
inline double accumulate_bce_gradient(const MlpModel& m, std::span<const double> x, int y,
                                      std::vector<double>& grad, std::vector<double>& hidden) {
  const std::size_t n = m.hidden(), d = m.input_width();
  double z = m.b2();
  for (std::size_t j = 0; j < n; ++j) {
    double s = m.b1()[j];
    const auto row = m.w1().row(j);
    for (std::size_t k = 0; k < d; ++k) s += row[k] * x[k];
    hidden[j] = s;
    if (s > 0.0) z += m.w2()[j] * s;
  }
  const double p = sigmoid(z);
  const double dz = p - static_cast<double>(y);
  const std::size_t off_b1 = n * d, off_w2 = off_b1 + n, off_b2 = off_w2 + n;
  for (std::size_t j = 0; j < n; ++j) {
    const double h = hidden[j] > 0.0 ? hidden[j] : 0.0;
    grad[off_w2 + j] += dz * h;
    if (hidden[j] <= 0.0) continue;
    const double dpre = dz * m.w2()[j];
    for (std::size_t k = 0; k < d; ++k) grad[j * d + k] += dpre * x[k];
    grad[off_b1 + j] += dpre;
  }
  grad[off_b2] += dz;
  return binary_cross_entropy(p, y);
}

}  // namespace detail

// Mini-batch Adam on binary cross-entropy with early stopping on validation
// loss. Returns the parameters of the epoch with the lowest validation loss.
inline MlpModel train_mlp(const Dataset& train, const Dataset& val, const TrainConfig& cfg,
                          std::vector<EpochLog>* history = nullptr) {
  cfg.validate();
  require(train.size() > 0 && val.size() > 0, ErrorCode::EmptyInput, "empty train or validation set");
  require(train.count(0) > 0 && train.count(1) > 0, ErrorCode::InsufficientClassRows,
          "training set needs both classes");

  MlpModel model = MlpModel::initialized(train.width(), cfg.hidden, derive_seed(cfg.seed, 1));
  auto slots = detail::parameter_slots(model);
  const std::size_t p = slots.size();
  std::vector<double> grad(p), m1(p, 0.0), m2(p, 0.0), hidden(cfg.hidden);
  Rng shuffle_rng(derive_seed(cfg.seed, 2));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  MlpModel best = model;
  double best_val = evaluate_loss(model, val, cfg.batch_eval).first;
  int stale = 0;
  std::uint64_t step = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_train) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_train);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t i = start; i < end; ++i)
        epoch_loss += detail::accumulate_bce_gradient(model, train.rows.row(order[i]), train.labels[order[i]],
                                                      grad, hidden);
      const double scale = 1.0 / static_cast<double>(end - start);
      ++step;
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      for (std::size_t q = 0; q < p; ++q) {
        const double g = grad[q] * scale;
        m1[q] = cfg.beta1 * m1[q] + (1.0 - cfg.beta1) * g;
        m2[q] = cfg.beta2 * m2[q] + (1.0 - cfg.beta2) * g * g;
        *slots[q] -= cfg.learning_rate * (m1[q] / c1) / (std::sqrt(m2[q] / c2) + cfg.epsilon);
      }
    }
    epoch_loss /= static_cast<double>(train.size());
    const auto [val_loss, val_acc] = evaluate_loss(model, val, cfg.batch_eval);
    if (!std::isfinite(epoch_loss) || !std::isfinite(val_loss) || !model.all_finite())
      fail(ErrorCode::TrainingFailure, "non-finite loss at epoch " + std::to_string(epoch));
    if (history) history->push_back({epoch, epoch_loss, val_loss, val_acc});
    if (val_loss < best_val) {
      best_val = val_loss;
      best = model;
      stale = 0;
    } else if (++stale >= cfg.early_stopping_patience) {
      break;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Random forest

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;  // P(class 1) at a leaf
};

class DecisionTree {
 public:
  DecisionTree() = default;
  explicit DecisionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}

  double probability(std::span<const double> x) const {
    std::size_t i = 0;
    while (nodes_[i].feature >= 0) {
      const auto& n = nodes_[i];
      i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
    }
    return nodes_[i].value;
  }

  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
  std::vector<TreeNode>& nodes() noexcept { return nodes_; }

  std::size_t depth() const { return nodes_.empty() ? 0 : depth_from(0); }

 private:
  std::size_t depth_from(std::size_t i) const {
    if (nodes_[i].feature < 0) return 0;
    return 1 + std::max(depth_from(static_cast<std::size_t>(nodes_[i].left)),
                        depth_from(static_cast<std::size_t>(nodes_[i].right)));
  }

  std::vector<TreeNode> nodes_;
};

struct ForestConfig {
  std::size_t n_estimators = 100;
  bool bootstrap = true;
  // Features examined per split; 0 means round(sqrt(d)).
  std::size_t max_features = 0;
  std::uint64_t seed = 0;
};

class ForestModel final : public Predictor {
 public:
  ForestModel() = default;
  explicit ForestModel(std::vector<DecisionTree> trees) : trees_(std::move(trees)) {}

  double probability(std::span<const double> x) const override {
    double sum = 0.0;
    for (const auto& t : trees_) sum += t.probability(x);
    return sum / static_cast<double>(trees_.size());
  }

  std::size_t n_estimators() const noexcept { return trees_.size(); }
  const std::vector<DecisionTree>& trees() const noexcept { return trees_; }
  std::vector<DecisionTree>& trees() noexcept { return trees_; }

 private:
  std::vector<DecisionTree> trees_;
};

namespace detail {

class TreeBuilder {
 public:
  TreeBuilder(const Matrix& x, const std::vector<int>& y, std::size_t max_features, Rng& rng)
      : x_(x), y_(y), max_features_(max_features), rng_(rng) {}

  DecisionTree build(std::vector<std::size_t> samples) {
    nodes_.clear();
    grow(std::move(samples));
    return DecisionTree(std::move(nodes_));
  }

 private:
  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double impurity = INFINITY;
  };

  static double gini(double pos, double total) {
    if (total <= 0.0) return 0.0;
    const double q = pos / total;
    return 2.0 * q * (1.0 - q);
  }

  int grow(std::vector<std::size_t> samples) {
    const int index = static_cast<int>(nodes_.size());
    nodes_.push_back({});
    double pos = 0.0;
    for (auto s : samples) pos += y_[s];
    const double total = static_cast<double>(samples.size());
    nodes_[static_cast<std::size_t>(index)].value = pos / total;
    if (pos == 0.0 || pos == total) return index;

    const Split split = best_split(samples, pos);
    if (split.feature < 0) return index;

    std::vector<std::size_t> left, right;
    for (auto s : samples)
      (x_(s, static_cast<std::size_t>(split.feature)) <= split.threshold ? left : right).push_back(s);
    samples.clear();
    samples.shrink_to_fit();
    const int l = grow(std::move(left));
    const int r = grow(std::move(right));
    auto& node = nodes_[static_cast<std::size_t>(index)];
    node.feature = split.feature;
    node.threshold = split.threshold;
    node.left = l;
    node.right = r;
    return index;
  }

  // Examines features in random order until `max_features` features with at
  // least one valid cut have been seen (continuing past the budget when the
  // sampled ones are constant in this node).
  Split best_split(const std::vector<std::size_t>& samples, double pos_total) {
    std::vector<std::size_t> features(x_.cols());
    std::iota(features.begin(), features.end(), 0);
    rng_.shuffle(features);
    const double total = static_cast<double>(samples.size());
    Split best;
    std::size_t examined = 0;
    std::vector<std::pair<double, int>> values(samples.size());
    for (auto f : features) {
      if (examined >= max_features_ && best.feature >= 0) break;
      for (std::size_t i = 0; i < samples.size(); ++i) values[i] = {x_(samples[i], f), y_[samples[i]]};
      std::sort(values.begin(), values.end());
      if (values.front().first == values.back().first) continue;
      ++examined;
      double left_pos = 0.0;
      for (std::size_t i = 0; i + 1 < values.size(); ++i) {
        left_pos += values[i].second;
        if (values[i].first == values[i + 1].first) continue;
        const double nl = static_cast<double>(i + 1);
        const double nr = total - nl;
        const double impurity = (nl * gini(left_pos, nl) + nr * gini(pos_total - left_pos, nr)) / total;
        if (impurity < best.impurity) {
          best.impurity = impurity;
          best.feature = static_cast<int>(f);
          best.threshold = 0.5 * (values[i].first + values[i + 1].first);
        }
      }
    }
    return best;
  }

  const Matrix& x_;
  const std::vector<int>& y_;
  std::size_t max_features_;
  Rng& rng_;
  std::vector<TreeNode> nodes_;
};

}  // namespace detail

// Bootstrap-aggregated CART trees grown with Gini splits until pure or
// unsplittable.
inline ForestModel train_forest(const Dataset& train, const ForestConfig& cfg) {
  require(train.size() > 0, ErrorCode::EmptyInput, "empty training set");
  require(cfg.n_estimators >= 1, ErrorCode::InvalidArgument, "n_estimators must be >= 1");
  const std::size_t d = train.width();
  const std::size_t max_features =
      cfg.max_features == 0
          ? std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(d)))))
          : std::min(cfg.max_features, d);
  std::vector<DecisionTree> trees;
  trees.reserve(cfg.n_estimators);
  for (std::size_t t = 0; t < cfg.n_estimators; ++t) {
    Rng rng(derive_seed(cfg.seed, 3, t));
    std::vector<std::size_t> samples(train.size());
    if (cfg.bootstrap) {
      for (auto& s : samples) s = rng.index(train.size());
    } else {
      std::iota(samples.begin(), samples.end(), 0);
    }
    detail::TreeBuilder builder(train.rows, train.labels, max_features, rng);
    trees.push_back(builder.build(std::move(samples)));
  }
  return ForestModel(std::move(trees));
}

inline ForestModel train_forest(const Dataset& train, std::size_t n_estimators, std::uint64_t seed) {
  ForestConfig cfg;
  cfg.n_estimators = n_estimators;
  cfg.seed = seed;
  return train_forest(train, cfg);
}

// ---------------------------------------------------------------------------
// Serialization

using TrainedModel = std::variant<MlpModel, ForestModel>;

inline const Predictor& as_predictor(const TrainedModel& m) {
  return std::visit([](const auto& v) -> const Predictor& { return v; }, m);
}

inline std::string backend_name(const TrainedModel& m) {
  return std::holds_alternative<MlpModel>(m) ? "mlp" : "forest";
}

inline constexpr int kModelFormatVersion = 1;

inline nlohmann::json model_to_json(const TrainedModel& model) {
  nlohmann::json j{{"format", "dicex-model"}, {"version", kModelFormatVersion}, {"backend", backend_name(model)}};
  if (const auto* mlp = std::get_if<MlpModel>(&model)) {
    j["input_width"] = mlp->input_width();
    j["hidden"] = mlp->hidden();
    j["W1"] = mlp->w1().data();
    j["b1"] = mlp->b1();
    j["W2"] = mlp->w2();
    j["b2"] = mlp->b2();
  } else {
    const auto& forest = std::get<ForestModel>(model);
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& tree : forest.trees()) {
      std::vector<int> feature, left, right;
      std::vector<double> threshold, value;
      for (const auto& n : tree.nodes()) {
        feature.push_back(n.feature);
        threshold.push_back(n.threshold);
        left.push_back(n.left);
        right.push_back(n.right);
        value.push_back(n.value);
      }
      trees.push_back({{"feature", feature}, {"threshold", threshold}, {"left", left}, {"right", right},
                       {"value", value}});
    }
    j["n_estimators"] = forest.n_estimators();
    j["criterion"] = "gini";
    j["trees"] = std::move(trees);
  }
  return j;
}

inline TrainedModel model_from_json(const nlohmann::json& j) {
  try {
    require(j.at("format").get<std::string>() == "dicex-model", ErrorCode::UnparseableValue,
            "not a model document");
    require(j.at("version").get<int>() == kModelFormatVersion, ErrorCode::UnparseableValue,
            "unsupported model version");
    const auto backend = j.at("backend").get<std::string>();
    if (backend == "mlp") {
      MlpModel m(j.at("input_width").get<std::size_t>(), j.at("hidden").get<std::size_t>());
      auto w1 = j.at("W1").get<std::vector<double>>();
      require(w1.size() == m.w1().data().size(), ErrorCode::DimensionMismatch, "W1 size");
      m.w1().data() = std::move(w1);
      m.b1() = j.at("b1").get<std::vector<double>>();
      m.w2() = j.at("W2").get<std::vector<double>>();
      require(m.b1().size() == m.hidden() && m.w2().size() == m.hidden(), ErrorCode::DimensionMismatch,
              "bias/W2 size");
      m.b2() = j.at("b2").get<double>();
      return m;
    }
    require(backend == "forest", ErrorCode::UnparseableValue, "unknown backend " + backend);
    std::vector<DecisionTree> trees;
    for (const auto& tj : j.at("trees")) {
      const auto feature = tj.at("feature").get<std::vector<int>>();
      const auto threshold = tj.at("threshold").get<std::vector<double>>();
      const auto left = tj.at("left").get<std::vector<int>>();
      const auto right = tj.at("right").get<std::vector<int>>();
      const auto value = tj.at("value").get<std::vector<double>>();
      const std::size_t n = feature.size();
      require(n > 0 && threshold.size() == n && left.size() == n && right.size() == n && value.size() == n,
              ErrorCode::DimensionMismatch, "tree node arrays differ in length");
      std::vector<TreeNode> nodes(n);
      for (std::size_t i = 0; i < n; ++i) {
        nodes[i] = {feature[i], threshold[i], left[i], right[i], value[i]};
        if (feature[i] >= 0)
          require(left[i] > 0 && right[i] > 0 && static_cast<std::size_t>(left[i]) < n &&
                      static_cast<std::size_t>(right[i]) < n,
                  ErrorCode::UnparseableValue, "tree child index out of range");
      }
      trees.emplace_back(std::move(nodes));
    }
    require(!trees.empty(), ErrorCode::UnparseableValue, "forest without trees");
    return ForestModel(std::move(trees));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::UnparseableValue, e.what());
  }
}

// A trained model plus what is needed to use it on raw data: the resolved
// schema (with scaling bounds) and the training-split MAD per feature.
struct ModelBundle {
  TrainedModel model;
  FeatureSchema schema;
  std::vector<double> feature_mad;
};

inline nlohmann::json bundle_to_json(const ModelBundle& b) {
  auto j = model_to_json(b.model);
  j["schema"] = schema_to_json(b.schema);
  j["feature_mad"] = b.feature_mad;
  return j;
}

inline ModelBundle bundle_from_json(const nlohmann::json& j) {
  ModelBundle b{model_from_json(j), {}, {}};
  try {
    b.schema = schema_from_json(j.at("schema"));
    b.feature_mad = j.at("feature_mad").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::UnparseableValue, e.what());
  }
  b.schema.validate(true);
  require(b.feature_mad.size() == b.schema.features.size(), ErrorCode::DimensionMismatch, "feature_mad size");
  return b;
}

inline void save_bundle(const ModelBundle& b, const std::string& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::Io, "cannot write " + path);
  out << bundle_to_json(b).dump() << '\n';
  require(static_cast<bool>(out), ErrorCode::Io, "write failed for " + path);
}

inline ModelBundle load_bundle(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::Io, "cannot open model " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::UnparseableValue, path + ": " + e.what());
  }
  return bundle_from_json(j);
}

}  // namespace dicex
