#pragma once

// Tabular data: feature schema, [0,1] encoding (min-max for continuous,
// one-hot for categorical), CSV ingestion, stratified splitting, mean absolute
// deviation and synthetic neighbourhood sampling.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "dicex/csv.hpp"
#include "dicex/error.hpp"
#include "dicex/linalg.hpp"
#include "dicex/rng.hpp"

namespace dicex {

enum class FeatureKind { Continuous, Categorical };

struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::Continuous;
  // Continuous only. When absent at load time the bounds are fitted to the
  // data; declared bounds are hard and out-of-range values are rejected.
  std::optional<double> min;
  std::optional<double> max;
  std::vector<std::string> categories;  // categorical only, ordered
  bool actionable = true;

  static FeatureSpec continuous(std::string name, double lo, double hi, bool actionable = true) {
    FeatureSpec f;
    f.name = std::move(name);
    f.kind = FeatureKind::Continuous;
    f.min = lo;
    f.max = hi;
    f.actionable = actionable;
    return f;
  }

  static FeatureSpec categorical(std::string name, std::vector<std::string> categories,
                                 bool actionable = true) {
    FeatureSpec f;
    f.name = std::move(name);
    f.kind = FeatureKind::Categorical;
    f.categories = std::move(categories);
    f.actionable = actionable;
    return f;
  }

  bool is_categorical() const noexcept { return kind == FeatureKind::Categorical; }
  std::size_t encoded_width() const noexcept { return is_categorical() ? categories.size() : 1; }
  bool bounded() const noexcept { return min.has_value() && max.has_value(); }
};

// Where one original feature lives in the encoded row.
struct FeatureSpan {
  std::size_t offset = 0;
  std::size_t width = 1;
  bool categorical = false;
  bool actionable = true;
};

class Layout {
 public:
  Layout() = default;
  explicit Layout(std::vector<FeatureSpan> spans) : spans_(std::move(spans)) {
    for (const auto& s : spans_) width_ = std::max(width_, s.offset + s.width);
  }

  std::size_t feature_count() const noexcept { return spans_.size(); }
  std::size_t encoded_width() const noexcept { return width_; }
  const std::vector<FeatureSpan>& spans() const noexcept { return spans_; }
  const FeatureSpan& operator[](std::size_t i) const { return spans_[i]; }

  // Per encoded column: may the optimizer change it?
  std::vector<bool> actionable_mask() const {
    std::vector<bool> mask(width_, false);
    for (const auto& s : spans_)
      for (std::size_t j = 0; j < s.width; ++j) mask[s.offset + j] = s.actionable;
    return mask;
  }

  // Index of the largest entry in a categorical block; lowest index wins ties.
  static std::size_t block_argmax(std::span<const double> row, const FeatureSpan& span) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < span.width; ++j)
      if (row[span.offset + j] > row[span.offset + best]) best = j;
    return best;
  }

  // Replaces every categorical block by the one-hot vector of its argmax.
  void project_one_hot(std::span<double> row) const {
    for (const auto& s : spans_) {
      if (!s.categorical) continue;
      const std::size_t hot = block_argmax(row, s);
      for (std::size_t j = 0; j < s.width; ++j) row[s.offset + j] = (j == hot) ? 1.0 : 0.0;
    }
  }

  bool is_valid_row(std::span<const double> row, double tol = 1e-12) const {
    if (row.size() != width_) return false;
    for (double v : row)
      if (!(v >= -tol && v <= 1.0 + tol)) return false;
    for (const auto& s : spans_) {
      if (!s.categorical) continue;
      double sum = 0.0;
      for (std::size_t j = 0; j < s.width; ++j) sum += row[s.offset + j];
      if (std::abs(sum - 1.0) > tol) return false;
    }
    return true;
  }

 private:
  std::vector<FeatureSpan> spans_;
  std::size_t width_ = 0;
};

struct FeatureSchema {
  std::vector<FeatureSpec> features;
  std::string label = "label";

  // Checks invariants. `require_bounds` demands min/max on every continuous
  // feature (true once bounds are fitted).
  void validate(bool require_bounds = false) const {
    require(!features.empty(), ErrorCode::InvalidSchema, "schema has no features");
    std::set<std::string> names;
    bool any_actionable = false;
    for (const auto& f : features) {
      require(!f.name.empty(), ErrorCode::InvalidSchema, "feature with empty name");
      require(names.insert(f.name).second, ErrorCode::InvalidSchema, "duplicate feature " + f.name);
      require(f.name != label, ErrorCode::InvalidSchema, "feature named like the label column");
      any_actionable = any_actionable || f.actionable;
      if (f.is_categorical()) {
        std::set<std::string> cats(f.categories.begin(), f.categories.end());
        require(cats.size() == f.categories.size(), ErrorCode::InvalidSchema,
                "duplicate category in " + f.name);
        require(cats.size() >= 2, ErrorCode::InvalidSchema, f.name + " needs >= 2 categories");
      } else {
        require(f.min.has_value() == f.max.has_value(), ErrorCode::InvalidSchema,
                f.name + " must declare both min and max or neither");
        if (f.bounded())
          require(*f.min < *f.max, ErrorCode::InvalidSchema, f.name + " requires min < max");
        else
          require(!require_bounds, ErrorCode::InvalidSchema, f.name + " has no bounds");
      }
    }
    require(any_actionable, ErrorCode::InvalidSchema, "at least one feature must be actionable");
  }

  Layout layout() const {
    std::vector<FeatureSpan> spans;
    std::size_t offset = 0;
    for (const auto& f : features) {
      spans.push_back({offset, f.encoded_width(), f.is_categorical(), f.actionable});
      offset += f.encoded_width();
    }
    return Layout(std::move(spans));
  }

  std::size_t encoded_width() const {
    std::size_t w = 0;
    for (const auto& f : features) w += f.encoded_width();
    return w;
  }

  std::optional<std::size_t> find(const std::string& name) const {
    for (std::size_t i = 0; i < features.size(); ++i)
      if (features[i].name == name) return i;
    return std::nullopt;
  }
};

inline nlohmann::json schema_to_json(const FeatureSchema& schema) {
  nlohmann::json features = nlohmann::json::array();
  for (const auto& f : schema.features) {
    nlohmann::json j{{"name", f.name},
                     {"kind", f.is_categorical() ? "categorical" : "continuous"},
                     {"actionable", f.actionable}};
    if (f.is_categorical()) {
      j["categories"] = f.categories;
    } else if (f.bounded()) {
      j["min"] = *f.min;
      j["max"] = *f.max;
    }
    features.push_back(std::move(j));
  }
  return {{"label", schema.label}, {"features", std::move(features)}};
}

inline FeatureSchema schema_from_json(const nlohmann::json& j) {
  try {
    FeatureSchema schema;
    schema.label = j.value("label", std::string("label"));
    for (const auto& fj : j.at("features")) {
      FeatureSpec f;
      f.name = fj.at("name").get<std::string>();
      const auto kind = fj.at("kind").get<std::string>();
      if (kind == "continuous") {
        f.kind = FeatureKind::Continuous;
        if (fj.contains("min")) f.min = fj.at("min").get<double>();
        if (fj.contains("max")) f.max = fj.at("max").get<double>();
      } else if (kind == "categorical") {
        f.kind = FeatureKind::Categorical;
        f.categories = fj.at("categories").get<std::vector<std::string>>();
      } else {
        fail(ErrorCode::InvalidSchema, "unknown feature kind '" + kind + "'");
      }
      f.actionable = fj.value("actionable", true);
      schema.features.push_back(std::move(f));
    }
    schema.validate();
    return schema;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidSchema, e.what());
  }
}

inline FeatureSchema load_schema(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::Io, "cannot open schema " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidSchema, path + ": " + e.what());
  }
  return schema_from_json(j);
}

// A raw (user-unit) feature value: a number for continuous features, a
// category label for categorical ones.
using RawValue = std::variant<double, std::string>;
using RawRow = std::vector<RawValue>;

inline std::string to_string(const RawValue& v) {
  if (const auto* s = std::get_if<std::string>(&v)) return *s;
  return csv::format_double(std::get<double>(v));
}

inline double parse_number(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size() || !std::isfinite(v)) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    fail(ErrorCode::UnparseableValue, what + ": cannot parse '" + text + "'");
  }
}

// Maps raw rows to the encoded [0,1] representation and back. Requires every
// continuous feature to carry bounds.
class Encoder {
 public:
  explicit Encoder(FeatureSchema schema) : schema_(std::move(schema)) {
    schema_.validate(true);
    layout_ = schema_.layout();
  }

  const FeatureSchema& schema() const noexcept { return schema_; }
  const Layout& layout() const noexcept { return layout_; }
  std::size_t encoded_width() const noexcept { return layout_.encoded_width(); }

  std::vector<double> encode(const RawRow& raw) const {
    require(raw.size() == schema_.features.size(), ErrorCode::DimensionMismatch,
            "raw row has wrong feature count");
    std::vector<double> out(encoded_width(), 0.0);
    for (std::size_t i = 0; i < raw.size(); ++i) {
      const auto& f = schema_.features[i];
      const auto& span = layout_[i];
      if (f.is_categorical()) {
        const auto* label = std::get_if<std::string>(&raw[i]);
        require(label != nullptr, ErrorCode::UnparseableValue, f.name + " expects a category");
        out[span.offset + category_index(i, *label)] = 1.0;
      } else {
        double v = 0.0;
        if (const auto* num = std::get_if<double>(&raw[i])) v = *num;
        else v = parse_number(std::get<std::string>(raw[i]), f.name);
        out[span.offset] = scale(i, v);
      }
    }
    return out;
  }

  // Parses text fields (CSV cells) in schema order.
  std::vector<double> encode_text(const std::vector<std::string>& fields) const {
    RawRow raw;
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i < schema_.features.size() && !schema_.features[i].is_categorical())
        raw.emplace_back(parse_number(fields[i], schema_.features[i].name));
      else
        raw.emplace_back(fields[i]);
    }
    return encode(raw);
  }

  RawRow decode(std::span<const double> row) const {
    require(row.size() == encoded_width(), ErrorCode::DimensionMismatch, "encoded row width");
    RawRow out;
    for (std::size_t i = 0; i < schema_.features.size(); ++i) {
      const auto& f = schema_.features[i];
      const auto& span = layout_[i];
      if (f.is_categorical()) {
        out.emplace_back(f.categories[Layout::block_argmax(row, span)]);
      } else {
        out.emplace_back(*f.min + row[span.offset] * (*f.max - *f.min));
      }
    }
    return out;
  }

  std::size_t category_index(std::size_t feature, const std::string& label) const {
    const auto& cats = schema_.features[feature].categories;
    const auto it = std::find(cats.begin(), cats.end(), label);
    require(it != cats.end(), ErrorCode::UnknownCategory,
            "'" + label + "' is not a category of " + schema_.features[feature].name);
    return static_cast<std::size_t>(it - cats.begin());
  }

  double scale(std::size_t feature, double raw) const {
    const auto& f = schema_.features[feature];
    require(raw >= *f.min && raw <= *f.max, ErrorCode::OutOfRange,
            f.name + " value " + csv::format_double(raw) + " outside [" + csv::format_double(*f.min) +
                ", " + csv::format_double(*f.max) + "]");
    return (raw - *f.min) / (*f.max - *f.min);
  }

  // Converts a raw-unit width (e.g. a MAD) into encoded units.
  double scale_width(std::size_t feature, double raw_width) const {
    const auto& f = schema_.features[feature];
    return raw_width / (*f.max - *f.min);
  }

 private:
  FeatureSchema schema_;
  Layout layout_;
};

struct Dataset {
  Encoder encoder;
  Matrix rows;              // n x d, encoded
  std::vector<int> labels;  // {0,1}

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t width() const noexcept { return rows.cols(); }
  const FeatureSchema& schema() const noexcept { return encoder.schema(); }
  const Layout& layout() const noexcept { return encoder.layout(); }

  std::size_t count(int label) const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
  }

  Dataset subset(std::span<const std::size_t> indices) const {
    std::vector<int> sub_labels;
    sub_labels.reserve(indices.size());
    for (auto i : indices) sub_labels.push_back(labels[i]);
    return Dataset{encoder, rows.select_rows(indices), std::move(sub_labels)};
  }

  void validate() const {
    require(rows.rows() == labels.size(), ErrorCode::DimensionMismatch, "rows/labels length");
    require(rows.cols() == encoder.encoded_width(), ErrorCode::DimensionMismatch, "encoded width");
    for (std::size_t r = 0; r < rows.rows(); ++r)
      require(layout().is_valid_row(rows.row(r)), ErrorCode::OutOfRange,
              "row " + std::to_string(r) + " is not a valid encoded row");
    for (int y : labels) require(y == 0 || y == 1, ErrorCode::InvalidArgument, "labels must be 0/1");
    require(count(0) > 0 && count(1) > 0, ErrorCode::InsufficientClassRows,
            "labels must contain both classes");
  }
};

inline int parse_label(const std::string& text) {
  if (text == "0") return 0;
  if (text == "1") return 1;
  const double v = parse_number(text, "label");
  if (v == 0.0) return 0;
  if (v == 1.0) return 1;
  fail(ErrorCode::UnparseableValue, "label must be 0 or 1, got '" + text + "'");
}

// Builds a dataset from an in-memory table. Continuous features without
// declared bounds get bounds fitted to the observed values.
inline Dataset dataset_from_table(const csv::Table& table, FeatureSchema schema) {
  schema.validate();
  std::unordered_map<std::string, std::size_t> column;
  for (std::size_t i = 0; i < table.header.size(); ++i) column[table.header[i]] = i;

  std::vector<std::size_t> source;
  for (const auto& f : schema.features) {
    auto it = column.find(f.name);
    require(it != column.end(), ErrorCode::MissingColumn, "CSV lacks column '" + f.name + "'");
    source.push_back(it->second);
  }
  auto label_it = column.find(schema.label);
  require(label_it != column.end(), ErrorCode::MissingColumn,
          "CSV lacks label column '" + schema.label + "'");
  require(!table.rows.empty(), ErrorCode::EmptyInput, "CSV has no data rows");

  for (std::size_t i = 0; i < schema.features.size(); ++i) {
    auto& f = schema.features[i];
    if (f.is_categorical() || f.bounded()) continue;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& row : table.rows) {
      const double v = parse_number(row[source[i]], f.name);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    require(lo < hi, ErrorCode::InvalidSchema, f.name + " is constant; declare bounds explicitly");
    f.min = lo;
    f.max = hi;
  }

  Encoder encoder(std::move(schema));
  Matrix rows(0, encoder.encoded_width());
  std::vector<int> labels;
  std::vector<std::string> fields(source.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    for (std::size_t i = 0; i < source.size(); ++i) fields[i] = table.rows[r][source[i]];
    rows.append_row(encoder.encode_text(fields));
    labels.push_back(parse_label(table.rows[r][label_it->second]));
  }
  Dataset ds{std::move(encoder), std::move(rows), std::move(labels)};
  ds.validate();
  return ds;
}

inline Dataset load_csv(const std::string& path, const FeatureSchema& schema) {
  return dataset_from_table(csv::read_file(path), schema);
}

inline void write_csv(std::ostream& out, const Dataset& ds) {
  std::vector<std::string> header;
  for (const auto& f : ds.schema().features) header.push_back(f.name);
  header.push_back(ds.schema().label);
  csv::write_row(out, header);
  for (std::size_t r = 0; r < ds.size(); ++r) {
    std::vector<std::string> fields;
    for (const auto& v : ds.encoder.decode(ds.rows.row(r))) fields.push_back(to_string(v));
    fields.push_back(std::to_string(ds.labels[r]));
    csv::write_row(out, fields);
  }
}

// Stratified split. Each class contributes round(ratio * n_c) rows to the
// first part, clamped so both parts keep at least one row of every class.
inline std::pair<Dataset, Dataset> train_test_split(const Dataset& ds, double ratio, std::uint64_t seed) {
  require(ratio > 0.0 && ratio < 1.0, ErrorCode::InvalidArgument, "split ratio must be in (0,1)");
  Rng rng(seed);
  std::vector<std::size_t> train_idx, test_idx;
  for (int label : {0, 1}) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < ds.size(); ++i)
      if (ds.labels[i] == label) members.push_back(i);
    require(members.size() >= 2, ErrorCode::InsufficientClassRows,
            "class " + std::to_string(label) + " has fewer than 2 rows");
    rng.shuffle(members);
    auto take = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(members.size())));
    take = std::clamp<std::size_t>(take, 1, members.size() - 1);
    train_idx.insert(train_idx.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(take));
    test_idx.insert(test_idx.end(), members.begin() + static_cast<std::ptrdiff_t>(take), members.end());
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  return {ds.subset(train_idx), ds.subset(test_idx)};
}

// Mean absolute deviation about the mean.
inline double mad(std::span<const double> column) {
  require(!column.empty(), ErrorCode::EmptyInput, "mad of an empty vector");
  double mean = 0.0;
  for (double v : column) mean += v;
  mean /= static_cast<double>(column.size());
  double dev = 0.0;
  for (double v : column) dev += std::abs(v - mean);
  return dev / static_cast<double>(column.size());
}

// Per-feature MAD in encoded units (0 for categorical features). Min-max
// scaling is affine, so the MAD of the encoded column is the raw MAD mapped
// through the encoder.
inline std::vector<double> feature_mad(const Dataset& ds) {
  std::vector<double> out(ds.layout().feature_count(), 0.0);
  std::vector<double> column(ds.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto& span = ds.layout()[i];
    if (span.categorical) continue;
    for (std::size_t r = 0; r < ds.size(); ++r) column[r] = ds.rows(r, span.offset);
    out[i] = mad(column);
  }
  return out;
}

// Probability per unit of radius factor that a categorical feature is
// resampled in a synthetic neighbourhood.
inline constexpr double kCategoricalResampleRate = 0.25;

// Per-feature neighbourhood radii: factor * MAD for continuous features, and
// the resample probability min(1, factor * rate) for categorical features.
inline std::vector<double> neighborhood_radii(const Layout& layout, std::span<const double> mad_per_feature,
                                              double factor) {
  require(mad_per_feature.size() == layout.feature_count(), ErrorCode::DimensionMismatch,
          "one MAD per feature expected");
  std::vector<double> radii(layout.feature_count());
  for (std::size_t i = 0; i < radii.size(); ++i)
    radii[i] = layout[i].categorical ? std::min(1.0, factor * kCategoricalResampleRate)
                                     : factor * mad_per_feature[i];
  return radii;
}

// Samples `count` rows around x: continuous coordinates get uniform noise in
// [-r, r] then are clamped to [0,1]; a categorical block is redrawn uniformly
// with probability min(1, r).
inline Matrix synthetic_neighbors(const Layout& layout, std::span<const double> x,
                                  std::span<const double> radii, std::size_t count, std::uint64_t seed) {
  require(x.size() == layout.encoded_width(), ErrorCode::DimensionMismatch, "query width");
  require(radii.size() == layout.feature_count(), ErrorCode::DimensionMismatch, "one radius per feature");
  require(count >= 1, ErrorCode::InvalidArgument, "count must be >= 1");
  for (double r : radii) require(r >= 0.0, ErrorCode::InvalidArgument, "negative radius");

  Rng rng(seed);
  Matrix out(count, x.size());
  for (std::size_t n = 0; n < count; ++n) {
    auto row = out.row(n);
    std::copy(x.begin(), x.end(), row.begin());
    for (std::size_t i = 0; i < layout.feature_count(); ++i) {
      const auto& span = layout[i];
      if (span.categorical) {
        if (rng.bernoulli(std::min(1.0, radii[i]))) {
          const std::size_t hot = rng.index(span.width);
          for (std::size_t j = 0; j < span.width; ++j) row[span.offset + j] = (j == hot) ? 1.0 : 0.0;
        }
      } else if (radii[i] > 0.0) {
        const double v = x[span.offset] + rng.uniform(-radii[i], radii[i]);
        row[span.offset] = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return out;
}

// Bundled desk-scale dataset: two continuous features and one three-way
// categorical feature with a noisy linear decision rule crossing the middle of
// the feature box.
inline Dataset make_synthetic_dataset(std::size_t rows = 1000, std::uint64_t seed = 7) {
  FeatureSchema schema;
  schema.label = "approved";
  schema.features = {
      FeatureSpec::continuous("income", 20.0, 120.0),
      FeatureSpec::continuous("tenure", 0.0, 40.0),
      FeatureSpec::categorical("grade", {"A", "B", "C"}),
  };
  const double grade_shift[] = {0.15, 0.0, -0.15};
  Encoder encoder(schema);
  Matrix data(0, encoder.encoded_width());
  std::vector<int> labels;
  Rng rng(seed);
  for (std::size_t r = 0; r < rows; ++r) {
    const double u1 = rng.uniform();
    const double u2 = rng.uniform();
    const std::size_t grade = rng.index(3);
    const double score = u1 + u2 + grade_shift[grade] + rng.normal(0.0, 0.05);
    RawRow raw{20.0 + 100.0 * u1, 40.0 * u2, schema.features[2].categories[grade]};
    data.append_row(encoder.encode(raw));
    labels.push_back(score > 1.0 ? 1 : 0);
  }
  Dataset ds{std::move(encoder), std::move(data), std::move(labels)};
  ds.validate();
  return ds;
}

}  // namespace dicex
