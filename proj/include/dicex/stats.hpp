#pragma once

// Two-tailed paired Student t-test.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "dicex/error.hpp"

namespace dicex {

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // sample (n - 1) standard deviation
};

inline Summary summarize(std::span<const double> values) {
  require(values.size() >= 2, ErrorCode::InvalidArgument, "standard deviation needs n >= 2");
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / (n - 1.0))};
}

namespace detail {

// Continued fraction for the incomplete beta function (modified Lentz).
inline double beta_continued_fraction(double a, double b, double x) {
  constexpr double kTiny = 1e-300;
  constexpr double kTol = 1e-15;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 10000; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kTol) return h;
  }
  return h;
}

}  // namespace detail

// Regularized incomplete beta I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
  require(a > 0 && b > 0, ErrorCode::InvalidArgument, "incomplete_beta needs a, b > 0");
  require(x >= 0 && x <= 1, ErrorCode::InvalidArgument, "incomplete_beta needs x in [0,1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * detail::beta_continued_fraction(b, a, 1.0 - x) / b;
}

// P(|T| >= |t|) for T ~ Student-t with `dof` degrees of freedom.
inline double student_t_two_tailed(double t, double dof) {
  require(dof > 0, ErrorCode::InvalidArgument, "dof must be > 0");
  if (std::isinf(t)) return 0.0;
  return incomplete_beta(0.5 * dof, 0.5, dof / (dof + t * t));
}

inline double student_t_cdf(double t, double dof) {
  const double tail = 0.5 * student_t_two_tailed(t, dof);
  return t >= 0 ? 1.0 - tail : tail;
}

struct PairedTestResult {
  double mean_difference = 0.0;
  double t_statistic = 0.0;
  int degrees_of_freedom = 0;
  double p_value = 1.0;
  bool significant = false;
};

// Raised when every paired difference is identical (zero variance).
class DegenerateDifferencesError : public Error {
 public:
  explicit DegenerateDifferencesError(double mean_difference)
      : Error(ErrorCode::DegenerateDifferences, "paired differences have zero variance"),
        mean_difference_(mean_difference) {}

  double mean_difference() const noexcept { return mean_difference_; }

 private:
  double mean_difference_;
};

// Tests H0: mean(a - b) = 0 against the two-sided alternative.
inline PairedTestResult paired_t_test(std::span<const double> a, std::span<const double> b, double alpha = 0.05) {
  require(a.size() == b.size(), ErrorCode::DimensionMismatch, "paired samples differ in length");
  require(a.size() >= 2, ErrorCode::InvalidArgument, "paired t-test needs n >= 2");
  require(alpha > 0 && alpha < 1, ErrorCode::InvalidArgument, "alpha must be in (0,1)");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  bool constant = true;
  for (double v : d) constant = constant && v == d.front();
  const Summary s = summarize(d);
  if (constant || s.std == 0.0) throw DegenerateDifferencesError(s.mean);

  PairedTestResult r;
  const double n = static_cast<double>(d.size());
  r.mean_difference = s.mean;
  r.t_statistic = s.mean / (s.std / std::sqrt(n));
  r.degrees_of_freedom = static_cast<int>(d.size()) - 1;
  r.p_value = std::clamp(student_t_two_tailed(r.t_statistic, r.degrees_of_freedom), 0.0, 1.0);
  r.significant = r.p_value < alpha;
  return r;
}

// Scientific notation with three significant digits, e.g. "7.42e-02".
inline std::string format_p_value(double p) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", p);
  return buf;
}

}  // namespace dicex
