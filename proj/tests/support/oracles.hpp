#pragma once

// Brute-force reference implementations. Written from the definitions, not
// from the library code, and deliberately naive.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

namespace oracle {

using Rows = std::vector<std::vector<double>>;

// Laplace expansion along the first row.
inline double cofactor_det(const Rows& a) {
  const std::size_t n = a.size();
  if (n == 1) return a[0][0];
  if (n == 2) return a[0][0] * a[1][1] - a[0][1] * a[1][0];
  double det = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    Rows minor;
    for (std::size_t r = 1; r < n; ++r) {
      std::vector<double> row;
      for (std::size_t j = 0; j < n; ++j)
        if (j != c) row.push_back(a[r][j]);
      minor.push_back(row);
    }
    det += ((c % 2 == 0) ? 1.0 : -1.0) * a[0][c] * cofactor_det(minor);
  }
  return det;
}

inline double l1(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::fabs(a[i] - b[i]);
  return s;
}

inline double l2(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

inline Rows kernel(const Rows& cfs, bool use_l2) {
  Rows k(cfs.size(), std::vector<double>(cfs.size()));
  for (std::size_t i = 0; i < cfs.size(); ++i)
    for (std::size_t j = 0; j < cfs.size(); ++j)
      k[i][j] = 1.0 / (1.0 + (use_l2 ? l2(cfs[i], cfs[j]) : l1(cfs[i], cfs[j])));
  return k;
}

inline double diversity(const Rows& cfs, bool use_l2, double jitter) {
  Rows k = kernel(cfs, use_l2);
  for (std::size_t i = 0; i < k.size(); ++i) k[i][i] += jitter;
  return cofactor_det(k);
}

// Set-based Dice: build the index sets and intersect them.
inline double dice(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<std::size_t> sa, sb, both;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i]) sa.push_back(i);
    if (b[i]) sb.push_back(i);
  }
  for (auto i : sa)
    for (auto j : sb)
      if (i == j) both.push_back(i);
  if (sa.empty() && sb.empty()) return 1.0;
  return 2.0 * static_cast<double>(both.size()) / static_cast<double>(sa.size() + sb.size());
}

inline double proximity(const Rows& cfs, const std::vector<double>& x, int p) {
  double s = 0.0;
  for (const auto& c : cfs) s += p == 1 ? l1(c, x) : l2(c, x);
  return s / static_cast<double>(cfs.size());
}

// Feature groups: a list of (offset, width); width > 1 is a one-hot block.
struct Group {
  std::size_t offset;
  std::size_t width;
};

inline std::size_t first_max(const std::vector<double>& row, const Group& g) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < g.width; ++j)
    if (row[g.offset + j] > row[g.offset + best]) best = j;
  return best;
}

inline double sparsity(const Rows& cfs, const std::vector<double>& x, const std::vector<Group>& groups,
                       double tol) {
  double changed = 0.0;
  for (const auto& c : cfs)
    for (const auto& g : groups) {
      const bool diff = g.width == 1 ? std::fabs(c[g.offset] - x[g.offset]) > tol : first_max(c, g) != first_max(x, g);
      if (diff) changed += 1.0;
    }
  return 1.0 - changed / static_cast<double>(cfs.size() * groups.size());
}

inline double mad(const std::vector<double>& v) {
  long double mean = 0.0L;
  for (double e : v) mean += e;
  mean /= static_cast<long double>(v.size());
  long double dev = 0.0L;
  for (double e : v) dev += std::fabs(static_cast<long double>(e) - mean);
  return static_cast<double>(dev / static_cast<long double>(v.size()));
}

// Two-pass mean and sample standard deviation in long double.
inline std::pair<double, double> summarize(const std::vector<double>& v) {
  long double mean = 0.0L;
  for (double e : v) mean += e;
  mean /= static_cast<long double>(v.size());
  long double ss = 0.0L;
  for (double e : v) ss += (e - mean) * (e - mean);
  return {static_cast<double>(mean), static_cast<double>(std::sqrt(ss / static_cast<long double>(v.size() - 1)))};
}

// Central difference of f along every coordinate of x.
inline std::vector<double> central_difference(const std::function<double(const std::vector<double>&)>& f,
                                              std::vector<double> x, double h) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = f(x);
    x[i] = saved - h;
    const double down = f(x);
    x[i] = saved;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// ||a - b|| / max(||a||, ||b||, floor).
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-8) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

inline Rows random_rows(std::mt19937_64& gen, std::size_t n, std::size_t d) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Rows rows(n, std::vector<double>(d));
  for (auto& r : rows)
    for (auto& v : r) v = u(gen);
  return rows;
}

}  // namespace oracle
