#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance binary.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "annp/autodiff.hpp"
#include "annp/matrix.hpp"

namespace oracle {

using annp::Matrix;
using annp::ParamStore;

inline double logsumexp(const std::vector<double> &xs) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : xs) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

// Enumerates every monotonic blank/emit path through the T x (U+1) lattice
// and returns log sum_paths prod p. logp row is t*(U+1)+u.
inline double alignment_sum(const Matrix &logp, std::size_t T,
                            std::span<const std::size_t> labels,
                            std::size_t blank = 0) {
  const std::size_t U = labels.size();
  std::vector<double> paths;
  std::function<void(std::size_t, std::size_t, double)> walk =
      [&](std::size_t t, std::size_t u, double acc) {
        const std::size_t row = t * (U + 1) + u;
        if (t == T - 1 && u == U) {
          paths.push_back(acc + logp(row, blank));
          return;
        }
        if (t + 1 < T) walk(t + 1, u, acc + logp(row, blank));
        if (u < U) walk(t, u + 1, acc + logp(row, labels[u]));
      };
  walk(0, 0, 0.0);
  return logsumexp(paths);
}

inline Matrix random_log_softmax(std::size_t rows, std::size_t V,
                                 std::mt19937_64 &rng, double spread = 2.0) {
  std::normal_distribution<double> g(0.0, spread);
  Matrix m(rows, V);
  for (std::size_t r = 0; r < rows; ++r) {
    std::vector<double> xs(V);
    for (double &x : xs) x = g(rng);
    const double z = logsumexp(xs);
    for (std::size_t v = 0; v < V; ++v) m(r, v) = xs[v] - z;
  }
  return m;
}

inline Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64 &rng,
                            double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Matrix m(r, c);
  for (double &x : m.data) x = g(rng);
  return m;
}

// Relative error with a small absolute floor so coordinates whose true
// gradient is ~0 are judged on absolute error instead.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct Probe {
  std::string name;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double error = 0.0;
};

// Central differences on randomly chosen coordinates, sampled uniformly over
// all parameters. `loss` must be deterministic.
inline std::vector<Probe> finite_difference_probes(
    ParamStore params, const ParamStore &grads,
    const std::function<double(const ParamStore &)> &loss, std::size_t probes,
    std::mt19937_64 &rng, double step = 1e-4) {
  std::vector<std::pair<std::string, std::size_t>> coords;
  for (const auto &[name, m] : params) {
    for (std::size_t i = 0; i < m.size(); ++i) coords.emplace_back(name, i);
  }
  std::vector<std::pair<std::string, std::size_t>> chosen;
  if (probes >= coords.size()) {
    chosen = coords;
  } else {
    std::sample(coords.begin(), coords.end(), std::back_inserter(chosen), probes, rng);
  }
  std::vector<Probe> out;
  for (const auto &[name, i] : chosen) {
    double &x = params.at(name).data[i];
    const double saved = x;
    x = saved + step;
    const double up = loss(params);
    x = saved - step;
    const double down = loss(params);
    x = saved;
    Probe p;
    p.name = name;
    p.index = i;
    auto it = grads.find(name);
    p.analytic = it == grads.end() ? 0.0 : it->second.data[i];
    p.numeric = (up - down) / (2.0 * step);
    p.error = relative_error(p.analytic, p.numeric);
    out.push_back(p);
  }
  return out;
}

inline double pass_fraction(const std::vector<Probe> &probes, double tol) {
  if (probes.empty()) return 1.0;
  std::size_t ok = 0;
  for (const auto &p : probes) ok += p.error <= tol;
  return static_cast<double>(ok) / probes.size();
}

// Classic full-table Levenshtein, written independently of the library.
template <typename Seq>
std::size_t levenshtein(const Seq &a, const Seq &b) {
  std::vector<std::vector<std::size_t>> d(a.size() + 1,
                                          std::vector<std::size_t>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i)
    for (std::size_t j = 1; j <= b.size(); ++j)
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1,
                          d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
  return d[a.size()][b.size()];
}

// Exact top-n by full scan and sort.
inline std::vector<std::size_t> scan_top_n(const Matrix &vectors,
                                           const std::vector<std::size_t> &ids,
                                           std::span<const double> q, std::size_t n) {
  std::vector<std::pair<double, std::size_t>> s;
  for (std::size_t r = 0; r < vectors.rows; ++r) {
    double d = 0.0;
    for (std::size_t c = 0; c < vectors.cols; ++c) d += vectors(r, c) * q[c];
    s.emplace_back(-d, ids[r]);
  }
  std::sort(s.begin(), s.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < std::min(n, s.size()); ++i) out.push_back(s[i].second);
  return out;
}

}  // namespace oracle
