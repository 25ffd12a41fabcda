// Reference kernels: textbook loops, dense masks, no threading.

#include <cmath>
#include <limits>

#include "annp/error.hpp"
#include "annp/kernels.hpp"

namespace annp::kernels::serial {

void matmul(const Matrix &a, const Matrix &b, Matrix &c) {
  if (a.cols != b.rows) throw InvalidArgument("serial::matmul: shape mismatch");
  c = Matrix(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t j = 0; j < b.cols; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.cols; ++p) s += a(i, p) * b(p, j);
      c(i, j) = s;
    }
  }
}

void attention_forward(const Matrix &q, const Matrix &k, const Matrix &v,
                       std::size_t heads, std::span<const KeyRange> ranges,
                       Matrix &out) {
  const std::size_t n = q.rows, m = k.rows, dh = q.cols / heads;
  out = Matrix(n, q.cols);
  const double ninf = -std::numeric_limits<double>::infinity();
  Matrix scores(n, m);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        if (j < ranges[i].lo || j >= ranges[i].hi) {
          scores(i, j) = ninf;
          continue;
        }
        double s = 0.0;
        for (std::size_t c = 0; c < dh; ++c) {
          s += q(i, h * dh + c) * k(j, h * dh + c);
        }
        scores(i, j) = s / std::sqrt(static_cast<double>(dh));
      }
      double mx = ninf;
      for (std::size_t j = 0; j < m; ++j) mx = std::max(mx, scores(i, j));
      double z = 0.0;
      for (std::size_t j = 0; j < m; ++j) z += std::exp(scores(i, j) - mx);
      for (std::size_t j = 0; j < m; ++j) {
        const double p = std::exp(scores(i, j) - mx) / z;
        for (std::size_t c = 0; c < dh; ++c) {
          out(i, h * dh + c) += p * v(j, h * dh + c);
        }
      }
    }
  }
}

void joint_forward(const Matrix &a, const Matrix &l, const Matrix &w,
                   const Matrix &b, Matrix &hidden, Matrix &logp) {
  const std::size_t t_len = a.rows, u1 = l.rows, jd = a.cols;
  hidden = Matrix(t_len * u1, jd);
  for (std::size_t t = 0; t < t_len; ++t) {
    for (std::size_t u = 0; u < u1; ++u) {
      for (std::size_t c = 0; c < jd; ++c) {
        hidden(t * u1 + u, c) = std::tanh(a(t, c) + l(u, c));
      }
    }
  }
  matmul(hidden, w, logp);
  for (std::size_t r = 0; r < logp.rows; ++r) {
    double z = 0.0;
    for (std::size_t v = 0; v < logp.cols; ++v) {
      logp(r, v) += b(0, v);
      z += std::exp(logp(r, v));
    }
    const double lz = std::log(z);
    for (std::size_t v = 0; v < logp.cols; ++v) logp(r, v) -= lz;
  }
}

void score_rows(const Matrix &rows, std::span<const double> query,
                std::span<double> scores) {
  for (std::size_t i = 0; i < rows.rows; ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < rows.cols; ++c) s += rows(i, c) * query[c];
    scores[i] = s;
  }
}

}  // namespace annp::kernels::serial
