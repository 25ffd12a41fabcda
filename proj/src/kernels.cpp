#include "annp/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "annp/error.hpp"

namespace annp::kernels {

std::vector<KeyRange> full_ranges(std::size_t queries, std::size_t keys) {
  return std::vector<KeyRange>(queries,
                               KeyRange{0, static_cast<std::uint32_t>(keys)});
}

std::vector<KeyRange> causal_ranges(std::size_t n) {
  std::vector<KeyRange> r(n);
  for (std::size_t i = 0; i < n; ++i) {
    r[i] = {0, static_cast<std::uint32_t>(i + 1)};
  }
  return r;
}

std::vector<KeyRange> chunked_causal_ranges(std::size_t n, std::size_t chunk) {
  if (chunk == 0) throw InvalidArgument("chunk size must be >= 1");
  std::vector<KeyRange> r(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t end = std::min(n, (i / chunk + 1) * chunk);
    r[i] = {0, static_cast<std::uint32_t>(end)};
  }
  return r;
}

std::vector<KeyRange> segment_ranges(std::span<const std::size_t> offsets) {
  if (offsets.empty()) return {};
  std::vector<KeyRange> r(offsets.back());
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    for (std::size_t i = offsets[s]; i < offsets[s + 1]; ++i) {
      r[i] = {static_cast<std::uint32_t>(offsets[s]),
              static_cast<std::uint32_t>(offsets[s + 1])};
    }
  }
  return r;
}

void matmul(const Matrix &a, const Matrix &b, Matrix &c) {
  if (a.cols != b.rows) {
    throw InvalidArgument("matmul: " + shape_str(a) + " * " + shape_str(b));
  }
  const std::size_t m = a.rows, k = a.cols, n = b.cols;
  if (c.rows != m || c.cols != n) c = Matrix(m, n);
  const long long mm = static_cast<long long>(m);
#pragma omp parallel for schedule(static) if (m * k * n > 32768)
  for (long long ii = 0; ii < mm; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double *crow = c.data.data() + i * n;
    std::fill(crow, crow + n, 0.0);
    const double *arow = a.data.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double *brow = b.data.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_at_b_acc(const Matrix &a, const Matrix &b, Matrix &c) {
  if (a.rows != b.rows || c.rows != a.cols || c.cols != b.cols) {
    throw InvalidArgument("matmul_at_b: " + shape_str(a) + "^T * " +
                          shape_str(b) + " -> " + shape_str(c));
  }
  const std::size_t m = a.rows, k = a.cols, n = b.cols;
  const long long kk = static_cast<long long>(k);
#pragma omp parallel for schedule(static) if (m * k * n > 32768)
  for (long long pp = 0; pp < kk; ++pp) {
    const auto p = static_cast<std::size_t>(pp);
    double *crow = c.data.data() + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = a.data[i * k + p];
      if (av == 0.0) continue;
      const double *brow = b.data.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_a_bt_acc(const Matrix &a, const Matrix &b, Matrix &c) {
  if (a.cols != b.cols || c.rows != a.rows || c.cols != b.rows) {
    throw InvalidArgument("matmul_a_bt: " + shape_str(a) + " * " +
                          shape_str(b) + "^T -> " + shape_str(c));
  }
  const std::size_t m = a.rows, k = a.cols, n = b.rows;
  const long long mm = static_cast<long long>(m);
#pragma omp parallel for schedule(static) if (m * k * n > 32768)
  for (long long ii = 0; ii < mm; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const double *arow = a.data.data() + i * k;
    double *crow = c.data.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double *brow = b.data.data() + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      crow[j] += s;
    }
  }
}

namespace {

void check_attention_shapes(const Matrix &q, const Matrix &k, const Matrix &v,
                            std::size_t heads,
                            std::span<const KeyRange> ranges) {
  if (heads == 0 || q.cols % heads != 0) {
    throw InvalidArgument("attention: width " + std::to_string(q.cols) +
                          " not divisible by heads");
  }
  if (k.cols != q.cols || v.cols != q.cols || k.rows != v.rows) {
    throw InvalidArgument("attention: q " + shape_str(q) + " k " +
                          shape_str(k) + " v " + shape_str(v));
  }
  if (ranges.size() != q.rows) {
    throw InvalidArgument("attention: one key range per query row required");
  }
  for (const auto &r : ranges) {
    if (r.lo >= r.hi || r.hi > k.rows) {
      throw InvalidArgument("attention: empty or out-of-bounds key range");
    }
  }
}

}  // namespace

void attention_forward(const Matrix &q, const Matrix &k, const Matrix &v,
                       std::size_t heads, std::span<const KeyRange> ranges,
                       Matrix &out, AttentionProbs &probs) {
  check_attention_shapes(q, k, v, heads, ranges);
  const std::size_t n = q.rows, width = q.cols, dh = width / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  probs.heads = heads;
  probs.offset.assign(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    probs.offset[i + 1] = probs.offset[i] + ranges[i].size();
  }
  probs.total = probs.offset[n];
  probs.probs.assign(heads * probs.total, 0.0);
  out = Matrix(n, width);

  const long long work = static_cast<long long>(heads * n);
#pragma omp parallel for schedule(static) if (probs.total * width > 16384)
  for (long long w = 0; w < work; ++w) {
    const std::size_t h = static_cast<std::size_t>(w) / n;
    const std::size_t i = static_cast<std::size_t>(w) % n;
    const std::size_t c0 = h * dh;
    const KeyRange r = ranges[i];
    double *p = probs.probs.data() + h * probs.total + probs.offset[i];
    const double *qi = q.data.data() + i * width + c0;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::uint32_t j = r.lo; j < r.hi; ++j) {
      const double *kj = k.data.data() + j * width + c0;
      double s = 0.0;
      for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
      s *= scale;
      p[j - r.lo] = s;
      mx = std::max(mx, s);
    }
    double z = 0.0;
    for (std::uint32_t j = 0; j < r.size(); ++j) {
      p[j] = std::exp(p[j] - mx);
      z += p[j];
    }
    double *oi = out.data.data() + i * width + c0;
    for (std::uint32_t j = 0; j < r.size(); ++j) {
      p[j] /= z;
      const double *vj = v.data.data() + (r.lo + j) * width + c0;
      for (std::size_t c = 0; c < dh; ++c) oi[c] += p[j] * vj[c];
    }
  }
}

void attention_backward(const Matrix &q, const Matrix &k, const Matrix &v,
                        std::size_t heads, std::span<const KeyRange> ranges,
                        const AttentionProbs &probs, const Matrix &dout,
                        Matrix &dq, Matrix &dk, Matrix &dv) {
  const std::size_t n = q.rows, width = q.cols, dh = width / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  // Heads own disjoint column blocks of dq/dk/dv, so they can run in parallel.
  const long long hh = static_cast<long long>(heads);
#pragma omp parallel for schedule(static) if (probs.total * width > 16384)
  for (long long hl = 0; hl < hh; ++hl) {
    const auto h = static_cast<std::size_t>(hl);
    const std::size_t c0 = h * dh;
    std::vector<double> dp;
    for (std::size_t i = 0; i < n; ++i) {
      const KeyRange r = ranges[i];
      const double *p = probs.probs.data() + h * probs.total + probs.offset[i];
      const double *doi = dout.data.data() + i * width + c0;
      dp.assign(r.size(), 0.0);
      double dot_pdp = 0.0;
      for (std::uint32_t j = 0; j < r.size(); ++j) {
        const double *vj = v.data.data() + (r.lo + j) * width + c0;
        double *dvj = dv.data.data() + (r.lo + j) * width + c0;
        double s = 0.0;
        for (std::size_t c = 0; c < dh; ++c) {
          s += doi[c] * vj[c];
          dvj[c] += p[j] * doi[c];
        }
        dp[j] = s;
        dot_pdp += p[j] * s;
      }
      const double *qi = q.data.data() + i * width + c0;
      double *dqi = dq.data.data() + i * width + c0;
      for (std::uint32_t j = 0; j < r.size(); ++j) {
        const double ds = p[j] * (dp[j] - dot_pdp) * scale;
        if (ds == 0.0) continue;
        const double *kj = k.data.data() + (r.lo + j) * width + c0;
        double *dkj = dk.data.data() + (r.lo + j) * width + c0;
        for (std::size_t c = 0; c < dh; ++c) {
          dqi[c] += ds * kj[c];
          dkj[c] += ds * qi[c];
        }
      }
    }
  }
}

void joint_forward(const Matrix &a, const Matrix &l, const Matrix &w,
                   const Matrix &b, Matrix &hidden, Matrix &logp) {
  if (a.cols != l.cols || w.rows != a.cols || b.cols != w.cols || b.rows != 1) {
    throw InvalidArgument("joint: inconsistent shapes");
  }
  const std::size_t t_len = a.rows, u1 = l.rows, jd = a.cols, vocab = w.cols;
  hidden = Matrix(t_len * u1, jd);
  logp = Matrix(t_len * u1, vocab);
  const long long tt = static_cast<long long>(t_len);
#pragma omp parallel for schedule(static) if (t_len * u1 * jd * vocab > 32768)
  for (long long tl = 0; tl < tt; ++tl) {
    const auto t = static_cast<std::size_t>(tl);
    for (std::size_t u = 0; u < u1; ++u) {
      const std::size_t row = t * u1 + u;
      double *h = hidden.data.data() + row * jd;
      for (std::size_t c = 0; c < jd; ++c) h[c] = std::tanh(a(t, c) + l(u, c));
      double *z = logp.data.data() + row * vocab;
      std::copy(b.data.begin(), b.data.end(), z);
      for (std::size_t c = 0; c < jd; ++c) {
        const double hv = h[c];
        const double *wrow = w.data.data() + c * vocab;
        for (std::size_t v = 0; v < vocab; ++v) z[v] += hv * wrow[v];
      }
      double mx = z[0];
      for (std::size_t v = 1; v < vocab; ++v) mx = std::max(mx, z[v]);
      double s = 0.0;
      for (std::size_t v = 0; v < vocab; ++v) s += std::exp(z[v] - mx);
      const double lse = mx + std::log(s);
      for (std::size_t v = 0; v < vocab; ++v) z[v] -= lse;
    }
  }
}

void score_rows(const Matrix &rows, std::span<const double> query,
                std::span<double> scores) {
  if (query.size() != rows.cols || scores.size() != rows.rows) {
    throw InvalidArgument("score_rows: dimension mismatch");
  }
  const long long n = static_cast<long long>(rows.rows);
  const std::size_t d = rows.cols;
#pragma omp parallel for schedule(static) if (rows.rows * d > 65536)
  for (long long il = 0; il < n; ++il) {
    const auto i = static_cast<std::size_t>(il);
    const double *r = rows.data.data() + i * d;
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) s += r[c] * query[c];
    scores[i] = s;
  }
}

}  // namespace annp::kernels
