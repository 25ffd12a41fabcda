#include "annp/autodiff.hpp"

#include <cmath>
#include <numeric>

#include "annp/error.hpp"

namespace annp {

ParamStore zeros_like(const ParamStore &params) {
  ParamStore out;
  for (const auto &[name, m] : params) out.emplace(name, Matrix(m.rows, m.cols));
  return out;
}

void add_scaled(ParamStore &dst, const ParamStore &src, double scale) {
  for (const auto &[name, m] : src) {
    auto it = dst.find(name);
    if (it == dst.end()) {
      it = dst.emplace(name, Matrix(m.rows, m.cols)).first;
    }
    if (!it->second.same_shape(m)) {
      throw InvalidArgument("add_scaled: shape mismatch for " + name);
    }
    for (std::size_t i = 0; i < m.size(); ++i) {
      it->second.data[i] += scale * m.data[i];
    }
  }
}

double global_norm(const ParamStore &grads) {
  double s = 0.0;
  for (const auto &[_, m] : grads) {
    for (double v : m.data) s += v * v;
  }
  return std::sqrt(s);
}

std::size_t parameter_count(const ParamStore &params) {
  std::size_t n = 0;
  for (const auto &[_, m] : params) n += m.size();
  return n;
}

namespace ad {

const Matrix &Var::value() const { return tape->value(id); }

Var Tape::constant(Matrix value) {
  auto node = std::make_unique<Node>();
  node->value = std::move(value);
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

Var Tape::reference(const Matrix &value) {
  auto node = std::make_unique<Node>();
  node->external = &value;
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

Var Tape::input(Matrix value) {
  Var v = constant(std::move(value));
  nodes_[v.id]->requires_grad = true;
  return v;
}

Var Tape::param(const std::string &name, const Matrix &value) {
  if (auto it = params_.find(name); it != params_.end()) {
    return {this, it->second};
  }
  Var v = reference(value);
  nodes_[v.id]->requires_grad = true;
  params_.emplace(name, v.id);
  return v;
}

Var Tape::record(Matrix value, std::span<const Var> inputs,
                 BackwardFn backward) {
  auto node = std::make_unique<Node>();
  node->value = std::move(value);
  for (const Var &in : inputs) {
    if (in.tape != this) throw InvalidArgument("op mixes tapes");
    if (nodes_[in.id]->requires_grad) node->requires_grad = true;
  }
  if (node->requires_grad) node->backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

Matrix &Tape::grad(std::size_t id) {
  Node &n = *nodes_[id];
  const Matrix &v = value(id);
  if (n.grad.empty() && !v.empty()) n.grad = Matrix(v.rows, v.cols);
  return n.grad;
}

void Tape::backward(Var out) {
  if (out.tape != this) throw InvalidArgument("backward: foreign variable");
  if (value(out.id).rows != 1 || value(out.id).cols != 1) {
    throw InvalidArgument("backward: output must be 1x1");
  }
  grad(out.id).data[0] += 1.0;
  for (std::size_t i = out.id + 1; i-- > 0;) {
    Node &n = *nodes_[i];
    if (n.backward && !n.grad.empty()) n.backward(*this, i);
  }
}

void Tape::collect_grads(ParamStore &grads) const {
  for (const auto &[name, id] : params_) {
    const Node &n = *nodes_[id];
    const Matrix &v = value(id);
    auto it = grads.find(name);
    if (it == grads.end()) it = grads.emplace(name, Matrix(v.rows, v.cols)).first;
    if (n.grad.empty()) continue;
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      it->second.data[i] += n.grad.data[i];
    }
  }
}

namespace {

void check_same_tape(Var a, Var b) {
  if (a.tape != b.tape || a.tape == nullptr) {
    throw InvalidArgument("operands belong to different tapes");
  }
}

void accumulate(Tape &t, Var dst, const Matrix &g) {
  if (!t.requires_grad(dst.id)) return;
  Matrix &d = t.grad(dst.id);
  for (std::size_t i = 0; i < g.size(); ++i) d.data[i] += g.data[i];
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
constexpr double kLayerNormEps = 1e-5;

}  // namespace

Var matmul(Var a, Var b) {
  check_same_tape(a, b);
  Matrix out;
  kernels::matmul(a.value(), b.value(), out);
  const Var ins[] = {a, b};
  return a.tape->record(std::move(out), ins, [a, b](Tape &t, std::size_t self) {
    const Matrix &g = t.grad(self);
    if (t.requires_grad(a.id)) {
      kernels::matmul_a_bt_acc(g, t.value(b.id), t.grad(a.id));
    }
    if (t.requires_grad(b.id)) {
      kernels::matmul_at_b_acc(t.value(a.id), g, t.grad(b.id));
    }
  });
}

Var add(Var a, Var b) {
  check_same_tape(a, b);
  if (!a.value().same_shape(b.value())) {
    throw InvalidArgument("add: " + shape_str(a.value()) + " vs " +
                          shape_str(b.value()));
  }
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += b.value().data[i];
  const Var ins[] = {a, b};
  return a.tape->record(std::move(out), ins, [a, b](Tape &t, std::size_t self) {
    const Matrix &g = t.grad(self);
    accumulate(t, a, g);
    accumulate(t, b, g);
  });
}

Var add_row(Var a, Var row) {
  check_same_tape(a, row);
  const Matrix &rv = row.value();
  if (rv.rows != 1 || rv.cols != a.cols()) {
    throw InvalidArgument("add_row: row " + shape_str(rv) + " for " +
                          shape_str(a.value()));
  }
  Matrix out = a.value();
  for (std::size_t r = 0; r < out.rows; ++r) {
    for (std::size_t c = 0; c < out.cols; ++c) out(r, c) += rv.data[c];
  }
  const Var ins[] = {a, row};
  return a.tape->record(
      std::move(out), ins, [a, row](Tape &t, std::size_t self) {
        const Matrix &g = t.grad(self);
        accumulate(t, a, g);
        if (t.requires_grad(row.id)) {
          Matrix &dr = t.grad(row.id);
          for (std::size_t r = 0; r < g.rows; ++r) {
            for (std::size_t c = 0; c < g.cols; ++c) dr.data[c] += g(r, c);
          }
        }
      });
}

Var scale(Var a, double s) {
  Matrix out = a.value();
  for (double &v : out.data) v *= s;
  const Var ins[] = {a};
  return a.tape->record(std::move(out), ins, [a, s](Tape &t, std::size_t self) {
    const Matrix &g = t.grad(self);
    if (!t.requires_grad(a.id)) return;
    Matrix &d = t.grad(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) d.data[i] += s * g.data[i];
  });
}

Var gelu(Var a) {
  Matrix out = a.value();
  for (double &x : out.data) {
    x = 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
  }
  const Var ins[] = {a};
  return a.tape->record(std::move(out), ins, [a](Tape &t, std::size_t self) {
    if (!t.requires_grad(a.id)) return;
    const Matrix &g = t.grad(self);
    const Matrix &x = t.value(a.id);
    Matrix &d = t.grad(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double xv = x.data[i];
      const double th = std::tanh(kGeluC * (xv + kGeluA * xv * xv * xv));
      const double dth = (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluA * xv * xv);
      d.data[i] += g.data[i] * (0.5 * (1.0 + th) + 0.5 * xv * dth);
    }
  });
}

Var tanh(Var a) {
  Matrix out = a.value();
  for (double &x : out.data) x = std::tanh(x);
  const Var ins[] = {a};
  return a.tape->record(std::move(out), ins, [a](Tape &t, std::size_t self) {
    if (!t.requires_grad(a.id)) return;
    const Matrix &g = t.grad(self);
    const Matrix &y = t.value(self);
    Matrix &d = t.grad(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) {
      d.data[i] += g.data[i] * (1.0 - y.data[i] * y.data[i]);
    }
  });
}

Var layer_norm(Var x, Var gain, Var bias) {
  check_same_tape(x, gain);
  check_same_tape(x, bias);
  const Matrix &xv = x.value();
  const std::size_t n = xv.cols;
  if (gain.value().rows != 1 || gain.value().cols != n ||
      !gain.value().same_shape(bias.value())) {
    throw InvalidArgument("layer_norm: gain/bias must be 1x" +
                          std::to_string(n));
  }
  Matrix xhat(xv.rows, n);
  std::vector<double> inv_std(xv.rows);
  Matrix out(xv.rows, n);
  for (std::size_t r = 0; r < xv.rows; ++r) {
    const auto row = xv.row(r);
    const double mu = std::accumulate(row.begin(), row.end(), 0.0) / n;
    double var = 0.0;
    for (double v : row) var += (v - mu) * (v - mu);
    var /= n;
    inv_std[r] = 1.0 / std::sqrt(var + kLayerNormEps);
    for (std::size_t c = 0; c < n; ++c) {
      xhat(r, c) = (row[c] - mu) * inv_std[r];
      out(r, c) = xhat(r, c) * gain.value().data[c] + bias.value().data[c];
    }
  }
  const Var ins[] = {x, gain, bias};
  return x.tape->record(
      std::move(out), ins,
      [x, gain, bias, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](Tape &t, std::size_t self) {
        const Matrix &g = t.grad(self);
        const Matrix &gv = t.value(gain.id);
        const std::size_t n = g.cols;
        if (t.requires_grad(gain.id) || t.requires_grad(bias.id)) {
          Matrix &dg = t.grad(gain.id);
          Matrix &db = t.grad(bias.id);
          for (std::size_t r = 0; r < g.rows; ++r) {
            for (std::size_t c = 0; c < n; ++c) {
              dg.data[c] += g(r, c) * xhat(r, c);
              db.data[c] += g(r, c);
            }
          }
        }
        if (!t.requires_grad(x.id)) return;
        Matrix &dx = t.grad(x.id);
        std::vector<double> dxhat(n);
        for (std::size_t r = 0; r < g.rows; ++r) {
          double s1 = 0.0, s2 = 0.0;
          for (std::size_t c = 0; c < n; ++c) {
            dxhat[c] = g(r, c) * gv.data[c];
            s1 += dxhat[c];
            s2 += dxhat[c] * xhat(r, c);
          }
          for (std::size_t c = 0; c < n; ++c) {
            dx(r, c) += inv_std[r] / n *
                        (n * dxhat[c] - s1 - xhat(r, c) * s2);
          }
        }
      });
}

Var attention(Var q, Var k, Var v, std::size_t heads,
              std::vector<kernels::KeyRange> ranges,
              kernels::AttentionProbs *probs_out) {
  check_same_tape(q, k);
  check_same_tape(q, v);
  Matrix out;
  auto probs = std::make_shared<kernels::AttentionProbs>();
  kernels::attention_forward(q.value(), k.value(), v.value(), heads, ranges,
                             out, *probs);
  if (probs_out) *probs_out = *probs;
  const Var ins[] = {q, k, v};
  return q.tape->record(
      std::move(out), ins,
      [q, k, v, heads, ranges = std::move(ranges), probs](Tape &t,
                                                          std::size_t self) {
        // Scratch buffers for inputs that do not need gradients.
        Matrix sq, sk, sv;
        auto buf = [&t](Var x, Matrix &scratch) -> Matrix & {
          if (t.requires_grad(x.id)) return t.grad(x.id);
          scratch = Matrix(x.rows(), x.cols());
          return scratch;
        };
        Matrix &dq = buf(q, sq);
        Matrix &dk = buf(k, sk);
        Matrix &dv = buf(v, sv);
        kernels::attention_backward(t.value(q.id), t.value(k.id),
                                    t.value(v.id), heads, ranges, *probs,
                                    t.grad(self), dq, dk, dv);
      });
}

Var gather_rows(Var table, std::vector<std::size_t> ids) {
  const Matrix &tv = table.value();
  Matrix out(ids.size(), tv.cols);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= tv.rows) {
      throw InvalidArgument("gather_rows: id " + std::to_string(ids[r]) +
                            " out of range " + std::to_string(tv.rows));
    }
    std::copy(tv.row(ids[r]).begin(), tv.row(ids[r]).end(), out.row(r).begin());
  }
  const Var ins[] = {table};
  return table.tape->record(
      std::move(out), ins,
      [table, ids = std::move(ids)](Tape &t, std::size_t self) {
        if (!t.requires_grad(table.id)) return;
        const Matrix &g = t.grad(self);
        Matrix &d = t.grad(table.id);
        for (std::size_t r = 0; r < ids.size(); ++r) {
          for (std::size_t c = 0; c < g.cols; ++c) d(ids[r], c) += g(r, c);
        }
      });
}

Var segment_mean(Var x, std::vector<std::size_t> offsets) {
  const Matrix &xv = x.value();
  if (offsets.size() < 2 || offsets.back() != xv.rows) {
    throw InvalidArgument("segment_mean: offsets do not cover the rows");
  }
  const std::size_t segs = offsets.size() - 1;
  Matrix out(segs, xv.cols);
  for (std::size_t s = 0; s < segs; ++s) {
    const std::size_t len = offsets[s + 1] - offsets[s];
    if (len == 0) throw InvalidArgument("segment_mean: empty segment");
    for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r) {
      for (std::size_t c = 0; c < xv.cols; ++c) out(s, c) += xv(r, c);
    }
    for (std::size_t c = 0; c < xv.cols; ++c) out(s, c) /= len;
  }
  const Var ins[] = {x};
  return x.tape->record(
      std::move(out), ins,
      [x, offsets = std::move(offsets)](Tape &t, std::size_t self) {
        if (!t.requires_grad(x.id)) return;
        const Matrix &g = t.grad(self);
        Matrix &d = t.grad(x.id);
        for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
          const double inv = 1.0 / (offsets[s + 1] - offsets[s]);
          for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r) {
            for (std::size_t c = 0; c < g.cols; ++c) d(r, c) += g(s, c) * inv;
          }
        }
      });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw InvalidArgument("concat_rows: no inputs");
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  for (const Var &p : parts) {
    check_same_tape(parts[0], p);
    if (p.cols() != cols) throw InvalidArgument("concat_rows: width mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::size_t at = 0;
  for (const Var &p : parts) {
    std::copy(p.value().data.begin(), p.value().data.end(),
              out.data.begin() + at * cols);
    at += p.rows();
  }
  std::vector<Var> ins(parts.begin(), parts.end());
  return parts[0].tape->record(
      std::move(out), ins, [ins](Tape &t, std::size_t self) {
        const Matrix &g = t.grad(self);
        std::size_t at = 0;
        for (const Var &p : ins) {
          const std::size_t n = t.value(p.id).size();
          if (t.requires_grad(p.id)) {
            Matrix &d = t.grad(p.id);
            for (std::size_t i = 0; i < n; ++i) d.data[i] += g.data[at + i];
          }
          at += n;
        }
      });
}

Var slice_rows(Var x, std::size_t lo, std::size_t hi) {
  const Matrix &xv = x.value();
  if (lo > hi || hi > xv.rows) throw InvalidArgument("slice_rows: bad range");
  Matrix out(hi - lo, xv.cols);
  std::copy(xv.data.begin() + lo * xv.cols, xv.data.begin() + hi * xv.cols,
            out.data.begin());
  const Var ins[] = {x};
  return x.tape->record(std::move(out), ins,
                        [x, lo](Tape &t, std::size_t self) {
                          if (!t.requires_grad(x.id)) return;
                          const Matrix &g = t.grad(self);
                          Matrix &d = t.grad(x.id);
                          const std::size_t base = lo * g.cols;
                          for (std::size_t i = 0; i < g.size(); ++i) {
                            d.data[base + i] += g.data[i];
                          }
                        });
}

Var sum_squares(Var x) {
  double s = 0.0;
  for (double v : x.value().data) s += v * v;
  const Var ins[] = {x};
  return x.tape->record(Matrix(1, 1, s), ins, [x](Tape &t, std::size_t self) {
    if (!t.requires_grad(x.id)) return;
    const double g = t.grad(self).data[0];
    const Matrix &xv = t.value(x.id);
    Matrix &d = t.grad(x.id);
    for (std::size_t i = 0; i < xv.size(); ++i) d.data[i] += 2.0 * g * xv.data[i];
  });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().data) s += v;
  const Var ins[] = {x};
  return x.tape->record(Matrix(1, 1, s), ins, [x](Tape &t, std::size_t self) {
    if (!t.requires_grad(x.id)) return;
    const double g = t.grad(self).data[0];
    for (double &d : t.grad(x.id).data) d += g;
  });
}

}  // namespace ad
}  // namespace annp
