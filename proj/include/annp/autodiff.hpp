#pragma once

// Minimal reverse-mode automatic differentiation over dense matrices.
//
// A Tape records every operation in creation order; backward() walks the
// records in reverse. Parameters enter the tape by name through param(), and
// collect_grads() adds their gradients into a ParamStore keyed the same way.

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "annp/kernels.hpp"
#include "annp/matrix.hpp"

namespace annp {

// Named tensors. std::map keeps iteration order stable across runs.
using ParamStore = std::map<std::string, Matrix>;

ParamStore zeros_like(const ParamStore &params);
void add_scaled(ParamStore &dst, const ParamStore &src, double scale);
double global_norm(const ParamStore &grads);
std::size_t parameter_count(const ParamStore &params);

namespace ad {

class Tape;

struct Var {
  Tape *tape = nullptr;
  std::size_t id = 0;

  const Matrix &value() const;
  std::size_t rows() const { return value().rows; }
  std::size_t cols() const { return value().cols; }
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape &, std::size_t self)>;

  Tape() = default;
  Tape(const Tape &) = delete;
  Tape &operator=(const Tape &) = delete;

  Var constant(Matrix value);
  // Constant that refers to `value` without copying; `value` must outlive
  // the tape.
  Var reference(const Matrix &value);
  // Gradient-carrying input that is not a named parameter.
  Var input(Matrix value);
  // Named parameter leaf, referenced without copying. Repeated calls with the
  // same name return the same node so a parameter shared by several
  // sub-graphs accumulates one gradient.
  Var param(const std::string &name, const Matrix &value);

  // Custom op: `backward` reads grad(self) and accumulates into its inputs.
  Var record(Matrix value, std::span<const Var> inputs, BackwardFn backward);

  const Matrix &value(std::size_t id) const {
    const Node &n = *nodes_[id];
    return n.external ? *n.external : n.value;
  }
  bool requires_grad(std::size_t id) const { return nodes_[id]->requires_grad; }
  // Gradient buffer, zero-allocated on first use.
  Matrix &grad(std::size_t id);
  bool has_grad(std::size_t id) const { return !nodes_[id]->grad.empty(); }

  // Seeds d(out)/d(out) = 1; `out` must be 1 x 1.
  void backward(Var out);
  // Adds named-parameter gradients into `grads` (missing names are created).
  void collect_grads(ParamStore &grads) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    const Matrix *external = nullptr;
    Matrix grad;
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::vector<std::unique_ptr<Node>> nodes_;
  std::map<std::string, std::size_t> params_;
};

Var matmul(Var a, Var b);
Var add(Var a, Var b);
// Adds a 1 x n row to every row of a.
Var add_row(Var a, Var row);
Var scale(Var a, double s);
Var gelu(Var a);
Var tanh(Var a);
Var layer_norm(Var x, Var gain, Var bias);
// Multi-head attention core. When `probs_out` is non-null the probabilities
// are copied there for diagnostics.
Var attention(Var q, Var k, Var v, std::size_t heads,
              std::vector<kernels::KeyRange> ranges,
              kernels::AttentionProbs *probs_out = nullptr);
Var gather_rows(Var table, std::vector<std::size_t> ids);
// Mean of each [offsets[s], offsets[s+1]) block of rows.
Var segment_mean(Var x, std::vector<std::size_t> offsets);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(Var x, std::size_t lo, std::size_t hi);
Var sum_squares(Var x);
Var sum(Var x);

}  // namespace ad
}  // namespace annp
