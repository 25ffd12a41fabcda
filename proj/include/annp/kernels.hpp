#pragma once

// Compute kernels used by the autodiff ops, the transducer joint and the ANN
// index. The functions in `annp::kernels` are OpenMP-parallel; every output
// element is reduced in a fixed order, so results are bit-identical for any
// thread count. `annp::kernels::serial` holds straightforward single-threaded
// reference versions used by the tests and the benchmark.

#include <cstdint>
#include <span>
#include <vector>

#include "annp/matrix.hpp"

namespace annp::kernels {

// Half-open range of key rows a query row may attend to.
struct KeyRange {
  std::uint32_t lo = 0;
  std::uint32_t hi = 0;
  std::uint32_t size() const { return hi - lo; }
};

// Row ranges for the attention patterns used by the encoders.
std::vector<KeyRange> full_ranges(std::size_t queries, std::size_t keys);
std::vector<KeyRange> causal_ranges(std::size_t n);
std::vector<KeyRange> chunked_causal_ranges(std::size_t n, std::size_t chunk);
// Block-diagonal attention over concatenated segments; `offsets` has one more
// entry than there are segments.
std::vector<KeyRange> segment_ranges(std::span<const std::size_t> offsets);

// Attention probabilities stored ragged: head h, query i, key lo+j lives at
// probs[h * total + offset[i] + j].
struct AttentionProbs {
  std::size_t heads = 0;
  std::size_t total = 0;
  std::vector<std::size_t> offset;
  std::vector<double> probs;

  double at(std::size_t h, std::size_t i, std::size_t j_rel) const {
    return probs[h * total + offset[i] + j_rel];
  }
};

// C = A * B
void matmul(const Matrix &a, const Matrix &b, Matrix &c);
// C += A^T * B
void matmul_at_b_acc(const Matrix &a, const Matrix &b, Matrix &c);
// C += A * B^T
void matmul_a_bt_acc(const Matrix &a, const Matrix &b, Matrix &c);

// Multi-head scaled dot-product attention. Q is n x D, K and V are m x D,
// D divisible by heads. Writes O (n x D) and the probabilities.
void attention_forward(const Matrix &q, const Matrix &k, const Matrix &v,
                       std::size_t heads, std::span<const KeyRange> ranges,
                       Matrix &out, AttentionProbs &probs);
// Accumulates into dq, dk, dv.
void attention_backward(const Matrix &q, const Matrix &k, const Matrix &v,
                        std::size_t heads, std::span<const KeyRange> ranges,
                        const AttentionProbs &probs, const Matrix &dout,
                        Matrix &dq, Matrix &dk, Matrix &dv);

// Transducer joint: hidden(t*(U+1)+u) = tanh(A[t] + L[u]),
// logp = log_softmax(hidden * W + b). A is T x J, L is (U+1) x J.
void joint_forward(const Matrix &a, const Matrix &l, const Matrix &w,
                   const Matrix &b, Matrix &hidden, Matrix &logp);

// scores[i] = rows[i] . query
void score_rows(const Matrix &rows, std::span<const double> query,
                std::span<double> scores);

namespace serial {

void matmul(const Matrix &a, const Matrix &b, Matrix &c);
void attention_forward(const Matrix &q, const Matrix &k, const Matrix &v,
                       std::size_t heads, std::span<const KeyRange> ranges,
                       Matrix &out);
void joint_forward(const Matrix &a, const Matrix &l, const Matrix &w,
                   const Matrix &b, Matrix &hidden, Matrix &logp);
void score_rows(const Matrix &rows, std::span<const double> query,
                std::span<double> scores);

}  // namespace serial
}  // namespace annp::kernels
