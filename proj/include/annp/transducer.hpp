#pragma once

// Transducer (RNN-T) objective over a T x (U+1) lattice.
//
// Node (t, u) means "t frames consumed so far, u labels emitted". From (t, u)
// a blank moves to (t+1, u) and label u+1 moves to (t, u+1); the path ends
// with a blank out of (T-1, U). Log-probabilities are stored row-major with
// row index t * (U+1) + u.

#include <cstddef>
#include <span>
#include <vector>

#include "annp/autodiff.hpp"
#include "annp/matrix.hpp"

namespace annp {

struct Lattice {
  std::size_t frames = 0;  // T
  std::size_t labels = 0;  // U
  Matrix alpha;            // T x (U+1), log forward variables
  Matrix beta;             // T x (U+1), log backward variables
  double log_likelihood = 0.0;
};

// Runs the forward and backward recursions. `logp` is T(U+1) x V.
Lattice transducer_lattice(const Matrix &logp, std::size_t frames,
                           std::span<const std::size_t> labels,
                           std::size_t blank = 0);

// d(-log P) / d logp, same shape as logp.
Matrix transducer_logp_grad(const Matrix &logp, const Lattice &lattice,
                            std::span<const std::size_t> labels,
                            std::size_t blank = 0);

// -log P(labels | joint inputs) as a tape op. `audio` is T x J, `label` is
// (U+1) x J, `w` is J x V, `b` is 1 x V. The joint is
// log_softmax(tanh(audio[t] + label[u]) * w + b).
ad::Var transducer_loss(ad::Var audio, ad::Var label, ad::Var w, ad::Var b,
                        std::vector<std::size_t> labels, std::size_t blank = 0);

double log_add(double a, double b);

}  // namespace annp
