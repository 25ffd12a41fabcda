#pragma once

// Building blocks shared by the context, audio and label encoders.

#include <cstddef>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "annp/autodiff.hpp"
#include "annp/kernels.hpp"

namespace annp {

struct TransformerDims {
  std::size_t width = 64;
  std::size_t heads = 4;
  std::size_t ffn = 128;
  std::size_t layers = 2;
  friend bool operator==(const TransformerDims &, const TransformerDims &) = default;
};

// Puts named parameters on a tape, either as gradient leaves (trainable) or as
// constants (inference). Each name is bound once per Binder.
class Binder {
 public:
  Binder(ad::Tape &tape, const ParamStore &params, bool trainable)
      : tape_(tape), params_(params), trainable_(trainable) {}

  ad::Var operator()(const std::string &name) const;
  ad::Tape &tape() const { return tape_; }

 private:
  ad::Tape &tape_;
  const ParamStore &params_;
  bool trainable_;
  mutable std::map<std::string, ad::Var> bound_;
};

// U(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and zero bias.
void init_linear(ParamStore &params, const std::string &prefix,
                 std::size_t in, std::size_t out, std::mt19937_64 &rng,
                 bool bias = true);
Matrix uniform_matrix(std::size_t rows, std::size_t cols, double bound,
                      std::mt19937_64 &rng);
void init_layer_norm(ParamStore &params, const std::string &prefix,
                     std::size_t width);
void init_transformer(ParamStore &params, const std::string &prefix,
                      const TransformerDims &dims, std::mt19937_64 &rng);

ad::Var linear(const Binder &p, const std::string &prefix, ad::Var x);
ad::Var layer_norm(const Binder &p, const std::string &prefix, ad::Var x);

// Pre-norm transformer stack: x += attn(ln(x)); x += ffn(ln(x)).
ad::Var transformer(const Binder &p, const std::string &prefix,
                    const TransformerDims &dims, ad::Var x,
                    const std::vector<kernels::KeyRange> &ranges);

Matrix sinusoidal_positions(std::size_t n, std::size_t width);

}  // namespace annp
