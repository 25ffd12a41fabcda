#include "annp/layers.hpp"

#include <cmath>

#include "annp/error.hpp"

namespace annp {

ad::Var Binder::operator()(const std::string &name) const {
  if (auto it = bound_.find(name); it != bound_.end()) return it->second;
  auto it = params_.find(name);
  if (it == params_.end()) throw InvalidArgument("missing parameter " + name);
  ad::Var v = trainable_ ? tape_.param(name, it->second)
                         : tape_.reference(it->second);
  bound_.emplace(name, v);
  return v;
}

Matrix uniform_matrix(std::size_t rows, std::size_t cols, double bound,
                      std::mt19937_64 &rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (double &v : m.data) v = dist(rng);
  return m;
}

void init_linear(ParamStore &params, const std::string &prefix,
                 std::size_t in, std::size_t out, std::mt19937_64 &rng,
                 bool bias) {
  params[prefix + ".w"] =
      uniform_matrix(in, out, 1.0 / std::sqrt(static_cast<double>(in)), rng);
  if (bias) params[prefix + ".b"] = Matrix(1, out);
}

void init_layer_norm(ParamStore &params, const std::string &prefix,
                     std::size_t width) {
  params[prefix + ".g"] = Matrix(1, width, 1.0);
  params[prefix + ".b"] = Matrix(1, width);
}

void init_transformer(ParamStore &params, const std::string &prefix,
                      const TransformerDims &dims, std::mt19937_64 &rng) {
  if (dims.heads == 0 || dims.width % dims.heads != 0) {
    throw InvalidArgument("transformer width must be divisible by heads");
  }
  for (std::size_t l = 0; l < dims.layers; ++l) {
    const std::string p = prefix + ".l" + std::to_string(l);
    init_layer_norm(params, p + ".ln1", dims.width);
    init_linear(params, p + ".q", dims.width, dims.width, rng);
    init_linear(params, p + ".k", dims.width, dims.width, rng);
    init_linear(params, p + ".v", dims.width, dims.width, rng);
    init_linear(params, p + ".o", dims.width, dims.width, rng);
    init_layer_norm(params, p + ".ln2", dims.width);
    init_linear(params, p + ".ff1", dims.width, dims.ffn, rng);
    init_linear(params, p + ".ff2", dims.ffn, dims.width, rng);
  }
}

ad::Var linear(const Binder &p, const std::string &prefix, ad::Var x) {
  ad::Var y = ad::matmul(x, p(prefix + ".w"));
  return ad::add_row(y, p(prefix + ".b"));
}

ad::Var layer_norm(const Binder &p, const std::string &prefix, ad::Var x) {
  return ad::layer_norm(x, p(prefix + ".g"), p(prefix + ".b"));
}

ad::Var transformer(const Binder &p, const std::string &prefix,
                    const TransformerDims &dims, ad::Var x,
                    const std::vector<kernels::KeyRange> &ranges) {
  for (std::size_t l = 0; l < dims.layers; ++l) {
    const std::string lp = prefix + ".l" + std::to_string(l);
    ad::Var h = layer_norm(p, lp + ".ln1", x);
    ad::Var att = ad::attention(linear(p, lp + ".q", h), linear(p, lp + ".k", h),
                                linear(p, lp + ".v", h), dims.heads, ranges);
    x = ad::add(x, linear(p, lp + ".o", att));
    h = layer_norm(p, lp + ".ln2", x);
    h = linear(p, lp + ".ff2", ad::gelu(linear(p, lp + ".ff1", h)));
    x = ad::add(x, h);
  }
  return x;
}

Matrix sinusoidal_positions(std::size_t n, std::size_t width) {
  Matrix m(n, width);
  for (std::size_t pos = 0; pos < n; ++pos) {
    for (std::size_t i = 0; i < width; ++i) {
      const double rate =
          std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / width);
      m(pos, i) = (i % 2 == 0) ? std::sin(pos * rate) : std::cos(pos * rate);
    }
  }
  return m;
}

}  // namespace annp
