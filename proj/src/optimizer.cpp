#include "annp/optimizer.hpp"

#include <cmath>

#include "annp/error.hpp"

namespace annp {

void AdamConfig::validate() const {
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning_rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw InvalidArgument("Adam betas must lie in [0, 1)");
  }
  if (!(decay_rate > 0.0 && decay_rate <= 1.0)) {
    throw InvalidArgument("decay_rate must lie in (0, 1]");
  }
  if (decay_steps == 0) throw InvalidArgument("decay_steps must be >= 1");
  if (clip_norm < 0.0) throw InvalidArgument("clip_norm must be >= 0");
}

double Adam::learning_rate() const {
  return config_.learning_rate *
         std::pow(config_.decay_rate, static_cast<double>(step_) /
                                          static_cast<double>(config_.decay_steps));
}

double Adam::step(ParamStore &params, const ParamStore &grads) {
  const double norm = global_norm(grads);
  if (!std::isfinite(norm)) throw NumericError("non-finite gradient norm");
  const double clip =
      config_.clip_norm > 0.0 && norm > config_.clip_norm ? config_.clip_norm / norm : 1.0;
  const double lr = learning_rate();
  ++step_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  for (const auto &[name, g] : grads) {
    auto it = params.find(name);
    if (it == params.end()) throw InvalidArgument("gradient for unknown tensor " + name);
    Matrix &w = it->second;
    Matrix &m = m_.try_emplace(name, w.rows, w.cols).first->second;
    Matrix &v = v_.try_emplace(name, w.rows, w.cols).first->second;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g.data[i] * clip;
      m.data[i] = config_.beta1 * m.data[i] + (1.0 - config_.beta1) * gi;
      v.data[i] = config_.beta2 * v.data[i] + (1.0 - config_.beta2) * gi * gi;
      w.data[i] -= lr * (m.data[i] / c1) / (std::sqrt(v.data[i] / c2) + config_.epsilon);
    }
  }
  return norm;
}

}  // namespace annp
