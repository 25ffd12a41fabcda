#include "annp/transducer.hpp"

#include <cmath>
#include <limits>
#include <memory>

#include "annp/error.hpp"
#include "annp/kernels.hpp"

namespace annp {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

Lattice transducer_lattice(const Matrix &logp, std::size_t frames,
                           std::span<const std::size_t> labels,
                           std::size_t blank) {
  const std::size_t u_len = labels.size();
  const std::size_t u1 = u_len + 1;
  if (frames == 0) throw InvalidArgument("transducer: need at least one frame");
  if (logp.rows != frames * u1) {
    throw InvalidArgument("transducer: logp has " + std::to_string(logp.rows) +
                          " rows, expected " + std::to_string(frames * u1));
  }
  for (std::size_t y : labels) {
    if (y >= logp.cols || y == blank) {
      throw InvalidArgument("transducer: label id " + std::to_string(y) +
                            " outside the output vocabulary");
    }
  }
  auto lp = [&](std::size_t t, std::size_t u, std::size_t k) {
    return logp(t * u1 + u, k);
  };
  Lattice lat;
  lat.frames = frames;
  lat.labels = u_len;
  lat.alpha = Matrix(frames, u1, kNegInf);
  lat.beta = Matrix(frames, u1, kNegInf);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t u = 0; u < u1; ++u) {
      if (t == 0 && u == 0) {
        lat.alpha(0, 0) = 0.0;
        continue;
      }
      double a = kNegInf;
      if (t > 0) a = lat.alpha(t - 1, u) + lp(t - 1, u, blank);
      if (u > 0) a = log_add(a, lat.alpha(t, u - 1) + lp(t, u - 1, labels[u - 1]));
      lat.alpha(t, u) = a;
    }
  }
  for (std::size_t t = frames; t-- > 0;) {
    for (std::size_t u = u1; u-- > 0;) {
      if (t == frames - 1 && u == u_len) {
        lat.beta(t, u) = lp(t, u, blank);
        continue;
      }
      double b = kNegInf;
      if (t + 1 < frames) b = lat.beta(t + 1, u) + lp(t, u, blank);
      if (u < u_len) b = log_add(b, lat.beta(t, u + 1) + lp(t, u, labels[u]));
      lat.beta(t, u) = b;
    }
  }
  lat.log_likelihood = lat.beta(0, 0);
  return lat;
}

Matrix transducer_logp_grad(const Matrix &logp, const Lattice &lat,
                            std::span<const std::size_t> labels,
                            std::size_t blank) {
  const std::size_t u1 = lat.labels + 1;
  Matrix g(logp.rows, logp.cols);
  const double ll = lat.log_likelihood;
  for (std::size_t t = 0; t < lat.frames; ++t) {
    for (std::size_t u = 0; u < u1; ++u) {
      const std::size_t row = t * u1 + u;
      const double a = lat.alpha(t, u);
      double next_blank = kNegInf;
      if (t + 1 < lat.frames) {
        next_blank = lat.beta(t + 1, u);
      } else if (u == lat.labels) {
        next_blank = 0.0;
      }
      g(row, blank) = -std::exp(a + logp(row, blank) + next_blank - ll);
      if (u < lat.labels) {
        const std::size_t y = labels[u];
        g(row, y) = -std::exp(a + logp(row, y) + lat.beta(t, u + 1) - ll);
      }
    }
  }
  return g;
}

ad::Var transducer_loss(ad::Var audio, ad::Var label, ad::Var w, ad::Var b,
                        std::vector<std::size_t> labels, std::size_t blank) {
  const std::size_t frames = audio.rows();
  if (label.rows() != labels.size() + 1) {
    throw InvalidArgument("transducer_loss: label encoder rows must be U+1");
  }
  auto hidden = std::make_shared<Matrix>();
  auto logp = std::make_shared<Matrix>();
  kernels::joint_forward(audio.value(), label.value(), w.value(), b.value(),
                         *hidden, *logp);
  const Lattice lat = transducer_lattice(*logp, frames, labels, blank);
  if (!std::isfinite(lat.log_likelihood)) {
    throw NumericError("transducer_loss: non-finite log-likelihood");
  }
  auto dlogp = std::make_shared<Matrix>(
      transducer_logp_grad(*logp, lat, labels, blank));
  const ad::Var ins[] = {audio, label, w, b};
  return audio.tape->record(
      Matrix(1, 1, -lat.log_likelihood), ins,
      [audio, label, w, b, hidden, logp, dlogp](ad::Tape &t, std::size_t self) {
        const double g = t.grad(self).data[0];
        const std::size_t rows = logp->rows, vocab = logp->cols;
        const std::size_t u1 = t.value(label.id).rows;
        // Through log_softmax: dz = dlogp - softmax * sum(dlogp).
        Matrix dz(rows, vocab);
        for (std::size_t r = 0; r < rows; ++r) {
          double s = 0.0;
          for (std::size_t v = 0; v < vocab; ++v) s += (*dlogp)(r, v);
          for (std::size_t v = 0; v < vocab; ++v) {
            dz(r, v) = g * ((*dlogp)(r, v) - std::exp((*logp)(r, v)) * s);
          }
        }
        if (t.requires_grad(w.id)) kernels::matmul_at_b_acc(*hidden, dz, t.grad(w.id));
        if (t.requires_grad(b.id)) {
          Matrix &db = t.grad(b.id);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t v = 0; v < vocab; ++v) db.data[v] += dz(r, v);
          }
        }
        if (!t.requires_grad(audio.id) && !t.requires_grad(label.id)) return;
        Matrix dh(rows, hidden->cols);
        kernels::matmul_a_bt_acc(dz, t.value(w.id), dh);
        for (std::size_t i = 0; i < dh.size(); ++i) {
          const double h = hidden->data[i];
          dh.data[i] *= 1.0 - h * h;
        }
        const std::size_t jd = dh.cols;
        Matrix da(rows / u1, jd), dl(u1, jd);
        for (std::size_t r = 0; r < rows; ++r) {
          const std::size_t tt = r / u1, uu = r % u1;
          for (std::size_t c = 0; c < jd; ++c) {
            da(tt, c) += dh(r, c);
            dl(uu, c) += dh(r, c);
          }
        }
        if (t.requires_grad(audio.id)) {
          Matrix &d = t.grad(audio.id);
          for (std::size_t i = 0; i < da.size(); ++i) d.data[i] += da.data[i];
        }
        if (t.requires_grad(label.id)) {
          Matrix &d = t.grad(label.id);
          for (std::size_t i = 0; i < dl.size(); ++i) d.data[i] += dl.data[i];
        }
      });
}

}  // namespace annp
