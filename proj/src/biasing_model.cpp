#include "annp/biasing_model.hpp"

#include <algorithm>
#include <cmath>

#include "annp/error.hpp"
#include "annp/transducer.hpp"

namespace annp {

MaskMode MaskMode::streaming(std::size_t chunk_frames) {
  if (chunk_frames == 0) throw InvalidArgument("chunk_frames must be >= 1");
  return {Kind::Streaming, chunk_frames};
}

std::string MaskMode::to_string() const {
  return streaming_mode() ? "streaming" : "global";
}

MaskMode MaskMode::parse(const std::string &name, std::size_t chunk_frames) {
  if (name == "global") return {Kind::Global, chunk_frames};
  if (name == "streaming") return streaming(chunk_frames);
  throw InvalidArgument("unknown mask mode '" + name + "'");
}

std::vector<kernels::KeyRange> audio_ranges(std::size_t frames, MaskMode mode) {
  if (mode.streaming_mode()) {
    return kernels::chunked_causal_ranges(frames, mode.chunk_frames);
  }
  return kernels::full_ranges(frames, frames);
}

namespace {

void init_bias_site(ParamStore &p, const std::string &site, std::size_t width,
                    std::size_t ctx_dim, std::mt19937_64 &rng) {
  init_linear(p, site + ".q", width, width, rng);
  init_linear(p, site + ".k", ctx_dim, width, rng);
  init_linear(p, site + ".v", ctx_dim, width, rng);
  init_linear(p, site + ".o", width, width, rng);
}

void check_config(const ModelConfig &c) {
  if (c.audio.width != c.label.width) {
    throw InvalidArgument("audio and label encoders must share a width");
  }
  if (c.bias_heads == 0 || c.audio.width % c.bias_heads != 0) {
    throw InvalidArgument("biasing heads must divide the encoder width");
  }
  if (c.vocab < 2) throw InvalidArgument("vocabulary needs blank + 1 symbol");
}

ad::Var context_graph(const Binder &p, const ModelConfig &cfg,
                      const BiasingContext &ctx) {
  if (ctx.backoff_position > ctx.phrases.size()) {
    throw InvalidArgument("back-off position outside the context list");
  }
  ad::Var backoff = p("ctx.backoff");
  if (ctx.phrases.empty()) return backoff;
  ad::Var enc = encode_on_tape(p, cfg.context, ctx.phrases);
  std::vector<ad::Var> parts;
  if (ctx.backoff_position > 0) {
    parts.push_back(ad::slice_rows(enc, 0, ctx.backoff_position));
  }
  parts.push_back(backoff);
  if (ctx.backoff_position < ctx.phrases.size()) {
    parts.push_back(
        ad::slice_rows(enc, ctx.backoff_position, ctx.phrases.size()));
  }
  return ad::concat_rows(parts);
}

ad::Var audio_graph(const Binder &p, const ModelConfig &cfg,
                    const AudioFeatures &features, MaskMode mode) {
  if (features.rows == 0 || features.cols != cfg.feature_dim) {
    throw InvalidArgument("audio features must be T x " +
                          std::to_string(cfg.feature_dim) + ", got " +
                          shape_str(features));
  }
  if (!all_finite(features)) throw NumericError("audio features not finite");
  ad::Tape &tape = p.tape();
  ad::Var x = linear(p, "audio.in", tape.reference(features));
  x = ad::add(x, tape.constant(sinusoidal_positions(features.rows,
                                                    cfg.audio.width)));
  x = transformer(p, "audio.enc", cfg.audio, x,
                  audio_ranges(features.rows, mode));
  return layer_norm(p, "audio.ln", x);
}

// Label encoder over [blank, y_1 .. y_n]; n + 1 output rows.
ad::Var label_graph(const Binder &p, const ModelConfig &cfg,
                    std::span<const std::size_t> labels) {
  std::vector<std::size_t> ids{vocab::kBlank};
  for (std::size_t y : labels) {
    if (y >= cfg.vocab || y == vocab::kBlank) {
      throw InvalidArgument("label id " + std::to_string(y) +
                            " outside the output vocabulary");
    }
    ids.push_back(y);
  }
  ad::Tape &tape = p.tape();
  const std::size_t n = ids.size();
  ad::Var x = ad::gather_rows(p("label.embed"), std::move(ids));
  x = ad::add(x, tape.constant(sinusoidal_positions(n, cfg.label.width)));
  x = transformer(p, "label.enc", cfg.label, x, kernels::causal_ranges(n));
  return layer_norm(p, "label.ln", x);
}

ad::Var bias_graph(const Binder &p, const std::string &site, std::size_t heads,
                   ad::Var states, ad::Var context,
                   kernels::AttentionProbs *probs) {
  if (context.cols() != p(site + ".k.w").rows()) {
    throw InvalidArgument("context width " + std::to_string(context.cols()) +
                          " does not match " + site);
  }
  ad::Var att = ad::attention(
      linear(p, site + ".q", states), linear(p, site + ".k", context),
      linear(p, site + ".v", context), heads,
      kernels::full_ranges(states.rows(), context.rows()), probs);
  return ad::add(states, linear(p, site + ".o", att));
}

// Joint-network inputs for one utterance.
struct JointInputs {
  ad::Var audio;
  ad::Var label;
};

JointInputs joint_inputs(const Binder &p, const ModelConfig &cfg,
                         const Utterance &utt, ad::Var context) {
  ad::Var a = audio_graph(p, cfg, utt.features, utt.mask);
  a = bias_graph(p, "bias_audio", cfg.bias_heads, a, context, nullptr);
  ad::Var l = label_graph(p, cfg, utt.labels);
  l = bias_graph(p, "bias_label", cfg.bias_heads, l, context, nullptr);
  return {linear(p, "joint.audio", a), ad::matmul(l, p("joint.label.w"))};
}

}  // namespace

ModelParams init_model(const ModelConfig &config, std::uint64_t seed) {
  check_config(config);
  ModelParams m{config, {}};
  std::mt19937_64 rng(seed);
  ParamStore &p = m.tensors;
  const std::size_t w = config.audio.width;
  const std::size_t cd = config.context.output_dim;
  init_linear(p, "audio.in", config.feature_dim, w, rng);
  init_transformer(p, "audio.enc", config.audio, rng);
  init_layer_norm(p, "audio.ln", w);
  p["label.embed"] = uniform_matrix(config.vocab, w, 1.0, rng);
  init_transformer(p, "label.enc", config.label, rng);
  init_layer_norm(p, "label.ln", w);
  init_encoder_into(p, config.context, rng);
  p["ctx.backoff"] =
      uniform_matrix(1, cd, 1.0 / std::sqrt(static_cast<double>(cd)), rng);
  init_bias_site(p, "bias_audio", w, cd, rng);
  init_bias_site(p, "bias_label", w, cd, rng);
  init_linear(p, "joint.audio", w, config.joint_dim, rng);
  init_linear(p, "joint.label", w, config.joint_dim, rng, false);
  init_linear(p, "joint.out", config.joint_dim, config.vocab, rng);
  return m;
}

EncoderParams encoder_view(const ModelParams &params) {
  EncoderParams e{params.config.context, {}};
  const std::string prefix = std::string(kEncoderPrefix) + ".";
  for (const auto &[name, m] : params.tensors) {
    if (name.rfind(prefix, 0) == 0 && name != "ctx.backoff") {
      e.tensors.emplace(name, m);
    }
  }
  return e;
}

Matrix audio_encode(const ModelParams &params, const AudioFeatures &features,
                    MaskMode mode) {
  ad::Tape tape;
  Binder p(tape, params.tensors, false);
  return audio_graph(p, params.config, features, mode).value();
}

Matrix context_embeddings(const ModelParams &params, const BiasingContext &ctx) {
  ad::Tape tape;
  Binder p(tape, params.tensors, false);
  return context_graph(p, params.config, ctx).value();
}

BiasOutput bias_states(const ModelParams &params, const std::string &site,
                       const Matrix &states, const Matrix &context) {
  if (context.rows == 0) throw InvalidArgument("bias_states: empty context");
  if (states.cols != params.config.audio.width) {
    throw InvalidArgument("bias_states: state width mismatch");
  }
  ad::Tape tape;
  Binder p(tape, params.tensors, false);
  BiasOutput out;
  out.states = bias_graph(p, site, params.config.bias_heads,
                          tape.reference(states), tape.reference(context),
                          &out.probs)
                   .value();
  return out;
}

LossResult transducer_loss(const ModelParams &params,
                           std::span<const Utterance> batch,
                           const BiasingContext &context, bool want_grads) {
  if (batch.empty()) throw InvalidArgument("transducer_loss: empty batch");
  ad::Tape tape;
  Binder p(tape, params.tensors, want_grads);
  const ModelConfig &cfg = params.config;
  ad::Var ctx = context_graph(p, cfg, context);
  std::vector<ad::Var> losses;
  losses.reserve(batch.size());
  for (const Utterance &utt : batch) {
    JointInputs j = joint_inputs(p, cfg, utt, ctx);
    losses.push_back(transducer_loss(j.audio, j.label, p("joint.out.w"),
                                     p("joint.out.b"), utt.labels));
  }
  ad::Var total = losses.front();
  for (std::size_t i = 1; i < losses.size(); ++i) total = ad::add(total, losses[i]);
  LossResult r;
  r.loss = total.value().data[0];
  if (!std::isfinite(r.loss)) throw NumericError("non-finite transducer loss");
  if (want_grads) {
    r.grads = zeros_like(params.tensors);
    tape.backward(total);
    tape.collect_grads(r.grads);
  }
  return r;
}

namespace {

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(
      std::max_element(v.begin(), v.end()) - v.begin());
}

// Joint logits (unnormalized) for one audio row and one label row.
void joint_logits(const ModelParams &params, std::span<const double> a,
                  std::span<const double> l, std::vector<double> &out) {
  const Matrix &w = params.tensors.at("joint.out.w");
  const Matrix &b = params.tensors.at("joint.out.b");
  out.assign(b.data.begin(), b.data.end());
  for (std::size_t c = 0; c < a.size(); ++c) {
    const double h = std::tanh(a[c] + l[c]);
    const auto wr = w.row(c);
    for (std::size_t v = 0; v < out.size(); ++v) out[v] += h * wr[v];
  }
}

// Projected label state after the last label of `labels`.
std::vector<double> label_joint_row(const ModelParams &params,
                                    std::span<const std::size_t> labels,
                                    const Matrix &context) {
  ad::Tape tape;
  Binder p(tape, params.tensors, false);
  ad::Var l = label_graph(p, params.config, labels);
  const std::size_t last = l.rows() - 1;
  ad::Var row = ad::slice_rows(l, last, last + 1);
  row = bias_graph(p, "bias_label", params.config.bias_heads, row,
                   tape.reference(context), nullptr);
  ad::Var proj = ad::matmul(row, p("joint.label.w"));
  return proj.value().data;
}

}  // namespace

std::vector<std::size_t> greedy_decode(const ModelParams &params,
                                       const AudioFeatures &features,
                                       const Matrix &context, MaskMode mode) {
  const ModelConfig &cfg = params.config;
  Matrix audio;
  {
    ad::Tape tape;
    Binder p(tape, params.tensors, false);
    ad::Var a = audio_graph(p, cfg, features, mode);
    a = bias_graph(p, "bias_audio", cfg.bias_heads, a, tape.reference(context),
                   nullptr);
    audio = linear(p, "joint.audio", a).value();
  }
  std::vector<std::size_t> hyp;
  std::vector<double> label_row = label_joint_row(params, hyp, context);
  std::vector<double> logits;
  for (std::size_t t = 0; t < audio.rows; ++t) {
    for (std::size_t e = 0; e < kMaxEmissionsPerFrame; ++e) {
      joint_logits(params, audio.row(t), label_row, logits);
      const std::size_t k = argmax(logits);
      if (k == vocab::kBlank) break;
      hyp.push_back(k);
      label_row = label_joint_row(params, hyp, context);
    }
  }
  return hyp;
}

AttentionMass attention_diagnostics(const ModelParams &params,
                                    const AudioFeatures &features,
                                    std::span<const std::size_t> labels,
                                    const Matrix &context, MaskMode mode) {
  const ModelConfig &cfg = params.config;
  ad::Tape tape;
  Binder p(tape, params.tensors, false);
  kernels::AttentionProbs audio_probs, label_probs;
  ad::Var ctx = tape.reference(context);
  bias_graph(p, "bias_audio", cfg.bias_heads, audio_graph(p, cfg, features, mode),
             ctx, &audio_probs);
  bias_graph(p, "bias_label", cfg.bias_heads, label_graph(p, cfg, labels), ctx,
             &label_probs);
  auto mass = [&](const kernels::AttentionProbs &pr, std::size_t rows) {
    std::vector<double> m(context.rows, 0.0);
    for (std::size_t h = 0; h < pr.heads; ++h) {
      for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < context.rows; ++j) m[j] += pr.at(h, i, j);
      }
    }
    for (double &v : m) v /= static_cast<double>(pr.heads * rows);
    return m;
  };
  return {mass(audio_probs, features.rows), mass(label_probs, labels.size() + 1)};
}

}  // namespace annp
