#pragma once

// Miniature context-aware transformer transducer.
//
//   audio features -> linear -> transformer (global or chunked-causal mask)
//                  -> layer norm -> + cross-attention over context  = audio
//   label prefix   -> embedding -> causal transformer -> layer norm
//                  -> + cross-attention over context                = label
//   joint(t, u)    = log_softmax(tanh(audio[t] Wa + ba + label[u] Wl) Wo + bo)
//
// The context is the list of phrase embeddings from the context encoder with
// one learned back-off vector inserted at the list's back-off position.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "annp/autodiff.hpp"
#include "annp/context_encoder.hpp"
#include "annp/layers.hpp"
#include "annp/tokenizer.hpp"

namespace annp {

struct MaskMode {
  enum class Kind { Global, Streaming };
  Kind kind = Kind::Global;
  std::size_t chunk_frames = 6;

  static MaskMode global() { return {Kind::Global, 6}; }
  static MaskMode streaming(std::size_t chunk_frames);

  bool streaming_mode() const { return kind == Kind::Streaming; }
  std::string to_string() const;
  // "global" or "streaming"; throws InvalidArgument otherwise.
  static MaskMode parse(const std::string &name, std::size_t chunk_frames);
  friend bool operator==(const MaskMode &, const MaskMode &) = default;
};

// Query ranges for the audio self-attention under `mode`.
std::vector<kernels::KeyRange> audio_ranges(std::size_t frames, MaskMode mode);

struct ModelConfig {
  std::size_t feature_dim = 16;
  TransformerDims audio{64, 4, 128, 2};
  TransformerDims label{64, 4, 128, 2};
  EncoderConfig context;
  std::size_t bias_heads = 4;
  std::size_t joint_dim = 64;
  std::size_t vocab = vocab::kSize;
  friend bool operator==(const ModelConfig &, const ModelConfig &) = default;
};

struct ModelParams {
  ModelConfig config;
  ParamStore tensors;
};

ModelParams init_model(const ModelConfig &config, std::uint64_t seed);
// The context-encoder slice of the model, for indexing and encode_batch.
EncoderParams encoder_view(const ModelParams &params);

// Phrases in list order, without the back-off entry; the back-off vector is
// inserted at `backoff_position` (0..phrases.size()).
struct BiasingContext {
  std::vector<TokenSequence> phrases;
  std::size_t backoff_position = 0;

  std::size_t entries() const { return phrases.size() + 1; }
};

// T x F feature frames.
using AudioFeatures = Matrix;

struct Utterance {
  AudioFeatures features;
  std::vector<std::size_t> labels;
  MaskMode mask;
};

// Encoder output before biasing. Throws NumericError on non-finite input.
Matrix audio_encode(const ModelParams &params, const AudioFeatures &features,
                    MaskMode mode);

// (entries x d) context matrix including the back-off row.
Matrix context_embeddings(const ModelParams &params, const BiasingContext &ctx);

struct BiasOutput {
  Matrix states;
  kernels::AttentionProbs probs;
};

// Cross-attention biasing with the parameter set `site` ("bias_audio" or
// "bias_label"): states + out(attention(q(states), k(ctx), v(ctx))).
BiasOutput bias_states(const ModelParams &params, const std::string &site,
                       const Matrix &states, const Matrix &context);

struct LossResult {
  double loss = 0.0;  // summed over the utterances
  ParamStore grads;   // empty when gradients were not requested
};

// Transducer loss of a batch sharing one context list, with gradients for
// every tensor including the context encoder. Utterance losses are summed in
// batch order.
LossResult transducer_loss(const ModelParams &params,
                           std::span<const Utterance> batch,
                           const BiasingContext &context, bool want_grads = true);

inline constexpr std::size_t kMaxEmissionsPerFrame = 4;

std::vector<std::size_t> greedy_decode(const ModelParams &params,
                                       const AudioFeatures &features,
                                       const Matrix &context, MaskMode mode);

struct AttentionMass {
  // Mean attention weight per context entry over positions and heads.
  std::vector<double> audio;
  std::vector<double> label;
};

// Audio side is measured over all frames; label side over the decoded prefix
// states of `labels` (use the reference transcript or a hypothesis).
AttentionMass attention_diagnostics(const ModelParams &params,
                                    const AudioFeatures &features,
                                    std::span<const std::size_t> labels,
                                    const Matrix &context, MaskMode mode);

}  // namespace annp
