#pragma once

// Phrase encoder: characters -> transformer -> mean pool -> projection.
// One fixed-size embedding per phrase, used both as the key/value source of
// the biasing attention and as the vector cached in the ANN index.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "annp/autodiff.hpp"
#include "annp/layers.hpp"
#include "annp/tokenizer.hpp"

namespace annp {

struct EncoderConfig {
  std::size_t embed_dim = 64;
  std::size_t output_dim = 64;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t ffn_dim = 128;
  // Positions past the end share the last learned position row.
  std::size_t max_positions = 32;

  TransformerDims dims() const { return {embed_dim, heads, ffn_dim, layers}; }
  friend bool operator==(const EncoderConfig &, const EncoderConfig &) = default;
};

struct PhraseEmbedding {
  std::vector<double> values;

  std::size_t dim() const { return values.size(); }
  friend bool operator==(const PhraseEmbedding &, const PhraseEmbedding &) = default;
};

// Encoder tensors are named "ctx.*" so they can live inside a larger model.
struct EncoderParams {
  EncoderConfig config;
  ParamStore tensors;
};

inline constexpr const char *kEncoderPrefix = "ctx";

EncoderParams init_encoder(const EncoderConfig &config, std::uint64_t seed);
void init_encoder_into(ParamStore &params, const EncoderConfig &config,
                       std::mt19937_64 &rng);

// Encodes a batch of phrases on a tape; returns a (phrases x output_dim) node.
ad::Var encode_on_tape(const Binder &p, const EncoderConfig &config,
                       std::span<const TokenSequence> phrases);

PhraseEmbedding encode(const EncoderParams &params, const TokenSequence &phrase);

// Order-preserving, bit-identical to calling encode() in a loop.
std::vector<PhraseEmbedding> encode_batch(const EncoderConfig &config,
                                          const ParamStore &tensors,
                                          std::span<const TokenSequence> phrases);
std::vector<PhraseEmbedding> encode_batch(const EncoderParams &params,
                                          std::span<const TokenSequence> phrases);

// Loss over the (phrases x output_dim) embedding node.
using EmbeddingLoss = std::function<ad::Var(ad::Var embeddings)>;

// Gradient of loss(encode_batch(phrases)) for every encoder tensor.
// Throws NumericError on a non-finite loss.
ParamStore encoder_gradients(const EncoderParams &params,
                             std::span<const TokenSequence> phrases,
                             const EmbeddingLoss &loss);

}  // namespace annp
