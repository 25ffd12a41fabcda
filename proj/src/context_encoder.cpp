#include "annp/context_encoder.hpp"

#include <algorithm>
#include <cmath>

#include "annp/error.hpp"

namespace annp {

namespace {

const std::string kPrefix = kEncoderPrefix;

// Items per tape in encode_batch; chunks are encoded in parallel.
constexpr std::size_t kBatchChunk = 64;

void validate_batch(std::span<const TokenSequence> phrases) {
  for (std::size_t i = 0; i < phrases.size(); ++i) {
    try {
      validate(phrases[i]);
    } catch (const InvalidArgument &e) {
      throw InvalidArgument("phrase " + std::to_string(i) + ": " + e.what());
    }
  }
}

}  // namespace

void init_encoder_into(ParamStore &params, const EncoderConfig &config,
                       std::mt19937_64 &rng) {
  if (config.embed_dim == 0 || config.output_dim == 0 ||
      config.max_positions == 0) {
    throw InvalidArgument("encoder dimensions must be positive");
  }
  params[kPrefix + ".embed"] = uniform_matrix(
      vocab::kSize, config.embed_dim,
      1.0 / std::sqrt(static_cast<double>(config.embed_dim)), rng);
  params[kPrefix + ".pos"] = Matrix(config.max_positions, config.embed_dim);
  init_transformer(params, kPrefix + ".enc", config.dims(), rng);
  init_linear(params, kPrefix + ".pool", config.embed_dim, config.output_dim,
              rng);
}

EncoderParams init_encoder(const EncoderConfig &config, std::uint64_t seed) {
  EncoderParams p{config, {}};
  std::mt19937_64 rng(seed);
  init_encoder_into(p.tensors, config, rng);
  return p;
}

ad::Var encode_on_tape(const Binder &p, const EncoderConfig &config,
                       std::span<const TokenSequence> phrases) {
  if (phrases.empty()) throw InvalidArgument("encode: empty phrase batch");
  validate_batch(phrases);
  std::vector<std::size_t> ids;
  std::vector<std::size_t> positions;
  std::vector<std::size_t> offsets{0};
  for (const auto &ph : phrases) {
    for (std::size_t i = 0; i < ph.ids.size(); ++i) {
      ids.push_back(ph.ids[i]);
      positions.push_back(std::min(i, config.max_positions - 1));
    }
    offsets.push_back(ids.size());
  }
  ad::Var x = ad::add(ad::gather_rows(p(kPrefix + ".embed"), std::move(ids)),
                      ad::gather_rows(p(kPrefix + ".pos"), std::move(positions)));
  x = transformer(p, kPrefix + ".enc", config.dims(), x,
                  kernels::segment_ranges(offsets));
  ad::Var pooled = ad::segment_mean(x, std::move(offsets));
  return linear(p, kPrefix + ".pool", pooled);
}

std::vector<PhraseEmbedding> encode_batch(const EncoderConfig &config,
                                          const ParamStore &tensors,
                                          std::span<const TokenSequence> phrases) {
  validate_batch(phrases);
  std::vector<PhraseEmbedding> out(phrases.size());
  const std::size_t chunks = (phrases.size() + kBatchChunk - 1) / kBatchChunk;
  const long long nc = static_cast<long long>(chunks);
#pragma omp parallel for schedule(dynamic)
  for (long long cl = 0; cl < nc; ++cl) {
    const std::size_t lo = static_cast<std::size_t>(cl) * kBatchChunk;
    const std::size_t hi = std::min(phrases.size(), lo + kBatchChunk);
    ad::Tape tape;
    Binder binder(tape, tensors, false);
    ad::Var emb = encode_on_tape(binder, config, phrases.subspan(lo, hi - lo));
    const Matrix &m = emb.value();
    for (std::size_t r = 0; r < m.rows; ++r) {
      out[lo + r].values.assign(m.row(r).begin(), m.row(r).end());
    }
  }
  return out;
}

std::vector<PhraseEmbedding> encode_batch(const EncoderParams &params,
                                          std::span<const TokenSequence> phrases) {
  return encode_batch(params.config, params.tensors, phrases);
}

PhraseEmbedding encode(const EncoderParams &params, const TokenSequence &phrase) {
  return encode_batch(params, std::span<const TokenSequence>(&phrase, 1)).front();
}

ParamStore encoder_gradients(const EncoderParams &params,
                             std::span<const TokenSequence> phrases,
                             const EmbeddingLoss &loss) {
  ad::Tape tape;
  Binder binder(tape, params.tensors, true);
  for (const auto &[name, _] : params.tensors) binder(name);
  ad::Var emb = encode_on_tape(binder, params.config, phrases);
  ad::Var l = loss(emb);
  if (l.rows() != 1 || l.cols() != 1) {
    throw InvalidArgument("encoder_gradients: loss must be scalar");
  }
  if (!std::isfinite(l.value().data[0])) {
    throw NumericError("encoder_gradients: non-finite loss");
  }
  ParamStore grads = zeros_like(params.tensors);
  if (tape.requires_grad(l.id)) {
    tape.backward(l);
    tape.collect_grads(grads);
  }
  return grads;
}

}  // namespace annp
