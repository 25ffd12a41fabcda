#pragma once

// Named-tensor checkpoints for the context encoder and the full model.
//
// Layout (little-endian):
//   "ANNPCKP1" | u32 version | u8 kind (0 encoder, 1 model)
//   | encoder config: u64 embed_dim, output_dim, layers, heads, ffn_dim,
//     max_positions
//   | model only: u64 feature_dim, audio {width, heads, ffn, layers},
//     label {width, heads, ffn, layers}, bias_heads, joint_dim, vocab,
//     str mask_mode, u64 chunk_frames
//   | u64 tensors, per tensor: str name, u64 rows, u64 cols, rows*cols f64
//   | u64 FNV-1a checksum of all preceding bytes
// Strings are u64 length + bytes.

#include <filesystem>

#include "annp/biasing_model.hpp"
#include "annp/context_encoder.hpp"

namespace annp {

struct ModelCheckpoint {
  ModelParams params;
  MaskMode mask;
};

void save_encoder(const EncoderParams &params, const std::filesystem::path &path);
EncoderParams load_encoder(const std::filesystem::path &path);

void save_checkpoint(const ModelParams &params, MaskMode mask,
                     const std::filesystem::path &path);
ModelCheckpoint load_checkpoint(const std::filesystem::path &path);

}  // namespace annp
