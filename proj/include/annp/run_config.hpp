#pragma once

// Run configuration, stored as JSON. Every key is optional and falls back to
// the default below; unknown keys are rejected.
//
// {
//   "seed": 1,
//   "epochs": 6,
//   "rebuild_period_epochs": 2,
//   "batch_size": 16,
//   "max_steps_per_epoch": 0,          // 0 = whole training split
//   "miner_enabled": true,
//   "context_dropout": 0.1,            // share of steps trained on back-off only
//   "resample_noise": true,            // fresh feature noise for every epoch after the first
//   "sampler":   {"n": 20, "k": 2, "append_ratio": 0.25,
//                 "phrases_per_query": 8, "max_list_size": 128},
//   "optimizer": {"learning_rate": 0.002, "beta1": 0.9, "beta2": 0.999,
//                 "epsilon": 1e-8, "decay_rate": 0.5, "decay_steps": 1000,
//                 "clip_norm": 5.0},
//   "model":     {"feature_dim": 16, "width": 32, "heads": 4, "ffn": 64,
//                 "audio_layers": 2, "label_layers": 2, "bias_heads": 4,
//                 "joint_dim": 64,
//                 "context": {"embed_dim": 32, "output_dim": 64, "layers": 2,
//                             "heads": 4, "ffn_dim": 64, "max_positions": 32}},
//   "masking":   {"train": "variable", "streaming_probability": 0.5,
//                 "chunk_frames": 6},
//   "index":     {"num_trees": 32, "leaf_capacity": 16, "search_budget": 0},
//   "corpus":    {"seed": 1, "feature_dim": 16, "frames_per_char": 1,
//                 "class_scale": 3.0, "letter_scale": 1.0, "noise": 0.5,
//                 "families": 40, "family_size": 4, "singletons": 40,
//                 "train_utterances": 1200, "train_personal_fraction": 0.6,
//                 "eval_utterances": 200, "eval_personal_fraction": 0.4,
//                 "eval_confusable_fraction": 0.75},
//   "eval":      {"mask_mode": "streaming", "chunk_frames": 6, "phrases_per_query": 8,
//                 "family_distractors": 3, "seed": 99},
//   "init_checkpoint": ""               // optional starting weights
// }

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"

#include "annp/ann_index.hpp"
#include "annp/biasing_model.hpp"
#include "annp/corpus.hpp"
#include "annp/negative_sampler.hpp"
#include "annp/optimizer.hpp"

namespace annp {

enum class TrainMasking { Global, Streaming, Variable };

struct MaskingConfig {
  TrainMasking train = TrainMasking::Variable;
  double streaming_probability = 0.5;
  std::size_t chunk_frames = 6;
};

struct EvalConfig {
  MaskMode mask = MaskMode::streaming(6);
  std::size_t phrases_per_query = 8;
  std::size_t family_distractors = 3;
  std::uint64_t seed = 99;
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::size_t epochs = 6;
  std::size_t rebuild_period_epochs = 2;
  std::size_t batch_size = 16;
  std::size_t max_steps_per_epoch = 0;
  bool miner_enabled = true;
  double context_dropout = 0.1;
  bool resample_noise = true;
  SamplerConfig sampler;
  AdamConfig optimizer;
  ModelConfig model = default_model_config();
  MaskingConfig masking;
  IndexConfig index;
  CorpusConfig corpus;
  std::uint64_t corpus_seed = 1;
  EvalConfig eval;
  std::string init_checkpoint;

  static ModelConfig default_model_config();
  // Throws InvalidArgument on inconsistent values.
  void validate() const;
};

// Throws InvalidArgument (unknown key, wrong type, bad value).
RunConfig run_config_from_json(const nlohmann::json &j);
nlohmann::json to_json(const RunConfig &cfg);

// Throws ParseError for unreadable or malformed files.
RunConfig load_run_config(const std::filesystem::path &path);
void save_run_config(const RunConfig &cfg, const std::filesystem::path &path);

}  // namespace annp
