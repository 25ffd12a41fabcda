#pragma once

// Fine-tuning with ANN-mined hard negatives, evaluation and the n/k/ratio
// sweep.
//
// Each epoch starts by encoding the inventory and rebuilding the phrase index
// when the schedule says so (epoch 0 always, then every
// rebuild_period_epochs). Each step draws a batch, builds one shared context
// list for it, and takes an Adam step on the mean transducer loss. With
// probability context_dropout the step sees the back-off entry only; the list
// is still drawn so the random stream does not depend on the outcome.

#include <cmath>
#include <functional>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "annp/ann_index.hpp"
#include "annp/biasing_model.hpp"
#include "annp/corpus.hpp"
#include "annp/negative_sampler.hpp"
#include "annp/phrase_inventory.hpp"
#include "annp/run_config.hpp"
#include "annp/wer.hpp"

namespace annp {

struct StepRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;  // global, 0-based
  double loss = 0.0;     // mean over the batch
  double ann_fraction = 0.0;
  std::size_t list_size = 0;  // phrases seen by the model, back-off excluded
  bool context_dropped = false;
  double learning_rate = 0.0;
  double grad_norm = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  bool index_built = false;
  double mean_loss = 0.0;
  SamplingStats sampling;
};

struct TrainingLog {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  std::size_t index_builds = 0;

  // One JSON object per line: step records, then epoch records.
  void write(std::ostream &out) const;
};

struct TrainResult {
  ModelParams params;
  TrainingLog log;
};

using ProgressFn = std::function<void(const StepRecord &)>;

bool index_rebuilt_at(std::size_t epoch, std::size_t period);
std::size_t index_build_count(std::size_t epochs, std::size_t period);

// Embeddings of every inventory entry (entities and word-only entries).
EmbeddingTable embed_inventory(const ModelParams &params, const PhraseInventory &inventory);
AnnIndex build_phrase_index(const ModelParams &params, const PhraseInventory &inventory,
                            const IndexConfig &config);

// Starts from `init` when given, otherwise from init_model(cfg.model, cfg.seed).
// Throws NumericError naming the step on a non-finite loss.
TrainResult fine_tune(const RunConfig &cfg, const SyntheticCorpus &corpus,
                      const PhraseInventory &inventory, const ModelParams *init = nullptr,
                      const ProgressFn &progress = {});

struct WerSummary {
  EditCounts counts;
  std::size_t utterances = 0;
  double wer() const { return word_error_rate(counts); }
};

struct EvalReport {
  bool context_on = false;
  MaskMode mask;
  WerSummary generic;
  WerSummary personal;
  WerSummary confusable;  // personal utterances whose reference has a family
  WerSummary average;     // all utterances
  // Context on only: share of personal utterances whose reference entry gets
  // the largest audio-side attention mass among non-back-off entries, and
  // share of generic utterances where the back-off entry gets the largest
  // mass overall. NaN when context is off.
  double reference_argmax_rate = std::numeric_limits<double>::quiet_NaN();
  double backoff_argmax_rate = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::string> hypotheses;  // per evaluation utterance
  std::vector<std::size_t> errors;      // word errors per evaluation utterance
};

// Context phrases for one evaluation utterance: its reference, up to
// family_distractors members of the reference's family, random inventory
// phrases up to phrases_per_query, in shuffled order. Independent of the
// model, so different models see identical lists.
std::vector<std::string> eval_context_phrases(const SyntheticCorpus &corpus,
                                              const PhraseInventory &inventory,
                                              std::size_t utterance, const EvalConfig &cfg);

EvalReport evaluate(const ModelParams &params, const SyntheticCorpus &corpus,
                    const PhraseInventory &inventory, MaskMode mask, bool context_on,
                    const EvalConfig &cfg);

struct SweepCell {
  std::size_t n = 20;
  std::size_t k = 2;
  double append_ratio = 0.25;
};

// k in {1, 2, 4} x n in {10, 20, 40} x ratio in {0.25, 0.5, 1.0}.
std::vector<SweepCell> default_sweep_grid();

struct SweepRow {
  SweepCell cell;
  bool ok = false;
  std::string error;
  EvalReport report;
  double seconds = 0.0;
};

// One fine_tune + evaluate (context on, cfg.eval settings) per cell with the
// same corpus and seed. A failing cell is reported, not thrown. Up to `jobs`
// cells run concurrently.
std::vector<SweepRow> sweep(const RunConfig &base, std::span<const SweepCell> grid,
                            const SyntheticCorpus &corpus, const PhraseInventory &inventory,
                            const ModelParams *init = nullptr, std::size_t jobs = 1);

// Tab-separated with a header row.
void write_sweep_table(std::span<const SweepRow> rows, std::ostream &out);
// Whitespace-separated blocks, one per append ratio, blank-line separated.
void write_sweep_plot(std::span<const SweepRow> rows, std::ostream &out);

}  // namespace annp
