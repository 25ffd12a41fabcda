#pragma once

// Hard-negative mining and batch context-list construction.
//
// For each query with reference phrases, a Bernoulli(append_ratio) gate
// decides whether mined neighbours join its contribution. Mining works per
// word: every word of a reference phrase that is present in the index
// retrieves its n nearest phrases by dot product (the word and the reference's
// own words excluded), k of those are drawn uniformly without replacement,
// and the per-word draws are concatenated and deduplicated. The rest of the
// query's phrases_per_query slots are uniform draws from the inventory.
// Contributions are merged into one list shared by the whole batch, capped,
// and followed by a single back-off entry.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "annp/ann_index.hpp"
#include "annp/biasing_model.hpp"
#include "annp/phrase_inventory.hpp"

namespace annp {

struct SamplerConfig {
  std::size_t n = 20;
  std::size_t k = 2;
  double append_ratio = 0.25;
  std::size_t phrases_per_query = 8;
  // Entries before the back-off; overflow drops random fills first.
  std::size_t max_list_size = 128;
  std::uint64_t seed = 0;

  // Throws InvalidArgument unless 1 <= k < n and 0 <= append_ratio <= 1.
  void validate() const;
};

enum class Provenance { Reference, Ann, Random, Backoff };
const char *to_string(Provenance p);

inline constexpr std::size_t kBackoffId = std::numeric_limits<std::size_t>::max();

struct ContextList {
  std::vector<std::size_t> entries;  // phrase ids; kBackoffId at backoff_position
  std::vector<Provenance> provenance;
  std::size_t backoff_position = 0;
  // Per query: indices into `entries` of its reference phrases.
  std::vector<std::vector<std::size_t>> relevance;
  // Per query: the gate opened and mining returned at least one phrase.
  std::vector<bool> ann_contributed;
  // Pre-merge contributions and how many of them were duplicates.
  std::size_t contributed = 0;
  std::size_t duplicates = 0;
  // The inventory could not supply every requested random fill.
  bool short_fill = false;

  std::size_t size() const { return entries.size(); }
  std::size_t count(Provenance p) const;
};

struct QueryContext {
  std::string transcript;
  std::vector<std::size_t> reference_phrases;  // inventory ids
};

using Rng = std::mt19937_64;

// Top-n neighbours of phrase `phrase_id` from the index, excluding the ids in
// `excluded` (the query itself is always excluded). Empty when the phrase is
// not indexed.
std::vector<ScoredNeighbor> nearest_phrases(const AnnIndex &index,
                                            std::size_t phrase_id,
                                            std::size_t n,
                                            std::span<const std::size_t> excluded);

std::vector<std::size_t> mine_ann_negatives(const Phrase &query,
                                            const PhraseInventory &inventory,
                                            const AnnIndex &index,
                                            const SamplerConfig &cfg, Rng &rng);

// `index` may be null (miner disabled); the gate is still drawn for every
// query with references so the random stream matches append_ratio = 0.
ContextList build_context_list(std::span<const QueryContext> batch,
                               const PhraseInventory &inventory,
                               const AnnIndex *index, const SamplerConfig &cfg,
                               Rng &rng);

// Tokenized phrases of the list (back-off excluded) for the model.
BiasingContext to_biasing_context(const ContextList &list,
                                  const PhraseInventory &inventory);

struct SamplingStats {
  double ann_frequency = 0.0;     // queries with mined phrases / queries with references
  double mean_list_length = 0.0;  // entries including back-off
  double dedup_collision_rate = 0.0;
  std::size_t lists = 0;
  std::size_t queries = 0;
};

SamplingStats sampling_stats(std::span<const ContextList> runs);

}  // namespace annp
