#include "annp/negative_sampler.hpp"

#include <algorithm>
#include <iterator>
#include <unordered_map>
#include <unordered_set>

#include "annp/error.hpp"

namespace annp {

void SamplerConfig::validate() const {
  if (k < 1 || n < 1 || k >= n) {
    throw InvalidArgument("sampler requires 1 <= k < n (k=" + std::to_string(k) +
                          ", n=" + std::to_string(n) + ")");
  }
  if (!(append_ratio >= 0.0 && append_ratio <= 1.0)) {
    throw InvalidArgument("append_ratio must lie in [0, 1]");
  }
  if (phrases_per_query < 1) throw InvalidArgument("phrases_per_query must be >= 1");
  if (max_list_size < 1) throw InvalidArgument("max_list_size must be >= 1");
}

const char *to_string(Provenance p) {
  switch (p) {
    case Provenance::Reference: return "reference";
    case Provenance::Ann: return "ann";
    case Provenance::Random: return "random";
    case Provenance::Backoff: return "backoff";
  }
  return "?";
}

std::size_t ContextList::count(Provenance p) const {
  return static_cast<std::size_t>(std::count(provenance.begin(), provenance.end(), p));
}

std::vector<ScoredNeighbor> nearest_phrases(const AnnIndex &index,
                                            std::size_t phrase_id,
                                            std::size_t n,
                                            std::span<const std::size_t> excluded) {
  const auto vec = index.vector_of(phrase_id);
  if (vec.empty() || n == 0) return {};
  std::unordered_set<std::size_t> skip(excluded.begin(), excluded.end());
  skip.insert(phrase_id);
  std::size_t present = 0;
  for (std::size_t id : skip) present += index.contains(id);
  auto found = index.query(vec, std::min(index.size(), n + present));
  std::erase_if(found, [&](const ScoredNeighbor &s) { return skip.contains(s.phrase_id); });
  if (found.size() > n) found.resize(n);
  return found;
}

std::vector<std::size_t> mine_ann_negatives(const Phrase &query,
                                            const PhraseInventory &inventory,
                                            const AnnIndex &index,
                                            const SamplerConfig &cfg, Rng &rng) {
  std::vector<std::size_t> excluded{query.id};
  std::vector<std::size_t> word_ids;
  for (const auto &w : query.words) {
    if (auto id = inventory.find(w)) {
      excluded.push_back(*id);
      word_ids.push_back(*id);
    }
  }
  std::vector<std::size_t> out;
  std::unordered_set<std::size_t> seen;
  for (std::size_t wid : word_ids) {
    if (!index.contains(wid)) continue;
    const auto neigh = nearest_phrases(index, wid, cfg.n, excluded);
    std::vector<std::size_t> ids;
    ids.reserve(neigh.size());
    for (const auto &s : neigh) ids.push_back(s.phrase_id);
    std::vector<std::size_t> picked;
    std::sample(ids.begin(), ids.end(), std::back_inserter(picked), cfg.k, rng);
    for (std::size_t id : picked) {
      if (seen.insert(id).second) out.push_back(id);
    }
  }
  return out;
}

namespace {

int rank(Provenance p) {
  switch (p) {
    case Provenance::Reference: return 0;
    case Provenance::Ann: return 1;
    default: return 2;
  }
}

}  // namespace

ContextList build_context_list(std::span<const QueryContext> batch,
                               const PhraseInventory &inventory,
                               const AnnIndex *index, const SamplerConfig &cfg,
                               Rng &rng) {
  if (batch.empty()) throw InvalidArgument("context list needs a non-empty batch");
  cfg.validate();

  ContextList list;
  std::unordered_map<std::size_t, std::size_t> position;
  auto push = [&](std::size_t id, Provenance p) {
    ++list.contributed;
    auto [it, fresh] = position.try_emplace(id, list.entries.size());
    if (fresh) {
      list.entries.push_back(id);
      list.provenance.push_back(p);
      return;
    }
    ++list.duplicates;
    if (rank(p) < rank(list.provenance[it->second])) list.provenance[it->second] = p;
  };

  const auto &pool = inventory.entity_ids();
  std::bernoulli_distribution gate(cfg.append_ratio);
  std::uniform_int_distribution<std::size_t> pick(0, pool.empty() ? 0 : pool.size() - 1);

  for (const auto &q : batch) {
    for (std::size_t id : q.reference_phrases) {
      if (!inventory.contains_id(id)) {
        throw InvalidArgument("reference phrase id " + std::to_string(id) +
                              " is not in the inventory");
      }
    }
  }

  list.ann_contributed.assign(batch.size(), false);
  for (std::size_t qi = 0; qi < batch.size(); ++qi) {
    const auto &q = batch[qi];
    std::unordered_set<std::size_t> mine;
    for (std::size_t id : q.reference_phrases) {
      push(id, Provenance::Reference);
      mine.insert(id);
    }
    if (!q.reference_phrases.empty() && gate(rng) && index != nullptr) {
      for (std::size_t ref : q.reference_phrases) {
        for (std::size_t id : mine_ann_negatives(inventory.at(ref), inventory, *index, cfg, rng)) {
          if (mine.size() >= cfg.phrases_per_query) break;
          if (mine.insert(id).second) {
            push(id, Provenance::Ann);
            list.ann_contributed[qi] = true;
          }
        }
      }
    }
    // Random fill, avoiding ids already in this contribution or the list.
    std::size_t available = 0;
    for (std::size_t id : pool) available += !mine.contains(id) && !position.contains(id);
    while (mine.size() < cfg.phrases_per_query) {
      if (available == 0) {
        list.short_fill = true;
        break;
      }
      const std::size_t id = pool[pick(rng)];
      if (mine.contains(id) || position.contains(id)) continue;
      mine.insert(id);
      push(id, Provenance::Random);
      --available;
    }
  }

  // Enforce the cap: random entries go first, then mined ones, newest first.
  for (Provenance victim : {Provenance::Random, Provenance::Ann}) {
    for (std::size_t i = list.entries.size(); i-- > 0 && list.entries.size() > cfg.max_list_size;) {
      if (list.provenance[i] == victim) {
        list.entries.erase(list.entries.begin() + static_cast<std::ptrdiff_t>(i));
        list.provenance.erase(list.provenance.begin() + static_cast<std::ptrdiff_t>(i));
      }
    }
  }

  list.backoff_position = list.entries.size();
  list.entries.push_back(kBackoffId);
  list.provenance.push_back(Provenance::Backoff);

  std::unordered_map<std::size_t, std::size_t> final_pos;
  for (std::size_t i = 0; i < list.entries.size(); ++i) final_pos[list.entries[i]] = i;
  list.relevance.resize(batch.size());
  for (std::size_t qi = 0; qi < batch.size(); ++qi) {
    for (std::size_t id : batch[qi].reference_phrases) {
      list.relevance[qi].push_back(final_pos.at(id));
    }
    std::sort(list.relevance[qi].begin(), list.relevance[qi].end());
    list.relevance[qi].erase(
        std::unique(list.relevance[qi].begin(), list.relevance[qi].end()),
        list.relevance[qi].end());
  }
  return list;
}

BiasingContext to_biasing_context(const ContextList &list,
                                  const PhraseInventory &inventory) {
  BiasingContext ctx;
  ctx.backoff_position = list.backoff_position;
  for (std::size_t i = 0; i < list.entries.size(); ++i) {
    if (i == list.backoff_position) continue;
    ctx.phrases.push_back(tokenize(inventory.at(list.entries[i]).text));
  }
  return ctx;
}

SamplingStats sampling_stats(std::span<const ContextList> runs) {
  SamplingStats s;
  s.lists = runs.size();
  if (runs.empty()) return s;
  std::size_t with_refs = 0, mined = 0, length = 0, contributed = 0, duplicates = 0;
  for (const auto &l : runs) {
    s.queries += l.relevance.size();
    for (std::size_t q = 0; q < l.relevance.size(); ++q) {
      if (l.relevance[q].empty()) continue;
      ++with_refs;
      mined += l.ann_contributed[q];
    }
    length += l.entries.size();
    contributed += l.contributed;
    duplicates += l.duplicates;
  }
  s.ann_frequency = with_refs ? static_cast<double>(mined) / with_refs : 0.0;
  s.mean_list_length = static_cast<double>(length) / runs.size();
  s.dedup_collision_rate =
      contributed ? static_cast<double>(duplicates) / contributed : 0.0;
  return s;
}

}  // namespace annp
