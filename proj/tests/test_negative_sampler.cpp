#include "doctest.h"

#include <cmath>
#include <random>
#include <set>

#include "annp/error.hpp"
#include "annp/negative_sampler.hpp"
#include "oracles.hpp"

using namespace annp;

namespace {

struct Fixture {
  PhraseInventory inventory;
  EmbeddingTable table;
  AnnIndex index;
};

// Inventory of `n` random names (a few two-word ones) and a random-vector
// index over every entry including word-only ones.
Fixture make_fixture(std::size_t n, std::uint64_t seed, std::size_t dim = 8) {
  std::mt19937_64 rng(seed);
  Fixture f;
  f.inventory.add("jim smith");
  while (f.inventory.size() < n) {
    std::string s;
    for (int i = 0; i < 5; ++i) s += static_cast<char>('a' + rng() % 26);
    f.inventory.add(s);
  }
  for (const Phrase *p : f.inventory.entries()) {
    const Matrix v = oracle::random_matrix(1, dim, rng);
    f.table.add(p->id, v.row(0));
  }
  f.index = AnnIndex::build(f.table, IndexConfig{8, 16, seed});
  return f;
}

QueryContext query_for(const PhraseInventory &inv, std::size_t id) {
  return {"call " + inv.at(id).text, {id}};
}

}  // namespace

TEST_CASE("config validation") {
  SamplerConfig c;
  CHECK_NOTHROW(c.validate());
  c.k = c.n;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = SamplerConfig{};
  c.append_ratio = 1.5;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
}

TEST_CASE("k = n - 1 on an index of n + 1 entries") {
  const std::size_t n = 6;
  auto f = make_fixture(n + 1, 1);
  // drop the word-only entries so the index has exactly n + 1 rows
  EmbeddingTable t;
  for (std::size_t i = 0; i < f.table.size(); ++i)
    if (f.inventory.at(f.table.ids[i]).entity) t.add(f.table.ids[i], f.table.vectors.row(i));
  REQUIRE(t.size() == n + 1);
  const auto idx = AnnIndex::build(t, IndexConfig{4, 16, 1});
  SamplerConfig cfg;
  cfg.n = n;
  cfg.k = n - 1;
  Rng rng(2);
  const std::size_t q = f.inventory.entity_ids().back();
  const auto out = mine_ann_negatives(f.inventory.at(q), f.inventory, idx, cfg, rng);
  CHECK(out.size() == n - 1);
  CHECK(std::find(out.begin(), out.end(), q) == out.end());
}

TEST_CASE("two-word query equals per-word brute-force subsampling") {
  auto f = make_fixture(200, 3);
  SamplerConfig cfg;
  cfg.n = 5;
  cfg.k = 2;
  const Phrase &q = f.inventory.at(*f.inventory.find("jim smith"));
  const std::set<std::size_t> excluded{q.id, *f.inventory.find("jim"), *f.inventory.find("smith")};
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed), replay(seed);
    const auto out = mine_ann_negatives(q, f.inventory, f.index, cfg, rng);
    CHECK(out.size() <= 4);
    std::vector<std::size_t> want;
    for (const char *w : {"jim", "smith"}) {
      const std::size_t wid = *f.inventory.find(w);
      const auto v = f.index.vector_of(wid);
      std::vector<std::size_t> top;
      for (std::size_t id : oracle::scan_top_n(f.table.vectors, f.table.ids, v, f.table.size()))
        if (!excluded.contains(id) && top.size() < cfg.n) top.push_back(id);
      std::vector<std::size_t> picked;
      std::sample(top.begin(), top.end(), std::back_inserter(picked), cfg.k, replay);
      for (std::size_t id : picked)
        if (std::find(want.begin(), want.end(), id) == want.end()) want.push_back(id);
    }
    CHECK(out == want);
    for (std::size_t id : out) CHECK_FALSE(excluded.contains(id));
  }
}

TEST_CASE("absent phrases mine nothing") {
  auto f = make_fixture(50, 4);
  const std::size_t absent = f.inventory.entity_ids().back();
  EmbeddingTable t;
  for (std::size_t i = 0; i < f.table.size(); ++i)
    if (f.table.ids[i] != absent) t.add(f.table.ids[i], f.table.vectors.row(i));
  const auto idx = AnnIndex::build(t, IndexConfig{4, 16, 1});
  SamplerConfig cfg;
  Rng rng(1);
  CHECK(mine_ann_negatives(f.inventory.at(absent), f.inventory, idx, cfg, rng).empty());
}

TEST_CASE("context list invariants") {
  auto f = make_fixture(400, 5);
  const auto &ids = f.inventory.entity_ids();
  SamplerConfig cfg;
  cfg.append_ratio = 0.5;
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<QueryContext> batch;
    for (int i = 0; i < 16; ++i) {
      if (i % 5 == 4) batch.push_back({"what time is it", {}});
      else batch.push_back(query_for(f.inventory, ids[rng() % ids.size()]));
    }
    const auto list = build_context_list(batch, f.inventory, &f.index, cfg, rng);
    CHECK(list.size() <= 128 + 1);
    CHECK(list.count(Provenance::Backoff) == 1);
    CHECK(list.entries[list.backoff_position] == kBackoffId);
    CHECK(std::set<std::size_t>(list.entries.begin(), list.entries.end()).size() == list.size());
    for (std::size_t q = 0; q < batch.size(); ++q) {
      REQUIRE(list.relevance[q].size() == batch[q].reference_phrases.size());
      for (std::size_t k = 0; k < list.relevance[q].size(); ++k) {
        CHECK(list.entries[list.relevance[q][k]] == batch[q].reference_phrases[k]);
        CHECK(list.provenance[list.relevance[q][k]] == Provenance::Reference);
      }
    }
    const auto ctx = to_biasing_context(list, f.inventory);
    CHECK(ctx.entries() == list.size());
  }
}

TEST_CASE("gate extremes") {
  auto f = make_fixture(400, 7);
  const auto &ids = f.inventory.entity_ids();
  SamplerConfig cfg;
  Rng rng(8);
  cfg.append_ratio = 0.0;
  for (int t = 0; t < 100; ++t) {
    std::vector<QueryContext> batch{query_for(f.inventory, ids[rng() % ids.size()])};
    CHECK(build_context_list(batch, f.inventory, &f.index, cfg, rng).count(Provenance::Ann) == 0);
  }
  cfg.append_ratio = 1.0;
  std::vector<ContextList> runs;
  for (int t = 0; t < 1000; ++t) {
    std::vector<QueryContext> batch;
    for (int i = 0; i < 4; ++i) batch.push_back(query_for(f.inventory, ids[rng() % ids.size()]));
    runs.push_back(build_context_list(batch, f.inventory, &f.index, cfg, rng));
    for (std::size_t q = 0; q < batch.size(); ++q) CHECK(runs.back().ann_contributed[q]);
  }
  CHECK(sampling_stats(runs).ann_frequency == 1.0);
}

TEST_CASE("gate law at the operating point") {
  auto f = make_fixture(300, 9);
  const auto &ids = f.inventory.entity_ids();
  SamplerConfig cfg;  // n = 20, k = 2, ratio 0.25
  Rng rng(10);
  std::vector<ContextList> runs;
  for (int t = 0; t < 10000; ++t) {
    std::vector<QueryContext> batch{query_for(f.inventory, ids[rng() % ids.size()])};
    runs.push_back(build_context_list(batch, f.inventory, &f.index, cfg, rng));
  }
  const auto s = sampling_stats(runs);
  const double half = 2.5758 * std::sqrt(0.25 * 0.75 / 10000.0);
  MESSAGE("ann frequency " << s.ann_frequency);
  CHECK(std::abs(s.ann_frequency - 0.25) <= half);
  CHECK(s.mean_list_length == doctest::Approx(9.0));
  CHECK(s.lists == 10000);
}

TEST_CASE("determinism and miner-off equivalence") {
  auto f = make_fixture(300, 11);
  const auto &ids = f.inventory.entity_ids();
  std::vector<QueryContext> batch;
  for (int i = 0; i < 8; ++i) batch.push_back(query_for(f.inventory, ids[i * 7]));
  SamplerConfig cfg;
  Rng a(1), b(1);
  const auto la = build_context_list(batch, f.inventory, &f.index, cfg, a);
  const auto lb = build_context_list(batch, f.inventory, &f.index, cfg, b);
  CHECK(la.entries == lb.entries);
  CHECK(la.provenance == lb.provenance);
  cfg.append_ratio = 0.0;
  Rng c(2), d(2);
  const auto lc = build_context_list(batch, f.inventory, &f.index, cfg, c);
  const auto ld = build_context_list(batch, f.inventory, nullptr, cfg, d);
  CHECK(lc.entries == ld.entries);
  CHECK(c() == d());
}

TEST_CASE("short inventories and the cap") {
  auto f = make_fixture(5, 12);
  const auto &ids = f.inventory.entity_ids();
  SamplerConfig cfg;
  cfg.append_ratio = 0.0;
  Rng rng(3);
  std::vector<QueryContext> batch{query_for(f.inventory, ids[0])};
  const auto list = build_context_list(batch, f.inventory, &f.index, cfg, rng);
  CHECK(list.short_fill);
  CHECK(list.size() == 5 + 1);

  auto big = make_fixture(400, 13);
  cfg.max_list_size = 20;
  cfg.append_ratio = 1.0;
  std::vector<QueryContext> many;
  for (int i = 0; i < 10; ++i) many.push_back(query_for(big.inventory, big.inventory.entity_ids()[i]));
  const auto capped = build_context_list(many, big.inventory, &big.index, cfg, rng);
  CHECK(capped.size() == 21);
  CHECK(capped.count(Provenance::Reference) == 10);
  CHECK(capped.count(Provenance::Random) == 0);
  CHECK_THROWS_AS(build_context_list({}, big.inventory, &big.index, cfg, rng), InvalidArgument);
}
