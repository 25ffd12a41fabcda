#include "doctest.h"

#include <set>

#include "annp/corpus.hpp"
#include "annp/error.hpp"
#include "annp/tokenizer.hpp"
#include "oracles.hpp"

using namespace annp;

namespace {

CorpusConfig small_config() {
  CorpusConfig c;
  c.families = 8;
  c.singletons = 8;
  c.train_utterances = 60;
  c.eval_utterances = 40;
  return c;
}

bool same_features(const AudioFeatures &a, const AudioFeatures &b) {
  return a.rows == b.rows && a.cols == b.cols && a.data == b.data;
}

}  // namespace

TEST_CASE("corpus generation is deterministic per seed") {
  const auto a = generate_corpus(small_config(), 3);
  const auto b = generate_corpus(small_config(), 3);
  const auto c = generate_corpus(small_config(), 4);
  REQUIRE(a.train.size() == b.train.size());
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    CHECK(a.train[i].transcript == b.train[i].transcript);
    CHECK(same_features(a.train[i].features, b.train[i].features));
  }
  CHECK(a.families == b.families);
  CHECK(a.families != c.families);
}

TEST_CASE("family structure matches the edit-distance contract") {
  const auto c = generate_corpus(small_config(), 5);
  REQUIRE(c.families.size() == 8);
  const auto names = c.all_names();
  CHECK(std::set<std::string>(names.begin(), names.end()).size() == names.size());
  for (std::size_t f = 0; f < c.families.size(); ++f) {
    CHECK(c.families[f].size() == 4);
    for (const auto &a : c.families[f]) {
      CHECK(c.family_of(a) == f);
      for (const auto &b : c.families[f]) CHECK(oracle::levenshtein(a, b) <= 2);
    }
  }
  for (const auto &a : names) {
    for (const auto &b : names) {
      if (a == b) continue;
      const bool same_family = c.family_of(a) != static_cast<std::size_t>(-1) &&
                               c.family_of(a) == c.family_of(b);
      if (!same_family) CHECK(oracle::levenshtein(a, b) >= 3);
    }
    for (const auto &w : c.generic_words) CHECK(oracle::levenshtein(a, w) >= 3);
  }
}

TEST_CASE("held-out names never appear in training transcripts") {
  const auto c = generate_corpus(small_config(), 6);
  std::set<std::string> train_words;
  for (const auto &u : c.train)
    for (const auto &w : split_words(u.transcript)) train_words.insert(w);
  for (const auto &h : c.held_out) CHECK_FALSE(train_words.contains(h));
  for (std::size_t i = 0; i < c.singletons.size() / 4; ++i)
    CHECK_FALSE(train_words.contains(c.singletons[i]));
}

TEST_CASE("utterances carry their references and subsets") {
  const auto c = generate_corpus(small_config(), 7);
  const auto inv = corpus_inventory(c);
  for (const auto *split : {&c.train, &c.eval}) {
    for (const auto &u : *split) {
      CHECK(u.features.rows == u.transcript.size());
      CHECK(u.features.cols == c.config.feature_dim);
      if (u.subset == Subset::Personal) {
        REQUIRE(u.references.size() == 1);
        const auto words = split_words(u.transcript);
        CHECK(std::find(words.begin(), words.end(), u.references[0]) != words.end());
        CHECK(inv.find(u.references[0]).has_value());
        CHECK(u.confusable() == (c.family_of(u.references[0]) != static_cast<std::size_t>(-1)));
      } else {
        CHECK(u.references.empty());
        CHECK_FALSE(u.confusable());
      }
    }
  }
  std::size_t personal = 0, confusable = 0;
  for (const auto &u : c.eval) {
    personal += u.subset == Subset::Personal;
    confusable += u.confusable();
  }
  CHECK(personal == 16);
  CHECK(confusable == 12);
}

TEST_CASE("noiseless rendering decodes back to the text") {
  CorpusConfig cfg = small_config();
  cfg.frames_per_char = 2;
  const Matrix t = character_templates(cfg, 11);
  std::mt19937_64 rng(1);
  for (const std::string text : {"call jim", "open the door", "text qwxz"}) {
    const auto f = render(t, text, 2, 0.0, rng);
    CHECK(f.rows == text.size() * 2);
    CHECK(decode_templates(t, f, 2) == text);
  }
}

TEST_CASE("acoustic classes separate more than letters within a class") {
  const Matrix t = character_templates(CorpusConfig{}, 2);
  auto dist = [&](char a, char b) {
    double s = 0.0;
    const std::size_t ia = char_to_id(a), ib = char_to_id(b);
    for (std::size_t j = 0; j < t.cols; ++j) s += (t(ia, j) - t(ib, j)) * (t(ia, j) - t(ib, j));
    return std::sqrt(s);
  };
  CHECK(acoustic_class('a') == acoustic_class('e'));
  CHECK(acoustic_class('a') != acoustic_class('b'));
  CHECK(acoustic_class('A') == -1);
  CHECK(dist('b', 'd') < dist('b', 'a'));
  CHECK(dist('m', 'n') < dist('m', 's'));
}

TEST_CASE("invalid corpus configurations are rejected") {
  CorpusConfig c = small_config();
  c.family_size = 1;
  CHECK_THROWS_AS(generate_corpus(c, 1), InvalidArgument);
  c = small_config();
  c.noise = -1.0;
  CHECK_THROWS_AS(generate_corpus(c, 1), InvalidArgument);
  c = small_config();
  c.eval_personal_fraction = 1.5;
  CHECK_THROWS_AS(generate_corpus(c, 1), InvalidArgument);
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(render(character_templates(small_config(), 1), "", 1, 0.0, rng),
                  InvalidArgument);
}
