#include "doctest.h"

#include <random>

#include "annp/wer.hpp"
#include "oracles.hpp"

using namespace annp;

TEST_CASE("worked examples") {
  CHECK(word_error_rate("call jim", "call jim") == 0.0);
  CHECK(word_error_rate("call jim", "call john") == doctest::Approx(0.5));
  const auto c = word_edits("a b c d", "a x c d e");
  CHECK(c.substitutions == 1);
  CHECK(c.insertions == 1);
  CHECK(c.deletions == 0);
  CHECK(word_edits("a b c", "").deletions == 3);
  CHECK(word_error_rate("", "") == 0.0);
}

TEST_CASE("error count matches an independent DP on random pairs") {
  std::mt19937_64 rng(7);
  const std::vector<std::string> words{"a", "b", "c", "jim", "john"};
  for (int i = 0; i < 1000; ++i) {
    std::vector<std::string> r(rng() % 7), h(rng() % 7);
    for (auto &w : r) w = words[rng() % words.size()];
    for (auto &w : h) w = words[rng() % words.size()];
    const auto c = word_edits(r, h);
    CHECK(c.errors() == oracle::levenshtein(r, h));
    CHECK(c.reference_words == r.size());
    // hypothesis length is recovered from the alignment
    CHECK(r.size() - c.deletions + c.insertions == h.size());
  }
}

TEST_CASE("character edit distance") {
  CHECK(edit_distance("jean", "jeanne") == 2);
  CHECK(edit_distance("kitten", "sitting") == 3);
  CHECK(edit_distance("", "abc") == 3);
}
