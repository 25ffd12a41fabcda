#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "annp/error.hpp"
#include "annp/phrase_inventory.hpp"

using namespace annp;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string &name) {
  return fs::temp_directory_path() / ("annp_test_" + name);
}

std::string random_name(std::mt19937_64 &rng) {
  std::string s;
  const std::size_t len = 3 + rng() % 4;
  for (std::size_t i = 0; i < len; ++i) s += static_cast<char>('a' + rng() % 26);
  return s;
}

// 1000 transcripts over `unique` entity strings, some in mixed case.
std::vector<AnnotatedTranscript> synthetic_transcripts(std::size_t unique, std::mt19937_64 &rng,
                                                       std::set<std::string> &truth) {
  std::vector<std::string> names;
  while (names.size() < unique) {
    std::string n = random_name(rng);
    if (rng() % 3 == 0) n += " " + random_name(rng);
    if (truth.insert(n).second) names.push_back(n);
  }
  std::vector<AnnotatedTranscript> out;
  for (std::size_t i = 0; i < 1000; ++i) {
    const std::string &n = names[i < unique ? i : rng() % unique];
    std::string shown = n;
    if (rng() % 2) shown[0] = static_cast<char>(std::toupper(shown[0]));
    const std::size_t words = n.find(' ') == std::string::npos ? 1 : 2;
    out.push_back({"please call " + shown + " now", {{2, 1 + words}}});
  }
  return out;
}

}  // namespace

TEST_CASE("ingest extracts entity spans and their words") {
  std::vector<AnnotatedTranscript> ts{{"call Jim Smith", {{1, 2}}}};
  const auto r = ingest(ts);
  CHECK(r.rejected.empty());
  CHECK(r.inventory.size() == 1);
  CHECK(r.inventory.find("jim smith").has_value());
  CHECK(r.inventory.word_entries() == std::set<std::string>{"jim", "smith"});
  CHECK(ingest({}).inventory.empty());
}

TEST_CASE("ingest deduplicates against a set-union oracle") {
  std::mt19937_64 rng(1);
  std::set<std::string> truth;
  const auto ts = synthetic_transcripts(400, rng, truth);
  const auto r = ingest(ts);
  CHECK(r.inventory.size() == 400);
  std::set<std::string> got;
  for (std::size_t id : r.inventory.entity_ids()) {
    const Phrase &p = r.inventory.at(id);
    got.insert(p.text);
    std::string joined;
    for (const auto &w : p.words) joined += (joined.empty() ? "" : " ") + w;
    CHECK(joined == p.text);
  }
  CHECK(got == truth);
}

TEST_CASE("bad spans are rejected with their index") {
  std::vector<AnnotatedTranscript> ts{{"call jim", {{1, 1}}},
                                      {"call jim", {{1, 4}}},
                                      {"a b c", {{2, 1}}},
                                      {"a b c", {{0, 1}, {1, 2}}}};
  const auto r = ingest(ts);
  REQUIRE(r.rejected.size() == 3);
  CHECK(r.rejected[0].index == 1);
  CHECK(r.rejected[1].index == 2);
  CHECK(r.rejected[2].index == 3);
  CHECK(r.inventory.size() == 1);
}

TEST_CASE("extend keeps ids stable") {
  PhraseInventory a;
  a.add("jim");
  const std::vector<std::string> jim{"jim"};
  CHECK(extend(a, jim).size() == 1);
  const std::vector<std::string> two{"eva", "ava"};
  CHECK(extend(PhraseInventory{}, two).size() == 2);

  std::mt19937_64 rng(2);
  std::set<std::string> truth;
  const auto base = ingest(synthetic_transcripts(400, rng, truth)).inventory;
  std::vector<std::string> extra;
  while (extra.size() < 100) {
    std::string n = random_name(rng) + random_name(rng);
    if (truth.insert(n).second) extra.push_back(n);
  }
  const auto grown = extend(base, extra);
  CHECK(grown.size() == 500);
  for (std::size_t id : base.entity_ids()) CHECK(grown.at(id).text == base.at(id).text);
}

TEST_CASE("save and load round trip") {
  std::mt19937_64 rng(3);
  std::set<std::string> truth;
  const auto inv = ingest(synthetic_transcripts(400, rng, truth)).inventory;
  const auto path = temp_file("inv.tsv");
  save(inv, path);
  const auto back = load_inventory(path);
  CHECK(back == inv);
  CHECK(back.word_entries() == inv.word_entries());
  for (const Phrase *p : inv.entries()) CHECK(back.at(p->id) == *p);
  fs::remove(path);
}

TEST_CASE("malformed inventory files report the line") {
  const auto path = temp_file("bad.tsv");
  {
    std::ofstream f(path);
    f << "0\tjim\n1 no tab\n";
  }
  try {
    load_inventory(path);
    FAIL("expected a parse error");
  } catch (const ParseError &e) {
    CHECK(e.line() == 2);
  }
  {
    std::ofstream f(path);
    f << "0\tjim\n1\tjea";
  }
  CHECK_THROWS_AS(load_inventory(path), ParseError);
  {
    std::ofstream f(path);
    f << "0\tjim\n0\tbob\n";
  }
  CHECK_THROWS_AS(load_inventory(path), ParseError);
  fs::remove(path);
  CHECK_THROWS_AS(load_inventory(temp_file("missing.tsv")), ParseError);
}

TEST_CASE("transcript lines") {
  const auto t = parse_transcript_line("call jim smith\t1:2");
  CHECK(t.text == "call jim smith");
  REQUIRE(t.entity_spans.size() == 1);
  CHECK(t.entity_spans[0] == std::pair<std::size_t, std::size_t>{1, 2});
  CHECK(parse_transcript_line("what time is it").entity_spans.empty());
  CHECK_THROWS(parse_transcript_line("x\t1-2"));
}
