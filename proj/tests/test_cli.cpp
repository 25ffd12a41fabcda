#include "doctest.h"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "annp/ann_index.hpp"
#include "annp/phrase_inventory.hpp"

using namespace annp;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path &p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> lines_of(const std::string &s) {
  std::vector<std::string> v;
  std::istringstream in(s);
  std::string line;
  while (std::getline(in, line)) v.push_back(line);
  return v;
}

class Workspace {
 public:
  Workspace() : dir_(fs::temp_directory_path() / ("annp_cli_" + std::to_string(::getpid()))) {
    fs::create_directories(dir_);
    std::ofstream(path("tiny.json")) << R"({
      "epochs": 2, "batch_size": 4, "max_steps_per_epoch": 2,
      "sampler": {"n": 6, "k": 2, "phrases_per_query": 4, "max_list_size": 24},
      "model": {"width": 16, "heads": 2, "ffn": 32, "audio_layers": 1, "label_layers": 1,
                "bias_heads": 2, "joint_dim": 24,
                "context": {"embed_dim": 16, "output_dim": 16, "layers": 1, "heads": 2,
                            "ffn_dim": 32}},
      "index": {"num_trees": 4, "leaf_capacity": 8},
      "corpus": {"families": 6, "singletons": 8, "train_utterances": 40, "eval_utterances": 12},
      "eval": {"phrases_per_query": 6}
    })";
  }
  ~Workspace() { fs::remove_all(dir_); }

  std::string path(const std::string &name) const { return (dir_ / name).string(); }

  Run run(const std::string &args) const {
    const std::string out = path("stdout.txt"), err = path("stderr.txt");
    const std::string cmd = std::string(ANNP_CLI_PATH) + " " + args + " > " + out + " 2> " + err;
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
  }

 private:
  fs::path dir_;
};

}  // namespace

TEST_CASE("usage errors exit with 1") {
  Workspace w;
  auto r = w.run("");
  CHECK(r.code == 1);
  CHECK(r.err.rfind("error: usage:", 0) == 0);
  r = w.run("query --inventory x.tsv --phrase jim");
  CHECK(r.code == 1);
  CHECK(r.err.find("--index") != std::string::npos);
  r = w.run("train --checkpoint " + w.path("m.ckpt") + " --bogus 3");
  CHECK(r.code == 1);
  r = w.run("evaluate --checkpoint x --mask-mode sideways");
  CHECK(r.code == 1);
  CHECK(w.run("--help").code == 0);
}

TEST_CASE("data and config errors exit with 2 and one error line") {
  Workspace w;
  std::ofstream(w.path("bad.json")) << R"({"epoch": 3})";
  auto r = w.run("train --config " + w.path("bad.json") + " --checkpoint " + w.path("m.ckpt"));
  CHECK(r.code == 2);
  CHECK(lines_of(r.err).size() == 1);
  CHECK(r.err.rfind("error: ", 0) == 0);
  CHECK(r.err.find("unknown key 'epoch'") != std::string::npos);
  std::ofstream(w.path("garbage.idx")) << "not an index";
  std::ofstream(w.path("inv.tsv")) << "1\tjim\n";
  r = w.run("query --index " + w.path("garbage.idx") + " --inventory " + w.path("inv.tsv") +
            " --phrase jim");
  CHECK(r.code == 2);
  CHECK(r.err.rfind("error: data:", 0) == 0);
  r = w.run("train --config " + w.path("tiny.json") + " --n 2 --k 2 --checkpoint " +
            w.path("m.ckpt"));
  CHECK(r.code == 2);
}

TEST_CASE("pipeline: inventory, train, index, query, encode, evaluate") {
  Workspace w;
  const std::string cfg = " --config " + w.path("tiny.json");
  auto r = w.run("build-inventory" + cfg + " --output " + w.path("inv.tsv"));
  REQUIRE(r.code == 0);
  const PhraseInventory inv = load_inventory(w.path("inv.tsv"));
  CHECK(inv.size() == 6 * 4 + 8);

  r = w.run("train" + cfg + " --seed 7 --checkpoint " + w.path("a.ckpt") + " --log " +
            w.path("a.log"));
  REQUIRE(r.code == 0);
  r = w.run("train" + cfg + " --seed 7 --checkpoint " + w.path("b.ckpt") + " --log " +
            w.path("b.log"));
  REQUIRE(r.code == 0);
  const std::string log = slurp(w.path("a.log"));
  CHECK(!log.empty());
  CHECK(log == slurp(w.path("b.log")));
  CHECK(slurp(w.path("a.ckpt")) == slurp(w.path("b.ckpt")));
  r = w.run("train" + cfg + " --seed 8 --checkpoint " + w.path("c.ckpt") + " --log " +
            w.path("c.log"));
  CHECK(slurp(w.path("c.log")) != log);
  for (const auto &line : lines_of(log)) {
    const auto j = nlohmann::json::parse(line);
    if (j["type"] == "step") {
      CHECK(j.contains("loss"));
      CHECK(j.contains("ann_fraction"));
    }
  }

  r = w.run("build-index" + cfg + " --seed 3 --checkpoint " + w.path("a.ckpt") + " --inventory " +
            w.path("inv.tsv") + " --output " + w.path("idx.bin"));
  REQUIRE(r.code == 0);

  const std::string name = inv.at(inv.entity_ids().front()).text;
  r = w.run("query --index " + w.path("idx.bin") + " --inventory " + w.path("inv.tsv") +
            " --phrase " + name + " --n 4");
  REQUIRE(r.code == 0);
  const auto rows = lines_of(r.out);
  REQUIRE(rows.size() == 4);

  const AnnIndex index = AnnIndex::load(w.path("idx.bin"));
  const auto qv = index.vector_of(*inv.find(name));
  const auto truth = brute_force_query(index.entries(), qv, 4);
  double previous = 1e300;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::istringstream in(rows[i]);
    std::string rank, phrase, score;
    std::getline(in, rank, '\t');
    std::getline(in, phrase, '\t');
    std::getline(in, score, '\t');
    CHECK(rank == std::to_string(i + 1));
    CHECK(phrase == inv.at(truth[i].phrase_id).text);
    char expect[64];
    std::snprintf(expect, sizeof expect, "%.6f", truth[i].score);
    CHECK(score == expect);
    CHECK(std::stod(score) <= previous);
    previous = std::stod(score);
  }

  r = w.run("query --index " + w.path("idx.bin") + " --inventory " + w.path("inv.tsv") +
            " --phrase zzzzq --n 2");
  CHECK(r.code == 2);
  r = w.run("query --index " + w.path("idx.bin") + " --inventory " + w.path("inv.tsv") +
            " --phrase zzzzq --n 2 --checkpoint " + w.path("a.ckpt"));
  CHECK(r.code == 0);
  CHECK(lines_of(r.out).size() == 2);

  r = w.run("encode --checkpoint " + w.path("a.ckpt") + " --phrase jim --phrase ann");
  REQUIRE(r.code == 0);
  const auto enc = lines_of(r.out);
  REQUIRE(enc.size() == 2);
  CHECK(enc[0].rfind("jim\t", 0) == 0);
  std::istringstream values(enc[0].substr(4));
  std::size_t count = 0;
  for (double v; values >> v;) ++count;
  CHECK(count == 16);

  for (const std::string mode : {"global", "streaming"}) {
    r = w.run("evaluate" + cfg + " --checkpoint " + w.path("a.ckpt") + " --mask-mode " + mode);
    REQUIRE(r.code == 0);
    const auto j = nlohmann::json::parse(r.out);
    CHECK(j["mask_mode"] == mode);
    CHECK(j["average"]["utterances"] == 12);
    CHECK(r.out == w.run("evaluate" + cfg + " --checkpoint " + w.path("a.ckpt") +
                         " --mask-mode " + mode).out);
  }
  r = w.run("evaluate" + cfg + " --checkpoint " + w.path("a.ckpt") + " --context off");
  REQUIRE(r.code == 0);
  CHECK_FALSE(nlohmann::json::parse(r.out).contains("reference_argmax_rate"));
}

TEST_CASE("sweep writes the full grid") {
  Workspace w;
  std::ofstream(w.path("sweep.json")) << R"({
      "epochs": 1, "batch_size": 4, "max_steps_per_epoch": 1,
      "sampler": {"phrases_per_query": 4, "max_list_size": 24},
      "model": {"width": 16, "heads": 2, "ffn": 32, "audio_layers": 1, "label_layers": 1,
                "bias_heads": 2, "joint_dim": 24,
                "context": {"embed_dim": 16, "output_dim": 16, "layers": 1, "heads": 2,
                            "ffn_dim": 32}},
      "index": {"num_trees": 4, "leaf_capacity": 8},
      "corpus": {"families": 10, "singletons": 8, "train_utterances": 20, "eval_utterances": 6},
      "eval": {"phrases_per_query": 6}
    })";
  const auto r = w.run("sweep --config " + w.path("sweep.json") + " --jobs 2 --output " +
                       w.path("sweep.tsv") + " --plot " + w.path("sweep.dat"));
  REQUIRE(r.code == 0);
  CHECK(r.out == "cells\t27\tfailed\t0\n");
  const auto rows = lines_of(slurp(w.path("sweep.tsv")));
  REQUIRE(rows.size() == 28);
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i].find("\tok\t") != std::string::npos);
  CHECK(slurp(w.path("sweep.dat")).find("# append_ratio 0.25") != std::string::npos);
}
