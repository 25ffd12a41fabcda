#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "annp/ann_index.hpp"
#include "annp/checkpoint.hpp"
#include "annp/error.hpp"
#include "annp/phrase_inventory.hpp"
#include "annp/run_config.hpp"
#include "annp/trainer.hpp"

using namespace annp;

namespace {

std::string one_line(std::string s) {
  for (char &c : s)
    if (c == '\n' || c == '\r' || c == '\t') c = ' ';
  return s;
}

std::ofstream open_output(const std::string &path) {
  std::ofstream out(path);
  if (!out) throw ParseError(path, 0, "cannot open for writing");
  return out;
}

// Model checkpoint or encoder checkpoint, whichever the file holds.
EncoderParams load_any_encoder(const std::string &path) {
  try {
    return encoder_view(load_checkpoint(path).params);
  } catch (const ParseError &) {
    return load_encoder(path);
  }
}

RunConfig config_or_default(const std::string &path) {
  return path.empty() ? RunConfig{} : load_run_config(path);
}

struct Options {
  std::string config, transcripts, inventory, checkpoint, index, output, log, plot, init;
  std::vector<std::string> phrases;
  std::optional<std::uint64_t> seed;
  std::string mask_mode;
  std::optional<std::size_t> chunk_frames, n, k, trees, leaf, jobs;
  std::optional<double> append_ratio;
  std::string context = "on";
};

void print_eval(const EvalReport &r, std::ostream &out) {
  auto w = [](const WerSummary &s) {
    return nlohmann::json{{"wer", s.wer()},
                          {"utterances", s.utterances},
                          {"words", s.counts.reference_words},
                          {"substitutions", s.counts.substitutions},
                          {"deletions", s.counts.deletions},
                          {"insertions", s.counts.insertions}};
  };
  nlohmann::json j{{"context", r.context_on},
                   {"mask_mode", r.mask.to_string()},
                   {"chunk_frames", r.mask.chunk_frames},
                   {"generic", w(r.generic)},
                   {"personal", w(r.personal)},
                   {"confusable", w(r.confusable)},
                   {"average", w(r.average)}};
  if (r.context_on) {
    j["reference_argmax_rate"] = r.reference_argmax_rate;
    j["backoff_argmax_rate"] = r.backoff_argmax_rate;
  }
  out << j.dump(2) << "\n";
}

void apply_overrides(RunConfig &cfg, const Options &o) {
  if (o.seed) cfg.seed = *o.seed;
  if (o.n) cfg.sampler.n = *o.n;
  if (o.k) cfg.sampler.k = *o.k;
  if (o.append_ratio) cfg.sampler.append_ratio = *o.append_ratio;
  if (!o.init.empty()) cfg.init_checkpoint = o.init;
  if (!o.mask_mode.empty() || o.chunk_frames) {
    cfg.eval.mask = MaskMode::parse(o.mask_mode.empty() ? cfg.eval.mask.to_string() : o.mask_mode,
                                    o.chunk_frames.value_or(cfg.eval.mask.chunk_frames));
  }
  cfg.validate();
}

std::optional<ModelParams> initial_params(const RunConfig &cfg) {
  if (cfg.init_checkpoint.empty()) return std::nullopt;
  return load_checkpoint(cfg.init_checkpoint).params;
}

int cmd_build_inventory(const Options &o) {
  PhraseInventory inv;
  if (!o.transcripts.empty()) {
    const auto transcripts = load_transcripts(o.transcripts);
    auto result = ingest(transcripts);
    for (const auto &r : result.rejected)
      std::cerr << "rejected\t" << r.index << "\t" << one_line(r.reason) << "\n";
    inv = std::move(result.inventory);
  } else {
    RunConfig cfg = config_or_default(o.config);
    if (o.seed) cfg.corpus_seed = *o.seed;
    inv = corpus_inventory(generate_corpus(cfg.corpus, cfg.corpus_seed));
  }
  save(inv, o.output);
  std::cout << "phrases\t" << inv.size() << "\n";
  return 0;
}

int cmd_encode(const Options &o) {
  const EncoderParams enc = load_any_encoder(o.checkpoint);
  std::vector<std::string> texts = o.phrases;
  if (!o.inventory.empty()) {
    const PhraseInventory inv = load_inventory(o.inventory);
    for (std::size_t id : inv.entity_ids()) texts.push_back(inv.at(id).text);
  }
  if (texts.empty()) throw InvalidArgument("encode needs --phrase or --inventory");
  std::vector<TokenSequence> seqs;
  for (const auto &t : texts) seqs.push_back(tokenize(t));
  const auto emb = encode_batch(enc, seqs);
  for (std::size_t i = 0; i < texts.size(); ++i) {
    std::cout << texts[i] << '\t';
    for (std::size_t j = 0; j < emb[i].values.size(); ++j) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.9g", emb[i].values[j]);
      std::cout << (j ? " " : "") << buf;
    }
    std::cout << '\n';
  }
  return 0;
}

int cmd_build_index(const Options &o) {
  const ModelCheckpoint ck = load_checkpoint(o.checkpoint);
  const PhraseInventory inv = load_inventory(o.inventory);
  RunConfig cfg = config_or_default(o.config);
  IndexConfig ic = cfg.index;
  ic.seed = o.seed.value_or(cfg.seed);
  if (o.trees) ic.num_trees = *o.trees;
  if (o.leaf) ic.leaf_capacity = *o.leaf;
  const AnnIndex index = build_phrase_index(ck.params, inv, ic);
  index.save(o.output);
  std::cout << "entries\t" << index.size() << "\n";
  return 0;
}

int cmd_query(const Options &o) {
  const AnnIndex index = AnnIndex::load(o.index);
  const PhraseInventory inv = load_inventory(o.inventory);
  const std::string &text = o.phrases.front();
  std::vector<double> q;
  if (auto id = inv.find(normalize_text(text)); id && index.contains(*id)) {
    const auto v = index.vector_of(*id);
    q.assign(v.begin(), v.end());
  } else {
    if (o.checkpoint.empty()) {
      throw InvalidArgument("phrase '" + text + "' is not indexed; pass --checkpoint to encode it");
    }
    q = encode(load_any_encoder(o.checkpoint), tokenize(normalize_text(text))).values;
  }
  const auto hits = index.query(q, o.n.value_or(10));
  for (std::size_t r = 0; r < hits.size(); ++r) {
    char score[64];
    std::snprintf(score, sizeof score, "%.6f", hits[r].score);
    std::cout << r + 1 << '\t' << inv.at(hits[r].phrase_id).text << '\t' << score << '\n';
  }
  return 0;
}

int cmd_train(const Options &o) {
  RunConfig cfg = config_or_default(o.config);
  apply_overrides(cfg, o);
  const SyntheticCorpus corpus = generate_corpus(cfg.corpus, cfg.corpus_seed);
  const PhraseInventory inv = corpus_inventory(corpus);
  const auto init = initial_params(cfg);
  std::ofstream log;
  if (!o.log.empty()) log = open_output(o.log);
  const auto result = fine_tune(cfg, corpus, inv, init ? &*init : nullptr);
  if (log.is_open()) result.log.write(log);
  else result.log.write(std::cout);
  save_checkpoint(result.params, cfg.eval.mask, o.checkpoint);
  return 0;
}

int cmd_evaluate(const Options &o) {
  RunConfig cfg = config_or_default(o.config);
  apply_overrides(cfg, o);
  if (o.seed) cfg.eval.seed = *o.seed;
  if (o.context != "on" && o.context != "off") throw InvalidArgument("--context must be on or off");
  const ModelCheckpoint ck = load_checkpoint(o.checkpoint);
  if (!(ck.params.config.feature_dim == cfg.corpus.feature_dim)) {
    throw InvalidArgument("checkpoint feature_dim does not match the corpus");
  }
  const SyntheticCorpus corpus = generate_corpus(cfg.corpus, cfg.corpus_seed);
  const PhraseInventory inv = corpus_inventory(corpus);
  print_eval(evaluate(ck.params, corpus, inv, cfg.eval.mask, o.context == "on", cfg.eval),
             std::cout);
  return 0;
}

int cmd_sweep(const Options &o) {
  RunConfig cfg = config_or_default(o.config);
  apply_overrides(cfg, o);
  const SyntheticCorpus corpus = generate_corpus(cfg.corpus, cfg.corpus_seed);
  const PhraseInventory inv = corpus_inventory(corpus);
  const auto init = initial_params(cfg);
  const auto grid = default_sweep_grid();
  const auto rows = sweep(cfg, grid, corpus, inv, init ? &*init : nullptr, o.jobs.value_or(1));
  std::ofstream out = open_output(o.output);
  write_sweep_table(rows, out);
  if (!o.plot.empty()) {
    std::ofstream plot = open_output(o.plot);
    write_sweep_plot(rows, plot);
  }
  std::size_t failed = 0;
  for (const auto &r : rows) failed += !r.ok;
  std::cout << "cells\t" << rows.size() << "\tfailed\t" << failed << "\n";
  return failed ? 2 : 0;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Contextual biasing with ANN-mined hard negatives"};
  app.require_subcommand(1, 1);
  Options o;

  auto seed = [&](CLI::App *c) { c->add_option("--seed", o.seed, "Random seed"); };
  auto config = [&](CLI::App *c) {
    c->add_option("--config", o.config, "Run configuration (JSON)")->check(CLI::ExistingFile);
  };
  auto eval_flags = [&](CLI::App *c) {
    c->add_option("--mask-mode", o.mask_mode, "Evaluation mask")
        ->check(CLI::IsMember({"global", "streaming"}));
    c->add_option("--chunk-frames", o.chunk_frames, "Streaming chunk size in frames");
  };
  auto sampler_flags = [&](CLI::App *c) {
    c->add_option("--n", o.n, "Neighbours considered per word");
    c->add_option("--k", o.k, "Neighbours drawn per word");
    c->add_option("--append-ratio", o.append_ratio, "Probability of mining per query");
    c->add_option("--init", o.init, "Starting checkpoint");
  };

  auto *bi = app.add_subcommand("build-inventory", "Build a phrase inventory");
  auto *bi_src = bi->add_option("--transcripts", o.transcripts, "Annotated transcripts")
                     ->check(CLI::ExistingFile);
  config(bi);
  seed(bi);
  bi->add_option("--output", o.output, "Inventory file to write")->required();
  bi_src->excludes(bi->get_option("--config"));

  auto *en = app.add_subcommand("encode", "Print context-encoder embeddings");
  en->add_option("--checkpoint", o.checkpoint, "Model or encoder checkpoint")->required();
  en->add_option("--inventory", o.inventory, "Encode every inventory phrase");
  en->add_option("--phrase", o.phrases, "Phrase to encode (repeatable)");

  auto *bx = app.add_subcommand("build-index", "Build the phrase index");
  bx->add_option("--checkpoint", o.checkpoint, "Model checkpoint")->required();
  bx->add_option("--inventory", o.inventory, "Inventory file")->required();
  bx->add_option("--output", o.output, "Index file to write")->required();
  bx->add_option("--trees", o.trees, "Number of trees");
  bx->add_option("--leaf-capacity", o.leaf, "Leaf capacity");
  config(bx);
  seed(bx);

  auto *qu = app.add_subcommand("query", "Nearest phrases of a phrase");
  qu->add_option("--index", o.index, "Index file")->required();
  qu->add_option("--inventory", o.inventory, "Inventory file")->required();
  qu->add_option("--phrase", o.phrases, "Query phrase")->required()->expected(1);
  qu->add_option("--n", o.n, "Number of results");
  qu->add_option("--checkpoint", o.checkpoint, "Encoder for phrases outside the index");

  auto *tr = app.add_subcommand("train", "Fine-tune on the synthetic corpus");
  config(tr);
  seed(tr);
  sampler_flags(tr);
  eval_flags(tr);
  tr->add_option("--checkpoint", o.checkpoint, "Checkpoint to write")->required();
  tr->add_option("--log", o.log, "Training log to write (default stdout)");

  auto *ev = app.add_subcommand("evaluate", "Word error rates per subset");
  config(ev);
  seed(ev);
  eval_flags(ev);
  ev->add_option("--checkpoint", o.checkpoint, "Model checkpoint")->required();
  ev->add_option("--context", o.context, "on or off");

  auto *sw = app.add_subcommand("sweep", "Train and evaluate the n/k/ratio grid");
  config(sw);
  seed(sw);
  sampler_flags(sw);
  eval_flags(sw);
  sw->add_option("--jobs", o.jobs, "Cells run concurrently");
  sw->add_option("--output", o.output, "Results table to write")->required();
  sw->add_option("--plot", o.plot, "Plot data to write");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    std::cerr << "error: usage: " << one_line(e.what()) << "\n";
    auto *sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    std::cerr << sub->help();
    return 1;
  }

  try {
    if (bi->parsed()) return cmd_build_inventory(o);
    if (en->parsed()) return cmd_encode(o);
    if (bx->parsed()) return cmd_build_index(o);
    if (qu->parsed()) return cmd_query(o);
    if (tr->parsed()) return cmd_train(o);
    if (ev->parsed()) return cmd_evaluate(o);
    if (sw->parsed()) return cmd_sweep(o);
  } catch (const InvalidArgument &e) {
    std::cerr << "error: config: " << one_line(e.what()) << "\n";
    return 2;
  } catch (const ParseError &e) {
    std::cerr << "error: data: " << one_line(e.what()) << "\n";
    return 2;
  } catch (const NumericError &e) {
    std::cerr << "error: numeric: " << one_line(e.what()) << "\n";
    return 2;
  } catch (const std::exception &e) {
    std::cerr << "error: data: " << one_line(e.what()) << "\n";
    return 2;
  }
  return 1;
}
