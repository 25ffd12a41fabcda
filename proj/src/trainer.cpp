#include "annp/trainer.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <random>

#include "annp/error.hpp"
#include "annp/optimizer.hpp"

namespace annp {

using nlohmann::json;


void TrainingLog::write(std::ostream &out) const {
  for (const auto &s : steps) {
    out << json{{"type", "step"},
                {"epoch", s.epoch},
                {"step", s.step},
                {"loss", s.loss},
                {"ann_fraction", s.ann_fraction},
                {"list_size", s.list_size},
                {"context_dropped", s.context_dropped},
                {"learning_rate", s.learning_rate},
                {"grad_norm", s.grad_norm}}
               .dump()
        << "\n";
  }
  for (const auto &e : epochs) {
    out << json{{"type", "epoch"},
                {"epoch", e.epoch},
                {"index_built", e.index_built},
                {"mean_loss", e.mean_loss},
                {"ann_frequency", e.sampling.ann_frequency},
                {"mean_list_length", e.sampling.mean_list_length},
                {"dedup_collision_rate", e.sampling.dedup_collision_rate}}
               .dump()
        << "\n";
  }
}

bool index_rebuilt_at(std::size_t epoch, std::size_t period) {
  return epoch % period == 0;
}

std::size_t index_build_count(std::size_t epochs, std::size_t period) {
  return epochs == 0 ? 0 : 1 + (epochs - 1) / period;
}

EmbeddingTable embed_inventory(const ModelParams &params, const PhraseInventory &inventory) {
  std::vector<TokenSequence> seqs;
  std::vector<std::size_t> ids;
  for (const Phrase *p : inventory.entries()) {
    seqs.push_back(tokenize(p->text));
    ids.push_back(p->id);
  }
  const auto emb = encode_batch(params.config.context, params.tensors, seqs);
  EmbeddingTable table;
  for (std::size_t i = 0; i < ids.size(); ++i) table.add(ids[i], emb[i].values);
  return table;
}

AnnIndex build_phrase_index(const ModelParams &params, const PhraseInventory &inventory,
                            const IndexConfig &config) {
  return AnnIndex::build(embed_inventory(params, inventory), config);
}

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

std::vector<std::size_t> reference_ids(const CorpusUtterance &u, const PhraseInventory &inv) {
  std::vector<std::size_t> ids;
  for (const auto &r : u.references) {
    auto id = inv.find(r);
    if (!id) throw InvalidArgument("reference phrase '" + r + "' is not in the inventory");
    ids.push_back(*id);
  }
  return ids;
}

MaskMode draw_mask(const MaskingConfig &m, Rng &rng) {
  switch (m.train) {
    case TrainMasking::Global: return MaskMode::global();
    case TrainMasking::Streaming: return MaskMode::streaming(m.chunk_frames);
    case TrainMasking::Variable: break;
  }
  return std::bernoulli_distribution(m.streaming_probability)(rng)
             ? MaskMode::streaming(m.chunk_frames)
             : MaskMode::global();
}

}  // namespace

TrainResult fine_tune(const RunConfig &cfg, const SyntheticCorpus &corpus,
                      const PhraseInventory &inventory, const ModelParams *init,
                      const ProgressFn &progress) {
  cfg.validate();
  if (corpus.train.empty()) throw InvalidArgument("fine_tune: empty training split");
  TrainResult result{init ? *init : init_model(cfg.model, cfg.seed), {}};
  if (!(result.params.config == cfg.model)) {
    throw InvalidArgument("initial parameters do not match the configured model");
  }
  ModelParams &params = result.params;
  TrainingLog &log = result.log;

  std::vector<std::vector<std::size_t>> refs;
  std::vector<std::vector<std::size_t>> labels;
  for (const auto &u : corpus.train) {
    refs.push_back(reference_ids(u, inventory));
    labels.push_back(tokenize(u.transcript).ids);
  }

  Rng rng(cfg.seed);
  Adam opt(cfg.optimizer);
  std::optional<AnnIndex> index;
  std::vector<std::size_t> order(corpus.train.size());
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochRecord er;
    er.epoch = epoch;
    if (cfg.miner_enabled && index_rebuilt_at(epoch, cfg.rebuild_period_epochs)) {
      IndexConfig ic = cfg.index;
      ic.seed = mix(cfg.index.seed ^ cfg.seed, epoch);
      index = build_phrase_index(params, inventory, ic);
      er.index_built = true;
      ++log.index_builds;
    }

    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t batches = (order.size() + cfg.batch_size - 1) / cfg.batch_size;
    if (cfg.max_steps_per_epoch > 0) batches = std::min(batches, cfg.max_steps_per_epoch);

    std::vector<ContextList> lists;
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches; ++b, ++step) {
      const std::size_t lo = b * cfg.batch_size;
      const std::size_t hi = std::min(order.size(), lo + cfg.batch_size);
      std::vector<QueryContext> queries;
      std::vector<Utterance> batch;
      for (std::size_t i = lo; i < hi; ++i) {
        const auto &u = corpus.train[order[i]];
        queries.push_back({u.transcript, refs[order[i]]});
        AudioFeatures features = u.features;
        if (cfg.resample_noise && epoch > 0) {
          Rng noise(mix(mix(cfg.seed, epoch), order[i]));
          features = render(corpus.templates, u.transcript, corpus.config.frames_per_char,
                            corpus.config.noise, noise);
        }
        batch.push_back({std::move(features), labels[order[i]], draw_mask(cfg.masking, rng)});
      }
      const bool dropped = std::bernoulli_distribution(cfg.context_dropout)(rng);
      ContextList list = build_context_list(queries, inventory,
                                            index ? &*index : nullptr, cfg.sampler, rng);
      BiasingContext ctx;
      if (!dropped) ctx = to_biasing_context(list, inventory);

      LossResult r;
      try {
        r = transducer_loss(params, batch, ctx, true);
      } catch (const NumericError &e) {
        throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(step) + ": " + e.what());
      }
      const double scale = 1.0 / static_cast<double>(batch.size());
      for (auto &[_, g] : r.grads)
        for (double &v : g.data) v *= scale;

      StepRecord sr;
      sr.epoch = epoch;
      sr.step = step;
      sr.loss = r.loss * scale;
      sr.list_size = ctx.phrases.size();
      sr.context_dropped = dropped;
      sr.learning_rate = opt.learning_rate();
      std::size_t with_refs = 0, mined = 0;
      for (std::size_t q = 0; q < queries.size(); ++q) {
        if (queries[q].reference_phrases.empty()) continue;
        ++with_refs;
        mined += list.ann_contributed[q];
      }
      sr.ann_fraction = with_refs ? static_cast<double>(mined) / with_refs : 0.0;
      sr.grad_norm = opt.step(params.tensors, r.grads);
      loss_sum += sr.loss;
      log.steps.push_back(sr);
      lists.push_back(std::move(list));
      if (progress) progress(sr);
    }
    er.mean_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
    er.sampling = sampling_stats(lists);
    log.epochs.push_back(er);
  }
  return result;
}

std::vector<std::string> eval_context_phrases(const SyntheticCorpus &corpus,
                                              const PhraseInventory &inventory,
                                              std::size_t utterance, const EvalConfig &cfg) {
  const CorpusUtterance &u = corpus.eval.at(utterance);
  Rng rng(mix(cfg.seed, utterance));
  std::vector<std::string> phrases = u.references;
  std::set<std::string> used(phrases.begin(), phrases.end());
  if (u.confusable()) {
    std::vector<std::string> family;
    for (const auto &m : corpus.families[u.family])
      if (!used.contains(m)) family.push_back(m);
    std::shuffle(family.begin(), family.end(), rng);
    for (std::size_t i = 0; i < std::min(cfg.family_distractors, family.size()); ++i) {
      phrases.push_back(family[i]);
      used.insert(family[i]);
    }
  }
  // Random fills avoid the reference's family so the only confusable
  // entries are the deliberate distractors.
  std::vector<std::string> pool;
  for (std::size_t id : inventory.entity_ids()) {
    const std::string &t = inventory.at(id).text;
    if (used.contains(t)) continue;
    if (u.confusable() && corpus.family_of(t) == u.family) continue;
    pool.push_back(t);
  }
  std::shuffle(pool.begin(), pool.end(), rng);
  for (std::size_t i = 0; i < pool.size() && phrases.size() < cfg.phrases_per_query; ++i)
    phrases.push_back(pool[i]);
  std::shuffle(phrases.begin(), phrases.end(), rng);
  return phrases;
}

EvalReport evaluate(const ModelParams &params, const SyntheticCorpus &corpus,
                    const PhraseInventory &inventory, MaskMode mask, bool context_on,
                    const EvalConfig &cfg) {
  const std::size_t N = corpus.eval.size();
  EvalReport rep;
  rep.context_on = context_on;
  rep.mask = mask;
  rep.hypotheses.resize(N);
  rep.errors.resize(N);
  std::vector<EditCounts> counts(N);
  std::vector<int> ref_argmax(N, -1), backoff_argmax(N, -1);
  std::vector<std::string> failures(N);

#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < N; ++i) {
    try {
      const CorpusUtterance &u = corpus.eval[i];
      BiasingContext ctx;
      std::vector<std::string> phrases;
      if (context_on) {
        phrases = eval_context_phrases(corpus, inventory, i, cfg);
        for (const auto &p : phrases) ctx.phrases.push_back(tokenize(p));
      }
      ctx.backoff_position = ctx.phrases.size();
      const Matrix cm = context_embeddings(params, ctx);
      const auto hyp = greedy_decode(params, u.features, cm, mask);
      rep.hypotheses[i] = normalize_text(detokenize(hyp));
      counts[i] = word_edits(u.transcript, rep.hypotheses[i]);
      rep.errors[i] = counts[i].errors();
      if (context_on) {
        const auto mass = attention_diagnostics(params, u.features, tokenize(u.transcript).ids,
                                                cm, mask);
        const std::size_t backoff = ctx.backoff_position;
        if (u.subset == Subset::Personal && !phrases.empty()) {
          const std::size_t ref = static_cast<std::size_t>(
              std::find(phrases.begin(), phrases.end(), u.references.front()) - phrases.begin());
          std::size_t best = 0;
          for (std::size_t j = 1; j < phrases.size(); ++j)
            if (mass.audio[j] > mass.audio[best]) best = j;
          ref_argmax[i] = best == ref;
        } else if (u.subset == Subset::Generic) {
          const auto best = std::max_element(mass.audio.begin(), mass.audio.end()) - mass.audio.begin();
          backoff_argmax[i] = static_cast<std::size_t>(best) == backoff;
        }
      }
    } catch (const std::exception &e) {
      failures[i] = e.what();
    }
  }
  for (std::size_t i = 0; i < N; ++i) {
    if (!failures[i].empty()) {
      throw NumericError("evaluation of utterance " + std::to_string(i) + " failed: " + failures[i]);
    }
  }

  std::size_t ref_hits = 0, ref_total = 0, back_hits = 0, back_total = 0;
  for (std::size_t i = 0; i < N; ++i) {
    const CorpusUtterance &u = corpus.eval[i];
    WerSummary &subset = u.subset == Subset::Personal ? rep.personal : rep.generic;
    subset.counts += counts[i];
    ++subset.utterances;
    if (u.subset == Subset::Personal && u.confusable()) {
      rep.confusable.counts += counts[i];
      ++rep.confusable.utterances;
    }
    rep.average.counts += counts[i];
    ++rep.average.utterances;
    if (ref_argmax[i] >= 0) {
      ++ref_total;
      ref_hits += static_cast<std::size_t>(ref_argmax[i]);
    }
    if (backoff_argmax[i] >= 0) {
      ++back_total;
      back_hits += static_cast<std::size_t>(backoff_argmax[i]);
    }
  }
  if (ref_total) rep.reference_argmax_rate = static_cast<double>(ref_hits) / ref_total;
  if (back_total) rep.backoff_argmax_rate = static_cast<double>(back_hits) / back_total;
  return rep;
}

std::vector<SweepCell> default_sweep_grid() {
  std::vector<SweepCell> grid;
  for (std::size_t k : {1, 2, 4})
    for (std::size_t n : {10, 20, 40})
      for (double r : {0.25, 0.5, 1.0}) grid.push_back({n, k, r});
  return grid;
}

std::vector<SweepRow> sweep(const RunConfig &base, std::span<const SweepCell> grid,
                            const SyntheticCorpus &corpus, const PhraseInventory &inventory,
                            const ModelParams *init, std::size_t jobs) {
  std::vector<SweepRow> rows(grid.size());
  const int threads = static_cast<int>(std::max<std::size_t>(1, jobs));
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (std::size_t i = 0; i < grid.size(); ++i) {
    SweepRow &row = rows[i];
    row.cell = grid[i];
    const auto t0 = std::chrono::steady_clock::now();
    try {
      RunConfig cfg = base;
      cfg.sampler.n = grid[i].n;
      cfg.sampler.k = grid[i].k;
      cfg.sampler.append_ratio = grid[i].append_ratio;
      const auto trained = fine_tune(cfg, corpus, inventory, init);
      row.report = evaluate(trained.params, corpus, inventory, cfg.eval.mask, true, cfg.eval);
      row.ok = true;
    } catch (const std::exception &e) {
      row.error = e.what();
    }
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
  return rows;
}

void write_sweep_table(std::span<const SweepRow> rows, std::ostream &out) {
  out << "n\tk\tappend_ratio\tstatus\tpersonal_wer\tconfusable_wer\tgeneric_wer\tavg_wer\tseconds\terror\n";
  for (const auto &r : rows) {
    out << r.cell.n << '\t' << r.cell.k << '\t' << r.cell.append_ratio << '\t'
        << (r.ok ? "ok" : "failed") << '\t';
    if (r.ok) {
      out << r.report.personal.wer() << '\t' << r.report.confusable.wer() << '\t'
          << r.report.generic.wer() << '\t' << r.report.average.wer();
    } else {
      out << "nan\tnan\tnan\tnan";
    }
    std::string err = r.error;
    std::replace(err.begin(), err.end(), '\t', ' ');
    std::replace(err.begin(), err.end(), '\n', ' ');
    out << '\t' << r.seconds << '\t' << err << '\n';
  }
}

void write_sweep_plot(std::span<const SweepRow> rows, std::ostream &out) {
  std::map<double, std::vector<const SweepRow *>> by_ratio;
  for (const auto &r : rows) by_ratio[r.cell.append_ratio].push_back(&r);
  bool first = true;
  for (const auto &[ratio, group] : by_ratio) {
    if (!first) out << "\n\n";
    first = false;
    out << "# append_ratio " << ratio << "\n# n k personal_wer confusable_wer\n";
    for (const SweepRow *r : group) {
      out << r->cell.n << ' ' << r->cell.k << ' ';
      if (r->ok) out << r->report.personal.wer() << ' ' << r->report.confusable.wer() << '\n';
      else out << "nan nan\n";
    }
  }
}

}  // namespace annp
