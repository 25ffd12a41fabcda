#include "annp/run_config.hpp"

#include <fstream>
#include <set>

#include "annp/error.hpp"

namespace annp {

using nlohmann::json;

namespace {

// Reads optional keys of one JSON object and rejects keys it never asked for.
class Section {
 public:
  Section(const json &j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw InvalidArgument(where() + " must be an object");
  }

  template <typename T>
  void read(const char *key, T &out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception &) {
      throw InvalidArgument(where(key) + " has the wrong type");
    }
  }

  Section sub(const char *key) {
    seen_.insert(key);
    static const json empty = json::object();
    return Section(j_.contains(key) ? j_.at(key) : empty, join(key));
  }

  void finish() const {
    for (const auto &[k, _] : j_.items()) {
      if (!seen_.contains(k)) throw InvalidArgument("unknown key " + where(k));
    }
  }

 private:
  std::string join(const std::string &key) const {
    return path_.empty() ? key : (key.empty() ? path_ : path_ + "." + key);
  }
  std::string where(const std::string &key = "") const {
    const std::string p = join(key);
    return p.empty() ? "config" : "'" + p + "'";
  }

  const json &j_;
  std::string path_;
  std::set<std::string> seen_;
};

const char *masking_name(TrainMasking m) {
  switch (m) {
    case TrainMasking::Global: return "global";
    case TrainMasking::Streaming: return "streaming";
    case TrainMasking::Variable: return "variable";
  }
  return "?";
}

TrainMasking parse_masking(const std::string &s) {
  if (s == "global") return TrainMasking::Global;
  if (s == "streaming") return TrainMasking::Streaming;
  if (s == "variable") return TrainMasking::Variable;
  throw InvalidArgument("masking.train must be global, streaming or variable");
}

}  // namespace

ModelConfig RunConfig::default_model_config() {
  ModelConfig m;
  m.feature_dim = 16;
  m.audio = {32, 4, 64, 2};
  m.label = {32, 4, 64, 2};
  m.context.embed_dim = 32;
  m.context.output_dim = 64;
  m.context.layers = 2;
  m.context.heads = 4;
  m.context.ffn_dim = 64;
  m.bias_heads = 4;
  m.joint_dim = 64;
  return m;
}

void RunConfig::validate() const {
  if (epochs < 1) throw InvalidArgument("epochs must be >= 1");
  if (rebuild_period_epochs < 1) throw InvalidArgument("rebuild_period_epochs must be >= 1");
  if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  if (!(context_dropout >= 0.0 && context_dropout <= 1.0)) {
    throw InvalidArgument("context_dropout must lie in [0, 1]");
  }
  sampler.validate();
  optimizer.validate();
  corpus.validate();
  if (model.feature_dim != corpus.feature_dim) {
    throw InvalidArgument("model.feature_dim must equal corpus.feature_dim");
  }
  if (model.audio.width % model.audio.heads != 0 ||
      model.context.embed_dim % model.context.heads != 0) {
    throw InvalidArgument("attention heads must divide the widths");
  }
  if (!(masking.streaming_probability >= 0.0 && masking.streaming_probability <= 1.0)) {
    throw InvalidArgument("masking.streaming_probability must lie in [0, 1]");
  }
  if (masking.chunk_frames < 1 || eval.mask.chunk_frames < 1) {
    throw InvalidArgument("chunk_frames must be >= 1");
  }
  if (index.num_trees < 1 || index.leaf_capacity < 1) {
    throw InvalidArgument("index.num_trees and index.leaf_capacity must be >= 1");
  }
  if (eval.phrases_per_query < 1) throw InvalidArgument("eval.phrases_per_query must be >= 1");
}

RunConfig run_config_from_json(const json &j) {
  RunConfig c;
  Section root(j, "");
  root.read("seed", c.seed);
  root.read("epochs", c.epochs);
  root.read("rebuild_period_epochs", c.rebuild_period_epochs);
  root.read("batch_size", c.batch_size);
  root.read("max_steps_per_epoch", c.max_steps_per_epoch);
  root.read("miner_enabled", c.miner_enabled);
  root.read("context_dropout", c.context_dropout);
  root.read("resample_noise", c.resample_noise);
  root.read("init_checkpoint", c.init_checkpoint);

  Section s = root.sub("sampler");
  s.read("n", c.sampler.n);
  s.read("k", c.sampler.k);
  s.read("append_ratio", c.sampler.append_ratio);
  s.read("phrases_per_query", c.sampler.phrases_per_query);
  s.read("max_list_size", c.sampler.max_list_size);
  s.finish();

  Section o = root.sub("optimizer");
  o.read("learning_rate", c.optimizer.learning_rate);
  o.read("beta1", c.optimizer.beta1);
  o.read("beta2", c.optimizer.beta2);
  o.read("epsilon", c.optimizer.epsilon);
  o.read("decay_rate", c.optimizer.decay_rate);
  o.read("decay_steps", c.optimizer.decay_steps);
  o.read("clip_norm", c.optimizer.clip_norm);
  o.finish();

  Section m = root.sub("model");
  std::size_t width = c.model.audio.width, heads = c.model.audio.heads, ffn = c.model.audio.ffn;
  m.read("feature_dim", c.model.feature_dim);
  m.read("width", width);
  m.read("heads", heads);
  m.read("ffn", ffn);
  m.read("audio_layers", c.model.audio.layers);
  m.read("label_layers", c.model.label.layers);
  m.read("bias_heads", c.model.bias_heads);
  m.read("joint_dim", c.model.joint_dim);
  c.model.audio = {width, heads, ffn, c.model.audio.layers};
  c.model.label = {width, heads, ffn, c.model.label.layers};
  Section ctx = m.sub("context");
  ctx.read("embed_dim", c.model.context.embed_dim);
  ctx.read("output_dim", c.model.context.output_dim);
  ctx.read("layers", c.model.context.layers);
  ctx.read("heads", c.model.context.heads);
  ctx.read("ffn_dim", c.model.context.ffn_dim);
  ctx.read("max_positions", c.model.context.max_positions);
  ctx.finish();
  m.finish();

  Section mk = root.sub("masking");
  std::string train = masking_name(c.masking.train);
  mk.read("train", train);
  c.masking.train = parse_masking(train);
  mk.read("streaming_probability", c.masking.streaming_probability);
  mk.read("chunk_frames", c.masking.chunk_frames);
  mk.finish();

  Section ix = root.sub("index");
  ix.read("num_trees", c.index.num_trees);
  ix.read("leaf_capacity", c.index.leaf_capacity);
  ix.read("search_budget", c.index.search_budget);
  ix.finish();

  Section co = root.sub("corpus");
  co.read("seed", c.corpus_seed);
  co.read("feature_dim", c.corpus.feature_dim);
  co.read("frames_per_char", c.corpus.frames_per_char);
  co.read("class_scale", c.corpus.class_scale);
  co.read("letter_scale", c.corpus.letter_scale);
  co.read("noise", c.corpus.noise);
  co.read("families", c.corpus.families);
  co.read("family_size", c.corpus.family_size);
  co.read("singletons", c.corpus.singletons);
  co.read("train_utterances", c.corpus.train_utterances);
  co.read("train_personal_fraction", c.corpus.train_personal_fraction);
  co.read("eval_utterances", c.corpus.eval_utterances);
  co.read("eval_personal_fraction", c.corpus.eval_personal_fraction);
  co.read("eval_confusable_fraction", c.corpus.eval_confusable_fraction);
  co.finish();

  Section ev = root.sub("eval");
  std::string mode = c.eval.mask.to_string();
  std::size_t chunk = c.eval.mask.chunk_frames;
  ev.read("mask_mode", mode);
  ev.read("chunk_frames", chunk);
  c.eval.mask = MaskMode::parse(mode, chunk);
  ev.read("phrases_per_query", c.eval.phrases_per_query);
  ev.read("family_distractors", c.eval.family_distractors);
  ev.read("seed", c.eval.seed);
  ev.finish();

  root.finish();
  c.validate();
  return c;
}

json to_json(const RunConfig &c) {
  return {
      {"seed", c.seed},
      {"epochs", c.epochs},
      {"rebuild_period_epochs", c.rebuild_period_epochs},
      {"batch_size", c.batch_size},
      {"max_steps_per_epoch", c.max_steps_per_epoch},
      {"miner_enabled", c.miner_enabled},
      {"context_dropout", c.context_dropout},
      {"resample_noise", c.resample_noise},
      {"init_checkpoint", c.init_checkpoint},
      {"sampler",
       {{"n", c.sampler.n},
        {"k", c.sampler.k},
        {"append_ratio", c.sampler.append_ratio},
        {"phrases_per_query", c.sampler.phrases_per_query},
        {"max_list_size", c.sampler.max_list_size}}},
      {"optimizer",
       {{"learning_rate", c.optimizer.learning_rate},
        {"beta1", c.optimizer.beta1},
        {"beta2", c.optimizer.beta2},
        {"epsilon", c.optimizer.epsilon},
        {"decay_rate", c.optimizer.decay_rate},
        {"decay_steps", c.optimizer.decay_steps},
        {"clip_norm", c.optimizer.clip_norm}}},
      {"model",
       {{"feature_dim", c.model.feature_dim},
        {"width", c.model.audio.width},
        {"heads", c.model.audio.heads},
        {"ffn", c.model.audio.ffn},
        {"audio_layers", c.model.audio.layers},
        {"label_layers", c.model.label.layers},
        {"bias_heads", c.model.bias_heads},
        {"joint_dim", c.model.joint_dim},
        {"context",
         {{"embed_dim", c.model.context.embed_dim},
          {"output_dim", c.model.context.output_dim},
          {"layers", c.model.context.layers},
          {"heads", c.model.context.heads},
          {"ffn_dim", c.model.context.ffn_dim},
          {"max_positions", c.model.context.max_positions}}}}},
      {"masking",
       {{"train", masking_name(c.masking.train)},
        {"streaming_probability", c.masking.streaming_probability},
        {"chunk_frames", c.masking.chunk_frames}}},
      {"index",
       {{"num_trees", c.index.num_trees},
        {"leaf_capacity", c.index.leaf_capacity},
        {"search_budget", c.index.search_budget}}},
      {"corpus",
       {{"seed", c.corpus_seed},
        {"feature_dim", c.corpus.feature_dim},
        {"frames_per_char", c.corpus.frames_per_char},
        {"class_scale", c.corpus.class_scale},
        {"letter_scale", c.corpus.letter_scale},
        {"noise", c.corpus.noise},
        {"families", c.corpus.families},
        {"family_size", c.corpus.family_size},
        {"singletons", c.corpus.singletons},
        {"train_utterances", c.corpus.train_utterances},
        {"train_personal_fraction", c.corpus.train_personal_fraction},
        {"eval_utterances", c.corpus.eval_utterances},
        {"eval_personal_fraction", c.corpus.eval_personal_fraction},
        {"eval_confusable_fraction", c.corpus.eval_confusable_fraction}}},
      {"eval",
       {{"mask_mode", c.eval.mask.to_string()},
        {"chunk_frames", c.eval.mask.chunk_frames},
        {"phrases_per_query", c.eval.phrases_per_query},
        {"family_distractors", c.eval.family_distractors},
        {"seed", c.eval.seed}}},
  };
}

RunConfig load_run_config(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), 0, "cannot open file");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error &e) {
    throw ParseError(path.string(), 0, e.what());
  }
  try {
    return run_config_from_json(j);
  } catch (const InvalidArgument &e) {
    throw ParseError(path.string(), 0, e.what());
  }
}

void save_run_config(const RunConfig &cfg, const std::filesystem::path &path) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  out << to_json(cfg).dump(2) << "\n";
}

}  // namespace annp
