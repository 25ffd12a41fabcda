#include "annp/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "annp/error.hpp"
#include "annp/wer.hpp"

namespace annp {

namespace {

constexpr std::size_t kNone = static_cast<std::size_t>(-1);

const std::vector<std::string> kClasses{"aeiouy", "bdgptk", "mnlr", "fvszh", "cjqwx", " "};
const std::string kOnsets = "bdgptkmnlrfvszhjw";
const std::string kVowels = "aeiou";

const std::vector<std::string> kDevices{"lights", "radio", "door", "window", "heater", "oven"};
const std::vector<std::string> kNumbers{"one", "two", "three", "four", "five",
                                        "six", "seven", "eight", "nine", "ten"};
const std::vector<std::string> kWhen{"today", "tomorrow", "tonight"};
const std::vector<std::string> kGenres{"jazz", "rock", "pop", "soft"};
const std::vector<std::string> kPlaces{"station", "airport", "market", "park"};

template <typename T>
const T &pick(const std::vector<T> &v, std::mt19937_64 &rng) {
  return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

char pick_char(const std::string &s, std::mt19937_64 &rng) {
  return s[std::uniform_int_distribution<std::size_t>(0, s.size() - 1)(rng)];
}

std::string generic_sentence(std::mt19937_64 &rng) {
  switch (std::uniform_int_distribution<int>(0, 9)(rng)) {
    case 0: return "turn on the " + pick(kDevices, rng);
    case 1: return "turn off the " + pick(kDevices, rng);
    case 2: return "set a timer for " + pick(kNumbers, rng) + " minutes";
    case 3: return "set an alarm for " + pick(kNumbers, rng);
    case 4: return "what is the weather " + pick(kWhen, rng);
    case 5: return "play some " + pick(kGenres, rng) + " music";
    case 6: return "what time is it";
    case 7: return "read my new messages";
    case 8: return "how far is the " + pick(kPlaces, rng);
    default: return "open the " + pick(kDevices, rng);
  }
}

std::string personal_sentence(const std::string &name, std::mt19937_64 &rng) {
  switch (std::uniform_int_distribution<int>(0, 5)(rng)) {
    case 0: return "call " + name;
    case 1: return "text " + name;
    case 2: return "message " + name + " now";
    case 3: return "send a note to " + name;
    case 4: return "email " + name + " today";
    default: return "phone " + name;
  }
}

std::vector<std::string> generic_vocabulary() {
  std::vector<std::string> words{"turn", "on", "off", "the", "set", "a", "an", "timer",
                                 "for", "minutes", "alarm", "what", "is", "weather",
                                 "play", "some", "music", "time", "it", "read", "my",
                                 "new", "messages", "how", "far", "open", "call", "text",
                                 "message", "now", "send", "note", "to", "email", "phone"};
  for (const auto *list : {&kDevices, &kNumbers, &kWhen, &kGenres, &kPlaces})
    words.insert(words.end(), list->begin(), list->end());
  std::sort(words.begin(), words.end());
  words.erase(std::unique(words.begin(), words.end()), words.end());
  return words;
}

std::string random_name(std::mt19937_64 &rng) {
  std::string s;
  const int syllables = std::bernoulli_distribution(0.5)(rng) ? 3 : 2;
  for (int i = 0; i < syllables; ++i) {
    s += pick_char(kOnsets, rng);
    s += pick_char(kVowels, rng);
  }
  if (std::bernoulli_distribution(0.5)(rng)) s += pick_char("nlrst", rng);
  return s;
}

const std::string &class_of(char c) {
  for (const auto &cls : kClasses)
    if (cls.find(c) != std::string::npos) return cls;
  throw InvalidArgument(std::string("character outside the acoustic classes: ") + c);
}

// One random edit that keeps the result pronounceable-looking.
std::string edit_once(const std::string &s, std::mt19937_64 &rng) {
  std::uniform_int_distribution<std::size_t> pos(0, s.size() - 1);
  switch (std::uniform_int_distribution<int>(0, 3)(rng)) {
    case 0:
    case 1: {  // class-preserving substitution
      std::string out = s;
      const std::size_t i = pos(rng);
      const std::string &cls = class_of(s[i]);
      if (cls.size() < 2) return s;
      char c = s[i];
      while (c == s[i]) c = pick_char(cls, rng);
      out[i] = c;
      return out;
    }
    case 2: {  // doubled consonant
      const std::size_t i = pos(rng);
      if (kVowels.find(s[i]) != std::string::npos) return s;
      return s.substr(0, i + 1) + s[i] + s.substr(i + 1);
    }
    default:  // trailing vowel
      return s + pick_char("aey", rng);
  }
}

Matrix random_unit_rows(std::size_t rows, std::size_t dim, double scale,
                        std::mt19937_64 &rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix m(rows, dim);
  for (std::size_t r = 0; r < rows; ++r) {
    double n = 0.0;
    for (double &x : m.row(r)) {
      x = g(rng);
      n += x * x;
    }
    for (double &x : m.row(r)) x *= scale / std::sqrt(n);
  }
  return m;
}

bool far_from_all(const std::string &name, const std::vector<std::string> &others,
                  std::size_t min_distance) {
  return std::all_of(others.begin(), others.end(), [&](const std::string &o) {
    return edit_distance(name, o) >= min_distance;
  });
}

}  // namespace

int acoustic_class(char c) {
  for (std::size_t i = 0; i < kClasses.size(); ++i)
    if (kClasses[i].find(c) != std::string::npos) return static_cast<int>(i);
  return -1;
}

void CorpusConfig::validate() const {
  if (feature_dim == 0 || frames_per_char == 0) {
    throw InvalidArgument("feature_dim and frames_per_char must be >= 1");
  }
  if (family_size < 2) throw InvalidArgument("family_size must be >= 2");
  if (families == 0) throw InvalidArgument("corpus needs at least one family");
  if (noise < 0.0) throw InvalidArgument("noise must be >= 0");
  for (double f : {train_personal_fraction, eval_personal_fraction, eval_confusable_fraction}) {
    if (!(f >= 0.0 && f <= 1.0)) throw InvalidArgument("corpus fractions must lie in [0, 1]");
  }
}

Matrix character_templates(const CorpusConfig &config, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x7e3a11c5ULL);
  const Matrix centroids =
      random_unit_rows(kClasses.size(), config.feature_dim, config.class_scale, rng);
  Matrix t(vocab::kSize, config.feature_dim);
  for (std::size_t c = 0; c < kClasses.size(); ++c) {
    const Matrix offsets =
        random_unit_rows(kClasses[c].size(), config.feature_dim, config.letter_scale, rng);
    for (std::size_t i = 0; i < kClasses[c].size(); ++i) {
      auto row = t.row(char_to_id(kClasses[c][i]));
      for (std::size_t d = 0; d < config.feature_dim; ++d)
        row[d] = centroids(c, d) + offsets(i, d);
    }
  }
  return t;
}

AudioFeatures render(const Matrix &templates, std::string_view text,
                     std::size_t frames_per_char, double noise_sd,
                     std::mt19937_64 &rng) {
  if (text.empty()) throw InvalidArgument("render: empty text");
  std::normal_distribution<double> g(0.0, 1.0);
  AudioFeatures f(text.size() * frames_per_char, templates.cols);
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto tmpl = templates.row(char_to_id(text[i]));
    for (std::size_t k = 0; k < frames_per_char; ++k) {
      auto row = f.row(i * frames_per_char + k);
      for (std::size_t d = 0; d < row.size(); ++d)
        row[d] = tmpl[d] + (noise_sd > 0.0 ? noise_sd * g(rng) : 0.0);
    }
  }
  return f;
}

std::string decode_templates(const Matrix &templates, const AudioFeatures &features,
                             std::size_t frames_per_char) {
  std::string out;
  std::vector<double> mean(features.cols);
  for (std::size_t i = 0; i + frames_per_char <= features.rows; i += frames_per_char) {
    std::fill(mean.begin(), mean.end(), 0.0);
    for (std::size_t k = 0; k < frames_per_char; ++k)
      for (std::size_t d = 0; d < features.cols; ++d) mean[d] += features(i + k, d) / frames_per_char;
    double best = std::numeric_limits<double>::infinity();
    char best_c = '?';
    for (const auto &cls : kClasses) {
      for (char c : cls) {
        const auto t = templates.row(char_to_id(c));
        double dist = 0.0;
        for (std::size_t d = 0; d < t.size(); ++d) dist += (t[d] - mean[d]) * (t[d] - mean[d]);
        if (dist < best) {
          best = dist;
          best_c = c;
        }
      }
    }
    out += best_c;
  }
  return out;
}

std::size_t SyntheticCorpus::family_of(const std::string &name) const {
  for (std::size_t f = 0; f < families.size(); ++f)
    if (std::find(families[f].begin(), families[f].end(), name) != families[f].end()) return f;
  return kNone;
}

std::vector<std::string> SyntheticCorpus::all_names() const {
  std::vector<std::string> out;
  for (const auto &f : families) out.insert(out.end(), f.begin(), f.end());
  out.insert(out.end(), singletons.begin(), singletons.end());
  return out;
}

AnnotatedTranscript SyntheticCorpus::annotate(const CorpusUtterance &u) const {
  AnnotatedTranscript t{u.transcript, {}};
  const auto words = split_words(u.transcript);
  for (const auto &ref : u.references) {
    const auto rw = split_words(ref);
    for (std::size_t i = 0; i + rw.size() <= words.size(); ++i) {
      if (std::equal(rw.begin(), rw.end(), words.begin() + static_cast<std::ptrdiff_t>(i))) {
        t.entity_spans.emplace_back(i, i + rw.size() - 1);
        break;
      }
    }
  }
  return t;
}

SyntheticCorpus generate_corpus(const CorpusConfig &config, std::uint64_t seed) {
  config.validate();
  SyntheticCorpus c;
  c.config = config;
  c.generic_words = generic_vocabulary();
  c.templates = character_templates(config, seed);
  std::mt19937_64 rng(seed);

  // Names: every family member is >= 3 edits from every other family's names
  // and from the generic words; members are pairwise within 2 edits.
  std::vector<std::string> taken = c.generic_words;
  constexpr int kAttempts = 200000;
  int attempts = 0;
  while (c.families.size() < config.families) {
    if (++attempts > kAttempts) throw InvalidArgument("could not generate enough name families");
    const std::string base = random_name(rng);
    if (!far_from_all(base, taken, 3)) continue;
    std::vector<std::string> members{base};
    for (int tries = 0; tries < 200 && members.size() < config.family_size; ++tries) {
      std::string v = edit_once(base, rng);
      if (std::bernoulli_distribution(0.3)(rng)) v = edit_once(v, rng);
      if (std::find(members.begin(), members.end(), v) != members.end()) continue;
      bool close = true;
      for (const auto &m : members) close = close && edit_distance(v, m) <= 2;
      if (close && far_from_all(v, taken, 3)) members.push_back(v);
    }
    if (members.size() < config.family_size) continue;
    taken.insert(taken.end(), members.begin(), members.end());
    c.families.push_back(members);
    c.held_out.push_back(members[std::uniform_int_distribution<std::size_t>(0, members.size() - 1)(rng)]);
  }
  while (c.singletons.size() < config.singletons) {
    if (++attempts > kAttempts) throw InvalidArgument("could not generate enough names");
    const std::string n = random_name(rng);
    if (!far_from_all(n, taken, 3)) continue;
    taken.push_back(n);
    c.singletons.push_back(n);
  }
  // A quarter of the singletons are evaluation-only as well.
  const std::size_t eval_singletons = config.singletons / 4;
  const std::vector<std::string> held_singletons(c.singletons.begin(),
                                                 c.singletons.begin() + eval_singletons);

  std::vector<std::string> train_names;
  for (std::size_t f = 0; f < c.families.size(); ++f)
    for (const auto &m : c.families[f])
      if (m != c.held_out[f]) train_names.push_back(m);
  train_names.insert(train_names.end(), c.singletons.begin() + eval_singletons, c.singletons.end());

  auto make = [&](const std::string &text, std::vector<std::string> refs, Subset subset) {
    CorpusUtterance u;
    u.transcript = text;
    u.features = render(c.templates, text, config.frames_per_char, config.noise, rng);
    u.subset = subset;
    if (!refs.empty()) u.family = c.family_of(refs.front());
    u.references = std::move(refs);
    return u;
  };

  std::bernoulli_distribution train_personal(config.train_personal_fraction);
  for (std::size_t i = 0; i < config.train_utterances; ++i) {
    if (!train_names.empty() && train_personal(rng)) {
      const std::string &name = pick(train_names, rng);
      c.train.push_back(make(personal_sentence(name, rng), {name}, Subset::Personal));
    } else {
      c.train.push_back(make(generic_sentence(rng), {}, Subset::Generic));
    }
  }

  const auto personal = static_cast<std::size_t>(
      std::llround(config.eval_personal_fraction * static_cast<double>(config.eval_utterances)));
  const auto confusable = held_singletons.empty()
                              ? personal
                              : static_cast<std::size_t>(std::llround(
                                    config.eval_confusable_fraction * static_cast<double>(personal)));
  for (std::size_t i = 0; i < config.eval_utterances; ++i) {
    if (i < confusable) {
      const std::string &name = c.held_out[i % c.held_out.size()];
      c.eval.push_back(make(personal_sentence(name, rng), {name}, Subset::Personal));
    } else if (i < personal) {
      const std::string &name = held_singletons[(i - confusable) % held_singletons.size()];
      c.eval.push_back(make(personal_sentence(name, rng), {name}, Subset::Personal));
    } else {
      c.eval.push_back(make(generic_sentence(rng), {}, Subset::Generic));
    }
  }
  return c;
}

PhraseInventory corpus_inventory(const SyntheticCorpus &corpus) {
  PhraseInventory inv;
  for (const auto &name : corpus.all_names()) inv.add(name);
  return inv;
}

}  // namespace annp
