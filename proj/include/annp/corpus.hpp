#pragma once

// Synthetic speech-like corpus.
//
// Characters are grouped into acoustic classes (vowels, stops, nasals and
// liquids, fricatives, the rest). Each character's template is its class
// centroid plus a smaller character-specific offset, so noisy frames identify
// the class reliably but the character within the class only weakly. Names
// are therefore hard to spell from audio alone, while a short list of
// candidate spellings is enough to pick the right one.
//
// Names come in confusable families: a base name plus variants within edit
// distance 2 (class-preserving substitutions, doubled letters, appended
// vowels). Names of different families are at least 3 edits apart. One member
// of every family is held out of the training transcripts and used as the
// evaluation reference; every member is part of the phrase inventory.

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "annp/biasing_model.hpp"
#include "annp/phrase_inventory.hpp"

namespace annp {

struct CorpusConfig {
  std::size_t feature_dim = 16;
  std::size_t frames_per_char = 1;
  double class_scale = 3.0;   // norm of class centroids
  double letter_scale = 1.0;  // norm of within-class offsets
  double noise = 0.5;         // per-dimension standard deviation
  std::size_t families = 40;
  std::size_t family_size = 4;
  std::size_t singletons = 40;  // names without a family
  std::size_t train_utterances = 1200;
  double train_personal_fraction = 0.6;
  std::size_t eval_utterances = 200;
  double eval_personal_fraction = 0.4;
  // Share of personal evaluation utterances whose reference has a family.
  double eval_confusable_fraction = 0.75;

  void validate() const;
};

enum class Subset { Generic, Personal };

struct CorpusUtterance {
  std::string transcript;
  AudioFeatures features;
  // Entity phrases mentioned in the transcript (texts, in order).
  std::vector<std::string> references;
  Subset subset = Subset::Generic;
  // Index into SyntheticCorpus::families, or npos.
  std::size_t family = static_cast<std::size_t>(-1);

  bool confusable() const { return family != static_cast<std::size_t>(-1); }
};

struct SyntheticCorpus {
  CorpusConfig config;
  std::vector<CorpusUtterance> train;
  std::vector<CorpusUtterance> eval;
  std::vector<std::vector<std::string>> families;  // members; front() is the base
  std::vector<std::string> held_out;                // per family, eval-only member
  std::vector<std::string> singletons;
  std::vector<std::string> generic_words;
  Matrix templates;  // vocab::kSize x feature_dim, rows of unused ids are zero

  // Family index of a name, or npos.
  std::size_t family_of(const std::string &name) const;
  // Every name of every family plus the singletons.
  std::vector<std::string> all_names() const;
  AnnotatedTranscript annotate(const CorpusUtterance &u) const;
};

SyntheticCorpus generate_corpus(const CorpusConfig &config, std::uint64_t seed);

// Inventory over every corpus name, entered in a fixed order.
PhraseInventory corpus_inventory(const SyntheticCorpus &corpus);

// Character templates for the acoustic classes, deterministic per seed.
Matrix character_templates(const CorpusConfig &config, std::uint64_t seed);
// frames_per_char frames per character; noise_sd 0 gives the clean templates.
AudioFeatures render(const Matrix &templates, std::string_view text,
                     std::size_t frames_per_char, double noise_sd,
                     std::mt19937_64 &rng);
// Nearest-template decoding of each frame group.
std::string decode_templates(const Matrix &templates, const AudioFeatures &features,
                             std::size_t frames_per_char);

// Acoustic class of a character; -1 for characters outside the classes.
int acoustic_class(char c);

}  // namespace annp
