#pragma once

// Biasing-phrase inventory: entity phrases extracted from annotated
// transcripts, plus the single words of every multi-word phrase.
//
// Entity phrases keep the ids they were given (insertion order, or the ids in
// a loaded file). Word entries that are not themselves entity phrases get ids
// after the largest entity id, in lexicographic order, and are recomputed
// whenever the entity set changes.

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace annp {

struct Phrase {
  std::size_t id = 0;
  std::string text;
  std::vector<std::string> words;
  // false for entries that exist only as a word of a multi-word phrase
  bool entity = true;

  friend bool operator==(const Phrase &, const Phrase &) = default;
};

struct AnnotatedTranscript {
  std::string text;
  // Inclusive, 0-based word index ranges.
  std::vector<std::pair<std::size_t, std::size_t>> entity_spans;
};

// Lowercase, trim, collapse internal whitespace to single spaces.
std::string normalize_text(std::string_view text);
std::vector<std::string> split_words(std::string_view text);

class PhraseInventory {
 public:
  // Adds an entity phrase if its normalized text is new; returns its id.
  // Throws InvalidArgument on empty text.
  std::size_t add(std::string_view text);
  // Adds with an explicit id (used by load). Throws on duplicate id or text.
  void add_with_id(std::size_t id, std::string_view text);

  std::optional<std::size_t> find(std::string_view text) const;
  const Phrase &at(std::size_t id) const;
  bool contains_id(std::size_t id) const { return by_id_.contains(id); }

  // Number of entity phrases.
  std::size_t size() const { return entity_ids_.size(); }
  bool empty() const { return entity_ids_.empty(); }
  const std::vector<std::size_t> &entity_ids() const { return entity_ids_; }
  // Entity phrases and word-only entries, ordered by id.
  std::vector<const Phrase *> entries() const;
  const std::set<std::string> &word_entries() const { return word_entries_; }

  friend bool operator==(const PhraseInventory &a, const PhraseInventory &b) {
    return a.by_id_ == b.by_id_ && a.word_entries_ == b.word_entries_;
  }

 private:
  void rebuild_words();
  std::size_t next_entity_id() const;

  std::map<std::size_t, Phrase> by_id_;
  std::map<std::string, std::size_t, std::less<>> by_text_;
  std::vector<std::size_t> entity_ids_;
  std::set<std::string> word_entries_;
};

struct RejectedTranscript {
  std::size_t index = 0;
  std::string reason;
};

struct IngestResult {
  PhraseInventory inventory;
  std::vector<RejectedTranscript> rejected;
};

IngestResult ingest(std::span<const AnnotatedTranscript> transcripts);

// Union with `extra`; ids of existing phrases are unchanged.
PhraseInventory extend(const PhraseInventory &inventory,
                       std::span<const std::string> extra);

// Line format: id<TAB>text, entity phrases only, ordered by id.
void save(const PhraseInventory &inventory, const std::filesystem::path &path);
// Throws ParseError with the offending line number.
PhraseInventory load_inventory(const std::filesystem::path &path);

// Line format: text<TAB>start:end,start:end (spans optional).
std::vector<AnnotatedTranscript> load_transcripts(
    const std::filesystem::path &path);
AnnotatedTranscript parse_transcript_line(std::string_view line);

}  // namespace annp
