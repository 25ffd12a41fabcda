#include "annp/phrase_inventory.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "annp/error.hpp"

namespace annp {

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) words.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return words;
}

std::string normalize_text(std::string_view text) {
  std::string out;
  for (const auto &w : split_words(text)) {
    if (!out.empty()) out.push_back(' ');
    for (char c : w) {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  return out;
}

std::size_t PhraseInventory::next_entity_id() const {
  std::size_t next = 0;
  for (std::size_t id : entity_ids_) next = std::max(next, id + 1);
  return next;
}

std::size_t PhraseInventory::add(std::string_view text) {
  const std::string norm = normalize_text(text);
  if (norm.empty()) throw InvalidArgument("phrase text is empty");
  if (auto it = by_text_.find(norm); it != by_text_.end()) {
    if (by_id_.at(it->second).entity) return it->second;
  }
  const std::size_t id = next_entity_id();
  add_with_id(id, norm);
  return id;
}

void PhraseInventory::add_with_id(std::size_t id, std::string_view text) {
  const std::string norm = normalize_text(text);
  if (norm.empty()) throw InvalidArgument("phrase text is empty");
  for (std::size_t e : entity_ids_) {
    if (e == id) throw InvalidArgument("duplicate phrase id " + std::to_string(id));
    if (by_id_.at(e).text == norm) {
      throw InvalidArgument("duplicate phrase text '" + norm + "'");
    }
  }
  // Drop word-only entries; they are renumbered below.
  for (auto it = by_id_.begin(); it != by_id_.end();) {
    if (!it->second.entity) {
      by_text_.erase(it->second.text);
      it = by_id_.erase(it);
    } else {
      ++it;
    }
  }
  by_id_.emplace(id, Phrase{id, norm, split_words(norm), true});
  by_text_[norm] = id;
  entity_ids_.push_back(id);
  rebuild_words();
}

void PhraseInventory::rebuild_words() {
  word_entries_.clear();
  for (std::size_t id : entity_ids_) {
    const Phrase &p = by_id_.at(id);
    if (p.words.size() < 2) continue;
    for (const auto &w : p.words) word_entries_.insert(w);
  }
  std::size_t next = next_entity_id();
  for (const auto &w : word_entries_) {
    if (by_text_.contains(w)) continue;
    by_id_.emplace(next, Phrase{next, w, {w}, false});
    by_text_[w] = next;
    ++next;
  }
}

std::optional<std::size_t> PhraseInventory::find(std::string_view text) const {
  if (auto it = by_text_.find(normalize_text(text)); it != by_text_.end()) {
    return it->second;
  }
  return std::nullopt;
}

const Phrase &PhraseInventory::at(std::size_t id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end()) {
    throw InvalidArgument("no phrase with id " + std::to_string(id));
  }
  return it->second;
}

std::vector<const Phrase *> PhraseInventory::entries() const {
  std::vector<const Phrase *> out;
  out.reserve(by_id_.size());
  for (const auto &[_, p] : by_id_) out.push_back(&p);
  return out;
}

IngestResult ingest(std::span<const AnnotatedTranscript> transcripts) {
  IngestResult result;
  for (std::size_t i = 0; i < transcripts.size(); ++i) {
    const auto &tr = transcripts[i];
    const auto words = split_words(tr.text);
    auto spans = tr.entity_spans;
    std::sort(spans.begin(), spans.end());
    std::string reason;
    for (std::size_t s = 0; s < spans.size() && reason.empty(); ++s) {
      const auto [lo, hi] = spans[s];
      if (lo > hi) {
        reason = "span start after end";
      } else if (hi >= words.size()) {
        reason = "span " + std::to_string(lo) + ":" + std::to_string(hi) +
                 " out of bounds for " + std::to_string(words.size()) + " words";
      } else if (s > 0 && lo <= spans[s - 1].second) {
        reason = "overlapping spans";
      }
    }
    if (!reason.empty()) {
      result.rejected.push_back({i, reason});
      continue;
    }
    for (const auto &[lo, hi] : tr.entity_spans) {
      std::string text;
      for (std::size_t w = lo; w <= hi; ++w) {
        if (!text.empty()) text.push_back(' ');
        text += words[w];
      }
      result.inventory.add(text);
    }
  }
  return result;
}

PhraseInventory extend(const PhraseInventory &inventory,
                       std::span<const std::string> extra) {
  PhraseInventory out = inventory;
  for (const auto &s : extra) {
    if (!normalize_text(s).empty()) out.add(s);
  }
  return out;
}

void save(const PhraseInventory &inventory, const std::filesystem::path &path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidArgument("cannot write " + path.string());
  for (const Phrase *p : inventory.entries()) {
    if (p->entity) os << p->id << '\t' << p->text << '\n';
  }
  if (!os) throw InvalidArgument("write failed for " + path.string());
}

PhraseInventory load_inventory(const std::filesystem::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError(path.string(), 0, "cannot open file");
  PhraseInventory inv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const bool last_line = is.eof();
    if (line.empty() && last_line) break;
    if (last_line) {
      throw ParseError(path.string(), lineno, "truncated record (no newline)");
    }
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw ParseError(path.string(), lineno, "expected id<TAB>text");
    }
    std::size_t id = 0;
    const char *b = line.data();
    auto [ptr, ec] = std::from_chars(b, b + tab, id);
    if (ec != std::errc() || ptr != b + tab || tab == 0) {
      throw ParseError(path.string(), lineno, "bad phrase id");
    }
    const std::string text = line.substr(tab + 1);
    if (normalize_text(text) != text || text.empty()) {
      throw ParseError(path.string(), lineno, "phrase text is not normalized");
    }
    try {
      inv.add_with_id(id, text);
    } catch (const InvalidArgument &e) {
      throw ParseError(path.string(), lineno, e.what());
    }
  }
  return inv;
}

AnnotatedTranscript parse_transcript_line(std::string_view line) {
  AnnotatedTranscript tr;
  const auto tab = line.find('\t');
  tr.text = std::string(line.substr(0, tab));
  if (tab == std::string_view::npos) return tr;
  std::string_view rest = line.substr(tab + 1);
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    std::string_view item = rest.substr(0, comma);
    const auto colon = item.find(':');
    if (colon == std::string_view::npos) {
      throw InvalidArgument("span '" + std::string(item) + "' is not start:end");
    }
    std::size_t lo = 0, hi = 0;
    auto r1 = std::from_chars(item.data(), item.data() + colon, lo);
    auto r2 = std::from_chars(item.data() + colon + 1, item.data() + item.size(), hi);
    if (r1.ec != std::errc() || r2.ec != std::errc() ||
        r1.ptr != item.data() + colon || r2.ptr != item.data() + item.size()) {
      throw InvalidArgument("span '" + std::string(item) + "' is not start:end");
    }
    tr.entity_spans.emplace_back(lo, hi);
    if (comma == std::string_view::npos) break;
    rest = rest.substr(comma + 1);
  }
  return tr;
}

std::vector<AnnotatedTranscript> load_transcripts(
    const std::filesystem::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError(path.string(), 0, "cannot open file");
  std::vector<AnnotatedTranscript> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(parse_transcript_line(line));
    } catch (const InvalidArgument &e) {
      throw ParseError(path.string(), lineno, e.what());
    }
  }
  return out;
}

}  // namespace annp
