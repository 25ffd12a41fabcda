#include "annp/tokenizer.hpp"

#include <cctype>

#include "annp/error.hpp"

namespace annp {

std::size_t char_to_id(char c) {
  const auto uc = static_cast<unsigned char>(c);
  if (c >= 'a' && c <= 'z') return vocab::kFirstLetter + (c - 'a');
  if (c >= 'A' && c <= 'Z') return vocab::kFirstLetter + (std::tolower(uc) - 'a');
  if (c >= '0' && c <= '9') return vocab::kFirstDigit + (c - '0');
  switch (c) {
    case ' ':
      return vocab::kSpace;
    case '\'':
      return vocab::kApostrophe;
    case '-':
      return vocab::kHyphen;
    default:
      return vocab::kUnknown;
  }
}

char id_to_char(std::size_t id) {
  if (id >= vocab::kFirstDigit && id < vocab::kSize) {
    return static_cast<char>('0' + (id - vocab::kFirstDigit));
  }
  if (id >= vocab::kFirstLetter && id < vocab::kFirstDigit) {
    return static_cast<char>('a' + (id - vocab::kFirstLetter));
  }
  switch (id) {
    case vocab::kSpace:
      return ' ';
    case vocab::kApostrophe:
      return '\'';
    case vocab::kHyphen:
      return '-';
    default:
      return '?';
  }
}

TokenSequence tokenize(std::string_view text) {
  if (text.empty()) throw InvalidArgument("tokenize: empty string");
  TokenSequence seq;
  seq.ids.reserve(text.size());
  for (char c : text) seq.ids.push_back(char_to_id(c));
  return seq;
}

std::string detokenize(std::span<const std::size_t> ids) {
  std::string s;
  s.reserve(ids.size());
  for (std::size_t id : ids) s.push_back(id_to_char(id));
  return s;
}

void validate(const TokenSequence &seq) {
  if (seq.ids.empty()) throw InvalidArgument("token sequence is empty");
  for (std::size_t i = 0; i < seq.ids.size(); ++i) {
    if (seq.ids[i] >= vocab::kSize) {
      throw InvalidArgument("token id " + std::to_string(seq.ids[i]) +
                            " out of range at position " + std::to_string(i));
    }
    if (seq.ids[i] == vocab::kPad) {
      throw InvalidArgument("padding id inside sequence at position " +
                            std::to_string(i));
    }
  }
}

}  // namespace annp
