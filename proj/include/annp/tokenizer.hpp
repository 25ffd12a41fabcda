#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace annp {

// Character vocabulary shared by the context encoder, the label encoder and
// the transducer output layer. Id 0 is padding on the input side and the
// blank symbol on the output side.
namespace vocab {
inline constexpr std::size_t kPad = 0;
inline constexpr std::size_t kBlank = 0;
inline constexpr std::size_t kUnknown = 1;
inline constexpr std::size_t kSpace = 2;
inline constexpr std::size_t kApostrophe = 3;
inline constexpr std::size_t kHyphen = 4;
inline constexpr std::size_t kFirstLetter = 5;   // 'a'
inline constexpr std::size_t kFirstDigit = 31;   // '0'
inline constexpr std::size_t kSize = 41;
}  // namespace vocab

struct TokenSequence {
  std::vector<std::size_t> ids;

  std::size_t size() const { return ids.size(); }
  friend bool operator==(const TokenSequence &, const TokenSequence &) = default;
};

std::size_t char_to_id(char c);
// Inverse of char_to_id for printable ids; pad and unknown map to '?'.
char id_to_char(std::size_t id);

// Lowercases ASCII letters; unknown characters become vocab::kUnknown.
// Throws InvalidArgument on empty input.
TokenSequence tokenize(std::string_view text);
std::string detokenize(std::span<const std::size_t> ids);

// Throws InvalidArgument if any id is out of range, the sequence is empty, or
// a padding id appears inside it.
void validate(const TokenSequence &seq);

}  // namespace annp
