#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace annp {

struct EditCounts {
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;
  std::size_t reference_words = 0;

  std::size_t errors() const { return substitutions + deletions + insertions; }
  EditCounts &operator+=(const EditCounts &o);
};

// Minimum-cost word alignment; ties prefer substitutions, then deletions.
EditCounts word_edits(std::span<const std::string> reference,
                      std::span<const std::string> hypothesis);
EditCounts word_edits(std::string_view reference, std::string_view hypothesis);

// errors / reference words; an empty reference gives 0 for an empty
// hypothesis and the insertion count otherwise.
double word_error_rate(const EditCounts &c);
double word_error_rate(std::string_view reference, std::string_view hypothesis);

// Character-level Levenshtein distance.
std::size_t edit_distance(std::string_view a, std::string_view b);

}  // namespace annp
