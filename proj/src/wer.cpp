#include "annp/wer.hpp"

#include <algorithm>

#include "annp/phrase_inventory.hpp"

namespace annp {

EditCounts &EditCounts::operator+=(const EditCounts &o) {
  substitutions += o.substitutions;
  deletions += o.deletions;
  insertions += o.insertions;
  reference_words += o.reference_words;
  return *this;
}

EditCounts word_edits(std::span<const std::string> ref,
                      std::span<const std::string> hyp) {
  const std::size_t R = ref.size(), H = hyp.size();
  // cost[i][j]: edits turning ref[:i] into hyp[:j]
  std::vector<std::size_t> cost((R + 1) * (H + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t & { return cost[i * (H + 1) + j]; };
  for (std::size_t i = 0; i <= R; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= H; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= R; ++i) {
    for (std::size_t j = 1; j <= H; ++j) {
      const std::size_t sub = at(i - 1, j - 1) + (ref[i - 1] != hyp[j - 1]);
      at(i, j) = std::min({sub, at(i - 1, j) + 1, at(i, j - 1) + 1});
    }
  }
  EditCounts c;
  c.reference_words = R;
  std::size_t i = R, j = H;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && at(i, j) == at(i - 1, j - 1) + (ref[i - 1] != hyp[j - 1])) {
      c.substitutions += ref[i - 1] != hyp[j - 1];
      --i, --j;
    } else if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ++c.deletions;
      --i;
    } else {
      ++c.insertions;
      --j;
    }
  }
  return c;
}

EditCounts word_edits(std::string_view reference, std::string_view hypothesis) {
  const auto r = split_words(reference);
  const auto h = split_words(hypothesis);
  return word_edits(r, h);
}

double word_error_rate(const EditCounts &c) {
  if (c.reference_words == 0) return static_cast<double>(c.insertions);
  return static_cast<double>(c.errors()) / static_cast<double>(c.reference_words);
}

double word_error_rate(std::string_view reference, std::string_view hypothesis) {
  return word_error_rate(word_edits(reference, hypothesis));
}

std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j - 1] + (a[i - 1] != b[j - 1]), prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace annp
