#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "reqx/tags.hpp"

namespace reqx {

struct AlignResult {
  std::vector<Tag> tags;
  // Phrases that did not occur (or only overlapped earlier matches).
  std::vector<std::vector<std::string>> misses;
};

// Tags every occurrence of each phrase: B on its first token, I on the rest.
// Longer phrases are placed first; among equal lengths, input order. Within a
// phrase, occurrences are taken left to right and may not overlap tokens that
// are already tagged.
inline AlignResult align_bio(const std::vector<std::string>& tokens,
                             const std::vector<std::vector<std::string>>& phrases) {
  AlignResult out{std::vector<Tag>(tokens.size(), Tag::O), {}};
  std::vector<bool> used(tokens.size(), false);

  std::vector<std::size_t> order(phrases.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return phrases[a].size() > phrases[b].size();
  });

  for (std::size_t pi : order) {
    const auto& phrase = phrases[pi];
    if (phrase.empty()) continue;
    bool matched = false;
    for (std::size_t start = 0; start + phrase.size() <= tokens.size(); ++start) {
      bool ok = true;
      for (std::size_t k = 0; k < phrase.size() && ok; ++k)
        ok = !used[start + k] && tokens[start + k] == phrase[k];
      if (!ok) continue;
      for (std::size_t k = 0; k < phrase.size(); ++k) {
        out.tags[start + k] = k == 0 ? Tag::B : Tag::I;
        used[start + k] = true;
      }
      matched = true;
      start += phrase.size() - 1;
    }
    if (!matched) out.misses.push_back(phrase);
  }
  return out;
}

}  // namespace reqx
