#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "reqx/error.hpp"

namespace reqx {

inline constexpr const char* kPadToken = "<pad>";
inline constexpr const char* kUnkToken = "<unk>";

// Token <-> index map. Index 0 is PAD and index 1 is UNK; corpus tokens start at 2.
class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;

  Vocabulary() : index_to_token_{kPadToken, kUnkToken} {}

  // Rebuilds a vocabulary from its index order (e.g. from a checkpoint).
  static Vocabulary from_tokens(const std::vector<std::string>& index_to_token) {
    if (index_to_token.size() < 2 || index_to_token[0] != kPadToken ||
        index_to_token[1] != kUnkToken) {
      throw DataError("vocabulary: first two entries must be " + std::string(kPadToken) + " and " +
                      kUnkToken);
    }
    Vocabulary v;
    for (std::size_t i = 2; i < index_to_token.size(); ++i) {
      if (v.contains(index_to_token[i])) {
        throw DataError("vocabulary: duplicate token '" + index_to_token[i] + "'");
      }
      v.add(index_to_token[i]);
    }
    return v;
  }

  // Returns the existing index if the token is already present.
  std::size_t add(const std::string& token) {
    if (token == kPadToken || token == kUnkToken) {
      throw DataError("vocabulary: token '" + token + "' is reserved");
    }
    auto [it, inserted] = token_to_index_.try_emplace(token, index_to_token_.size());
    if (inserted) index_to_token_.push_back(token);
    return it->second;
  }

  bool contains(const std::string& token) const { return token_to_index_.count(token) != 0; }

  std::size_t index_of(const std::string& token) const {
    auto it = token_to_index_.find(token);
    return it == token_to_index_.end() ? kUnk : it->second;
  }

  const std::string& token(std::size_t index) const { return index_to_token_.at(index); }
  std::size_t size() const { return index_to_token_.size(); }
  const std::vector<std::string>& tokens() const { return index_to_token_; }

  bool operator==(const Vocabulary& o) const { return index_to_token_ == o.index_to_token_; }

 private:
  std::unordered_map<std::string, std::size_t> token_to_index_;
  std::vector<std::string> index_to_token_;
};

// One index per distinct token, in first-occurrence order after the reserved slots.
inline Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& corpus) {
  if (corpus.empty()) throw InputError("build_vocabulary: empty corpus");
  Vocabulary v;
  for (const auto& sentence : corpus)
    for (const auto& tok : sentence) v.add(tok);
  return v;
}

inline std::vector<std::size_t> encode_tokens(const std::vector<std::string>& tokens,
                                              const Vocabulary& vocab) {
  std::vector<std::size_t> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(vocab.index_of(t));
  return out;
}

inline std::vector<std::string> decode_indices(const std::vector<std::size_t>& indices,
                                               const Vocabulary& vocab) {
  std::vector<std::string> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(vocab.token(i));
  return out;
}

}  // namespace reqx
