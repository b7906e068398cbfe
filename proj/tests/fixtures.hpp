#pragma once

#include <vector>

#include "reqx/model.hpp"

namespace reqx::testing {

inline ModelDims tiny_dims() { return {4, 3, 4, 3, 2}; }

// Random tiny model. Biases and transitions are randomised too so no gradient
// block is trivially zero.
inline ModelParams tiny_model(std::uint64_t seed, std::size_t vocab_size = 8) {
  Rng rng(seed);
  auto dims = tiny_dims();
  Vocabulary v;
  for (std::size_t i = 2; i < vocab_size; ++i) v.add("w" + std::to_string(i));
  auto p = ModelParams::init(dims, random_embeddings(v, dims.embedding_dim, rng), rng);
  for (double& x : p.emission_bias.flat()) x = rng.uniform(-0.5, 0.5);
  for (double& x : p.crf_transitions.flat()) x = rng.uniform(-1, 1);
  clamp_forbidden(p.crf_transitions);
  return p;
}

inline std::vector<std::size_t> random_indices(Rng& rng, std::size_t len, std::size_t vocab) {
  std::vector<std::size_t> out(len);
  for (auto& i : out) i = 1 + rng.below(vocab - 1);  // never PAD
  return out;
}

inline std::vector<Tag> random_bio(Rng& rng, std::size_t len) {
  std::vector<Tag> out(len);
  Tag prev = Tag::O;
  for (std::size_t t = 0; t < len; ++t) {
    Tag next = static_cast<Tag>(rng.below(3));
    if (next == Tag::I && (t == 0 || prev == Tag::O)) next = Tag::B;
    out[t] = prev = next;
  }
  return out;
}

inline PaddedBatch make_batch(Rng& rng, std::size_t n, std::size_t max_len, std::size_t vocab) {
  PaddedBatch b;
  b.width = max_len;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t L = 1 + rng.below(max_len);
    auto idx = random_indices(rng, L, vocab);
    auto tags = random_bio(rng, L);
    idx.resize(max_len, Vocabulary::kPad);
    tags.resize(max_len, Tag::O);
    b.indices.push_back(idx);
    b.tags.push_back(tags);
    b.lengths.push_back(L);
  }
  return b;
}

}  // namespace reqx::testing
