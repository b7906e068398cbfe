#pragma once

#include <charconv>
#include <cstddef>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "reqx/error.hpp"
#include "reqx/random.hpp"
#include "reqx/tensor.hpp"
#include "reqx/vocabulary.hpp"

namespace reqx {

inline constexpr double kOovInitBound = 0.25;

// vocab_size x dim lookup table. Row Vocabulary::kPad is always zero and never updated.
struct EmbeddingTable {
  Tensor2D matrix;
  bool trainable = true;

  std::size_t dim() const { return matrix.cols(); }
};

struct GloveLoadResult {
  EmbeddingTable table;
  std::size_t matched = 0;
};

// Every non-PAD row drawn from uniform(-0.25, 0.25).
inline EmbeddingTable random_embeddings(const Vocabulary& vocab, std::size_t dim, Rng& rng) {
  EmbeddingTable table{Tensor2D(vocab.size(), dim), true};
  for (std::size_t r = 1; r < vocab.size(); ++r)
    for (double& v : table.matrix.row(r)) v = rng.uniform(-kOovInitBound, kOovInitBound);
  return table;
}

namespace detail {

inline std::vector<std::string_view> split_spaces(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline bool parse_double(std::string_view s, double& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace detail

// Loads GloVe text vectors for the words in `vocab`. Rows for words missing
// from the file are drawn from `rng` exactly as random_embeddings does, so a
// vocabulary with no matches yields the same table as random_embeddings.
inline GloveLoadResult load_glove(const std::string& path, const Vocabulary& vocab,
                                  std::size_t dim, Rng& rng) {
  if (dim == 0) throw ConfigError("load_glove: embedding dimension must be positive");
  std::ifstream in(path);
  if (!in) throw Error("load_glove: cannot open " + path);

  GloveLoadResult result{random_embeddings(vocab, dim, rng), 0};
  std::vector<bool> seen(vocab.size(), false);

  std::string line;
  std::size_t line_no = 0;
  std::size_t first_width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto fields = detail::split_spaces(line);
    if (fields.empty()) continue;
    if (line_no == 1) first_width = fields.size();
    if (fields.size() != dim + 1) {
      if (line_no == 1) {
        // Two leading lines of equal, wrong width mean the file has another dimension.
        std::string second;
        std::size_t second_width = 0;
        while (std::getline(in, second)) {
          auto f2 = detail::split_spaces(second);
          if (!f2.empty()) {
            second_width = f2.size();
            break;
          }
        }
        if (second_width == first_width) {
          throw ConfigError("load_glove: " + path + " holds " +
                            std::to_string(first_width - 1) +
                            "-dimensional vectors but embedding_dim is " + std::to_string(dim));
        }
      }
      throw ParseError(path, line_no,
                       "expected word + " + std::to_string(dim) + " values, found " +
                           std::to_string(fields.size()) + " fields");
    }
    const std::string word(fields[0]);
    if (!vocab.contains(word)) continue;
    const std::size_t idx = vocab.index_of(word);
    if (seen[idx]) continue;
    auto row = result.table.matrix.row(idx);
    for (std::size_t k = 0; k < dim; ++k) {
      if (!detail::parse_double(fields[k + 1], row[k])) {
        throw ParseError(path, line_no, "bad number '" + std::string(fields[k + 1]) + "'");
      }
    }
    seen[idx] = true;
    ++result.matched;
  }
  return result;
}

}  // namespace reqx
