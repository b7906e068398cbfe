#pragma once

#include <cmath>
#include <cstddef>

#include "reqx/tensor.hpp"

namespace reqx {

// Single-head scaled dot-product self-attention over one unpadded sequence.
// Input rows are positions; projections are D_att x input_dim.
struct AttentionCache {
  Tensor2D input;    // L x in
  Tensor2D q, k, v;  // L x D_att
  Tensor2D weights;  // L x L, rows sum to 1
  Tensor2D output;   // L x D_att
};

struct AttentionGrads {
  Tensor2D d_input;  // L x in
};

inline AttentionCache attention_forward(const Tensor2D& input, const Tensor2D& w_query,
                                        const Tensor2D& w_key, const Tensor2D& w_value) {
  AttentionCache c;
  c.input = input;
  c.q = matmul(input, transpose(w_query));
  c.k = matmul(input, transpose(w_key));
  c.v = matmul(input, transpose(w_value));
  const double scale = 1.0 / std::sqrt(static_cast<double>(w_query.rows()));
  Tensor2D scores = matmul(c.q, transpose(c.k));
  scores *= scale;
  c.weights = softmax_rows(scores);
  c.output = matmul(c.weights, c.v);
  return c;
}

// Accumulates projection gradients into d_query/d_key/d_value and returns dL/dinput.
inline Tensor2D attention_backward(const AttentionCache& c, const Tensor2D& d_output,
                                   const Tensor2D& w_query, const Tensor2D& w_key,
                                   const Tensor2D& w_value, Tensor2D& d_query, Tensor2D& d_key,
                                   Tensor2D& d_value) {
  const std::size_t L = c.weights.rows();
  const double scale = 1.0 / std::sqrt(static_cast<double>(w_query.rows()));

  Tensor2D d_weights = matmul(d_output, transpose(c.v));  // L x L
  Tensor2D dv = matmul(transpose(c.weights), d_output);   // L x D_att

  Tensor2D d_scores(L, L);
  for (std::size_t r = 0; r < L; ++r) {
    double dot = 0.0;
    for (std::size_t j = 0; j < L; ++j) dot += d_weights(r, j) * c.weights(r, j);
    for (std::size_t j = 0; j < L; ++j)
      d_scores(r, j) = c.weights(r, j) * (d_weights(r, j) - dot) * scale;
  }
  Tensor2D dq = matmul(d_scores, c.k);
  Tensor2D dk = matmul(transpose(d_scores), c.q);

  d_query += matmul(transpose(dq), c.input);
  d_key += matmul(transpose(dk), c.input);
  d_value += matmul(transpose(dv), c.input);

  Tensor2D d_input = matmul(dq, w_query);
  d_input += matmul(dk, w_key);
  d_input += matmul(dv, w_value);
  return d_input;
}

}  // namespace reqx
