#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "reqx/attention.hpp"
#include "reqx/crf.hpp"
#include "reqx/embeddings.hpp"
#include "reqx/error.hpp"
#include "reqx/lstm.hpp"
#include "reqx/random.hpp"
#include "reqx/tags.hpp"
#include "reqx/tensor.hpp"
#include "reqx/vocabulary.hpp"

namespace reqx {

struct ModelDims {
  std::size_t embedding_dim = 300;
  std::size_t hidden_enc = 128;  // per direction
  std::size_t attention_dim = 256;
  std::size_t hidden_dec = 256;
  std::size_t tag_dim = 25;

  bool operator==(const ModelDims&) const = default;
};

// Complete learnable state. The same struct doubles as the gradient container.
struct ModelParams {
  EmbeddingTable embedding;
  LstmCellParams enc_fwd, enc_bwd;
  Tensor2D attn_query, attn_key, attn_value;  // D_att x 2H_enc
  Tensor2D tag_embedding;                     // 5 x D_tag, rows indexed by CRF state
  LstmCellParams dec;                         // input D_att + D_tag
  Tensor2D emission_proj;                     // 3 x H_dec
  Tensor2D emission_bias;                     // 3 x 1
  Tensor2D crf_transitions;                   // 5 x 5

  ModelDims dims() const {
    return {embedding.dim(), enc_fwd.hidden(), attn_query.rows(), dec.hidden(),
            tag_embedding.cols()};
  }

  static ModelParams zeros(const ModelDims& d, std::size_t vocab_size) {
    ModelParams p;
    p.embedding = {Tensor2D(vocab_size, d.embedding_dim), true};
    p.enc_fwd = LstmCellParams::zeros(d.embedding_dim, d.hidden_enc);
    p.enc_bwd = LstmCellParams::zeros(d.embedding_dim, d.hidden_enc);
    p.attn_query = Tensor2D(d.attention_dim, 2 * d.hidden_enc);
    p.attn_key = Tensor2D(d.attention_dim, 2 * d.hidden_enc);
    p.attn_value = Tensor2D(d.attention_dim, 2 * d.hidden_enc);
    p.tag_embedding = Tensor2D(kNumStates, d.tag_dim);
    p.dec = LstmCellParams::zeros(d.attention_dim + d.tag_dim, d.hidden_dec);
    p.emission_proj = Tensor2D(kNumTags, d.hidden_dec);
    p.emission_bias = Tensor2D(kNumTags, 1);
    p.crf_transitions = Tensor2D(kNumStates, kNumStates);
    return p;
  }

  static ModelParams zeros_like(const ModelParams& o) {
    ModelParams p = zeros(o.dims(), o.embedding.matrix.rows());
    p.embedding.trainable = o.embedding.trainable;
    return p;
  }

  // Draws every block except the embedding table, which the caller supplies
  // (GloVe or random). Linear maps use uniform(-k, k), k = 1/sqrt(fan_in).
  static ModelParams init(const ModelDims& d, EmbeddingTable embedding, Rng& rng) {
    if (embedding.dim() != d.embedding_dim) {
      throw ConfigError("model: embedding table has dim " + std::to_string(embedding.dim()) +
                        ", config says " + std::to_string(d.embedding_dim));
    }
    ModelParams p = zeros(d, embedding.matrix.rows());
    p.embedding = std::move(embedding);
    p.enc_fwd = LstmCellParams::init(d.embedding_dim, d.hidden_enc, rng);
    p.enc_bwd = LstmCellParams::init(d.embedding_dim, d.hidden_enc, rng);
    auto fill = [&rng](Tensor2D& t, double k) {
      for (double& v : t.flat()) v = rng.uniform(-k, k);
    };
    const double k_att = 1.0 / std::sqrt(static_cast<double>(2 * d.hidden_enc));
    fill(p.attn_query, k_att);
    fill(p.attn_key, k_att);
    fill(p.attn_value, k_att);
    fill(p.tag_embedding, kOovInitBound);
    p.dec = LstmCellParams::init(d.attention_dim + d.tag_dim, d.hidden_dec, rng);
    fill(p.emission_proj, 1.0 / std::sqrt(static_cast<double>(d.hidden_dec)));
    p.crf_transitions = zero_transitions();
    return p;
  }

  // Named view of every parameter block, in a fixed order.
  std::vector<std::pair<std::string, Tensor2D*>> blocks() {
    return {{"embedding", &embedding.matrix},
            {"enc_fwd.w_input", &enc_fwd.w_input},
            {"enc_fwd.w_hidden", &enc_fwd.w_hidden},
            {"enc_fwd.bias", &enc_fwd.bias},
            {"enc_bwd.w_input", &enc_bwd.w_input},
            {"enc_bwd.w_hidden", &enc_bwd.w_hidden},
            {"enc_bwd.bias", &enc_bwd.bias},
            {"attn_query", &attn_query},
            {"attn_key", &attn_key},
            {"attn_value", &attn_value},
            {"tag_embedding", &tag_embedding},
            {"dec.w_input", &dec.w_input},
            {"dec.w_hidden", &dec.w_hidden},
            {"dec.bias", &dec.bias},
            {"emission_proj", &emission_proj},
            {"emission_bias", &emission_bias},
            {"crf_transitions", &crf_transitions}};
  }
  std::vector<std::pair<std::string, const Tensor2D*>> blocks() const {
    auto mut = const_cast<ModelParams*>(this)->blocks();
    return {mut.begin(), mut.end()};
  }

  bool operator==(const ModelParams& o) const {
    auto a = blocks();
    auto b = o.blocks();
    for (std::size_t i = 0; i < a.size(); ++i)
      if (!(*a[i].second == *b[i].second)) return false;
    return embedding.trainable == o.embedding.trainable;
  }
};

// ---------------------------------------------------------------------------
// Per-sentence forward pass with the activations the backward pass needs.

struct EncoderTrace {
  Tensor2D inputs;                 // L x E embedding rows
  std::vector<LstmStepCache> fwd;  // fwd[t] consumed token t
  std::vector<LstmStepCache> bwd;  // bwd[t] consumed token t (running right to left)
  Tensor2D states;                 // L x 2H_enc, [forward | backward]
};

inline EncoderTrace encode_sentence(const ModelParams& p, std::span<const std::size_t> indices) {
  const std::size_t L = indices.size();
  const std::size_t E = p.embedding.dim();
  const std::size_t H = p.enc_fwd.hidden();
  EncoderTrace tr;
  tr.inputs = Tensor2D(L, E);
  for (std::size_t t = 0; t < L; ++t) {
    if (indices[t] >= p.embedding.matrix.rows()) {
      throw InputError("encoder: token index " + std::to_string(indices[t]) +
                       " outside vocabulary of size " +
                       std::to_string(p.embedding.matrix.rows()));
    }
    auto src = p.embedding.matrix.row(indices[t]);
    std::copy(src.begin(), src.end(), tr.inputs.row(t).begin());
  }
  tr.states = Tensor2D(L, 2 * H);
  tr.fwd.resize(L);
  tr.bwd.resize(L);
  Vec h(H, 0.0), c(H, 0.0);
  for (std::size_t t = 0; t < L; ++t) {
    tr.fwd[t] = lstm_step(p.enc_fwd, tr.inputs.row(t), h, c);
    h = tr.fwd[t].h;
    c = tr.fwd[t].c;
    std::copy(h.begin(), h.end(), tr.states.row(t).begin());
  }
  h.assign(H, 0.0);
  c.assign(H, 0.0);
  for (std::size_t t = L; t-- > 0;) {
    tr.bwd[t] = lstm_step(p.enc_bwd, tr.inputs.row(t), h, c);
    h = tr.bwd[t].h;
    c = tr.bwd[t].c;
    std::copy(h.begin(), h.end(), tr.states.row(t).begin() + H);
  }
  return tr;
}

struct DecoderTrace {
  std::vector<std::size_t> fed_states;  // CRF state whose embedding entered step t
  std::vector<LstmStepCache> steps;
  Tensor2D emissions;  // L x 3
};

// Picks the state fed into step t (t >= 1). `prev_state` is the state that was
// fed into step t - 1, i.e. the tag chosen for step t - 2 (or start).
using TagFeed = std::function<std::size_t(std::size_t t, std::span<const double> prev_emissions,
                                          std::size_t prev_state)>;

inline DecoderTrace decode_sentence(const ModelParams& p, const Tensor2D& attended,
                                    const TagFeed& feed) {
  const std::size_t L = attended.rows();
  const std::size_t Da = attended.cols();
  const std::size_t Dt = p.tag_embedding.cols();
  const std::size_t H = p.dec.hidden();
  DecoderTrace tr;
  tr.fed_states.resize(L);
  tr.steps.resize(L);
  tr.emissions = Tensor2D(L, kNumTags);
  Vec h(H, 0.0), c(H, 0.0), x(Da + Dt);
  std::size_t state = kStart;
  for (std::size_t t = 0; t < L; ++t) {
    if (t > 0) state = feed(t, tr.emissions.row(t - 1), state);
    tr.fed_states[t] = state;
    auto a = attended.row(t);
    std::copy(a.begin(), a.end(), x.begin());
    auto te = p.tag_embedding.row(state);
    std::copy(te.begin(), te.end(), x.begin() + Da);
    tr.steps[t] = lstm_step(p.dec, x, h, c);
    h = tr.steps[t].h;
    c = tr.steps[t].c;
    for (std::size_t k = 0; k < kNumTags; ++k) {
      double acc = p.emission_bias(k, 0);
      auto w = p.emission_proj.row(k);
      for (std::size_t j = 0; j < H; ++j) acc += w[j] * h[j];
      tr.emissions(t, k) = acc;
    }
  }
  return tr;
}

inline TagFeed teacher_forced_feed(std::span<const Tag> gold) {
  return [gold](std::size_t t, std::span<const double>, std::size_t) {
    return index(gold[t - 1]);
  };
}

// Argmax of the previous step's emissions over tags reachable from the state
// chosen before it; lowest index wins ties.
inline TagFeed greedy_feed() {
  return [](std::size_t, std::span<const double> prev, std::size_t prev_state) {
    std::size_t best = kNumTags;
    for (std::size_t k = 0; k < kNumTags; ++k) {
      if (!transition_allowed(prev_state, k)) continue;
      if (best == kNumTags || prev[k] > prev[best]) best = k;
    }
    return best;
  };
}

inline DecoderTrace decode_sentence_greedy(const ModelParams& p, const Tensor2D& attended) {
  return decode_sentence(p, attended, greedy_feed());
}

// Which previous tag the decoder sees while training. Greedy is the inference
// feed, so the model never learns to lean on gold tags it will not get.
enum class DecoderFeed { kTeacher, kGreedy };

struct SentenceTrace {
  std::vector<std::size_t> indices;
  EncoderTrace encoder;
  AttentionCache attention;
  DecoderTrace decoder;
};

inline SentenceTrace forward_sentence(const ModelParams& p, std::span<const std::size_t> indices,
                                      std::span<const Tag> gold,
                                      DecoderFeed feed = DecoderFeed::kTeacher) {
  if (indices.empty()) throw InputError("forward: empty sentence");
  if (gold.size() != indices.size()) {
    throw InputError("forward: " + std::to_string(gold.size()) + " tags for " +
                     std::to_string(indices.size()) + " tokens");
  }
  SentenceTrace tr;
  tr.indices.assign(indices.begin(), indices.end());
  tr.encoder = encode_sentence(p, indices);
  tr.attention = attention_forward(tr.encoder.states, p.attn_query, p.attn_key, p.attn_value);
  tr.decoder = decode_sentence(
      p, tr.attention.output, feed == DecoderFeed::kTeacher ? teacher_forced_feed(gold) : greedy_feed());
  return tr;
}

// Emissions for an unlabelled sentence, using the greedy previous-tag feed.
inline Tensor2D infer_emissions(const ModelParams& p, std::span<const std::size_t> indices) {
  if (indices.empty()) throw InputError("infer: empty sentence");
  auto enc = encode_sentence(p, indices);
  auto att = attention_forward(enc.states, p.attn_query, p.attn_key, p.attn_value);
  return decode_sentence_greedy(p, att.output).emissions;
}

inline std::vector<Tag> predict_tags(const ModelParams& p, std::span<const std::size_t> indices) {
  if (indices.empty()) return {};
  return crf_viterbi(infer_emissions(p, indices), p.crf_transitions).tags;
}

// Backpropagates dL/d(emissions) and dL/d(transitions) through the whole model
// into `g`.
inline void backward_sentence(const ModelParams& p, const SentenceTrace& tr,
                              const Tensor2D& d_emissions, const Tensor2D& d_transitions,
                              ModelParams& g) {
  const std::size_t L = tr.indices.size();
  const std::size_t Hd = p.dec.hidden();
  const std::size_t Da = p.attn_query.rows();
  const std::size_t He = p.enc_fwd.hidden();

  g.crf_transitions += d_transitions;

  // Emission projection and decoder LSTM.
  Tensor2D d_attended(L, Da);
  Vec dh_next(Hd, 0.0), dc_next(Hd, 0.0), dh(Hd);
  for (std::size_t t = L; t-- > 0;) {
    const auto& step = tr.decoder.steps[t];
    for (std::size_t j = 0; j < Hd; ++j) dh[j] = dh_next[j];
    for (std::size_t k = 0; k < kNumTags; ++k) {
      const double de = d_emissions(t, k);
      if (de == 0.0) continue;
      g.emission_bias(k, 0) += de;
      auto gw = g.emission_proj.row(k);
      auto w = p.emission_proj.row(k);
      for (std::size_t j = 0; j < Hd; ++j) {
        gw[j] += de * step.h[j];
        dh[j] += de * w[j];
      }
    }
    auto sg = lstm_step_backward(p.dec, step, dh, dc_next, g.dec);
    std::copy(sg.dx.begin(), sg.dx.begin() + Da, d_attended.row(t).begin());
    auto gte = g.tag_embedding.row(tr.decoder.fed_states[t]);
    for (std::size_t j = 0; j < gte.size(); ++j) gte[j] += sg.dx[Da + j];
    dh_next = std::move(sg.dh_prev);
    dc_next = std::move(sg.dc_prev);
  }

  Tensor2D d_states = attention_backward(tr.attention, d_attended, p.attn_query, p.attn_key,
                                         p.attn_value, g.attn_query, g.attn_key, g.attn_value);

  // BiLSTM: the forward cell unrolls right to left, the backward cell left to right.
  Tensor2D d_inputs(L, p.embedding.dim());
  Vec dhe(He);
  dh_next.assign(He, 0.0);
  dc_next.assign(He, 0.0);
  for (std::size_t t = L; t-- > 0;) {
    for (std::size_t j = 0; j < He; ++j) dhe[j] = d_states(t, j) + dh_next[j];
    auto sg = lstm_step_backward(p.enc_fwd, tr.encoder.fwd[t], dhe, dc_next, g.enc_fwd);
    auto row = d_inputs.row(t);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += sg.dx[j];
    dh_next = std::move(sg.dh_prev);
    dc_next = std::move(sg.dc_prev);
  }
  dh_next.assign(He, 0.0);
  dc_next.assign(He, 0.0);
  for (std::size_t t = 0; t < L; ++t) {
    for (std::size_t j = 0; j < He; ++j) dhe[j] = d_states(t, He + j) + dh_next[j];
    auto sg = lstm_step_backward(p.enc_bwd, tr.encoder.bwd[t], dhe, dc_next, g.enc_bwd);
    auto row = d_inputs.row(t);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += sg.dx[j];
    dh_next = std::move(sg.dh_prev);
    dc_next = std::move(sg.dc_prev);
  }

  for (std::size_t t = 0; t < L; ++t) {
    if (tr.indices[t] == Vocabulary::kPad) continue;
    auto dst = g.embedding.matrix.row(tr.indices[t]);
    auto src = d_inputs.row(t);
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
  }
}

// CRF negative log-likelihood of one sentence; adds its gradient into `grads`
// when provided.
inline double sentence_loss(const ModelParams& p, std::span<const std::size_t> indices,
                            std::span<const Tag> gold, ModelParams* grads = nullptr,
                            DecoderFeed feed = DecoderFeed::kTeacher) {
  auto tr = forward_sentence(p, indices, gold, feed);
  if (!grads) return crf_nll(tr.decoder.emissions, p.crf_transitions, gold);
  auto lg = crf_nll_grad(tr.decoder.emissions, p.crf_transitions, gold);
  backward_sentence(p, tr, lg.d_emissions, lg.d_transitions, *grads);
  return lg.loss;
}

// ---------------------------------------------------------------------------
// Padded-batch interface. Index and tag matrices are batch x width, right
// padded; `lengths` carries the true sizes. Pad positions never enter any
// computation and come back as zero rows.

struct PaddedBatch {
  std::vector<std::vector<std::size_t>> indices;
  std::vector<std::vector<Tag>> tags;
  std::vector<std::size_t> lengths;
  std::size_t width = 0;

  std::size_t size() const { return lengths.size(); }
};

namespace detail {

inline void check_lengths(const std::vector<std::vector<std::size_t>>& indices,
                          const std::vector<std::size_t>& lengths) {
  if (indices.size() != lengths.size()) {
    throw InputError("batch: " + std::to_string(indices.size()) + " rows but " +
                     std::to_string(lengths.size()) + " lengths");
  }
  for (std::size_t b = 0; b < lengths.size(); ++b) {
    if (lengths[b] > indices[b].size()) {
      throw InputError("batch: length " + std::to_string(lengths[b]) + " of row " +
                       std::to_string(b) + " exceeds padded width " +
                       std::to_string(indices[b].size()));
    }
  }
}

inline Tensor2D pad_rows(const Tensor2D& t, std::size_t width) {
  Tensor2D out(width, t.cols());
  std::copy(t.flat().begin(), t.flat().end(), out.flat().begin());
  return out;
}

inline Tensor2D real_rows(const Tensor2D& t, std::size_t n) {
  Tensor2D out(n, t.cols());
  std::copy(t.flat().begin(), t.flat().begin() + static_cast<std::ptrdiff_t>(n * t.cols()),
            out.flat().begin());
  return out;
}

}  // namespace detail

// batch x (L x 2H_enc). Position t holds [forward state after tokens 0..t |
// backward state after tokens len-1..t].
inline std::vector<Tensor2D> bilstm_encode(const ModelParams& p,
                                           const std::vector<std::vector<std::size_t>>& indices,
                                           const std::vector<std::size_t>& lengths) {
  detail::check_lengths(indices, lengths);
  std::vector<Tensor2D> out;
  for (std::size_t b = 0; b < lengths.size(); ++b) {
    const std::size_t width = indices[b].size();
    if (lengths[b] == 0) {
      out.emplace_back(width, 2 * p.enc_fwd.hidden());
      continue;
    }
    auto tr = encode_sentence(p, std::span(indices[b]).first(lengths[b]));
    out.push_back(detail::pad_rows(tr.states, width));
  }
  return out;
}

inline std::vector<Tensor2D> self_attention(const ModelParams& p,
                                            const std::vector<Tensor2D>& enc_states,
                                            const std::vector<std::size_t>& lengths) {
  if (enc_states.size() != lengths.size()) throw InputError("self_attention: batch size mismatch");
  std::vector<Tensor2D> out;
  for (std::size_t b = 0; b < lengths.size(); ++b) {
    const std::size_t width = enc_states[b].rows();
    if (lengths[b] > width) throw InputError("self_attention: length exceeds padded width");
    if (enc_states[b].cols() != p.attn_query.cols()) {
      throw ShapeError("self_attention: states " + enc_states[b].shape() + " vs projection " +
                       p.attn_query.shape());
    }
    if (lengths[b] == 0) {
      out.emplace_back(width, p.attn_query.rows());
      continue;
    }
    auto c = attention_forward(detail::real_rows(enc_states[b], lengths[b]), p.attn_query,
                               p.attn_key, p.attn_value);
    out.push_back(detail::pad_rows(c.output, width));
  }
  return out;
}

// Attention weights (L_i x L_i, unpadded) for inspection.
inline Tensor2D attention_weights(const ModelParams& p, const Tensor2D& enc_states,
                                  std::size_t length) {
  return attention_forward(detail::real_rows(enc_states, length), p.attn_query, p.attn_key,
                           p.attn_value)
      .weights;
}

inline std::vector<Tensor2D> decode_tags_training(const ModelParams& p,
                                                  const std::vector<Tensor2D>& attended,
                                                  const std::vector<std::vector<Tag>>& gold,
                                                  const std::vector<std::size_t>& lengths) {
  if (attended.size() != lengths.size() || gold.size() != lengths.size()) {
    throw InputError("decode_tags_training: batch size mismatch");
  }
  std::vector<Tensor2D> out;
  for (std::size_t b = 0; b < lengths.size(); ++b) {
    const std::size_t width = attended[b].rows();
    if (lengths[b] > width || gold[b].size() < lengths[b]) {
      throw InputError("decode_tags_training: length exceeds padded width");
    }
    for (std::size_t t = 0; t < lengths[b]; ++t) {
      const auto v = static_cast<int>(gold[b][t]);
      if (v < 0 || v >= static_cast<int>(kNumTags)) {
        throw InputError("decode_tags_training: invalid gold tag index " + std::to_string(v) +
                         " at row " + std::to_string(b) + ", step " + std::to_string(t));
      }
    }
    if (lengths[b] == 0) {
      out.emplace_back(width, kNumTags);
      continue;
    }
    auto tr = decode_sentence(p, detail::real_rows(attended[b], lengths[b]),
                              teacher_forced_feed(std::span(gold[b]).first(lengths[b])));
    out.push_back(detail::pad_rows(tr.emissions, width));
  }
  return out;
}

inline std::vector<Tensor2D> decode_tags_inference(const ModelParams& p,
                                                   const std::vector<Tensor2D>& attended,
                                                   const std::vector<std::size_t>& lengths) {
  if (attended.size() != lengths.size()) {
    throw InputError("decode_tags_inference: batch size mismatch");
  }
  std::vector<Tensor2D> out;
  for (std::size_t b = 0; b < lengths.size(); ++b) {
    const std::size_t width = attended[b].rows();
    if (lengths[b] > width) throw InputError("decode_tags_inference: length exceeds width");
    if (lengths[b] == 0) {
      out.emplace_back(width, kNumTags);
      continue;
    }
    auto tr = decode_sentence_greedy(p, detail::real_rows(attended[b], lengths[b]));
    out.push_back(detail::pad_rows(tr.emissions, width));
  }
  return out;
}

// Sum of per-sentence CRF losses over the batch (callers average). Gradients
// of the same sum are added into `grads` when provided, in row order.
inline double batch_loss(const ModelParams& p, const PaddedBatch& batch,
                         ModelParams* grads = nullptr,
                         DecoderFeed feed = DecoderFeed::kTeacher) {
  detail::check_lengths(batch.indices, batch.lengths);
  double total = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const std::size_t n = batch.lengths[b];
    total += sentence_loss(p, std::span(batch.indices[b]).first(n),
                           std::span(batch.tags[b]).first(n), grads, feed);
  }
  return total;
}

// Viterbi decode of every row; tag lists have the true lengths.
inline std::vector<std::vector<Tag>> batch_predict(const ModelParams& p,
                                                   const PaddedBatch& batch) {
  detail::check_lengths(batch.indices, batch.lengths);
  std::vector<std::vector<Tag>> out;
  for (std::size_t b = 0; b < batch.size(); ++b)
    out.push_back(predict_tags(p, std::span(batch.indices[b]).first(batch.lengths[b])));
  return out;
}

}  // namespace reqx
