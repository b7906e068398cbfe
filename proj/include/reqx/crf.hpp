#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "reqx/error.hpp"
#include "reqx/tags.hpp"
#include "reqx/tensor.hpp"

namespace reqx {

// Linear-chain CRF over the three BIO tags plus virtual start/stop states.
// Emissions are L x 3; transitions are 5 x 5 indexed [from][to]. A path
// y_0..y_{L-1} scores
//   T[start][y_0] + sum_t E[t][y_t] + sum_t T[y_{t-1}][y_t] + T[y_{L-1}][stop].

inline constexpr double kForbiddenScore = -1e4;

inline void clamp_forbidden(Tensor2D& transitions) {
  for (std::size_t i = 0; i < kNumStates; ++i)
    for (std::size_t j = 0; j < kNumStates; ++j)
      if (!transition_allowed(i, j)) transitions(i, j) = kForbiddenScore;
}

inline Tensor2D zero_transitions() {
  Tensor2D t(kNumStates, kNumStates);
  clamp_forbidden(t);
  return t;
}

namespace detail {

inline void check_crf_shapes(const Tensor2D& emissions, const Tensor2D& transitions) {
  if (emissions.rows() == 0) throw InputError("crf: empty emission sequence");
  if (emissions.cols() != kNumTags) {
    throw ShapeError("crf: emissions must have 3 columns, got " + emissions.shape());
  }
  if (transitions.rows() != kNumStates || transitions.cols() != kNumStates) {
    throw ShapeError("crf: transitions must be 5x5, got " + transitions.shape());
  }
}

// alpha[t][j]: log-sum of all prefixes ending in tag j at step t.
inline std::vector<std::array<double, kNumTags>> forward_scores(const Tensor2D& e,
                                                                const Tensor2D& tr) {
  const std::size_t L = e.rows();
  std::vector<std::array<double, kNumTags>> alpha(L);
  for (std::size_t j = 0; j < kNumTags; ++j) alpha[0][j] = tr(kStart, j) + e(0, j);
  for (std::size_t t = 1; t < L; ++t) {
    for (std::size_t j = 0; j < kNumTags; ++j) {
      std::array<double, kNumTags> terms;
      for (std::size_t i = 0; i < kNumTags; ++i) terms[i] = alpha[t - 1][i] + tr(i, j);
      alpha[t][j] = log_sum_exp(terms) + e(t, j);
    }
  }
  return alpha;
}

// beta[t][i]: log-sum of all suffixes after step t given tag i at step t.
inline std::vector<std::array<double, kNumTags>> backward_scores(const Tensor2D& e,
                                                                 const Tensor2D& tr) {
  const std::size_t L = e.rows();
  std::vector<std::array<double, kNumTags>> beta(L);
  for (std::size_t i = 0; i < kNumTags; ++i) beta[L - 1][i] = tr(i, kStop);
  for (std::size_t t = L - 1; t-- > 0;) {
    for (std::size_t i = 0; i < kNumTags; ++i) {
      std::array<double, kNumTags> terms;
      for (std::size_t j = 0; j < kNumTags; ++j) terms[j] = tr(i, j) + e(t + 1, j) + beta[t + 1][j];
      beta[t][i] = log_sum_exp(terms);
    }
  }
  return beta;
}

inline double final_log_sum(const std::array<double, kNumTags>& last, const Tensor2D& tr) {
  std::array<double, kNumTags> terms;
  for (std::size_t j = 0; j < kNumTags; ++j) terms[j] = last[j] + tr(j, kStop);
  return log_sum_exp(terms);
}

}  // namespace detail

inline double crf_log_partition(const Tensor2D& emissions, const Tensor2D& transitions) {
  detail::check_crf_shapes(emissions, transitions);
  auto alpha = detail::forward_scores(emissions, transitions);
  return detail::final_log_sum(alpha.back(), transitions);
}

inline double crf_path_score(const Tensor2D& emissions, const Tensor2D& transitions,
                             std::span<const Tag> tags) {
  detail::check_crf_shapes(emissions, transitions);
  if (tags.size() != emissions.rows()) {
    throw ShapeError("crf_path_score: " + std::to_string(tags.size()) + " tags for " +
                     std::to_string(emissions.rows()) + " emission rows");
  }
  double s = 0.0;
  std::size_t prev = kStart;
  for (std::size_t t = 0; t < tags.size(); ++t) {
    const std::size_t y = index(tags[t]);
    s += transitions(prev, y) + emissions(t, y);
    prev = y;
  }
  return s + transitions(prev, kStop);
}

struct ViterbiResult {
  std::vector<Tag> tags;
  double score = 0.0;
};

// Exact best path. Ties go to the lower tag index, both for the final tag and
// for every back-pointer.
inline ViterbiResult crf_viterbi(const Tensor2D& emissions, const Tensor2D& transitions) {
  detail::check_crf_shapes(emissions, transitions);
  const std::size_t L = emissions.rows();
  std::vector<std::array<double, kNumTags>> delta(L);
  std::vector<std::array<std::size_t, kNumTags>> back(L);
  for (std::size_t j = 0; j < kNumTags; ++j) delta[0][j] = transitions(kStart, j) + emissions(0, j);
  for (std::size_t t = 1; t < L; ++t) {
    for (std::size_t j = 0; j < kNumTags; ++j) {
      std::size_t best = 0;
      double best_score = delta[t - 1][0] + transitions(0, j);
      for (std::size_t i = 1; i < kNumTags; ++i) {
        const double s = delta[t - 1][i] + transitions(i, j);
        if (s > best_score) {
          best_score = s;
          best = i;
        }
      }
      delta[t][j] = best_score + emissions(t, j);
      back[t][j] = best;
    }
  }
  std::size_t last = 0;
  double best_score = delta[L - 1][0] + transitions(0, kStop);
  for (std::size_t j = 1; j < kNumTags; ++j) {
    const double s = delta[L - 1][j] + transitions(j, kStop);
    if (s > best_score) {
      best_score = s;
      last = j;
    }
  }
  ViterbiResult r;
  r.score = best_score;
  r.tags.resize(L);
  std::size_t cur = last;
  for (std::size_t t = L; t-- > 0;) {
    r.tags[t] = static_cast<Tag>(cur);
    if (t > 0) cur = back[t][cur];
  }
  return r;
}

inline void require_valid_gold(std::span<const Tag> gold) {
  if (auto bad = first_bio_violation(gold)) {
    throw DataError("crf: gold tags '" + join_tags(gold) + "' break BIO at position " +
                    std::to_string(*bad));
  }
}

inline double crf_nll(const Tensor2D& emissions, const Tensor2D& transitions,
                      std::span<const Tag> gold) {
  require_valid_gold(gold);
  return crf_log_partition(emissions, transitions) - crf_path_score(emissions, transitions, gold);
}

struct CrfLossGrad {
  double loss = 0.0;
  Tensor2D d_emissions;    // L x 3
  Tensor2D d_transitions;  // 5 x 5, zero at forbidden entries
};

// NLL together with its gradient: model marginals minus gold indicator counts.
inline CrfLossGrad crf_nll_grad(const Tensor2D& emissions, const Tensor2D& transitions,
                                std::span<const Tag> gold) {
  require_valid_gold(gold);
  detail::check_crf_shapes(emissions, transitions);
  const std::size_t L = emissions.rows();
  if (gold.size() != L) throw ShapeError("crf_nll_grad: gold length mismatch");

  auto alpha = detail::forward_scores(emissions, transitions);
  auto beta = detail::backward_scores(emissions, transitions);
  const double log_z = detail::final_log_sum(alpha.back(), transitions);

  CrfLossGrad out;
  out.loss = log_z - crf_path_score(emissions, transitions, gold);
  out.d_emissions = Tensor2D(L, kNumTags);
  out.d_transitions = Tensor2D(kNumStates, kNumStates);

  for (std::size_t t = 0; t < L; ++t)
    for (std::size_t j = 0; j < kNumTags; ++j)
      out.d_emissions(t, j) = std::exp(alpha[t][j] + beta[t][j] - log_z);
  for (std::size_t j = 0; j < kNumTags; ++j) {
    out.d_transitions(kStart, j) += out.d_emissions(0, j);
    out.d_transitions(j, kStop) += out.d_emissions(L - 1, j);
  }
  for (std::size_t t = 0; t + 1 < L; ++t)
    for (std::size_t i = 0; i < kNumTags; ++i)
      for (std::size_t j = 0; j < kNumTags; ++j)
        out.d_transitions(i, j) += std::exp(alpha[t][i] + transitions(i, j) +
                                            emissions(t + 1, j) + beta[t + 1][j] - log_z);

  std::size_t prev = kStart;
  for (std::size_t t = 0; t < L; ++t) {
    const std::size_t y = index(gold[t]);
    out.d_emissions(t, y) -= 1.0;
    out.d_transitions(prev, y) -= 1.0;
    prev = y;
  }
  out.d_transitions(prev, kStop) -= 1.0;

  for (std::size_t i = 0; i < kNumStates; ++i)
    for (std::size_t j = 0; j < kNumStates; ++j)
      if (!transition_allowed(i, j)) out.d_transitions(i, j) = 0.0;
  return out;
}

}  // namespace reqx
