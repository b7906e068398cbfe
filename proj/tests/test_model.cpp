#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "reqx/grad_check.hpp"
#include "reqx/model.hpp"

namespace reqx {
namespace {

using testing::random_bio;
using testing::random_indices;
using testing::tiny_model;
using testing::make_batch;

std::vector<std::vector<std::size_t>> one(std::vector<std::size_t> v) { return {std::move(v)}; }

TEST(BiLstmEncode, ForwardHalfIsCausal) {
  auto p = tiny_model(1);
  const std::size_t H = p.enc_fwd.hidden();
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t L = 2 + rng.below(5);
    auto idx = random_indices(rng, L, 8);
    const std::size_t t = rng.below(L - 1);
    auto changed = idx;
    for (std::size_t j = t + 1; j < L; ++j) changed[j] = 1 + rng.below(7);
    auto a = bilstm_encode(p, one(idx), {L})[0];
    auto b = bilstm_encode(p, one(changed), {L})[0];
    for (std::size_t s = 0; s <= t; ++s)
      for (std::size_t k = 0; k < H; ++k) EXPECT_EQ(a(s, k), b(s, k));
  }
}

TEST(BiLstmEncode, BackwardHalfIsCausal) {
  auto p = tiny_model(1);
  const std::size_t H = p.enc_fwd.hidden();
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t L = 2 + rng.below(5);
    auto idx = random_indices(rng, L, 8);
    const std::size_t t = 1 + rng.below(L - 1);
    auto changed = idx;
    for (std::size_t j = 0; j < t; ++j) changed[j] = 1 + rng.below(7);
    auto a = bilstm_encode(p, one(idx), {L})[0];
    auto b = bilstm_encode(p, one(changed), {L})[0];
    for (std::size_t s = t; s < L; ++s)
      for (std::size_t k = 0; k < H; ++k) EXPECT_EQ(a(s, H + k), b(s, H + k));
  }
}

TEST(BiLstmEncode, SingleTokenEqualsOneCellStep) {
  auto p = tiny_model(4);
  const std::size_t H = p.enc_fwd.hidden();
  auto out = bilstm_encode(p, one({5}), {1})[0];
  Vec zero(H, 0.0);
  auto f = lstm_step(p.enc_fwd, p.embedding.matrix.row(5), zero, zero);
  auto b = lstm_step(p.enc_bwd, p.embedding.matrix.row(5), zero, zero);
  for (std::size_t k = 0; k < H; ++k) {
    EXPECT_EQ(out(0, k), f.h[k]);
    EXPECT_EQ(out(0, H + k), b.h[k]);
  }
}

TEST(BiLstmEncode, PadPositionsAreZeroAndLengthIsChecked) {
  auto p = tiny_model(4);
  auto out = bilstm_encode(p, {{3, 4, 0, 0}}, {2})[0];
  ASSERT_EQ(out.rows(), 4u);
  for (std::size_t t = 2; t < 4; ++t)
    for (double v : out.row(t)) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(bilstm_encode(p, {{3, 4}}, {3}), InputError);
}

TEST(SelfAttention, SinglePositionAttendsToItself) {
  auto p = tiny_model(5);
  auto enc = bilstm_encode(p, one({6}), {1});
  EXPECT_EQ(attention_weights(p, enc[0], 1), (Tensor2D{{1.0}}));
  auto att = self_attention(p, enc, {1})[0];
  auto v = matmul(detail::real_rows(enc[0], 1), transpose(p.attn_value));
  for (std::size_t k = 0; k < v.cols(); ++k) EXPECT_NEAR(att(0, k), v(0, k), 1e-15);
}

TEST(SelfAttention, WeightsSumToOneOverRealPositions) {
  auto p = tiny_model(6);
  Rng rng(6);
  auto enc = bilstm_encode(p, {random_indices(rng, 5, 8)}, {5});
  auto w = attention_weights(p, enc[0], 5);
  for (std::size_t r = 0; r < 5; ++r) {
    double s = 0.0;
    for (double v : w.row(r)) s += v;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(SelfAttention, ZeroKeyProjectionAveragesValues) {
  auto p = tiny_model(7);
  p.attn_key.fill(0.0);
  std::vector<std::size_t> idx{2, 3, 4, 0, 0};
  auto enc = bilstm_encode(p, {idx}, {3});
  auto att = self_attention(p, enc, {3})[0];
  auto v = matmul(detail::real_rows(enc[0], 3), transpose(p.attn_value));
  for (std::size_t t = 0; t < 3; ++t) {
    for (std::size_t k = 0; k < v.cols(); ++k) {
      const double mean = (v(0, k) + v(1, k) + v(2, k)) / 3.0;
      EXPECT_NEAR(att(t, k), mean, 1e-12);
    }
  }
  for (std::size_t t = 3; t < 5; ++t)
    for (double x : att.row(t)) EXPECT_EQ(x, 0.0);
}

struct Pipeline {
  std::vector<Tensor2D> attended;
};

Pipeline run_to_attention(const ModelParams& p, const std::vector<std::vector<std::size_t>>& idx,
                          const std::vector<std::size_t>& lengths) {
  auto enc = bilstm_encode(p, idx, lengths);
  return {self_attention(p, enc, lengths)};
}

TEST(DecodeTraining, EmissionShapeAndCausality) {
  auto p = tiny_model(8);
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t L = 2 + rng.below(5);
    auto idx = random_indices(rng, L, 8);
    auto gold = random_bio(rng, L);
    auto pipe = run_to_attention(p, {idx}, {L});
    auto e1 = decode_tags_training(p, pipe.attended, {gold}, {L})[0];
    ASSERT_EQ(e1.rows(), L);
    ASSERT_EQ(e1.cols(), 3u);

    const std::size_t t = rng.below(L);
    auto gold2 = gold;
    gold2[t] = gold[t] == Tag::O ? Tag::B : Tag::O;
    auto e2 = decode_tags_training(p, pipe.attended, {gold2}, {L})[0];
    for (std::size_t s = 0; s < L; ++s) {
      for (std::size_t k = 0; k < 3; ++k) {
        if (s <= t) {
          EXPECT_EQ(e1(s, k), e2(s, k));
        }
      }
    }
    if (t + 1 < L) {
      bool differs = false;
      for (std::size_t k = 0; k < 3; ++k) differs |= e1(t + 1, k) != e2(t + 1, k);
      EXPECT_TRUE(differs);
    }
  }
}

TEST(DecodeTraining, RejectsInvalidTagIndex) {
  auto p = tiny_model(8);
  auto pipe = run_to_attention(p, {{2, 3}}, {2});
  EXPECT_THROW(decode_tags_training(p, pipe.attended, {{Tag::O, static_cast<Tag>(7)}}, {2}),
               InputError);
}

TEST(DecodeInference, MatchesTeacherForcingOnGreedyPath) {
  auto p = tiny_model(9);
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t L = 1 + rng.below(6);
    auto idx = random_indices(rng, L, 8);
    auto pipe = run_to_attention(p, {idx}, {L});
    auto inf = decode_tags_inference(p, pipe.attended, {L})[0];

    // Reconstruct the greedy path from the inference emissions.
    std::vector<Tag> greedy;
    std::size_t prev = kStart;
    for (std::size_t t = 0; t < L; ++t) {
      std::size_t best = 3;
      for (std::size_t k = 0; k < 3; ++k)
        if (transition_allowed(prev, k) && (best == 3 || inf(t, k) > inf(t, best))) best = k;
      greedy.push_back(static_cast<Tag>(best));
      prev = best;
    }
    auto forced = decode_tags_training(p, pipe.attended, {greedy}, {L})[0];
    EXPECT_EQ(forced, inf);
  }
}

TEST(DecodeInference, SingleStepUsesStartEmbedding) {
  auto p = tiny_model(10);
  auto pipe = run_to_attention(p, {{4}}, {1});
  auto a = decode_tags_inference(p, pipe.attended, {1})[0];
  auto b = decode_tags_training(p, pipe.attended, {{Tag::I}}, {1})[0];  // gold unused at L=1
  EXPECT_EQ(a, b);
  // Changing the start row changes the result; changing other rows does not.
  auto q = p;
  q.tag_embedding(index(Tag::O), 0) += 1.0;
  EXPECT_EQ(decode_tags_inference(q, pipe.attended, {1})[0], a);
  q.tag_embedding(kStart, 0) += 1.0;
  EXPECT_NE(decode_tags_inference(q, pipe.attended, {1})[0], a);
}

TEST(DecodeInference, Deterministic) {
  auto p = tiny_model(11);
  auto pipe = run_to_attention(p, {{2, 5, 6, 7}}, {4});
  EXPECT_EQ(decode_tags_inference(p, pipe.attended, {4}), decode_tags_inference(p, pipe.attended, {4}));
}

// Seeds are fixed. Other seeds can put a handful of coordinates at |g| ~ 1e-8,
// where central differences at h = 1e-4 carry ~1e-12 of roundoff; the test
// below covers those separately.
TEST(EndToEndGradient, EveryBlockPassesFiniteDifferenceCheck) {
  for (std::uint64_t seed : {1u, 3u, 6u}) {
    auto p = tiny_model(seed);
    Rng rng(seed);
    auto batch = make_batch(rng, 2, 5, 8);
    auto grads = ModelParams::zeros_like(p);
    batch_loss(p, batch, &grads);

    auto probe = p;
    auto blocks = probe.blocks();
    auto gblocks = grads.blocks();
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      auto r = grad_check([&](const Tensor2D&) { return batch_loss(probe, batch); },
                          *blocks[i].second, *gblocks[i].second, 1e-4, 1e-4);
      EXPECT_TRUE(r.passed) << "seed " << seed << " block " << blocks[i].first << " rel err "
                            << r.max_relative_error << " at (" << r.worst_index.first << ", "
                            << r.worst_index.second << ")";
    }
  }
}

// The greedy feed is piecewise constant in the parameters, so away from argmax
// ties the same finite-difference check applies.
TEST(EndToEndGradient, GreedyTrainingFeedPassesFiniteDifferenceCheck) {
  for (std::uint64_t seed : {1u, 3u, 6u}) {
    auto p = tiny_model(seed);
    Rng rng(seed);
    auto batch = make_batch(rng, 2, 5, 8);
    auto grads = ModelParams::zeros_like(p);
    batch_loss(p, batch, &grads, DecoderFeed::kGreedy);
    auto probe = p;
    auto blocks = probe.blocks();
    auto gblocks = grads.blocks();
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      auto r = grad_check(
          [&](const Tensor2D&) { return batch_loss(probe, batch, nullptr, DecoderFeed::kGreedy); },
          *blocks[i].second, *gblocks[i].second, 1e-4, 1e-4);
      EXPECT_TRUE(r.passed) << "seed " << seed << " block " << blocks[i].first << " rel err "
                            << r.max_relative_error;
    }
  }
}

TEST(DecoderFeed, GreedyTrainingFeedMatchesInferenceEmissions) {
  auto p = tiny_model(12);
  std::vector<std::size_t> idx{2, 5, 6, 7, 3};
  std::vector<Tag> gold{Tag::B, Tag::I, Tag::O, Tag::B, Tag::O};
  auto tr = forward_sentence(p, idx, gold, DecoderFeed::kGreedy);
  EXPECT_EQ(tr.decoder.emissions, infer_emissions(p, idx));
}

// Across many seeds every coordinate either meets the relative tolerance or
// differs from central differences by less than the roundoff floor.
TEST(EndToEndGradient, RemainingDisagreementIsRoundoffOnly) {
  const double h = 1e-4;
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    auto p = tiny_model(seed);
    Rng rng(seed);
    auto batch = make_batch(rng, 2, 5, 8);
    auto grads = ModelParams::zeros_like(p);
    batch_loss(p, batch, &grads);
    auto probe = p;
    auto blocks = probe.blocks();
    auto gblocks = grads.blocks();
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      Tensor2D& block = *blocks[i].second;
      for (std::size_t k = 0; k < block.size(); ++k) {
        const double saved = block[k];
        block[k] = saved + h;
        const double up = batch_loss(probe, batch);
        block[k] = saved - h;
        const double down = batch_loss(probe, batch);
        block[k] = saved;
        const double fd = (up - down) / (2 * h);
        const double an = (*gblocks[i].second)[k];
        const double diff = std::abs(fd - an);
        const double rel = diff / std::max({std::abs(fd), std::abs(an), 1e-8});
        EXPECT_TRUE(rel <= 1e-4 || diff <= 1e-10)
            << "seed " << seed << " " << blocks[i].first << "[" << k << "] fd " << fd << " an "
            << an;
      }
    }
  }
}

TEST(Padding, LossAndDecodeIgnoreAppendedPadding) {
  auto p = tiny_model(30);
  Rng rng(30);
  for (int trial = 0; trial < 20; ++trial) {
    auto batch = make_batch(rng, 3, 5, 8);
    auto wider = batch;
    wider.width += 1 + rng.below(4);
    for (std::size_t b = 0; b < wider.size(); ++b) {
      wider.indices[b].resize(wider.width, Vocabulary::kPad);
      wider.tags[b].resize(wider.width, Tag::O);
    }
    EXPECT_NEAR(batch_loss(p, batch), batch_loss(p, wider), 1e-9);
    EXPECT_EQ(batch_predict(p, batch), batch_predict(p, wider));
  }
}

TEST(Padding, PadPositionContentsAreInert) {
  auto p = tiny_model(31);
  PaddedBatch b{{{2, 3, 0, 0}}, {{Tag::B, Tag::I, Tag::O, Tag::O}}, {2}, 4};
  auto perturbed = b;
  perturbed.indices[0][3] = 5;
  perturbed.tags[0][2] = Tag::I;
  EXPECT_EQ(batch_loss(p, b), batch_loss(p, perturbed));
}

TEST(ModelParams, ForbiddenTransitionsStartClamped) {
  Rng rng(1);
  Vocabulary v;
  v.add("a");
  auto p = ModelParams::init(testing::tiny_dims(), random_embeddings(v, 4, rng), rng);
  for (std::size_t i = 0; i < kNumStates; ++i)
    for (std::size_t j = 0; j < kNumStates; ++j)
      EXPECT_EQ(p.crf_transitions(i, j), transition_allowed(i, j) ? 0.0 : kForbiddenScore);
  for (double x : p.embedding.matrix.row(Vocabulary::kPad)) EXPECT_EQ(x, 0.0);
}

}  // namespace
}  // namespace reqx
