#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "reqx/corpus.hpp"
#include "reqx/embeddings.hpp"
#include "reqx/error.hpp"
#include "reqx/evaluation.hpp"
#include "reqx/model.hpp"
#include "reqx/random.hpp"
#include "reqx/vocabulary.hpp"

namespace reqx {

// ---------------------------------------------------------------------------
// Configuration

enum class PaddingMode { kGlobalMax, kBatchMax };

inline std::string to_string(PaddingMode m) {
  return m == PaddingMode::kGlobalMax ? "global_max" : "batch_max";
}

struct TrainConfig {
  double learning_rate = 0.001;
  std::size_t batch_size = 32;
  std::size_t epochs = 20;
  std::size_t runs_per_fold = 15;
  std::uint64_t seed = 42;
  PaddingMode padding_mode = PaddingMode::kGlobalMax;
  DecoderFeed training_feed = DecoderFeed::kTeacher;
  double clip_norm = 5.0;  // global L2 norm; 0 disables
  ModelDims dims;          // embedding_dim lives here
  std::string glove_path;  // empty: random embeddings
  bool freeze_embeddings = false;

  void validate() const {
    auto positive = [](const char* key, std::size_t v) {
      if (v < 1) throw ConfigError(std::string("config: ") + key + " must be >= 1");
    };
    if (!(learning_rate > 0) || !std::isfinite(learning_rate)) {
      throw ConfigError("config: learning_rate must be a positive number");
    }
    positive("batch_size", batch_size);
    positive("epochs", epochs);
    positive("runs_per_fold", runs_per_fold);
    positive("embedding_dim", dims.embedding_dim);
    positive("hidden_enc", dims.hidden_enc);
    positive("attention_dim", dims.attention_dim);
    positive("hidden_dec", dims.hidden_dec);
    positive("tag_dim", dims.tag_dim);
    if (!(clip_norm >= 0) || !std::isfinite(clip_norm)) {
      throw ConfigError("config: clip_norm must be >= 0");
    }
  }

  // Every effective value, defaults included.
  nlohmann::json to_json() const {
    return {{"learning_rate", learning_rate},
            {"batch_size", batch_size},
            {"epochs", epochs},
            {"runs_per_fold", runs_per_fold},
            {"seed", seed},
            {"padding_mode", to_string(padding_mode)},
            {"training_feed", training_feed == DecoderFeed::kTeacher ? "teacher" : "greedy"},
            {"clip_norm", clip_norm},
            {"embedding_dim", dims.embedding_dim},
            {"hidden_enc", dims.hidden_enc},
            {"attention_dim", dims.attention_dim},
            {"hidden_dec", dims.hidden_dec},
            {"tag_dim", dims.tag_dim},
            {"glove_path", glove_path},
            {"freeze_embeddings", freeze_embeddings},
            {"adam_beta1", 0.9},
            {"adam_beta2", 0.999},
            {"adam_epsilon", 1e-8}};
  }

  void set(const std::string& key, const std::string& value, const std::string& where = "config");
};

inline constexpr const char* kConfigSchema = R"(Config file: one "key = value" per line, '#' starts a comment.
  learning_rate      float > 0            (default 0.001)
  batch_size         integer >= 1         (default 32)
  epochs             integer >= 1         (default 20)
  runs_per_fold      integer >= 1         (default 15)
  seed               unsigned integer     (default 42)
  padding_mode       global_max|batch_max (default global_max)
  training_feed      teacher|greedy       (default teacher; previous tag fed to the decoder)
  clip_norm          float >= 0, 0 = off  (default 5.0)
  embedding_dim      integer >= 1         (default 300)
  hidden_enc         integer >= 1         (default 128, per direction)
  attention_dim      integer >= 1         (default 256)
  hidden_dec         integer >= 1         (default 256)
  tag_dim            integer >= 1         (default 25)
  glove_path         path, empty = random (default empty)
  freeze_embeddings  true|false           (default false)
)";

namespace detail {

template <class T>
T parse_number(const std::string& key, const std::string& v, const std::string& where) {
  T out{};
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw ConfigError(where + ": " + key + " = '" + v + "' is not a valid number");
  }
  return out;
}

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace detail

inline void TrainConfig::set(const std::string& key, const std::string& value,
                             const std::string& where) {
  using detail::parse_number;
  if (key == "learning_rate") learning_rate = parse_number<double>(key, value, where);
  else if (key == "batch_size") batch_size = parse_number<std::size_t>(key, value, where);
  else if (key == "epochs") epochs = parse_number<std::size_t>(key, value, where);
  else if (key == "runs_per_fold") runs_per_fold = parse_number<std::size_t>(key, value, where);
  else if (key == "seed") seed = parse_number<std::uint64_t>(key, value, where);
  else if (key == "clip_norm") clip_norm = parse_number<double>(key, value, where);
  else if (key == "embedding_dim") dims.embedding_dim = parse_number<std::size_t>(key, value, where);
  else if (key == "hidden_enc") dims.hidden_enc = parse_number<std::size_t>(key, value, where);
  else if (key == "attention_dim") dims.attention_dim = parse_number<std::size_t>(key, value, where);
  else if (key == "hidden_dec") dims.hidden_dec = parse_number<std::size_t>(key, value, where);
  else if (key == "tag_dim") dims.tag_dim = parse_number<std::size_t>(key, value, where);
  else if (key == "glove_path") glove_path = value;
  else if (key == "padding_mode") {
    if (value == "global_max") padding_mode = PaddingMode::kGlobalMax;
    else if (value == "batch_max") padding_mode = PaddingMode::kBatchMax;
    else throw ConfigError(where + ": padding_mode must be global_max or batch_max, got '" + value + "'");
  } else if (key == "training_feed") {
    if (value == "teacher") training_feed = DecoderFeed::kTeacher;
    else if (value == "greedy") training_feed = DecoderFeed::kGreedy;
    else throw ConfigError(where + ": training_feed must be teacher or greedy, got '" + value + "'");
  } else if (key == "freeze_embeddings") {
    if (value == "true") freeze_embeddings = true;
    else if (value == "false") freeze_embeddings = false;
    else throw ConfigError(where + ": freeze_embeddings must be true or false");
  } else {
    throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

inline TrainConfig parse_config(std::istream& in, const std::string& source) {
  TrainConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    if (!seen.insert(key).second) throw ConfigError(where + ": duplicate key '" + key + "'");
    cfg.set(key, detail::trim(line.substr(eq + 1)), where);
  }
  cfg.validate();
  return cfg;
}

inline TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  return parse_config(in, path);
}

// ---------------------------------------------------------------------------
// Batching

inline PaddedBatch pad_batch(std::span<const TaggedSentence* const> sentences,
                             const Vocabulary& vocab, std::size_t pad_to) {
  PaddedBatch b;
  b.width = pad_to;
  for (const auto* s : sentences) {
    const std::size_t n = s->tokens.size();
    if (n > pad_to) {
      throw InputError("pad_batch: sentence of length " + std::to_string(n) +
                       " exceeds pad length " + std::to_string(pad_to));
    }
    auto idx = encode_tokens(s->tokens, vocab);
    idx.resize(pad_to, Vocabulary::kPad);
    auto tags = s->tags;
    tags.resize(pad_to, Tag::O);
    b.indices.push_back(std::move(idx));
    b.tags.push_back(std::move(tags));
    b.lengths.push_back(n);
  }
  return b;
}

inline PaddedBatch pad_batch(const std::vector<TaggedSentence>& sentences, const Vocabulary& vocab,
                             std::size_t pad_to) {
  std::vector<const TaggedSentence*> ptrs;
  for (const auto& s : sentences) ptrs.push_back(&s);
  return pad_batch(ptrs, vocab, pad_to);
}

// ---------------------------------------------------------------------------
// Optimizer

struct AdamState {
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

  ModelParams m, v;
  std::uint64_t t = 0;

  static AdamState for_params(const ModelParams& p) {
    return {ModelParams::zeros_like(p), ModelParams::zeros_like(p), 0};
  }
};

namespace detail {

// Entries the optimizer must leave alone.
inline bool frozen_entry(const std::string& block, const ModelParams& p, std::size_t r,
                         std::size_t c) {
  if (block == "crf_transitions") return !transition_allowed(r, c);
  if (block == "embedding") return !p.embedding.trainable || r == Vocabulary::kPad;
  return false;
}

}  // namespace detail

inline void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, double lr) {
  auto pb = params.blocks();
  auto gb = grads.blocks();
  auto mb = state.m.blocks();
  auto vb = state.v.blocks();
  for (std::size_t k = 0; k < pb.size(); ++k) {
    if (!pb[k].second->same_shape(*gb[k].second)) {
      throw ShapeError("adam_step: gradient for " + pb[k].first + " is " + gb[k].second->shape() +
                       ", parameter is " + pb[k].second->shape());
    }
    const Tensor2D& g = *gb[k].second;
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c)
        if (!std::isfinite(g(r, c)) && !detail::frozen_entry(pb[k].first, params, r, c)) {
          throw NumericError("adam_step: non-finite gradient in " + pb[k].first + " at (" +
                             std::to_string(r) + ", " + std::to_string(c) + ")");
        }
  }
  ++state.t;
  const double bc1 = 1.0 - std::pow(AdamState::kBeta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(AdamState::kBeta2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < pb.size(); ++k) {
    Tensor2D& theta = *pb[k].second;
    const Tensor2D& g = *gb[k].second;
    Tensor2D& m = *mb[k].second;
    Tensor2D& v = *vb[k].second;
    for (std::size_t r = 0; r < theta.rows(); ++r) {
      for (std::size_t c = 0; c < theta.cols(); ++c) {
        if (detail::frozen_entry(pb[k].first, params, r, c)) continue;
        const double gi = g(r, c);
        m(r, c) = AdamState::kBeta1 * m(r, c) + (1.0 - AdamState::kBeta1) * gi;
        v(r, c) = AdamState::kBeta2 * v(r, c) + (1.0 - AdamState::kBeta2) * gi * gi;
        const double m_hat = m(r, c) / bc1;
        const double v_hat = v(r, c) / bc2;
        theta(r, c) -= lr * m_hat / (std::sqrt(v_hat) + AdamState::kEpsilon);
      }
    }
  }
}

// Scales all gradients so their joint L2 norm is at most max_norm. Returns the
// norm before scaling.
inline double clip_global_norm(ModelParams& grads, double max_norm) {
  double sq = 0.0;
  for (auto& [_, t] : grads.blocks())
    for (double x : t->flat()) sq += x * x;
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& [_, t] : grads.blocks()) *t *= s;
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Training loop

struct TrainResult {
  ModelParams params;
  Vocabulary vocab;
  std::size_t max_length = 0;
  std::vector<double> loss_curve;  // mean per-sentence loss, one entry per epoch
};

struct EpochInfo {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double max_grad_norm = 0.0;
};

using EpochCallback = std::function<void(const EpochInfo&)>;

// Training sentences in corpus order. Throws InputError if none.
inline std::vector<const TaggedSentence*> select_domains(const Corpus& corpus,
                                                         const std::set<std::string>& domains) {
  for (const auto& d : domains) {
    if (!corpus.domains().count(d)) throw DataError("unknown domain '" + d + "'");
  }
  std::vector<const TaggedSentence*> out;
  for (const auto& s : corpus.sentences())
    if (domains.count(s.domain())) out.push_back(&s);
  return out;
}

inline TrainResult train_on(const TrainConfig& config, std::span<const TaggedSentence* const> data,
                            const EpochCallback& on_epoch = {}) {
  config.validate();
  if (data.empty()) throw InputError("train: empty training set");

  TrainResult result;
  std::vector<std::vector<std::string>> token_lists;
  for (const auto* s : data) {
    token_lists.push_back(s->tokens);
    result.max_length = std::max(result.max_length, s->tokens.size());
  }
  result.vocab = build_vocabulary(token_lists);

  Rng rng(config.seed);
  EmbeddingTable table = config.glove_path.empty()
                             ? random_embeddings(result.vocab, config.dims.embedding_dim, rng)
                             : load_glove(config.glove_path, result.vocab,
                                          config.dims.embedding_dim, rng)
                                   .table;
  table.trainable = !config.freeze_embeddings;
  result.params = ModelParams::init(config.dims, std::move(table), rng);

  AdamState adam = AdamState::for_params(result.params);
  std::vector<const TaggedSentence*> order(data.begin(), data.end());
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    double max_norm = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::span<const TaggedSentence* const> chunk(order.data() + start, end - start);
      std::size_t width = result.max_length;
      if (config.padding_mode == PaddingMode::kBatchMax) {
        width = 0;
        for (const auto* s : chunk) width = std::max(width, s->tokens.size());
      }
      PaddedBatch batch = pad_batch(chunk, result.vocab, width);
      ModelParams grads = ModelParams::zeros_like(result.params);
      const double loss = batch_loss(result.params, batch, &grads, config.training_feed);
      if (!std::isfinite(loss)) throw NumericError("train: non-finite loss in epoch " + std::to_string(epoch + 1));
      epoch_loss += loss;
      const double inv = 1.0 / static_cast<double>(chunk.size());
      for (auto& [_, t] : grads.blocks()) *t *= inv;
      max_norm = std::max(max_norm, clip_global_norm(grads, config.clip_norm));
      adam_step(result.params, grads, adam, config.learning_rate);
    }
    const double mean = epoch_loss / static_cast<double>(order.size());
    result.loss_curve.push_back(mean);
    if (on_epoch) on_epoch({epoch + 1, mean, max_norm});
  }
  return result;
}

inline TrainResult train(const TrainConfig& config, const Corpus& corpus,
                         const std::set<std::string>& train_domains,
                         const EpochCallback& on_epoch = {}) {
  if (train_domains.empty()) throw InputError("train: no training domains given");
  auto data = select_domains(corpus, train_domains);
  return train_on(config, data, on_epoch);
}

// ---------------------------------------------------------------------------
// Inference and evaluation with a trained model

inline std::vector<Tag> predict(const ModelParams& params, const Vocabulary& vocab,
                                const std::vector<std::string>& tokens) {
  if (tokens.empty()) return {};
  auto idx = encode_tokens(tokens, vocab);
  return predict_tags(params, idx);
}

inline RunResult evaluate_sentences(const ModelParams& params, const Vocabulary& vocab,
                                    std::span<const TaggedSentence* const> sentences,
                                    bool with_overlap) {
  std::vector<std::vector<Tag>> pred, gold;
  for (const auto* s : sentences) {
    pred.push_back(predict(params, vocab, s->tokens));
    gold.push_back(s->tags);
  }
  RunResult r;
  r.exact = compute_metrics(count_matches(pred, gold, MatchMode::kExact));
  if (with_overlap) r.overlap = compute_metrics(count_matches(pred, gold, MatchMode::kOverlap));
  return r;
}

// ---------------------------------------------------------------------------
// Leave-one-domain-out cross-validation

struct CrossValOptions {
  std::size_t jobs = 1;
  bool overlap = false;
  // Called once per finished (fold, run); may be invoked from worker threads
  // but never concurrently.
  std::function<void(const std::string& domain, std::size_t run, const RunResult&)> on_run;
};

inline std::vector<FoldReport> cross_validate(const TrainConfig& config, const Corpus& corpus,
                                              const CrossValOptions& opts = {}) {
  config.validate();
  const auto labels = corpus.domain_labels();
  if (labels.size() < 2) {
    throw DataError("cross_validate: need at least 2 domains, corpus has " +
                    std::to_string(labels.size()));
  }
  for (const auto& [label, idx] : corpus.domains())
    if (idx.empty()) throw DataError("cross_validate: domain '" + label + "' has no sentences");

  std::vector<FoldReport> folds(labels.size());
  for (std::size_t f = 0; f < labels.size(); ++f) {
    folds[f].held_out_domain = labels[f];
    folds[f].runs.resize(config.runs_per_fold);
  }

  const std::size_t total = labels.size() * config.runs_per_fold;
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::exception_ptr failure;

  auto work = [&] {
    for (;;) {
      const std::size_t job = next.fetch_add(1);
      if (job >= total) return;
      {
        std::lock_guard lock(mu);
        if (failure) return;
      }
      const std::size_t f = job / config.runs_per_fold;
      const std::size_t run = job % config.runs_per_fold;
      try {
        std::set<std::string> train_domains(labels.begin(), labels.end());
        train_domains.erase(labels[f]);
        TrainConfig run_cfg = config;
        run_cfg.seed = config.seed + run;
        auto trained = train(run_cfg, corpus, train_domains);
        auto held_out = select_domains(corpus, {labels[f]});
        RunResult r = evaluate_sentences(trained.params, trained.vocab, held_out, opts.overlap);
        r.seed = run_cfg.seed;
        r.loss_curve = std::move(trained.loss_curve);
        std::lock_guard lock(mu);
        folds[f].runs[run] = std::move(r);
        if (opts.on_run) opts.on_run(labels[f], run, folds[f].runs[run]);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };

  const std::size_t jobs = std::max<std::size_t>(1, std::min(opts.jobs, total));
  if (jobs == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < jobs; ++i) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  for (auto& f : folds) f.finalize();
  return folds;
}

}  // namespace reqx
