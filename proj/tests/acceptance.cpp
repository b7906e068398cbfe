// End-to-end acceptance checks. One line per criterion; nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"
#include "reqx/commands.hpp"
#include "reqx/grad_check.hpp"

using namespace reqx;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  enum Kind { kPass, kFail, kSkip } kind;
  std::string detail;
};

Outcome pass(std::string d) { return {Outcome::kPass, std::move(d)}; }
Outcome fail(std::string d) { return {Outcome::kFail, std::move(d)}; }
Outcome skip(std::string d) { return {Outcome::kSkip, std::move(d)}; }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

bool legal(const std::vector<Tag>& tags) {
  for (std::size_t t = 0; t < tags.size(); ++t)
    if (tags[t] == Tag::I && (t == 0 || tags[t - 1] == Tag::O)) return false;
  return true;
}

Outcome crf_oracle() {
  Rng rng(101);
  double worst = 0;
  for (int n = 0; n < 200; ++n) {
    const std::size_t L = 1 + n % 6;
    auto e = oracle::random_tensor(L, 3, rng, -3, 3);
    auto tr = oracle::random_tensor(5, 5, rng, -2, 2);
    clamp_forbidden(tr);
    const double dz = std::abs(crf_log_partition(e, tr) - oracle::brute_log_partition(e, tr));
    auto got = crf_viterbi(e, tr);
    auto want = oracle::brute_best_path(e, tr);
    const double ds = std::abs(got.score - want.score);
    worst = std::max({worst, dz, ds});
    if (dz > 1e-8 || ds > 1e-8 || got.tags != want.tags) {
      return fail("instance " + std::to_string(n) + " (L=" + std::to_string(L) + ") disagrees");
    }
  }
  return pass("200 instances, max abs diff " + fmt("%.2e", worst));
}

Outcome gradients() {
  double worst = 0;
  for (std::uint64_t seed : {1u, 3u, 6u}) {
    auto p = testing::tiny_model(seed);
    Rng rng(seed);
    auto batch = testing::make_batch(rng, 2, 5, 8);
    auto grads = ModelParams::zeros_like(p);
    batch_loss(p, batch, &grads);
    auto probe = p;
    auto blocks = probe.blocks();
    auto gblocks = grads.blocks();
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      auto r = grad_check([&](const Tensor2D&) { return batch_loss(probe, batch); },
                          *blocks[i].second, *gblocks[i].second, 1e-4, 1e-4);
      worst = std::max(worst, r.max_relative_error);
      if (!r.passed) {
        return fail("seed " + std::to_string(seed) + " block " + blocks[i].first +
                    " rel err " + fmt("%.2e", r.max_relative_error));
      }
    }
  }
  return pass("all blocks, 3 models, max rel err " + fmt("%.2e", worst));
}

Outcome constraints() {
  Rng rng(303);
  for (int n = 0; n < 1000; ++n) {
    auto p = testing::tiny_model(1000 + n % 50);
    // Half the models get emissions pushed hard toward I, so a leak would show.
    if (n % 2) p.emission_bias(2, 0) = 5.0 + rng.uniform(0, 5);
    auto idx = testing::random_indices(rng, 1 + rng.below(10), 8);
    auto tags = predict_tags(p, idx);
    if (!legal(tags)) return fail("decode " + std::to_string(n) + " produced an illegal I");
  }
  return pass("1000 decodes, no I at start or after O");
}

Outcome padding() {
  auto p = testing::tiny_model(404);
  Rng rng(404);
  double worst = 0;
  for (int n = 0; n < 100; ++n) {
    auto batch = testing::make_batch(rng, 3, 6, 8);
    auto wider = batch;
    wider.width += 1 + rng.below(5);
    for (std::size_t b = 0; b < wider.size(); ++b) {
      wider.indices[b].resize(wider.width, Vocabulary::kPad);
      wider.tags[b].resize(wider.width, Tag::O);
    }
    const double d = std::abs(batch_loss(p, batch) - batch_loss(p, wider));
    worst = std::max(worst, d);
    if (d > 1e-9) return fail("case " + std::to_string(n) + " loss differs by " + fmt("%.2e", d));
    if (batch_predict(p, batch) != batch_predict(p, wider)) {
      return fail("case " + std::to_string(n) + " decode differs");
    }
  }
  return pass("100 cases, max loss diff " + fmt("%.2e", worst));
}

Outcome learnability() {
  auto corpus = testing::synthetic_corpus(200, 505);
  TrainConfig cfg;
  cfg.dims = {32, 32, 32, 32, 16};
  cfg.epochs = 10;
  cfg.runs_per_fold = 1;
  cfg.learning_rate = 0.005;
  cfg.batch_size = 8;
  cfg.seed = 17;
  // Teacher forcing leaks the gold previous tag into the emissions, which the
  // greedy inference feed cannot supply; shown for comparison only.
  auto teacher = cross_validate(cfg, corpus);
  cfg.training_feed = DecoderFeed::kGreedy;
  auto folds = cross_validate(cfg, corpus);
  std::string detail;
  bool ok = true;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    detail += folds[f].held_out_domain + " " + fmt("%.4f", folds[f].mean_f1) + " ";
    ok = ok && folds[f].mean_f1 >= 0.90;
  }
  detail += "[teacher-forced:";
  for (const auto& f : teacher) detail += " " + fmt("%.4f", f.mean_f1);
  detail += "]";
  return ok ? pass("greedy-feed held-out F1: " + detail)
            : fail("held-out F1 below 0.90: " + detail);
}

Outcome overfit() {
  Corpus c;
  c.add({"app", std::nullopt,
         {"can", "you", "add", "audio", "format", "for", "text", "to", "speech"},
         {Tag::O, Tag::O, Tag::O, Tag::B, Tag::I, Tag::O, Tag::B, Tag::I, Tag::I}});
  TrainConfig cfg;  // default dims and optimiser
  cfg.epochs = 200;
  auto r = train(cfg, c, {"app"});
  auto data = select_domains(c, {"app"});
  auto res = evaluate_sentences(r.params, r.vocab, data, false);
  const std::string d = "F1 " + fmt("%.4f", res.exact.f1) + ", final loss " +
                        fmt("%.2e", r.loss_curve.back());
  return res.exact.f1 == 1.0 ? pass(d) : fail(d);
}

Outcome metrics() {
  auto a = compute_metrics({1, 1, 0});
  auto b = compute_metrics({2, 1, 2});
  auto z = compute_metrics({0, 0, 0});
  if (a.precision != 0.5 || a.recall != 1.0 || a.f1 != 2.0 / 3.0) return fail("P=0.5,R=1 case");
  if (b.precision != 2.0 / 3.0 || b.recall != 0.5 || b.f1 != 4.0 / 7.0) return fail("4/7 case");
  if (z.precision != 0 || z.recall != 0 || z.f1 != 0) return fail("zero-denominator case");

  Rng rng(707);
  for (int n = 0; n < 10000; ++n) {
    std::vector<Tag> tags(rng.below(15));
    for (auto& t : tags) t = static_cast<Tag>(rng.below(3));
    std::size_t runs = 0;
    for (std::size_t t = 0; t < tags.size(); ++t)
      if (tags[t] != Tag::O && (t == 0 || tags[t - 1] == Tag::O)) ++runs;
    auto spans = extract_spans(tags);
    if (spans.size() != runs) return fail("span count mismatch on sequence " + std::to_string(n));
    std::vector<bool> covered(tags.size(), false);
    for (const auto& s : spans)
      for (std::size_t t = s.start; t <= s.end; ++t) covered[t] = true;
    for (std::size_t t = 0; t < tags.size(); ++t)
      if (covered[t] != (tags[t] != Tag::O)) return fail("coverage mismatch on sequence " + std::to_string(n));
  }
  return pass("goldens bit-exact, 10000 span invariants hold");
}

Outcome pipeline() {
  auto tokens = clean_tokens("Can you add audio format for text to speech?");
  auto r = align_bio(tokens, {clean_tokens("audio format"), clean_tokens("text to speech")});
  const std::vector<Tag> want{Tag::O, Tag::O, Tag::O, Tag::B, Tag::I,
                              Tag::O, Tag::B, Tag::I, Tag::I};
  std::string got;
  for (Tag t : r.tags) got += std::string(to_string(t));
  return r.tags == want && r.misses.empty() ? pass("tags " + got) : fail("tags " + got);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome determinism() {
  const auto root = fs::temp_directory_path() / "reqx_acceptance";
  fs::remove_all(root);
  fs::create_directories(root);
  write_jsonl(testing::synthetic_corpus(36, 909), (root / "corpus.jsonl").string());
  std::ofstream(root / "cfg.txt") << "embedding_dim = 8\nhidden_enc = 8\nattention_dim = 8\n"
                                     "hidden_dec = 8\ntag_dim = 4\nepochs = 3\nbatch_size = 8\n"
                                     "learning_rate = 0.01\nruns_per_fold = 2\nseed = 3\n";
  std::ostringstream log;
  for (const char* out : {"a", "b"}) {
    CrossvalOptions o;
    o.corpus = (root / "corpus.jsonl").string();
    o.config = (root / "cfg.txt").string();
    o.out_dir = (root / out).string();
    o.jobs = out[0] == 'a' ? 1 : 3;
    cmd_crossval(o, log);
  }
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(root / "a")) {
    const auto name = entry.path().filename().string();
    if (name.rfind("fold_", 0) != 0 && name.rfind("report", 0) != 0) continue;
    ++files;
    if (slurp(entry.path()) != slurp(root / "b" / name)) return fail(name + " differs");
  }
  return files == 5 ? pass("5 report files byte-identical across reruns")
                    : fail("expected 5 report files, found " + std::to_string(files));
}

// Key: lowercase text up to the first separator, so "HEALTH_AND_FITNESS" -> "health".
std::string category_key(const std::string& label) {
  std::string k;
  for (char c : label) {
    if (c == '_' || c == ' ' || c == '&' || c == '-') break;
    k += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return k;
}

Outcome reference_reproduction() {
  const char* path = std::getenv("REQX_TFREX_CONLLU");
  if (!path || !*path) return skip("set REQX_TFREX_CONLLU to a CoNLL-U corpus to run");
  const std::map<std::string, double> reference{
      {"productivity", 0.94}, {"communication", 0.95}, {"tools", 0.97}, {"social", 0.98},
      {"health", 0.96},       {"personalization", 0.98}, {"travel", 0.98}, {"maps", 0.95},
      {"lifestyle", 0.97},    {"weather", 0.96}};
  const char* col = std::getenv("REQX_TFREX_TAG_COLUMN");
  auto parsed = parse_conllu(path, TagColumn::parse(col && *col ? col : "MISC"));
  TrainConfig cfg;
  if (const char* c = std::getenv("REQX_TFREX_CONFIG"); c && *c) cfg = load_config(c);
  CrossValOptions opts;
  if (const char* j = std::getenv("REQX_JOBS"); j && *j) opts.jobs = std::stoul(j);
  auto folds = cross_validate(cfg, parsed.corpus, opts);
  std::string detail;
  bool ok = true;
  std::size_t matched = 0;
  for (const auto& f : folds) {
    auto it = reference.find(category_key(f.held_out_domain));
    detail += f.held_out_domain + " " + fmt("%.3f", f.mean_f1);
    if (it == reference.end()) {
      detail += " (no reference) ";
      continue;
    }
    ++matched;
    const bool close = std::abs(f.mean_f1 - it->second) <= 0.05;
    ok = ok && close;
    detail += close ? " ok " : " off ";
  }
  if (matched != reference.size()) {
    return fail("matched " + std::to_string(matched) + " of 10 categories: " + detail);
  }
  return ok ? pass(detail) : fail(detail);
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"CRF matches exhaustive enumeration", crf_oracle},
      {"end-to-end gradients match finite differences", gradients},
      {"decoded tags respect BIO constraints", constraints},
      {"loss and decode ignore padding", padding},
      {"synthetic corpus learnable across held-out domains", learnability},
      {"single sentence overfit reproduces gold spans", overfit},
      {"metric goldens and span invariants", metrics},
      {"preprocessing worked example", pipeline},
      {"cross-validation reports are deterministic", determinism},
      {"category-level F1 reproduces reference within 0.05", reference_reproduction},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = fail(std::string("exception: ") + e.what());
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const char* tag = o.kind == Outcome::kPass ? "PASS" : o.kind == Outcome::kFail ? "FAIL" : "SKIP";
    if (o.kind == Outcome::kFail) ++failures;
    std::printf("[%s] criterion %zu: %s -- %s (%.1f s)\n", tag, i + 1, criteria[i].first.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
