#pragma once

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include <json.hpp>

#include "reqx/checkpoint.hpp"
#include "reqx/corpus.hpp"
#include "reqx/datasets.hpp"
#include "reqx/evaluation.hpp"
#include "reqx/text.hpp"
#include "reqx/training.hpp"

#ifndef REQX_VERSION
#define REQX_VERSION "0.0.0"
#endif

namespace reqx {

// ---------------------------------------------------------------------------
// Run manifest

inline std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return hex.str();
}

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct RunManifest {
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json inputs = nlohmann::json::array();
  nlohmann::json seeds = nlohmann::json::object();
  nlohmann::json extra = nlohmann::json::object();
  std::string started_at = utc_timestamp();

  void add_input(const std::string& role, const std::string& path) {
    inputs.push_back({{"role", role},
                      {"path", path},
                      {"bytes", std::filesystem::file_size(path)},
                      {"sha256", sha256_file(path)}});
  }

  nlohmann::json to_json() const {
    nlohmann::json j{{"tool", "reqx"},      {"version", REQX_VERSION}, {"command", command},
                     {"config", config},    {"inputs", inputs},        {"seeds", seeds},
                     {"started_at", started_at}, {"finished_at", utc_timestamp()}};
    for (const auto& [k, v] : extra.items()) j[k] = v;
    return j;
  }

  void write(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    out << to_json().dump(2) << '\n';
  }
};

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

// Safe file-name fragment for a domain label.
inline std::string file_label(const std::string& label) {
  std::string out;
  for (char c : label) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '.' || c == '-' || c == '_';
    out += ok ? c : '_';
  }
  return out.empty() ? "domain" : out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// preprocess

struct PreprocessOptions {
  std::string format;  // rebert-csv | conllu
  std::string input;
  std::string output;
  std::string tag_column = "MISC";
  char feature_delim = ',';
};

inline nlohmann::json summary_json(const ParsedCorpus& p) {
  nlohmann::json domains = nlohmann::json::object();
  for (const auto& [label, idx] : p.corpus.domains()) domains[label] = idx.size();
  return {{"sentences_kept", p.summary.sentences_kept},
          {"sentences_dropped", p.summary.sentences_dropped},
          {"tokens_dropped", p.summary.tokens_dropped},
          {"alignment_misses", p.summary.alignment_misses},
          {"bio_repairs", p.summary.bio_repairs},
          {"domain_count", domains.size()},
          {"domains", domains}};
}

inline nlohmann::json cmd_preprocess(const PreprocessOptions& o, std::ostream& log = std::cerr) {
  ParsedCorpus parsed;
  if (o.format == "rebert-csv") {
    parsed = parse_rebert_csv(o.input, o.feature_delim);
  } else if (o.format == "conllu") {
    parsed = parse_conllu(o.input, TagColumn::parse(o.tag_column));
  } else {
    throw InputError("unknown format '" + o.format + "'");
  }
  write_jsonl(parsed.corpus, o.output);
  auto summary = summary_json(parsed);
  detail::write_text(o.output + ".summary.json", summary.dump(2) + "\n");
  log << "preprocess: kept " << parsed.summary.sentences_kept << ", dropped "
      << parsed.summary.sentences_dropped << ", alignment misses "
      << parsed.summary.alignment_misses << ", domains " << summary["domain_count"] << "\n";
  return summary;
}

// ---------------------------------------------------------------------------
// train

struct TrainOptions {
  std::string corpus;
  std::string config;  // empty: defaults
  std::string output;  // checkpoint path
  std::vector<std::string> domains;  // empty: every domain
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
};

inline TrainConfig resolve_config(const std::string& path, std::optional<std::uint64_t> seed,
                                  std::optional<std::size_t> epochs,
                                  std::optional<std::size_t> runs = std::nullopt) {
  TrainConfig cfg = path.empty() ? TrainConfig{} : load_config(path);
  if (seed) cfg.seed = *seed;
  if (epochs) cfg.epochs = *epochs;
  if (runs) cfg.runs_per_fold = *runs;
  cfg.validate();
  return cfg;
}

inline void cmd_train(const TrainOptions& o, std::ostream& log = std::cerr) {
  RunManifest manifest;
  manifest.command = "train";
  const TrainConfig cfg = resolve_config(o.config, o.seed, o.epochs);
  const Corpus corpus = read_jsonl(o.corpus);
  manifest.add_input("corpus", o.corpus);
  if (!o.config.empty()) manifest.add_input("config", o.config);
  if (!cfg.glove_path.empty()) manifest.add_input("glove", cfg.glove_path);

  std::set<std::string> domains(o.domains.begin(), o.domains.end());
  if (domains.empty()) {
    auto labels = corpus.domain_labels();
    domains.insert(labels.begin(), labels.end());
  }
  auto result = train(cfg, corpus, domains, [&](const EpochInfo& e) {
    log << "[train] epoch " << e.epoch << " loss " << e.mean_loss << " grad_norm "
        << e.max_grad_norm << "\n";
  });
  save_checkpoint(make_checkpoint(result, cfg), o.output);
  manifest.config = cfg.to_json();
  manifest.seeds = {{"train", cfg.seed}};
  manifest.extra = {{"train_domains", domains}, {"loss_curve", result.loss_curve},
                    {"checkpoint", o.output}};
  manifest.write(o.output + ".manifest.json");
}

// ---------------------------------------------------------------------------
// crossval

struct CrossvalOptions {
  std::string corpus;
  std::string config;
  std::string out_dir;
  std::optional<std::size_t> runs;
  std::optional<std::size_t> epochs;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  std::string baselines;
  bool overlap = false;
};

inline ReportDocument cmd_crossval(const CrossvalOptions& o, std::ostream& log = std::cerr) {
  namespace fs = std::filesystem;
  RunManifest manifest;
  manifest.command = "crossval";
  // Config problems surface before any training.
  const TrainConfig cfg = resolve_config(o.config, o.seed, o.epochs, o.runs);
  const Corpus corpus = read_jsonl(o.corpus);
  std::optional<BaselineTable> baselines;
  if (!o.baselines.empty()) baselines = load_baselines(o.baselines);

  manifest.add_input("corpus", o.corpus);
  if (!o.config.empty()) manifest.add_input("config", o.config);
  if (baselines) manifest.add_input("baselines", o.baselines);
  if (!cfg.glove_path.empty()) manifest.add_input("glove", cfg.glove_path);
  manifest.config = cfg.to_json();
  manifest.extra = {{"jobs", o.jobs}, {"overlap", o.overlap}};

  CrossValOptions cv;
  cv.jobs = o.jobs;
  cv.overlap = o.overlap;
  cv.on_run = [&](const std::string& domain, std::size_t run, const RunResult& r) {
    log << "[fold " << domain << " run " << run << "] seed " << r.seed << " P "
        << format_score(r.exact.precision) << " R " << format_score(r.exact.recall) << " F1 "
        << format_score(r.exact.f1) << "\n";
  };
  auto folds = cross_validate(cfg, corpus, cv);
  // Validate baselines before writing anything.
  auto report = render_report(folds, baselines ? &*baselines : nullptr);

  fs::create_directories(o.out_dir);
  for (std::size_t f = 0; f < folds.size(); ++f) {
    char prefix[16];
    std::snprintf(prefix, sizeof prefix, "fold_%02zu_", f + 1);
    const fs::path path =
        fs::path(o.out_dir) / (prefix + detail::file_label(folds[f].held_out_domain) + ".json");
    detail::write_text(path, to_json(folds[f]).dump(2) + "\n");
    nlohmann::json seeds = nlohmann::json::array();
    for (const auto& r : folds[f].runs) seeds.push_back(r.seed);
    manifest.seeds[folds[f].held_out_domain] = seeds;
  }
  detail::write_text(fs::path(o.out_dir) / "report.json", report.json.dump(2) + "\n");
  detail::write_text(fs::path(o.out_dir) / "report.txt", report.text);
  manifest.write((fs::path(o.out_dir) / "manifest.json").string());
  return report;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateOptions {
  std::string model;  // optional when oracle is set
  std::string corpus;
  std::string domain;
  std::string baselines;
  bool overlap = false;
  bool oracle = false;  // score gold tags against themselves
  std::string out_dir;  // optional
};

inline ReportDocument cmd_evaluate(const EvaluateOptions& o, std::ostream& log = std::cerr) {
  const Corpus corpus = read_jsonl(o.corpus);
  if (!corpus.domains().count(o.domain)) {
    std::string avail;
    for (const auto& l : corpus.domain_labels()) avail += (avail.empty() ? "" : ", ") + l;
    throw DataError("unknown domain '" + o.domain + "'; available: " + avail);
  }
  auto sentences = select_domains(corpus, {o.domain});
  RunResult run;
  std::uint64_t seed = 0;
  if (o.oracle) {
    std::vector<std::vector<Tag>> gold;
    for (const auto* s : sentences) gold.push_back(s->tags);
    run.exact = compute_metrics(count_matches(gold, gold, MatchMode::kExact));
    if (o.overlap) run.overlap = compute_metrics(count_matches(gold, gold, MatchMode::kOverlap));
  } else {
    if (o.model.empty()) throw InputError("evaluate: --model is required unless --oracle is set");
    auto ck = load_checkpoint(o.model);
    seed = ck.config.value("seed", std::uint64_t{0});
    run = evaluate_sentences(ck.params, ck.vocab, sentences, o.overlap);
  }
  run.seed = seed;
  FoldReport fold{o.domain, {run}};
  fold.finalize();
  std::optional<BaselineTable> baselines;
  if (!o.baselines.empty()) baselines = load_baselines(o.baselines);
  auto report = render_report({fold}, baselines ? &*baselines : nullptr,
                              o.oracle ? "Oracle" : "Seq2seq");
  if (!o.out_dir.empty()) {
    std::filesystem::create_directories(o.out_dir);
    detail::write_text(std::filesystem::path(o.out_dir) / "report.json", report.json.dump(2) + "\n");
    detail::write_text(std::filesystem::path(o.out_dir) / "report.txt", report.text);
  }
  log << "evaluate: " << sentences.size() << " sentences in '" << o.domain << "'\n";
  return report;
}

// ---------------------------------------------------------------------------
// extract

inline nlohmann::json extract_line(const Checkpoint& ck, const std::string& line) {
  auto tokens = clean_tokens(line);
  nlohmann::json reqs = nlohmann::json::array();
  if (!tokens.empty()) {
    auto tags = predict(ck.params, ck.vocab, tokens);
    for (const auto& s : extract_spans(tags, tokens))
      reqs.push_back({{"span", {s.start, s.end}}, {"text", s.text}});
  }
  return {{"text", line}, {"requirements", std::move(reqs)}};
}

inline void cmd_extract(const std::string& model, const std::string& input, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(model);
  std::ifstream in(input, std::ios::binary);
  if (!in) throw Error("cannot open " + input);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out << extract_line(ck, line).dump(-1, ' ', false, nlohmann::json::error_handler_t::replace)
        << '\n';
  }
}

}  // namespace reqx
