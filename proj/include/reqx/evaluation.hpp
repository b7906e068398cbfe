#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "reqx/error.hpp"
#include "reqx/tags.hpp"

namespace reqx {

// Inclusive token range of one extracted requirement.
struct RequirementSpan {
  std::size_t start = 0;
  std::size_t end = 0;
  std::string text;

  bool operator==(const RequirementSpan&) const = default;
};

// Every maximal run of non-O tags is one requirement; B/I inside a run are not
// distinguished, so [B,B,I] is a single span.
inline std::vector<RequirementSpan> extract_spans(std::span<const Tag> tags,
                                                  std::span<const std::string> tokens = {}) {
  std::vector<RequirementSpan> out;
  std::size_t t = 0;
  while (t < tags.size()) {
    if (tags[t] == Tag::O) {
      ++t;
      continue;
    }
    RequirementSpan s{t, t, {}};
    while (s.end + 1 < tags.size() && tags[s.end + 1] != Tag::O) ++s.end;
    if (!tokens.empty()) {
      for (std::size_t k = s.start; k <= s.end && k < tokens.size(); ++k) {
        if (k > s.start) s.text += ' ';
        s.text += tokens[k];
      }
    }
    t = s.end + 1;
    out.push_back(std::move(s));
  }
  return out;
}

enum class MatchMode { kExact, kOverlap };

struct MatchCounts {
  std::size_t tp = 0, fp = 0, fn = 0;

  MatchCounts& operator+=(const MatchCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  bool operator==(const MatchCounts&) const = default;
};

inline bool overlaps(const RequirementSpan& a, const RequirementSpan& b) {
  return a.start <= b.end && b.start <= a.end;
}

// Exact: identical (start, end). Overlap: predicted spans in start order each
// claim the first unclaimed gold span sharing a token.
inline MatchCounts match_spans(std::span<const RequirementSpan> predicted,
                               std::span<const RequirementSpan> gold,
                               MatchMode mode = MatchMode::kExact) {
  auto by_start = [](std::span<const RequirementSpan> s) {
    std::vector<const RequirementSpan*> v;
    for (const auto& x : s) v.push_back(&x);
    std::stable_sort(v.begin(), v.end(), [](auto* a, auto* b) {
      return a->start != b->start ? a->start < b->start : a->end < b->end;
    });
    return v;
  };
  const auto pred = by_start(predicted);
  const auto ref = by_start(gold);
  std::vector<bool> claimed(ref.size(), false);
  MatchCounts c;
  for (const auto* p : pred) {
    for (std::size_t g = 0; g < ref.size(); ++g) {
      if (claimed[g]) continue;
      const bool hit = mode == MatchMode::kExact
                           ? (p->start == ref[g]->start && p->end == ref[g]->end)
                           : overlaps(*p, *ref[g]);
      if (hit) {
        claimed[g] = true;
        ++c.tp;
        break;
      }
    }
  }
  c.fp = pred.size() - c.tp;
  c.fn = ref.size() - c.tp;
  return c;
}

struct MetricsTriple {
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0;
};

// Micro metrics from pooled counts; any zero denominator gives 0.
inline MetricsTriple compute_metrics(const MatchCounts& c) {
  MetricsTriple m;
  m.tp = c.tp;
  m.fp = c.fp;
  m.fn = c.fn;
  const double tp = static_cast<double>(c.tp);
  if (c.tp + c.fp > 0) m.precision = tp / static_cast<double>(c.tp + c.fp);
  if (c.tp + c.fn > 0) m.recall = tp / static_cast<double>(c.tp + c.fn);
  // 2PR/(P+R) rewritten over counts: one rounding instead of four.
  if (c.tp > 0) m.f1 = 2.0 * tp / static_cast<double>(2 * c.tp + c.fp + c.fn);
  return m;
}

// Pools span matches over sentence pairs (predicted tags, gold tags).
inline MatchCounts count_matches(const std::vector<std::vector<Tag>>& predicted,
                                 const std::vector<std::vector<Tag>>& gold, MatchMode mode) {
  if (predicted.size() != gold.size()) throw InputError("count_matches: sentence count mismatch");
  MatchCounts total;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    auto p = extract_spans(predicted[i]);
    auto g = extract_spans(gold[i]);
    total += match_spans(p, g, mode);
  }
  return total;
}

// ---------------------------------------------------------------------------
// Fold reports

struct RunResult {
  std::uint64_t seed = 0;
  MetricsTriple exact;
  std::optional<MetricsTriple> overlap;
  std::vector<double> loss_curve;
};

struct FoldReport {
  std::string held_out_domain;
  std::vector<RunResult> runs;
  double mean_precision = 0.0, mean_recall = 0.0, mean_f1 = 0.0;

  // Arithmetic means of the per-run exact-match values.
  void finalize() {
    mean_precision = mean_recall = mean_f1 = 0.0;
    if (runs.empty()) return;
    for (const auto& r : runs) {
      mean_precision += r.exact.precision;
      mean_recall += r.exact.recall;
      mean_f1 += r.exact.f1;
    }
    const double n = static_cast<double>(runs.size());
    mean_precision /= n;
    mean_recall /= n;
    mean_f1 /= n;
  }

  bool has_overlap() const { return !runs.empty() && runs.front().overlap.has_value(); }

  MetricsTriple mean_overlap() const {
    MetricsTriple m;
    for (const auto& r : runs) {
      m.precision += r.overlap->precision;
      m.recall += r.overlap->recall;
      m.f1 += r.overlap->f1;
    }
    const double n = static_cast<double>(runs.size());
    m.precision /= n;
    m.recall /= n;
    m.f1 /= n;
    return m;
  }
};

inline nlohmann::json to_json(const MetricsTriple& m) {
  return {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1},
          {"tp", m.tp},               {"fp", m.fp},         {"fn", m.fn}};
}

inline nlohmann::json to_json(const FoldReport& f) {
  nlohmann::json runs = nlohmann::json::array();
  for (std::size_t i = 0; i < f.runs.size(); ++i) {
    const auto& r = f.runs[i];
    nlohmann::json j{{"run", i}, {"seed", r.seed}, {"exact", to_json(r.exact)}};
    if (r.overlap) j["overlap"] = to_json(*r.overlap);
    j["loss_curve"] = r.loss_curve;
    runs.push_back(std::move(j));
  }
  nlohmann::json out{{"held_out_domain", f.held_out_domain},
                     {"runs", std::move(runs)},
                     {"mean_precision", f.mean_precision},
                     {"mean_recall", f.mean_recall},
                     {"mean_f1", f.mean_f1}};
  if (f.has_overlap()) {
    const auto m = f.mean_overlap();
    out["mean_overlap"] = {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}};
  }
  return out;
}

// ---------------------------------------------------------------------------
// Baseline score tables

struct BaselineScore {
  std::optional<double> precision, recall;
  double f1 = 0.0;
};

// System name -> domain label -> scores.
using BaselineTable = std::map<std::string, std::map<std::string, BaselineScore>>;

namespace detail {

inline bool is_score_object(const nlohmann::json& j) {
  return j.is_object() && j.contains("f1") && j["f1"].is_number();
}

inline std::map<std::string, BaselineScore> read_score_map(const nlohmann::json& j,
                                                           const std::string& where) {
  std::map<std::string, BaselineScore> out;
  for (const auto& [label, v] : j.items()) {
    if (!is_score_object(v)) {
      throw SchemaError(where + ": entry '" + label + "' needs a numeric \"f1\"");
    }
    BaselineScore s;
    s.f1 = v["f1"].get<double>();
    if (v.contains("precision")) s.precision = v["precision"].get<double>();
    if (v.contains("recall")) s.recall = v["recall"].get<double>();
    out[label] = s;
  }
  return out;
}

}  // namespace detail

// Accepts {domain: {precision?, recall?, f1}} (system named after the file
// stem) or {system: {domain: {...}}} for several systems.
inline BaselineTable parse_baselines(const nlohmann::json& j, const std::string& default_name) {
  if (!j.is_object() || j.empty()) throw SchemaError(default_name + ": baseline file must be a non-empty object");
  BaselineTable out;
  if (detail::is_score_object(j.begin().value())) {
    out[default_name] = detail::read_score_map(j, default_name);
  } else {
    for (const auto& [name, inner] : j.items()) {
      if (!inner.is_object()) throw SchemaError(default_name + ": '" + name + "' is not an object");
      out[name] = detail::read_score_map(inner, default_name + "/" + name);
    }
  }
  return out;
}

inline BaselineTable load_baselines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(path + ": " + e.what());
  }
  return parse_baselines(j, std::filesystem::path(path).stem().string());
}

// ---------------------------------------------------------------------------
// Report rendering

struct ReportDocument {
  nlohmann::json json;
  std::string text;
};

inline constexpr const char* kZeroDenominatorNote =
    "Precision, recall and F1 are 0 whenever their denominator is 0. Counts are pooled over "
    "all sentences of a held-out domain (micro average).";

inline std::string format_score(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

inline ReportDocument render_report(const std::vector<FoldReport>& folds,
                                    const BaselineTable* baselines = nullptr,
                                    const std::string& system_name = "Seq2seq") {
  std::set<std::string> fold_labels;
  for (const auto& f : folds) fold_labels.insert(f.held_out_domain);

  if (baselines) {
    std::vector<std::string> problems;
    for (const auto& [name, scores] : *baselines) {
      for (const auto& [label, _] : scores)
        if (!fold_labels.count(label)) problems.push_back(name + ": unknown domain '" + label + "'");
      for (const auto& label : fold_labels)
        if (!scores.count(label)) problems.push_back(name + ": missing domain '" + label + "'");
    }
    if (!problems.empty()) {
      std::string msg = "baseline labels do not match fold labels:";
      for (const auto& p : problems) msg += "\n  " + p;
      throw DataError(msg);
    }
  }

  const bool overlap = !folds.empty() && folds.front().has_overlap();
  const double n = static_cast<double>(folds.size());
  double mp = 0, mr = 0, mf = 0;
  MetricsTriple mo;
  for (const auto& f : folds) {
    mp += f.mean_precision;
    mr += f.mean_recall;
    mf += f.mean_f1;
    if (overlap) {
      const auto o = f.mean_overlap();
      mo.precision += o.precision;
      mo.recall += o.recall;
      mo.f1 += o.f1;
    }
  }
  if (!folds.empty()) {
    mp /= n;
    mr /= n;
    mf /= n;
    mo.precision /= n;
    mo.recall /= n;
    mo.f1 /= n;
  }

  ReportDocument doc;
  auto& j = doc.json;
  j["system"] = system_name;
  j["matching"] = overlap ? "exact+overlap" : "exact";
  j["folds"] = nlohmann::json::array();
  for (const auto& f : folds) j["folds"].push_back(to_json(f));
  j["mean"] = {{"precision", mp}, {"recall", mr}, {"f1", mf}};
  if (overlap) j["mean_overlap"] = {{"precision", mo.precision}, {"recall", mo.recall}, {"f1", mo.f1}};

  std::map<std::string, double> baseline_means;
  if (baselines) {
    j["baselines"] = nlohmann::json::object();
    for (const auto& [name, scores] : *baselines) {
      double sum = 0;
      for (const auto& f : folds) sum += scores.at(f.held_out_domain).f1;
      baseline_means[name] = folds.empty() ? 0.0 : sum / n;
      nlohmann::json b;
      for (const auto& [label, s] : scores) {
        nlohmann::json e{{"f1", s.f1}};
        if (s.precision) e["precision"] = *s.precision;
        if (s.recall) e["recall"] = *s.recall;
        b[label] = e;
      }
      j["baselines"][name] = {{"domains", b}, {"mean_f1", baseline_means[name]}};
    }
  }
  j["note"] = kZeroDenominatorNote;

  // Plain-text table.
  std::vector<std::string> header{"Domain", "Runs", "P", "R", system_name + " F1"};
  if (overlap) {
    header.insert(header.end(), {"P(ovl)", "R(ovl)", "F1(ovl)"});
  }
  if (baselines)
    for (const auto& [name, _] : *baselines) header.push_back(name + " F1");

  std::vector<std::vector<std::string>> rows;
  for (const auto& f : folds) {
    std::vector<std::string> r{f.held_out_domain, std::to_string(f.runs.size()),
                               format_score(f.mean_precision), format_score(f.mean_recall),
                               format_score(f.mean_f1)};
    if (overlap) {
      const auto o = f.mean_overlap();
      r.insert(r.end(), {format_score(o.precision), format_score(o.recall), format_score(o.f1)});
    }
    if (baselines)
      for (const auto& [name, scores] : *baselines)
        r.push_back(format_score(scores.at(f.held_out_domain).f1));
    rows.push_back(std::move(r));
  }
  std::vector<std::string> mean_row{"Mean", "", format_score(mp), format_score(mr), format_score(mf)};
  if (overlap) {
    mean_row.insert(mean_row.end(),
                    {format_score(mo.precision), format_score(mo.recall), format_score(mo.f1)});
  }
  for (const auto& [name, m] : baseline_means) mean_row.push_back(format_score(m));
  rows.push_back(std::move(mean_row));

  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& r : rows) width[c] = std::max(width[c], r[c].size());
  }
  std::ostringstream out;
  auto emit = [&](const std::vector<std::string>& r) {
    for (std::size_t c = 0; c < r.size(); ++c) {
      if (c > 0) out << "  ";
      if (c == 0) {
        out << r[c] << std::string(width[c] - r[c].size(), ' ');
      } else {
        out << std::string(width[c] - r[c].size(), ' ') << r[c];
      }
    }
    out << '\n';
  };
  emit(header);
  std::size_t total = 0;
  for (auto w : width) total += w;
  out << std::string(total + 2 * (width.size() - 1), '-') << '\n';
  for (std::size_t i = 0; i + 1 < rows.size(); ++i) emit(rows[i]);
  out << std::string(total + 2 * (width.size() - 1), '-') << '\n';
  emit(rows.back());
  out << '\n' << kZeroDenominatorNote << '\n';
  doc.text = out.str();
  return doc;
}

}  // namespace reqx
