#pragma once

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "reqx/align.hpp"
#include "reqx/corpus.hpp"
#include "reqx/error.hpp"
#include "reqx/text.hpp"

namespace reqx {

// ---------------------------------------------------------------------------
// RFC-4180 CSV

struct CsvRecord {
  std::vector<std::string> fields;
  std::size_t line = 0;  // line on which the record starts
};

inline std::vector<CsvRecord> read_csv(std::istream& in, const std::string& source,
                                       char delim = ',') {
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (text.rfind("\xEF\xBB\xBF", 0) == 0) text.erase(0, 3);

  std::vector<CsvRecord> records;
  CsvRecord cur;
  std::string field;
  std::size_t line = 1;
  cur.line = 1;
  bool in_quotes = false;
  bool field_was_quoted = false;
  bool record_has_content = false;

  auto end_field = [&] {
    cur.fields.push_back(std::move(field));
    field.clear();
    field_was_quoted = false;
  };
  auto end_record = [&] {
    end_field();
    if (record_has_content) records.push_back(std::move(cur));
    cur = CsvRecord{};
    cur.line = line;
    record_has_content = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    if (c == '"') {
      if (!field.empty() || field_was_quoted) {
        throw ParseError(source, line, "stray quote inside unquoted field");
      }
      in_quotes = true;
      field_was_quoted = true;
      record_has_content = true;
    } else if (c == delim) {
      end_field();
      record_has_content = true;
    } else if (c == '\r' || c == '\n') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      ++line;
      end_record();
    } else {
      if (field_was_quoted) throw ParseError(source, line, "text after closing quote");
      field += c;
      record_has_content = true;
    }
  }
  if (in_quotes) throw ParseError(source, cur.line, "unterminated quoted field");
  if (record_has_content || !field.empty()) end_record();
  return records;
}

// ---------------------------------------------------------------------------
// Annotated review CSV (App Id / Sentence Content / Feature (All Annotated))

inline constexpr const char* kAppIdColumn = "App Id";
inline constexpr const char* kSentenceColumn = "Sentence Content";
inline constexpr const char* kFeatureColumn = "Feature (All Annotated)";

struct PreprocessSummary {
  std::size_t sentences_kept = 0;
  std::size_t sentences_dropped = 0;
  std::size_t tokens_dropped = 0;
  std::size_t alignment_misses = 0;
  std::size_t bio_repairs = 0;
};

struct ParsedCorpus {
  Corpus corpus;
  PreprocessSummary summary;
};

inline std::vector<std::string> split_on(const std::string& s, char delim) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == delim) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline ParsedCorpus parse_rebert_csv(std::istream& in, const std::string& source,
                                     char feature_delim = ',') {
  auto records = read_csv(in, source);
  if (records.empty()) throw SchemaError(source + ": empty file, no header row");
  const auto& header = records.front().fields;
  auto column = [&](const char* name) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      std::string h = header[i];
      h.erase(h.find_last_not_of(" \t") + 1);
      h.erase(0, h.find_first_not_of(" \t"));
      if (h == name) return i;
    }
    throw SchemaError(source + ": missing column \"" + name + "\"");
  };
  const std::size_t app_col = column(kAppIdColumn);
  const std::size_t text_col = column(kSentenceColumn);
  const std::size_t feat_col = column(kFeatureColumn);

  ParsedCorpus out;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.fields.size() != header.size()) {
      throw ParseError(source, rec.line,
                       "row has " + std::to_string(rec.fields.size()) + " fields, header has " +
                           std::to_string(header.size()));
    }
    auto tokens = clean_tokens(rec.fields[text_col]);
    if (tokens.empty()) {
      ++out.summary.sentences_dropped;
      continue;
    }
    std::vector<std::vector<std::string>> phrases;
    for (const auto& part : split_on(rec.fields[feat_col], feature_delim)) {
      auto p = clean_tokens(part);
      if (!p.empty()) phrases.push_back(std::move(p));
    }
    auto aligned = align_bio(tokens, phrases);
    out.summary.alignment_misses += aligned.misses.size();
    TaggedSentence s{rec.fields[app_col], std::nullopt, std::move(tokens),
                     std::move(aligned.tags)};
    out.corpus.add(std::move(s), source + ":" + std::to_string(rec.line));
    ++out.summary.sentences_kept;
  }
  return out;
}

inline ParsedCorpus parse_rebert_csv(const std::string& path, char feature_delim = ',') {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return parse_rebert_csv(in, path, feature_delim);
}

// ---------------------------------------------------------------------------
// CoNLL-U

inline constexpr const char* kConlluColumns[] = {"ID",    "FORM", "LEMMA",  "UPOS", "XPOS",
                                                 "FEATS", "HEAD", "DEPREL", "DEPS", "MISC"};

// Where the BIO label lives: a 1-based column number (11+ for appended
// columns), a CoNLL-U column name, or "MISC:<key>" for a key=value pair in MISC.
struct TagColumn {
  std::size_t column = 10;  // 1-based
  std::optional<std::string> misc_key;

  static TagColumn parse(const std::string& sel) {
    TagColumn tc;
    std::string name = sel;
    if (sel.rfind("MISC:", 0) == 0) {
      tc.misc_key = sel.substr(5);
      if (tc.misc_key->empty()) throw ConfigError("tag column: empty MISC key in '" + sel + "'");
      return tc;
    }
    if (!sel.empty() && std::all_of(sel.begin(), sel.end(), ::isdigit)) {
      tc.column = std::stoul(sel);
      if (tc.column < 1) throw ConfigError("tag column: columns are numbered from 1");
      return tc;
    }
    std::transform(name.begin(), name.end(), name.begin(), ::toupper);
    for (std::size_t i = 0; i < 10; ++i) {
      if (name == kConlluColumns[i]) {
        tc.column = i + 1;
        return tc;
      }
    }
    throw ConfigError("tag column: unknown selector '" + sel + "'");
  }

  std::size_t expected_columns() const { return std::max<std::size_t>(10, column); }
};

inline Tag map_feature_tag(const std::string& raw) {
  if (raw == "B-feature") return Tag::B;
  if (raw == "I-feature") return Tag::I;
  return Tag::O;
}

// Lowercase, drop characters outside [a-z0-9'], trim edge apostrophes. Empty
// means the token was punctuation or special characters only.
inline std::string normalize_lemma(const std::string& lemma) {
  std::string out;
  for (char c : lemma) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '\'') out += c;
  }
  const auto a = out.find_first_not_of('\'');
  if (a == std::string::npos) return {};
  const auto b = out.find_last_not_of('\'');
  return out.substr(a, b - a + 1);
}

inline ParsedCorpus parse_conllu(std::istream& in, const std::string& source,
                                 const TagColumn& tag_column = {}) {
  ParsedCorpus out;
  std::map<std::string, std::string> meta;
  struct Row {
    std::string lemma;
    Tag tag;
  };
  std::vector<Row> rows;
  std::size_t sentence_line = 0;

  auto flush = [&] {
    if (rows.empty()) {
      meta.clear();
      return;
    }
    const std::string where = source + ":" + std::to_string(sentence_line);
    auto app = meta.find("app_name");
    auto cat = meta.find("category");
    if (cat == meta.end()) cat = meta.find("google_play_category");
    if (app == meta.end() || cat == meta.end()) {
      throw DataError(where + ": sentence lacks " +
                      std::string(app == meta.end() ? "app_name" : "category") + " metadata");
    }
    TaggedSentence s{app->second, cat->second, {}, {}};
    std::size_t prev = kStart;
    bool after_drop = false;
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const auto& r = rows[k];
      if (r.lemma.empty()) {
        ++out.summary.tokens_dropped;
        after_drop = true;
        continue;
      }
      Tag t = r.tag;
      if (!transition_allowed(prev, index(t))) {
        // Only a dropped neighbour may excuse an orphan I; otherwise the source is bad.
        if (!after_drop) {
          throw DataError(where + ": invalid BIO sequence in source at token " +
                          std::to_string(k + 1));
        }
        t = Tag::B;
        ++out.summary.bio_repairs;
      }
      s.tokens.push_back(r.lemma);
      s.tags.push_back(t);
      prev = index(t);
      after_drop = false;
    }
    if (s.tokens.empty()) {
      ++out.summary.sentences_dropped;
    } else {
      out.corpus.add(std::move(s), where);
      ++out.summary.sentences_kept;
    }
    rows.clear();
    meta.clear();
  };

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) {
      flush();
      continue;
    }
    if (line[0] == '#') {
      if (!rows.empty()) flush();
      const auto eq = line.find('=');
      if (eq != std::string::npos) {
        auto trim = [](std::string s) {
          s.erase(0, s.find_first_not_of(" \t#"));
          s.erase(s.find_last_not_of(" \t") + 1);
          return s;
        };
        meta[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
      }
      continue;
    }
    auto fields = split_on(line, '\t');
    if (fields.size() != tag_column.expected_columns()) {
      throw ParseError(source, line_no,
                       "expected " + std::to_string(tag_column.expected_columns()) +
                           " tab-separated columns, found " + std::to_string(fields.size()));
    }
    const std::string& id = fields[0];
    if (id.find('-') != std::string::npos || id.find('.') != std::string::npos) continue;
    if (rows.empty()) sentence_line = line_no;

    std::string raw_tag;
    if (tag_column.misc_key) {
      for (const auto& kv : split_on(fields[9], '|')) {
        const auto eq = kv.find('=');
        if (eq != std::string::npos && kv.substr(0, eq) == *tag_column.misc_key) {
          raw_tag = kv.substr(eq + 1);
        }
      }
    } else {
      raw_tag = fields[tag_column.column - 1];
    }
    const std::string& lemma = fields[2] == "_" && fields[1] != "_" ? fields[1] : fields[2];
    rows.push_back({normalize_lemma(lemma), map_feature_tag(raw_tag)});
  }
  flush();
  return out;
}

inline ParsedCorpus parse_conllu(const std::string& path, const TagColumn& tag_column = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return parse_conllu(in, path, tag_column);
}

}  // namespace reqx
