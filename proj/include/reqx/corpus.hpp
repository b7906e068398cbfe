#pragma once

#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "reqx/error.hpp"
#include "reqx/tags.hpp"
#include "reqx/text.hpp"

namespace reqx {

struct TaggedSentence {
  std::string app_id;
  std::optional<std::string> category;
  std::vector<std::string> tokens;
  std::vector<Tag> tags;

  // Category when present (CoNLL-U shape), otherwise the app (CSV shape).
  const std::string& domain() const { return category ? *category : app_id; }

  bool operator==(const TaggedSentence&) const = default;
};

// Throws DataError naming `where` if the sentence breaks an invariant.
inline void validate(const TaggedSentence& s, const std::string& where) {
  if (s.tokens.empty()) throw DataError(where + ": sentence has no tokens");
  if (s.tokens.size() != s.tags.size()) {
    throw DataError(where + ": " + std::to_string(s.tokens.size()) + " tokens but " +
                    std::to_string(s.tags.size()) + " tags");
  }
  if (auto bad = first_bio_violation(s.tags)) {
    throw DataError(where + ": invalid BIO sequence '" + join_tags(s.tags) + "' at position " +
                    std::to_string(*bad));
  }
  for (const auto& t : s.tokens) {
    if (!is_clean_token(t)) throw DataError(where + ": token '" + t + "' is not clean");
  }
}

class Corpus {
 public:
  void add(TaggedSentence s, const std::string& where = "corpus") {
    validate(s, where);
    domains_[s.domain()].push_back(sentences_.size());
    sentences_.push_back(std::move(s));
  }

  const std::vector<TaggedSentence>& sentences() const { return sentences_; }
  // Domain label -> sentence indices, labels in sorted order.
  const std::map<std::string, std::vector<std::size_t>>& domains() const { return domains_; }
  std::size_t size() const { return sentences_.size(); }
  bool empty() const { return sentences_.empty(); }

  std::vector<std::string> domain_labels() const {
    std::vector<std::string> out;
    for (const auto& [label, _] : domains_) out.push_back(label);
    return out;
  }

  bool operator==(const Corpus& o) const { return sentences_ == o.sentences_; }

 private:
  std::vector<TaggedSentence> sentences_;
  std::map<std::string, std::vector<std::size_t>> domains_;
};

inline nlohmann::json to_json(const TaggedSentence& s) {
  nlohmann::json tags = nlohmann::json::array();
  for (Tag t : s.tags) tags.push_back(std::string(to_string(t)));
  nlohmann::json j;
  j["app"] = s.app_id;
  j["category"] = s.category ? nlohmann::json(*s.category) : nlohmann::json(nullptr);
  j["tokens"] = s.tokens;
  j["tags"] = std::move(tags);
  return j;
}

inline TaggedSentence sentence_from_json(const nlohmann::json& j, const std::string& where) {
  try {
    TaggedSentence s;
    s.app_id = j.at("app").get<std::string>();
    const auto& cat = j.at("category");
    if (!cat.is_null()) s.category = cat.get<std::string>();
    s.tokens = j.at("tokens").get<std::vector<std::string>>();
    for (const auto& t : j.at("tags")) {
      auto tag = parse_tag(t.get<std::string>());
      if (!tag) throw DataError(where + ": unknown tag '" + t.get<std::string>() + "'");
      s.tags.push_back(*tag);
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(where + ": " + e.what());
  }
}

// Canonical JSON Lines: one {"app","category","tokens","tags"} object per line.
inline void write_jsonl(const Corpus& corpus, std::ostream& out) {
  for (const auto& s : corpus.sentences()) out << to_json(s).dump() << '\n';
}

inline void write_jsonl(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  write_jsonl(corpus, out);
}

inline Corpus read_jsonl(std::istream& in, const std::string& source) {
  Corpus corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(source, line_no, e.what());
    }
    const std::string where = source + ":" + std::to_string(line_no);
    corpus.add(sentence_from_json(j, where), where);
  }
  return corpus;
}

inline Corpus read_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return read_jsonl(in, path);
}

}  // namespace reqx
