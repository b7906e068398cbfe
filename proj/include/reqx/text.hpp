#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace reqx {

// Small deterministic English lemmatizer: an irregular-form table, a list of
// words that merely look inflected, then suffix rules for 's, -ies, -es, -s,
// -ing and -ed. Input must already be lowercase.
class Lemmatizer {
 public:
  std::string lemma(const std::string& w) const {
    if (auto it = irregular().find(w); it != irregular().end()) return it->second;
    if (ends_with(w, "'s") && w.size() > 2) return lemma(w.substr(0, w.size() - 2));
    if (invariant().count(w) || w.size() <= 3) return w;

    if (ends_with(w, "ies") && w.size() > 4) return w.substr(0, w.size() - 3) + "y";
    if (ends_with(w, "sses") || ends_with(w, "ches") || ends_with(w, "shes") ||
        ends_with(w, "xes") || ends_with(w, "zes")) {
      return w.substr(0, w.size() - 2);
    }
    if (ends_with(w, "s") && !ends_with(w, "ss") && !ends_with(w, "us") && !ends_with(w, "is")) {
      return w.substr(0, w.size() - 1);
    }
    if (ends_with(w, "ing") && w.size() > 5) return verb_stem(w.substr(0, w.size() - 3), w);
    if (ends_with(w, "ed") && w.size() > 4) return verb_stem(w.substr(0, w.size() - 2), w);
    return w;
  }

 private:
  static bool ends_with(std::string_view w, std::string_view suffix) {
    return w.size() >= suffix.size() && w.substr(w.size() - suffix.size()) == suffix;
  }
  static bool is_vowel(char c) {
    return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u';
  }

  static std::string verb_stem(std::string stem, const std::string& original) {
    bool has_vowel = false;
    for (char c : stem) has_vowel |= is_vowel(c) || c == 'y';
    if (!has_vowel) return original;  // "thing", "bring", "shed"
    const std::size_t n = stem.size();
    if (n >= 4 && stem[n - 1] == stem[n - 2] && !is_vowel(stem[n - 1]) && stem[n - 1] != 'l' &&
        stem[n - 1] != 's' && stem[n - 1] != 'z') {
      stem.pop_back();  // running -> run, stopped -> stop
      return stem;
    }
    if (ends_with(stem, "at") || ends_with(stem, "iz") || ends_with(stem, "bl") ||
        ends_with(stem, "us") || ends_with(stem, "ov") || ends_with(stem, "iv")) {
      return stem + "e";  // updated -> update, enabled -> enable, moved -> move
    }
    return stem;
  }

  static const std::unordered_map<std::string, std::string>& irregular() {
    static const std::unordered_map<std::string, std::string> table{
        {"is", "be"},          {"are", "be"},         {"was", "be"},
        {"were", "be"},        {"been", "be"},        {"am", "be"},
        {"being", "be"},       {"has", "have"},       {"had", "have"},
        {"having", "have"},    {"does", "do"},        {"did", "do"},
        {"done", "do"},        {"doing", "do"},       {"went", "go"},
        {"gone", "go"},        {"goes", "go"},        {"going", "go"},        {"made", "make"},
        {"making", "make"},    {"took", "take"},      {"taken", "take"},
        {"taking", "take"},    {"gave", "give"},      {"given", "give"},
        {"giving", "give"},    {"got", "get"},        {"gotten", "get"},
        {"saw", "see"},        {"seen", "see"},       {"came", "come"},
        {"coming", "come"},    {"said", "say"},       {"knew", "know"},
        {"known", "know"},     {"thought", "think"},  {"bought", "buy"},
        {"brought", "bring"},  {"found", "find"},     {"kept", "keep"},
        {"left", "leave"},     {"lost", "lose"},      {"paid", "pay"},
        {"sent", "send"},      {"built", "build"},    {"ran", "run"},
        {"wrote", "write"},    {"written", "write"},  {"writing", "write"},
        {"using", "use"},      {"used", "use"},       {"uses", "use"},
        {"saving", "save"},    {"saved", "save"},     {"sharing", "share"},
        {"shared", "share"},   {"children", "child"}, {"men", "man"},
        {"women", "woman"},    {"feet", "foot"},      {"teeth", "tooth"},
        {"mice", "mouse"},     {"during", "during"},  {"morning", "morning"},
        {"something", "something"}, {"nothing", "nothing"},
        {"anything", "anything"},   {"everything", "everything"},
        {"evening", "evening"},     {"ceiling", "ceiling"}};
    return table;
  }

  static const std::unordered_set<std::string>& invariant() {
    static const std::unordered_set<std::string> words{
        "this",   "his",    "its",   "yes",    "bus",   "gas",    "news",   "always",
        "perhaps", "series", "less",  "plus",   "thus",  "lens",   "species", "various",
        "previous", "status", "bonus", "virus", "focus", "menus",  "itunes", "ios",
        "sometimes", "nevertheless", "unless", "across", "whereas", "analysis",
        "need",   "feed",   "speed", "indeed", "seed",  "bleed",  "embed",  "red",
        "bed",    "shed",   "hundred", "sacred", "wicked", "naked",  "king",  "ring",
        "sing",   "wing",   "spring", "string", "swing", "sling"};
    return words;
  }
};

inline const Lemmatizer& default_lemmatizer() {
  static const Lemmatizer lem;
  return lem;
}

// Replaces every character other than ASCII letters, digits, apostrophes and
// whitespace with a space; maps curly single quotes to '.
inline std::string strip_special(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    // U+2018 / U+2019 in UTF-8.
    if (c == 0xE2 && i + 2 < text.size() && static_cast<unsigned char>(text[i + 1]) == 0x80 &&
        (static_cast<unsigned char>(text[i + 2]) == 0x98 ||
         static_cast<unsigned char>(text[i + 2]) == 0x99)) {
      out += '\'';
      i += 2;
      continue;
    }
    const bool keep = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                      c == '\'' || c == ' ' || c == '\t' || c == '\n' || c == '\r';
    out += keep ? static_cast<char>(c) : ' ';
  }
  return out;
}

// Pipeline: strip special characters -> lowercase -> whitespace tokenization ->
// trim edge apostrophes -> lemmatize. Tokens match [a-z0-9']+.
inline std::vector<std::string> clean_tokens(std::string_view text,
                                             const Lemmatizer& lem = default_lemmatizer()) {
  std::string s = strip_special(text);
  for (char& c : s)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\n' || s[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < s.size() && !(s[j] == ' ' || s[j] == '\t' || s[j] == '\n' || s[j] == '\r')) ++j;
    std::size_t a = i, b = j;
    while (a < b && s[a] == '\'') ++a;
    while (b > a && s[b - 1] == '\'') --b;
    if (b > a) out.push_back(lem.lemma(s.substr(a, b - a)));
    i = j;
  }
  return out;
}

inline bool is_clean_token(std::string_view t) {
  if (t.empty()) return false;
  for (char c : t)
    if (!((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '\'')) return false;
  return true;
}

}  // namespace reqx
