#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace reqx {

// Emittable BIO tags. The CRF additionally uses two virtual states, kStart and
// kStop, which never appear in a tag sequence.
enum class Tag : int { O = 0, B = 1, I = 2 };

inline constexpr std::size_t kNumTags = 3;
inline constexpr std::size_t kStart = 3;
inline constexpr std::size_t kStop = 4;
inline constexpr std::size_t kNumStates = 5;

inline constexpr std::size_t index(Tag t) { return static_cast<std::size_t>(t); }

inline std::string_view to_string(Tag t) {
  switch (t) {
    case Tag::O:
      return "O";
    case Tag::B:
      return "B";
    case Tag::I:
      return "I";
  }
  return "?";
}

inline std::optional<Tag> parse_tag(std::string_view s) {
  if (s == "O") return Tag::O;
  if (s == "B") return Tag::B;
  if (s == "I") return Tag::I;
  return std::nullopt;
}

// Transition between CRF states `from` -> `to` (both in [0, kNumStates)).
// Forbidden: start->I, O->I, anything->start, stop->anything.
inline constexpr bool transition_allowed(std::size_t from, std::size_t to) {
  if (to == kStart || from == kStop) return false;
  if (to == index(Tag::I) && (from == kStart || from == index(Tag::O))) return false;
  return true;
}

// Valid BIO: no leading I, no I directly after O.
inline bool is_valid_bio(std::span<const Tag> tags) {
  std::size_t prev = kStart;
  for (Tag t : tags) {
    if (!transition_allowed(prev, index(t))) return false;
    prev = index(t);
  }
  return true;
}

// Index of the first position breaking BIO validity, if any.
inline std::optional<std::size_t> first_bio_violation(std::span<const Tag> tags) {
  std::size_t prev = kStart;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (!transition_allowed(prev, index(tags[i]))) return i;
    prev = index(tags[i]);
  }
  return std::nullopt;
}

inline std::string join_tags(std::span<const Tag> tags) {
  std::string out;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (i) out += ' ';
    out += to_string(tags[i]);
  }
  return out;
}

}  // namespace reqx
