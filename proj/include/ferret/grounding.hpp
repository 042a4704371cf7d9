#pragma once

// Parser for grounded text: model output or annotations in which boxes follow
// the phrase they ground, e.g. "There is a dog [100, 150, 300, 200] here."
//
// A box is a bracketed group of four comma-separated integers, each a valid
// bin, with min <= max per axis; a group of two integers is a point. Brackets
// that do not satisfy this are left untouched in the raw text. Consecutive
// groups (optionally separated by whitespace or a "<SPE>" placeholder) form
// one run and attach to a single phrase.
//
// Phrase attachment: walking left from the first bracket, collect at most six
// word tokens, stopping at punctuation, a previous box run, a function word
// (verb "be", pronoun, preposition, conjunction) or right after a determiner.

#include <algorithm>
#include <array>
#include <cctype>
#include <cstddef>
#include <iterator>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ferret/quantizer.hpp"

namespace ferret {

struct GroundedSpan {
  std::size_t begin = 0;  // phrase range in raw text
  std::size_t end = 0;
  std::string phrase;
  std::vector<BinBox> boxes;
  std::size_t boxes_begin = 0;  // range of the bracket run in raw text
  std::size_t boxes_end = 0;
};

struct GroundedText {
  std::string raw;
  std::vector<GroundedSpan> spans;

  // Raw text with every box run (and the space before it) removed.
  std::string plain_text() const {
    std::string out;
    std::size_t pos = 0;
    for (const GroundedSpan& s : spans) {
      std::size_t cut = s.boxes_begin;
      while (cut > pos && raw[cut - 1] == ' ') --cut;
      out.append(raw, pos, cut - pos);
      pos = s.boxes_end;
    }
    out.append(raw, pos, std::string::npos);
    return out;
  }
};

inline constexpr int kMaxPhraseTokens = 6;

namespace detail {

inline std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return out;
}

inline bool is_space(char ch) { return std::isspace(static_cast<unsigned char>(ch)) != 0; }
inline bool is_digit(char ch) { return ch >= '0' && ch <= '9'; }

// Characters that end a phrase walk.
inline bool is_boundary(char ch) {
  static constexpr std::string_view kBoundary = ",.;:!?()[]{}<>\"";
  return kBoundary.find(ch) != std::string_view::npos;
}

inline bool is_determiner(std::string_view w) {
  static constexpr std::string_view kWords[] = {
      "a", "an", "the", "this", "that", "these", "those", "some", "any",
      "each", "every", "another", "my", "your", "his", "her", "our", "their"};
  return std::find(std::begin(kWords), std::end(kWords), w) != std::end(kWords);
}

inline bool is_function_word(std::string_view w) {
  static constexpr std::string_view kWords[] = {
      "is",     "are",     "was",    "were",   "be",      "been",   "being",   "am",      "there",   "here",
      "it",     "they",    "he",     "she",    "we",      "you",    "i",       "at",      "on",      "in",
      "of",     "with",    "to",     "from",   "by",      "for",    "and",     "or",      "but",     "near",
      "under",  "over",    "above",  "below",  "behind",  "beside", "between", "into",    "onto",    "has",
      "have",   "had",     "where",  "which",  "who",     "while",  "as",      "like",    "about",   "across",
      "along",  "around",  "against", "inside", "outside", "upon", "within", "not"};
  return std::find(std::begin(kWords), std::end(kWords), w) != std::end(kWords);
}

// Parses one bracket group starting at text[pos] == '['. Returns the box and
// the index one past ']' when well formed and in range.
inline std::optional<std::pair<BinBox, std::size_t>> parse_group(std::string_view text, std::size_t pos, int n_bins) {
  if (pos >= text.size() || text[pos] != '[') return std::nullopt;
  std::size_t i = pos + 1;
  std::vector<long long> values;
  for (;;) {
    while (i < text.size() && is_space(text[i])) ++i;
    const std::size_t digits_begin = i;
    long long v = 0;
    while (i < text.size() && is_digit(text[i]) && i - digits_begin < 9) v = v * 10 + (text[i++] - '0');
    if (i == digits_begin || (i < text.size() && is_digit(text[i]))) return std::nullopt;
    values.push_back(v);
    while (i < text.size() && is_space(text[i])) ++i;
    if (i >= text.size()) return std::nullopt;
    if (text[i] == ']') {
      ++i;
      break;
    }
    if (text[i] != ',' || values.size() >= 4) return std::nullopt;
    ++i;
  }
  BinBox box;
  if (values.size() == 4) {
    box = {static_cast<int>(values[0]), static_cast<int>(values[1]), static_cast<int>(values[2]),
           static_cast<int>(values[3]), false};
  } else if (values.size() == 2) {
    box = {static_cast<int>(values[0]), static_cast<int>(values[1]), static_cast<int>(values[0]),
           static_cast<int>(values[1]), true};
  } else {
    return std::nullopt;
  }
  if (!box.in_range(n_bins)) return std::nullopt;
  return std::pair{box, i};
}

// Phrase range preceding `limit`, not reaching before `floor`.
inline std::pair<std::size_t, std::size_t> attach_phrase(std::string_view text, std::size_t floor, std::size_t limit) {
  std::size_t pos = limit;
  std::size_t phrase_begin = limit;
  std::size_t phrase_end = limit;
  int tokens = 0;
  while (tokens < kMaxPhraseTokens) {
    while (pos > floor && is_space(text[pos - 1])) --pos;
    if (pos == floor || is_boundary(text[pos - 1])) break;
    std::size_t tok_begin = pos;
    while (tok_begin > floor && !is_space(text[tok_begin - 1]) && !is_boundary(text[tok_begin - 1])) --tok_begin;
    const std::string word = ascii_lower(text.substr(tok_begin, pos - tok_begin));
    if (is_function_word(word)) break;
    if (tokens == 0) phrase_end = pos;
    phrase_begin = tok_begin;
    ++tokens;
    pos = tok_begin;
    if (is_determiner(word)) break;
  }
  if (tokens == 0) return {limit, limit};
  return {phrase_begin, phrase_end};
}

}  // namespace detail

/// Lenient parse: never throws, never yields an out-of-range bin.
inline GroundedText parse_grounded_text(std::string_view text, int n_bins = kDefaultBins) {
  GroundedText out;
  out.raw = std::string(text);
  std::size_t floor = 0;  // phrase walks never cross the previous run
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] != '[') {
      ++i;
      continue;
    }
    auto first = detail::parse_group(text, i, n_bins);
    if (!first) {
      ++i;
      continue;
    }
    GroundedSpan span;
    span.boxes_begin = i;
    span.boxes.push_back(first->first);
    std::size_t run_end = first->second;
    for (;;) {
      std::size_t j = run_end;
      while (j < text.size() && detail::is_space(text[j])) ++j;
      const std::string_view spe = kSpeToken;
      if (text.substr(j, spe.size()) == spe) {
        run_end = j + spe.size();
        continue;
      }
      auto next = detail::parse_group(text, j, n_bins);
      if (!next) break;
      span.boxes.push_back(next->first);
      run_end = next->second;
    }
    span.boxes_end = run_end;
    const auto [pb, pe] = detail::attach_phrase(text, floor, i);
    span.begin = pb;
    span.end = pe;
    span.phrase = std::string(text.substr(pb, pe - pb));
    out.spans.push_back(std::move(span));
    floor = run_end;
    i = run_end;
  }
  return out;
}

// Lower-cased word tokens with leading determiners dropped; used to compare
// predicted phrases with annotated ones.
inline std::vector<std::string> phrase_tokens(std::string_view phrase) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) tokens.push_back(detail::ascii_lower(cur));
    cur.clear();
  };
  for (char ch : phrase) {
    if (detail::is_space(ch) || detail::is_boundary(ch)) {
      flush();
    } else {
      cur.push_back(ch);
    }
  }
  flush();
  std::size_t lead = 0;
  while (lead < tokens.size() && detail::is_determiner(tokens[lead])) ++lead;
  tokens.erase(tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(lead));
  return tokens;
}

// True when `suffix` is a non-empty token suffix of `tokens`.
inline bool ends_with_tokens(const std::vector<std::string>& tokens, const std::vector<std::string>& suffix) {
  if (suffix.empty() || suffix.size() > tokens.size()) return false;
  return std::equal(suffix.begin(), suffix.end(), tokens.end() - static_cast<std::ptrdiff_t>(suffix.size()));
}

}  // namespace ferret
