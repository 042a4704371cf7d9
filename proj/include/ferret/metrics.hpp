#pragma once

// Evaluation metrics for referring and grounding outputs. Every metric
// aggregates integer counts and derives ratios at the end, so results do not
// depend on record order and two record sets combine by adding their counts.

#include <cctype>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ferret/geometry.hpp"
#include "ferret/grounding.hpp"
#include "ferret/quantizer.hpp"

namespace ferret {

enum class EvalTask { kRec, kPhraseGrounding, kGroundedCaption, kReferCls, kPope, kBench };

inline const char* to_string(EvalTask t) {
  switch (t) {
    case EvalTask::kRec: return "rec";
    case EvalTask::kPhraseGrounding: return "phrase_grounding";
    case EvalTask::kGroundedCaption: return "grounded_caption";
    case EvalTask::kReferCls: return "refer_cls";
    case EvalTask::kPope: return "pope";
    case EvalTask::kBench: return "bench";
  }
  return "?";
}

inline std::optional<EvalTask> parse_eval_task(std::string_view s) {
  for (EvalTask t : {EvalTask::kRec, EvalTask::kPhraseGrounding, EvalTask::kGroundedCaption, EvalTask::kReferCls,
                     EvalTask::kPope, EvalTask::kBench}) {
    if (s == to_string(t)) return t;
  }
  return std::nullopt;
}

inline double safe_ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

inline double f1_score(double precision, double recall) {
  return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

// IoU strictly above this threshold counts as a correct localization.
inline constexpr double kIouThreshold = 0.5;

struct AccuracyReport {
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy() const { return safe_ratio(correct, total); }
};

// ---- referring expression comprehension ------------------------------------

struct RecRecord {
  std::string id;
  std::string prediction;
  Box gt;
  ImageSize image;
};

/// True when the first parsed box, mapped back to pixels, has IoU > 0.5 with
/// the ground truth.
inline bool rec_correct(const RecRecord& r, const QuantizerConfig& cfg = {}) {
  const GroundedText parsed = parse_grounded_text(r.prediction, cfg.n_bins);
  for (const GroundedSpan& s : parsed.spans) {
    for (const BinBox& b : s.boxes) {
      if (b.point_form) continue;
      return iou(dequantize_box(b, r.image, cfg), r.gt) > kIouThreshold;
    }
  }
  return false;
}

inline AccuracyReport eval_rec(std::span<const RecRecord> records, const QuantizerConfig& cfg = {}) {
  AccuracyReport rep;
  for (const RecRecord& r : records) {
    ++rep.total;
    if (rec_correct(r, cfg)) ++rep.correct;
  }
  return rep;
}

// ---- phrase grounding ---------------------------------------------------------

struct GtPhrase {
  std::string phrase;
  std::vector<Box> boxes;
};

struct PhraseRecord {
  std::string id;
  std::string prediction;
  std::vector<GtPhrase> gt;
  ImageSize image;
};

// Predicted and annotated phrases match when, after lower-casing and dropping
// leading determiners, one is a token suffix of the other.
inline bool phrases_match(std::string_view predicted, std::string_view annotated) {
  const auto p = phrase_tokens(predicted);
  const auto a = phrase_tokens(annotated);
  return ends_with_tokens(p, a) || ends_with_tokens(a, p);
}

// Number of annotated phrases for which any box predicted for a matching
// phrase reaches IoU > 0.5 with any of its annotated boxes.
inline std::size_t phrase_record_correct(const PhraseRecord& r, const QuantizerConfig& cfg = {}) {
  const GroundedText parsed = parse_grounded_text(r.prediction, cfg.n_bins);
  std::size_t correct = 0;
  for (const GtPhrase& g : r.gt) {
    bool hit = false;
    for (const GroundedSpan& s : parsed.spans) {
      if (hit || !phrases_match(s.phrase, g.phrase)) continue;
      for (const BinBox& b : s.boxes) {
        if (b.point_form) continue;
        const Box pb = dequantize_box(b, r.image, cfg);
        for (const Box& gb : g.boxes) hit = hit || iou(pb, gb) > kIouThreshold;
      }
    }
    if (hit) ++correct;
  }
  return correct;
}

inline AccuracyReport eval_phrase_grounding(std::span<const PhraseRecord> records, const QuantizerConfig& cfg = {}) {
  AccuracyReport rep;
  for (const PhraseRecord& r : records) {
    rep.total += r.gt.size();
    rep.correct += phrase_record_correct(r, cfg);
  }
  return rep;
}

// ---- grounded captioning ----------------------------------------------------

struct GtObject {
  std::string word;
  Box box;
};

struct CaptionRecord {
  std::string id;
  std::string prediction;
  std::vector<GtObject> gt;
  ImageSize image;
};

struct CaptionCounts {
  std::size_t pred_pairs = 0;         // predicted (word, box) pairs
  std::size_t gt_pairs = 0;           // annotated (word, box) pairs
  std::size_t pred_hits = 0;          // predicted pairs localizing a matching GT pair
  std::size_t gt_hits = 0;            // GT pairs localized by some predicted pair
  std::size_t pred_word_matched = 0;  // predicted pairs whose word is a GT word
  std::size_t gt_word_matched = 0;    // GT pairs whose word was predicted

  CaptionCounts& operator+=(const CaptionCounts& o) {
    pred_pairs += o.pred_pairs;
    gt_pairs += o.gt_pairs;
    pred_hits += o.pred_hits;
    gt_hits += o.gt_hits;
    pred_word_matched += o.pred_word_matched;
    gt_word_matched += o.gt_word_matched;
    return *this;
  }
  bool operator==(const CaptionCounts&) const = default;
};

struct CaptionReport {
  CaptionCounts counts;
  std::vector<std::pair<std::string, std::string>> captions;  // id, caption with boxes removed

  double precision_all() const { return safe_ratio(counts.pred_hits, counts.pred_pairs); }
  double recall_all() const { return safe_ratio(counts.gt_hits, counts.gt_pairs); }
  double f1_all() const { return f1_score(precision_all(), recall_all()); }
  double precision_loc() const { return safe_ratio(counts.pred_hits, counts.pred_word_matched); }
  double recall_loc() const { return safe_ratio(counts.gt_hits, counts.gt_word_matched); }
  double f1_loc() const { return f1_score(precision_loc(), recall_loc()); }
};

// A predicted phrase names a GT object word when the word's tokens end the
// phrase (case-folded, no lemmatization): "a brown dog" names "dog".
inline bool names_object(std::string_view predicted_phrase, std::string_view gt_word) {
  return ends_with_tokens(phrase_tokens(predicted_phrase), phrase_tokens(gt_word));
}

inline CaptionCounts caption_record_counts(const CaptionRecord& r, const QuantizerConfig& cfg = {}) {
  const GroundedText parsed = parse_grounded_text(r.prediction, cfg.n_bins);
  CaptionCounts c;
  c.gt_pairs = r.gt.size();
  std::vector<char> gt_hit(r.gt.size(), 0), gt_named(r.gt.size(), 0);
  for (const GroundedSpan& s : parsed.spans) {
    for (const BinBox& b : s.boxes) {
      if (b.point_form) continue;
      ++c.pred_pairs;
      const Box pb = dequantize_box(b, r.image, cfg);
      bool named = false, hit = false;
      for (std::size_t g = 0; g < r.gt.size(); ++g) {
        if (!names_object(s.phrase, r.gt[g].word)) continue;
        named = true;
        gt_named[g] = 1;
        if (iou(pb, r.gt[g].box) > kIouThreshold) {
          hit = true;
          gt_hit[g] = 1;
        }
      }
      if (named) ++c.pred_word_matched;
      if (hit) ++c.pred_hits;
    }
  }
  for (std::size_t g = 0; g < r.gt.size(); ++g) {
    c.gt_hits += gt_hit[g];
    c.gt_word_matched += gt_named[g];
  }
  return c;
}

inline CaptionReport eval_grounded_caption(std::span<const CaptionRecord> records, const QuantizerConfig& cfg = {}) {
  CaptionReport rep;
  for (const CaptionRecord& r : records) {
    rep.counts += caption_record_counts(r, cfg);
    rep.captions.emplace_back(r.id, parse_grounded_text(r.prediction, cfg.n_bins).plain_text());
  }
  return rep;
}

// ---- referring object classification -------------------------------------------

namespace detail {

inline bool is_word_char(char ch) { return std::isalnum(static_cast<unsigned char>(ch)) != 0; }

// Position of `word` in `text` delimited by non-alphanumerics, from `from`.
inline std::size_t find_word(std::string_view text, std::string_view word, std::size_t from = 0) {
  if (word.empty()) return std::string_view::npos;
  for (std::size_t pos = text.find(word, from); pos != std::string_view::npos; pos = text.find(word, pos + 1)) {
    const bool left_ok = pos == 0 || !is_word_char(text[pos - 1]);
    const std::size_t end = pos + word.size();
    const bool right_ok = end == text.size() || !is_word_char(text[end]);
    if (left_ok && right_ok) return pos;
  }
  return std::string_view::npos;
}

}  // namespace detail

// Deletes every stretch from a standalone "not" up to (not including) the
// next comma or period, or to the end of the text.
inline std::string strip_negated_clauses(std::string_view response) {
  std::string text = detail::ascii_lower(response);
  std::size_t pos = 0;
  while ((pos = detail::find_word(text, "not", pos)) != std::string::npos) {
    std::size_t stop = text.find_first_of(",.", pos);
    if (stop == std::string::npos) stop = text.size();
    text.erase(pos, stop - pos);
  }
  return text;
}

/// Correct iff the ground-truth class is still mentioned once negated
/// clauses are removed. The negative class plays no role in the rule.
inline bool match_refer_answer(std::string_view response, std::string_view gt_class,
                               [[maybe_unused]] std::string_view neg_class = {}) {
  const std::string cleaned = strip_negated_clauses(response);
  const std::string cls = detail::ascii_lower(gt_class);
  return detail::find_word(cleaned, cls) != std::string::npos;
}

struct ReferRecord {
  std::string id;
  std::string response;
  std::string gt_class;
  std::string neg_class;
};

inline AccuracyReport eval_refer(std::span<const ReferRecord> records) {
  AccuracyReport rep;
  for (const ReferRecord& r : records) {
    ++rep.total;
    if (match_refer_answer(r.response, r.gt_class, r.neg_class)) ++rep.correct;
  }
  return rep;
}

// ---- POPE ----------------------------------------------------------------------

/// Leading "yes"/"no" token; otherwise a yes-xor-no(t) word anywhere;
/// otherwise nullopt.
inline std::optional<bool> parse_yes_no(std::string_view answer) {
  const std::string text = detail::ascii_lower(answer);
  std::size_t i = 0;
  while (i < text.size() && !detail::is_word_char(text[i])) ++i;
  std::size_t j = i;
  while (j < text.size() && detail::is_word_char(text[j])) ++j;
  const std::string_view first = std::string_view(text).substr(i, j - i);
  if (first == "yes") return true;
  if (first == "no") return false;
  const bool has_yes = detail::find_word(text, "yes") != std::string::npos;
  const bool has_no = detail::find_word(text, "no") != std::string::npos ||
                      detail::find_word(text, "not") != std::string::npos;
  if (has_yes != has_no) return has_yes;
  return std::nullopt;
}

struct PopeRecord {
  std::string id;
  std::string answer;
  bool gt_yes = false;
};

struct PopeReport {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0, unparsed = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  double accuracy() const { return safe_ratio(tp + tn, total()); }
  double precision() const { return safe_ratio(tp, tp + fp); }
  double recall() const { return safe_ratio(tp, tp + fn); }
  double f1() const { return f1_score(precision(), recall()); }
  double yes_ratio() const { return safe_ratio(tp + fp, total()); }
};

inline PopeReport eval_pope(std::span<const PopeRecord> records) {
  PopeReport rep;
  for (const PopeRecord& r : records) {
    const std::optional<bool> said = parse_yes_no(r.answer);
    if (!said) ++rep.unparsed;
    const bool yes = said.value_or(false);
    if (yes && r.gt_yes) ++rep.tp;
    else if (yes) ++rep.fp;
    else if (r.gt_yes) ++rep.fn;
    else ++rep.tn;
  }
  return rep;
}

// ---- judged benchmark ---------------------------------------------------------

/// 100 * sum(pred) / sum(judge) over scores in [1, 10].
inline double bench_ratio(std::span<const double> pred_scores, std::span<const double> judge_scores) {
  if (pred_scores.size() != judge_scores.size()) {
    throw Error(ErrorCode::kLengthMismatch, "score lists differ in length");
  }
  if (pred_scores.empty()) throw Error(ErrorCode::kLengthMismatch, "score lists are empty");
  double sp = 0.0, sj = 0.0;
  for (std::size_t i = 0; i < pred_scores.size(); ++i) {
    for (double v : {pred_scores[i], judge_scores[i]}) {
      if (!(v >= 1.0 && v <= 10.0)) throw Error(ErrorCode::kOutOfRange, "score outside [1, 10]");
    }
    sp += pred_scores[i];
    sj += judge_scores[i];
  }
  return 100.0 * sp / sj;
}

}  // namespace ferret
