// Acceptance checks: one PASS/FAIL line per criterion, non-zero exit if any
// criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cli_harness.hpp"
#include "ferret/grit.hpp"
#include "ferret/metrics.hpp"
#include "ferret/quantizer.hpp"
#include "ferret/sampler.hpp"
#include "grit_checks.hpp"
#include "reference_sampler.hpp"
#include "sampler_fixtures.hpp"
#include "synthetic.hpp"
#include "test_support.hpp"

using namespace ferret;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void fail(const std::string& why) {
    if (pass) detail = why;
    pass = false;
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string format_sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

void check_budget(Outcome& o, double elapsed, double budget) {
  if (elapsed >= budget) o.fail("took " + std::to_string(elapsed) + " s, budget " + std::to_string(budget) + " s");
}

Outcome sampler_cardinality() {
  Outcome o;
  const auto t0 = Clock::now();
  const SamplerConfig cfg{512, 4, 24, 2, 8, 8};
  const SamplerParams params = SamplerParams::init(cfg, 1);
  const FeatureMap map = random_feature_map(24, 24, cfg.channels, 2);
  RandomStream rng(3);
  for (int i = 0; i < 100; ++i) {
    const BinaryMask mask = test_support::random_mask(rng, {336, 336});
    const SamplerOutput out = sampler_forward(mask, map, cfg, params, rng.next_u64());
    if (out.final_points.size() != 32) o.fail("mask " + std::to_string(i) + ": " + std::to_string(out.final_points.size()) + " points");
  }
  check_budget(o, seconds_since(t0), 5.0);
  o.detail = o.pass ? "100 masks, 32 points each" : o.detail;
  return o;
}

Outcome gradient_correctness() {
  using namespace sampler_fixtures;
  Outcome o;
  const auto t0 = Clock::now();
  const GradFixture fx;
  const GradCheck r = check_param_gradients(fx);
  double worst = 0;
  for (const GradEntry& e : r.checked) {
    const double err = relative_error(e.numeric, e.analytic);
    worst = std::max(worst, err);
    if (err > 1e-4) o.fail(e.name + ": analytic " + std::to_string(e.analytic) + " numeric " + std::to_string(e.numeric));
  }
  if (r.checked.empty()) o.fail("no entries checked");
  check_budget(o, seconds_since(t0), 30.0);
  if (o.pass) {
    o.detail = std::to_string(r.checked.size()) + " entries checked, " + std::to_string(r.skipped) +
               " excluded at argmax ties, worst relative error " + format_sci(worst);
  }
  return o;
}

Outcome fps_oracle() {
  Outcome o;
  const auto t0 = Clock::now();
  RandomStream rng(4);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(64);
    const PointSet ps = test_support::random_points(rng, n);
    const int m = static_cast<int>(rng.uniform_index(n + 1));
    const std::uint64_t seed = rng.next_u64();
    if (fps(ps, m, seed) != ref::greedy_fps(test_support::to_ref_points(ps), m, seed)) {
      o.fail("set " + std::to_string(trial) + " differs");
    }
  }
  check_budget(o, seconds_since(t0), 10.0);
  if (o.pass) o.detail = "1000 point sets";
  return o;
}

Outcome micro_trace() {
  using namespace sampler_fixtures;
  Outcome o;
  BlockTrace tr;
  const PointSet out = block_forward(micro_points(), micro_params(), 2, 2, 7, &tr);
  if (tr.centers != kMicroCenters) o.fail("centers differ");
  if (tr.neighbors != kMicroNeighbors) o.fail("neighbors differ");
  if (tr.argmax != kMicroArgmax) o.fail("argmax differs");
  if (tr.fused.size() != kMicroFused.size()) o.fail("h_ik size differs");
  for (std::size_t i = 0; i < std::min(tr.fused.size(), kMicroFused.size()); ++i) {
    if (std::abs(tr.fused[i] - kMicroFused[i]) > 1e-12) o.fail("h_ik[" + std::to_string(i) + "] differs");
  }
  if (out.features.size() != kMicroPooled.size()) o.fail("h_i size differs");
  for (std::size_t i = 0; i < std::min(out.features.size(), kMicroPooled.size()); ++i) {
    if (std::abs(out.features[i] - kMicroPooled[i]) > 1e-12) o.fail("h_i[" + std::to_string(i) + "] differs");
  }
  if (o.pass) o.detail = "h_ik and h_i within 1e-12";
  return o;
}

Outcome quantizer_checks() {
  Outcome o;
  RandomStream rng(5);
  for (int i = 0; i < 100000; ++i) {
    const double extent = rng.uniform(1.0, 5000.0);
    const double x = rng.uniform(0.0, extent);
    const int n = 2 + static_cast<int>(rng.uniform_index(2000));
    const double back = dequantize(quantize(x, extent, {n}), extent, {n});
    if (std::abs(back - x) > extent / n) o.fail("round trip " + std::to_string(x) + " / " + std::to_string(extent));
  }
  for (int i = 0; i < 10000; ++i) {
    const int extent = 1 + static_cast<int>(rng.uniform_index(4096));
    const int coord = static_cast<int>(rng.uniform_index(extent + 1));
    const double scale = (i % 2) ? double(1 + rng.uniform_index(16)) : std::ldexp(1.0, int(rng.uniform_index(9)) - 4);
    if (quantize(coord, extent) != quantize(coord * scale, extent * scale)) o.fail("scale invariance " + std::to_string(i));
  }
  const std::string cat = encode_region_text("a cat", Box{100, 50, 200, 300}, {1000, 1000});
  if (cat != "a cat [100, 50, 200, 300] <SPE>") o.fail("encoding gave '" + cat + "'");
  if (o.pass) o.detail = "1e5 round trips, 1e4 scalings, '" + cat + "'";
  return o;
}

Outcome metrics_oracle() {
  Outcome o;
  const auto close = [](double a, double b) { return std::abs(a - b) <= 1e-12; };
  RandomStream rng(6);
  for (int set = 0; set < 1000; ++set) {
    const std::string tag = "set " + std::to_string(set) + ": ";
    {
      std::vector<RecRecord> records;
      std::size_t expected = 0;
      const std::size_t n = 1 + rng.uniform_index(20);
      for (std::size_t i = 0; i < n; ++i) {
        const synth::RecCase c = synth::random_rec(rng, std::to_string(i));
        expected += c.expected;
        records.push_back(c.record);
      }
      const AccuracyReport rep = eval_rec(records);
      if (rep.correct != expected || rep.total != n || !close(rep.accuracy(), double(expected) / n)) o.fail(tag + "eval_rec");
    }
    {
      std::vector<PhraseRecord> records;
      std::size_t expected = 0, total = 0;
      const std::size_t n = 1 + rng.uniform_index(10);
      for (std::size_t i = 0; i < n; ++i) {
        const synth::PhraseCase c = synth::random_phrase_case(rng, std::to_string(i));
        expected += c.expected_correct;
        total += c.record.gt.size();
        records.push_back(c.record);
      }
      const AccuracyReport rep = eval_phrase_grounding(records);
      if (rep.correct != expected || rep.total != total ||
          !close(rep.accuracy(), total ? double(expected) / total : 0.0)) {
        o.fail(tag + "eval_phrase_grounding");
      }
    }
    {
      std::vector<CaptionRecord> records;
      CaptionCounts expected;
      const std::size_t n = 1 + rng.uniform_index(8);
      for (std::size_t i = 0; i < n; ++i) {
        const synth::CaptionCase c = synth::random_caption_case(rng, std::to_string(i));
        expected += c.expected;
        records.push_back(c.record);
      }
      const CaptionReport rep = eval_grounded_caption(records);
      const double p = expected.pred_pairs ? double(expected.pred_hits) / expected.pred_pairs : 0.0;
      const double r = expected.gt_pairs ? double(expected.gt_hits) / expected.gt_pairs : 0.0;
      if (!(rep.counts == expected) || !close(rep.f1_all(), p + r > 0 ? 2 * p * r / (p + r) : 0.0)) {
        o.fail(tag + "eval_grounded_caption");
      }
    }
    {
      std::vector<synth::PopeCase> cases;
      std::vector<PopeRecord> records;
      const std::size_t n = 1 + rng.uniform_index(40);
      for (std::size_t i = 0; i < n; ++i) {
        cases.push_back(synth::random_pope(rng, std::to_string(i)));
        records.push_back(cases.back().record);
      }
      const synth::Confusion c = synth::recount_pope(cases);
      const PopeReport rep = eval_pope(records);
      const double p = c.tp + c.fp ? double(c.tp) / (c.tp + c.fp) : 0.0;
      const double r = c.tp + c.fn ? double(c.tp) / (c.tp + c.fn) : 0.0;
      if (rep.tp != c.tp || rep.fp != c.fp || rep.tn != c.tn || rep.fn != c.fn || rep.unparsed != c.unparsed ||
          !close(rep.accuracy(), double(c.tp + c.tn) / n) || !close(rep.yes_ratio(), double(c.tp + c.fp) / n) ||
          !close(rep.f1(), p + r > 0 ? 2 * p * r / (p + r) : 0.0)) {
        o.fail(tag + "eval_pope");
      }
    }
  }
  // Predicted [0, 0, 99, 99] covers exactly half of the ground truth.
  const Box gt{0.5, 0.5, 99.5, 198.5};
  if (iou(Box{0.5, 0.5, 99.5, 99.5}, gt) != 0.5) o.fail("boundary fixture IoU is not exactly 0.5");
  if (rec_correct({"edge", "it [0, 0, 99, 99]", gt, {1000, 1000}})) o.fail("IoU exactly 0.5 scored correct");
  if (o.pass) o.detail = "4 scorers x 1000 record sets, IoU 0.5 scored incorrect";
  return o;
}

Outcome not_rule() {
  Outcome o;
  std::ifstream in(FERRET_FIXTURES_DIR "/not_rule.jsonl");
  if (!in) {
    o.fail("fixture missing");
    return o;
  }
  int cases = 0;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    const std::string response = j["response"], gt = j["gt"], neg = j["neg"];
    if (!match_refer_answer(response, gt, neg)) o.fail("GT scored incorrect: " + response);
    if (match_refer_answer(response, neg, gt)) o.fail("Neg scored correct: " + response);
    ++cases;
  }
  if (cases != 50) o.fail(std::to_string(cases) + " cases, expected 50");
  if (o.pass) o.detail = "50 cases";
  return o;
}

Outcome parser_round_trip() {
  Outcome o;
  RandomStream rng(8);
  for (int i = 0; i < 10000; ++i) {
    const synth::Document d = synth::random_document(rng);
    const GroundedText g = parse_grounded_text(d.text);
    bool ok = g.spans.size() == d.spans.size();
    for (std::size_t s = 0; ok && s < d.spans.size(); ++s) {
      ok = g.spans[s].phrase == d.spans[s].phrase() && g.spans[s].boxes.size() == d.spans[s].boxes.size();
      for (std::size_t k = 0; ok && k < d.spans[s].boxes.size(); ++k) {
        const synth::Bins& b = d.spans[s].boxes[k];
        ok = g.spans[s].boxes[k] == BinBox{b.x0, b.y0, b.x1, b.y1, b.point};
      }
    }
    if (!ok) o.fail("round trip: " + d.text);
  }
  static const std::string kAlphabet = "[]0123456789, <SPE>-a.\n";
  for (int i = 0; i < 10000; ++i) {
    std::string s = synth::random_document(rng).text;
    const int edits = 1 + static_cast<int>(rng.uniform_index(8));
    for (int e = 0; e < edits && !s.empty(); ++e) {
      const std::size_t at = rng.uniform_index(s.size());
      switch (rng.uniform_index(3)) {
        case 0: s.erase(at, 1); break;
        case 1: s.insert(s.begin() + at, kAlphabet[rng.uniform_index(kAlphabet.size())]); break;
        default: s[at] = kAlphabet[rng.uniform_index(kAlphabet.size())];
      }
    }
    try {
      for (const auto& span : parse_grounded_text(s).spans) {
        for (const BinBox& b : span.boxes) {
          if (!b.in_range(kDefaultBins)) o.fail("out-of-range bins: " + s);
        }
      }
    } catch (const std::exception& e) {
      o.fail(std::string("threw on fuzz input: ") + e.what());
    }
  }
  if (o.pass) o.detail = "1e4 round trips, 1e4 fuzz cases";
  return o;
}

Outcome grit_compiler() {
  Outcome o;
  const grit::SceneRecord scene = grit_checks::dining_scene();
  const auto samples = grit::convert_record(scene, grit::kAllTasks, {}, 3);
  const grit_checks::CompileCheck check = grit_checks::check_compilation(samples);
  for (grit::Task t : grit::kAllTasks) {
    if (!check.per_task.count(t)) o.fail(std::string("no sample for ") + grit::to_string(t));
  }
  for (const auto& p : check.problems) o.fail(p);
  const auto balanced = grit::balance(grit_checks::skewed_corpus(100, 40), 7);
  std::size_t pos = 0, neg = 0;
  for (const auto& s : balanced) (s.polarity == grit::Polarity::kPositive ? pos : neg)++;
  if (pos != 40 || neg != 40) o.fail("balance gave " + std::to_string(pos) + "/" + std::to_string(neg));
  if (o.pass) {
    o.detail = std::to_string(samples.size()) + " samples over " + std::to_string(check.per_task.size()) +
               " tasks, balance 100/40 -> 40/40";
  }
  return o;
}

Outcome determinism() {
  Outcome o;
  cli_harness::ScratchDir a("accept_a"), b("accept_b");
  std::string fa, fb;
  const auto names = cli_harness::pipeline(a, 42, &fa);
  cli_harness::pipeline(b, 42, &fb);
  if (!fa.empty()) o.fail(fa);
  if (!fb.empty()) o.fail(fb);
  for (const auto& n : names) {
    const std::string x = cli_harness::slurp(a.path() / n);
    if (x.empty()) o.fail(n + " is empty");
    if (x != cli_harness::slurp(b.path() / n)) o.fail(n + " differs between runs");
  }
  if (o.pass) o.detail = std::to_string(names.size()) + " artifacts byte-identical";
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"sampler cardinality", sampler_cardinality},
      {"gradient correctness", gradient_correctness},
      {"FPS oracle", fps_oracle},
      {"micro-trace", micro_trace},
      {"quantizer", quantizer_checks},
      {"metrics oracle equivalence", metrics_oracle},
      {"not-rule fixture", not_rule},
      {"parser round trip and fuzz", parser_round_trip},
      {"GRIT compiler", grit_compiler},
      {"CLI determinism", determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.fail(std::string("exception: ") + e.what());
    }
    failures += !o.pass;
    std::printf("%s %2zu %s (%.2f s): %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, seconds_since(t0),
                o.detail.c_str());
  }
  return failures == 0 ? 0 : 1;
}
