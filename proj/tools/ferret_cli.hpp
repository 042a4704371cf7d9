#pragma once

// Command-line front end. run() is the whole program minus process setup so
// tests can drive it in-process.
//
// Exit codes: 0 success, 2 invalid input record, 64 usage error, 74 I/O error.

#include <openssl/evp.h>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ferret/featmap.hpp"
#include "ferret/geometry.hpp"
#include "ferret/grit.hpp"
#include "ferret/grit_prompts.hpp"
#include "ferret/json_io.hpp"
#include "ferret/metrics.hpp"
#include "ferret/quantizer.hpp"
#include "ferret/sampler.hpp"

namespace ferret::cli {

using Json = nlohmann::ordered_json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 2;
inline constexpr int kExitUsage = 64;
inline constexpr int kExitIo = 74;

struct InvalidInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UsageFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return os.str();
}

// Per-invocation state: every input read is hashed for --manifest.
class Session {
 public:
  std::string read(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoFailure("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string data = ss.str();
    inputs_.push_back({{"file", std::filesystem::path(path).filename().string()}, {"sha256", sha256_hex(data)}});
    return data;
  }

  struct Line {
    std::size_t number;
    Json value;
  };

  std::vector<Line> read_jsonl(const std::string& path) {
    std::istringstream in(read(path));
    std::vector<Line> out;
    std::size_t n = 0;
    for (std::string line; std::getline(in, line);) {
      ++n;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        out.push_back({n, Json::parse(line)});
      } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(path + ":" + std::to_string(n) + ": malformed JSON: " + e.what());
      }
    }
    return out;
  }

  Json read_json(const std::string& path) {
    try {
      return Json::parse(read(path));
    } catch (const nlohmann::json::exception& e) {
      throw InvalidInput(path + ": malformed JSON: " + e.what());
    }
  }

  std::vector<std::string> read_lines(const std::string& path) {
    std::istringstream in(read(path));
    std::vector<std::string> out;
    for (std::string line; std::getline(in, line);) {
      while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
      if (!line.empty()) out.push_back(line);
    }
    return out;
  }

  Json manifest(std::uint64_t seed, int n_bins) const {
    return {{"seed", seed}, {"n_bins", n_bins}, {"inputs", inputs_}};
  }

 private:
  Json inputs_ = Json::array();
};

inline void write_file(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !out.write(data.data(), static_cast<std::streamsize>(data.size()))) {
    throw IoFailure("cannot write " + path);
  }
}

inline std::string jsonl(const std::vector<Json>& rows) {
  std::string out;
  for (const Json& r : rows) out += r.dump() + "\n";
  return out;
}

// Runs `fn` for one input record, prefixing failures with its location.
template <typename Fn>
auto with_record(const std::string& path, std::size_t line, const Json& rec, Fn&& fn) {
  try {
    return fn();
  } catch (const ferret::Error& e) {
    if (e.code() == ErrorCode::kIo) throw;
    std::string where = path + ":" + std::to_string(line);
    if (rec.is_object() && rec.contains("id") && rec["id"].is_string()) where += " (id " + rec["id"].get<std::string>() + ")";
    if (rec.is_object() && rec.contains("image_id") && rec["image_id"].is_string()) {
      where += " (image_id " + rec["image_id"].get<std::string>() + ")";
    }
    throw InvalidInput(where + ": " + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(path + ":" + std::to_string(line) + ": " + e.what());
  }
}

struct Common {
  std::uint64_t seed = 0;
  int n_bins = kDefaultBins;
  bool manifest = false;
};

inline void add_common(CLI::App* cmd, Common& c, bool with_seed) {
  cmd->add_option("--n-bins", c.n_bins, "number of coordinate bins")->capture_default_str();
  if (with_seed) cmd->add_option("--seed", c.seed, "random seed")->capture_default_str();
  cmd->add_flag("--manifest", c.manifest, "record input content hashes in the report");
}

inline QuantizerConfig quantizer(const Common& c) {
  QuantizerConfig q{c.n_bins};
  try {
    q.validate();
  } catch (const ferret::Error& e) {
    throw UsageFailure(e.what());
  }
  return q;
}

inline void emit_report(std::ostream& out, Json report, const Session& s, const Common& c) {
  if (c.manifest) report["manifest"] = s.manifest(c.seed, c.n_bins);
  out << report.dump(2) << "\n";
}

// ---- rasterize / sample ----------------------------------------------------------

inline BinaryMask load_region_mask(Session& s, const std::string& path, int width, int height) {
  const Json j = s.read_json(path);
  return with_record(path, 1, j, [&] {
    Region region = json::region_from_json(j);
    if (const auto* m = std::get_if<BinaryMask>(&region)) return *m;
    ImageSize size{width, height};
    if (size.width <= 0 || size.height <= 0) {
      if (!j.contains("image")) throw Error(ErrorCode::kInvalidArgument, "region needs an image size");
      size = json::image_from_json(j["image"]);
    }
    return rasterize(region, size);
  });
}

struct RasterizeArgs {
  std::string region, out, name;
  int width = 0, height = 0;
};

inline void cmd_rasterize(const RasterizeArgs& a, const Common& c, std::ostream& out) {
  Session s;
  const QuantizerConfig q = quantizer(c);
  const BinaryMask mask = load_region_mask(s, a.region, a.width, a.height);
  if (mask.popcount() == 0) throw InvalidInput(a.region + ": region covers no pixel");
  write_file(a.out, json::mask_to_json(mask).dump() + "\n");
  const Box bbox = bounding_box(mask);
  const BinBox bins = region_bins(mask, mask.size(), q);
  Json report{{"image", json::image_to_json(mask.size())},
              {"popcount", mask.popcount()},
              {"bbox", json::box_to_json(bbox)},
              {"bins", format_bins(bins)}};
  if (!a.name.empty()) report["encoding"] = HybridRegionToken{a.name, bins}.render(true);
  emit_report(out, std::move(report), s, c);
}

struct SampleArgs {
  std::string mask, fmap, params, out;
};

inline void cmd_sample(const SampleArgs& a, const Common& c, std::ostream& out) {
  Session s;
  const BinaryMask mask = load_region_mask(s, a.mask, 0, 0);
  FeatureMap map;
  SamplerBundle bundle;
  {
    std::istringstream fm(s.read(a.fmap));
    try {
      map = read_fmap(fm);
    } catch (const ferret::Error& e) {
      throw InvalidInput(a.fmap + ": " + e.what());
    }
    std::istringstream sp(s.read(a.params));
    try {
      bundle = read_sparams(sp);
    } catch (const ferret::Error& e) {
      throw InvalidInput(a.params + ": " + e.what());
    }
  }
  SamplerOutput result;
  try {
    result = sampler_forward(mask, map, bundle.cfg, bundle.params, c.seed);
  } catch (const ferret::Error& e) {
    throw InvalidInput(std::string("sample: ") + e.what());
  }
  Json report{{"dim", result.feature.values.size()},
              {"final_points", result.final_points.size()},
              {"feature", result.feature.values}};
  if (c.manifest) report["manifest"] = s.manifest(c.seed, c.n_bins);
  if (a.out.empty()) {
    out << report.dump(2) << "\n";
  } else {
    write_file(a.out, report.dump(2) + "\n");
  }
}

// ---- evaluation --------------------------------------------------------------------

struct EvalArgs {
  std::string pred, gt, captions;
};

struct JoinedRecord {
  std::string path;
  std::size_t line;
  Json gt;
  Json pred;
};

// Pairs ground-truth lines with predictions by id, in ground-truth order.
inline std::vector<JoinedRecord> join_records(Session& s, const EvalArgs& a, const char* task) {
  const std::string gt_path = a.gt.empty() ? a.pred : a.gt;
  const auto preds = s.read_jsonl(a.pred);
  const auto gts = a.gt.empty() ? preds : s.read_jsonl(gt_path);
  std::map<std::string, const Json*> by_id;
  for (const auto& p : preds) {
    if (!p.value.is_object() || !p.value.contains("id") || !p.value["id"].is_string()) {
      throw InvalidInput(a.pred + ":" + std::to_string(p.number) + ": record has no string id");
    }
    if (!by_id.emplace(p.value["id"].get<std::string>(), &p.value).second) {
      throw InvalidInput(a.pred + ":" + std::to_string(p.number) + ": duplicate id " + p.value["id"].get<std::string>());
    }
  }
  std::vector<JoinedRecord> out;
  std::set<std::string> seen;
  for (const auto& g : gts) {
    const Json& rec = g.value;
    if (!rec.is_object() || !rec.contains("id") || !rec["id"].is_string()) {
      throw InvalidInput(gt_path + ":" + std::to_string(g.number) + ": record has no string id");
    }
    const std::string id = rec["id"].get<std::string>();
    if (!seen.insert(id).second) throw InvalidInput(gt_path + ":" + std::to_string(g.number) + ": duplicate id " + id);
    if (rec.contains("task") && rec["task"] != task) {
      throw InvalidInput(gt_path + ":" + std::to_string(g.number) + " (id " + id + "): task is not " + task);
    }
    auto it = by_id.find(id);
    if (it == by_id.end()) throw InvalidInput(gt_path + ":" + std::to_string(g.number) + " (id " + id + "): no prediction");
    out.push_back({gt_path, g.number, rec, *it->second});
  }
  return out;
}

inline std::string prediction_text(const JoinedRecord& r) {
  if (!r.pred.contains("text") || !r.pred["text"].is_string()) {
    throw Error(ErrorCode::kFormat, "prediction has no string 'text'");
  }
  return r.pred["text"].get<std::string>();
}

inline const Json& gt_field(const JoinedRecord& r) {
  if (!r.gt.contains("gt")) throw Error(ErrorCode::kFormat, "record has no 'gt'");
  return r.gt["gt"];
}

template <typename Record, typename Convert>
std::vector<Record> convert_all(const std::vector<JoinedRecord>& joined, Convert convert) {
  std::vector<Record> out;
  for (const JoinedRecord& r : joined) {
    out.push_back(with_record(r.path, r.line, r.gt, [&] {
      return convert(r.gt["id"].get<std::string>(), prediction_text(r), gt_field(r));
    }));
  }
  return out;
}

inline Json accuracy_json(const char* key, const AccuracyReport& r) {
  return {{key, r.accuracy()}, {"correct", r.correct}, {"total", r.total}};
}

inline void cmd_eval(EvalTask task, const EvalArgs& a, const Common& c, std::ostream& out) {
  Session s;
  const QuantizerConfig q = quantizer(c);
  const auto joined = join_records(s, a, to_string(task));
  Json report{{"task", to_string(task)}};
  switch (task) {
    case EvalTask::kRec: {
      const auto recs = convert_all<RecRecord>(joined, json::rec_record);
      for (std::size_t i = 0; i < recs.size(); ++i) {
        with_record(joined[i].path, joined[i].line, joined[i].gt, [&] {
          detail::check_image(recs[i].image);
          return 0;
        });
      }
      report.update(accuracy_json("acc@0.5", eval_rec(recs, q)));
      break;
    }
    case EvalTask::kPhraseGrounding:
      report.update(accuracy_json("acc@0.5", eval_phrase_grounding(convert_all<PhraseRecord>(joined, json::phrase_record), q)));
      break;
    case EvalTask::kGroundedCaption: {
      const CaptionReport rep = eval_grounded_caption(convert_all<CaptionRecord>(joined, json::caption_record), q);
      report.update(Json{{"f1_all", rep.f1_all()},
                         {"f1_loc", rep.f1_loc()},
                         {"pred_pairs", rep.counts.pred_pairs},
                         {"gt_pairs", rep.counts.gt_pairs},
                         {"pred_hits", rep.counts.pred_hits},
                         {"gt_hits", rep.counts.gt_hits},
                         {"pred_word_matched", rep.counts.pred_word_matched},
                         {"gt_word_matched", rep.counts.gt_word_matched}});
      if (!a.captions.empty()) {
        std::vector<Json> rows;
        for (const auto& [id, caption] : rep.captions) rows.push_back({{"id", id}, {"caption", caption}});
        write_file(a.captions, jsonl(rows));
      }
      break;
    }
    case EvalTask::kReferCls:
      report.update(accuracy_json("accuracy", eval_refer(convert_all<ReferRecord>(joined, json::refer_record))));
      break;
    case EvalTask::kPope: {
      const PopeReport rep = eval_pope(convert_all<PopeRecord>(joined, json::pope_record));
      report.update(Json{{"accuracy", rep.accuracy()},
                         {"precision", rep.precision()},
                         {"recall", rep.recall()},
                         {"f1", rep.f1()},
                         {"yes_ratio", rep.yes_ratio()},
                         {"tp", rep.tp},
                         {"fp", rep.fp},
                         {"tn", rep.tn},
                         {"fn", rep.fn},
                         {"unparsed", rep.unparsed},
                         {"total", rep.total()}});
      break;
    }
    case EvalTask::kBench: {
      std::vector<double> pred, judge;
      for (const JoinedRecord& r : joined) {
        with_record(r.path, r.line, r.gt, [&] {
          if (!r.pred.contains("score") || !r.pred["score"].is_number()) throw Error(ErrorCode::kFormat, "prediction has no numeric 'score'");
          const Json& g = gt_field(r);
          if (!g.contains("score") || !g["score"].is_number()) throw Error(ErrorCode::kFormat, "gt has no numeric 'score'");
          pred.push_back(r.pred["score"].get<double>());
          judge.push_back(g["score"].get<double>());
          if (pred.back() < 1 || pred.back() > 10 || judge.back() < 1 || judge.back() > 10) {
            throw Error(ErrorCode::kOutOfRange, "scores must lie in [1, 10]");
          }
          return 0;
        });
      }
      if (pred.empty()) throw InvalidInput("bench-ratio: no records");
      report.update(Json{{"ratio", bench_ratio(pred, judge)}, {"count", pred.size()}});
      break;
    }
  }
  emit_report(out, std::move(report), s, c);
}

// ---- grit ----------------------------------------------------------------------------

struct GritArgs {
  std::string scenes, out, tasks, coords = "bins", exclude_ids, vocab, prompts_out;
  bool no_spe = false;
  bool dry_run = false;
};

inline grit::CompileOptions compile_options(const GritArgs& a, const Common& c) {
  grit::CompileOptions opts;
  opts.quantizer = quantizer(c);
  opts.include_spe = !a.no_spe;
  if (a.coords == "bins") {
    opts.coords = grit::CoordStyle::kBins;
  } else if (a.coords == "relative") {
    opts.coords = grit::CoordStyle::kRelative;
  } else {
    throw UsageFailure("--coords must be 'bins' or 'relative'");
  }
  return opts;
}

struct LoadedScene {
  std::size_t line;
  Json raw;
  grit::SceneRecord scene;
};

inline std::vector<LoadedScene> load_scenes(Session& s, const GritArgs& a, std::size_t& excluded) {
  std::set<std::string> exclude;
  if (!a.exclude_ids.empty()) {
    for (const std::string& id : s.read_lines(a.exclude_ids)) exclude.insert(id);
  }
  std::vector<LoadedScene> out;
  for (auto& l : s.read_jsonl(a.scenes)) {
    grit::SceneRecord scene = with_record(a.scenes, l.number, l.value, [&] { return json::scene_from_json(l.value); });
    if (exclude.count(scene.image_id)) {
      ++excluded;
      continue;
    }
    out.push_back({l.number, std::move(l.value), std::move(scene)});
  }
  return out;
}

inline Json corpus_summary(const std::vector<grit::InstructionSample>& samples) {
  Json per_task = Json::object();
  for (grit::Task t : grit::kAllTasks) per_task[grit::to_string(t)] = 0;
  std::size_t pos = 0, neg = 0;
  for (const auto& smp : samples) {
    per_task[grit::to_string(smp.task)] = per_task[grit::to_string(smp.task)].get<std::size_t>() + 1;
    (smp.polarity == grit::Polarity::kPositive ? pos : neg) += 1;
  }
  return {{"samples", samples.size()}, {"per_task", per_task}, {"positive", pos}, {"negative", neg}};
}

inline void write_samples(const std::string& path, const std::vector<grit::InstructionSample>& samples) {
  std::vector<Json> rows;
  for (const auto& smp : samples) rows.push_back(json::sample_to_json(smp));
  write_file(path, jsonl(rows));
}

inline void cmd_grit_compile(const GritArgs& a, const Common& c, std::ostream& out) {
  Session s;
  const grit::CompileOptions opts = compile_options(a, c);
  std::vector<grit::Task> tasks;
  const bool explicit_tasks = !a.tasks.empty();
  if (explicit_tasks) {
    std::stringstream ss(a.tasks);
    for (std::string t; std::getline(ss, t, ',');) {
      try {
        tasks.push_back(grit::parse_task(t));
      } catch (const ferret::Error& e) {
        throw UsageFailure(e.what());
      }
    }
  } else {
    tasks.assign(grit::kAllTasks.begin(), grit::kAllTasks.end());
  }
  std::vector<std::string> vocab;
  if (!a.vocab.empty()) vocab = s.read_lines(a.vocab);

  std::size_t excluded = 0;
  const auto scenes = load_scenes(s, a, excluded);
  std::vector<grit::InstructionSample> samples;
  std::size_t index = 0;
  for (const LoadedScene& ls : scenes) {
    const std::uint64_t scene_seed = derive_seed(c.seed, index++);
    with_record(a.scenes, ls.line, ls.raw, [&] {
      for (grit::Task t : tasks) {
        // Without an explicit task list, scenes lacking caption alignments
        // simply contribute no grounded captions.
        if (!explicit_tasks && t == grit::Task::kGroundedCaption && ls.scene.alignments.empty()) continue;
        auto part = grit::convert_record(ls.scene, t, opts, scene_seed);
        samples.insert(samples.end(), part.begin(), part.end());
      }
      if (!vocab.empty()) {
        samples.push_back(grit::mine_negative_image_conditioned(ls.scene, vocab, derive_seed(scene_seed, 0x4e4547)));
      }
      return 0;
    });
  }
  if (!vocab.empty()) samples = grit::balance(samples, c.seed);
  write_samples(a.out, samples);
  Json report{{"scenes", scenes.size()}, {"excluded", excluded}};
  report.update(corpus_summary(samples));
  emit_report(out, std::move(report), s, c);
}

inline void cmd_grit_negatives(const GritArgs& a, const Common& c, std::ostream& out) {
  Session s;
  const grit::CompileOptions opts = compile_options(a, c);
  std::size_t excluded = 0;
  const auto scenes = load_scenes(s, a, excluded);
  std::unique_ptr<grit::LlmClient> client;
  if (!a.dry_run) {
    try {
      client = grit::make_llm_client(grit::LlmClientConfig::from_env());
    } catch (const ferret::Error& e) {
      if (e.code() == ErrorCode::kIo) throw IoFailure(e.what());
      throw UsageFailure(std::string("LLM client: ") + e.what());
    }
  }
  std::vector<grit::InstructionSample> samples;
  std::vector<Json> prompts;
  std::size_t index = 0;
  for (const LoadedScene& ls : scenes) {
    const std::uint64_t scene_seed = derive_seed(c.seed, index++);
    with_record(a.scenes, ls.line, ls.raw, [&] {
      const std::vector<std::string> entities = json::scene_entities(ls.raw, ls.scene);
      if (entities.empty()) return 0;
      const grit::ChatPrompt prompt = grit::build_semantic_negative_prompt(entities);
      prompts.push_back({{"image_id", ls.scene.image_id}, {"messages", prompt.to_json()}});
      if (client) {
        auto part = grit::mine_negative_semantic(ls.scene, entities, *client, opts, scene_seed);
        samples.insert(samples.end(), part.begin(), part.end());
      }
      return 0;
    });
  }
  if (!a.prompts_out.empty()) write_file(a.prompts_out, jsonl(prompts));
  samples = grit::balance(samples, c.seed);
  if (!a.dry_run) write_samples(a.out, samples);
  Json report{{"scenes", scenes.size()}, {"excluded", excluded}, {"prompts", prompts.size()}};
  report.update(corpus_summary(samples));
  emit_report(out, std::move(report), s, c);
}

// ---- fixtures ------------------------------------------------------------------------

struct FixtureArgs {
  std::string out_dir;
  bool tiny = false;
  int channels = 8;
};

inline SamplerConfig tiny_sampler_config() { return {16, 2, 3, 2, 3, 5}; }

inline void cmd_gen_fixtures(const FixtureArgs& a, const Common& c, std::ostream& out) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(a.out_dir, ec);
  if (ec) throw IoFailure("cannot create " + a.out_dir);
  const SamplerConfig cfg = a.tiny ? tiny_sampler_config() : SamplerConfig{512, 4, 24, 2, a.channels, a.channels};
  try {
    cfg.validate();
  } catch (const ferret::Error& e) {
    throw UsageFailure(e.what());
  }
  const ImageSize image = a.tiny ? ImageSize{32, 32} : ImageSize{336, 336};
  const int grid = a.tiny ? 6 : 24;
  const Polygon shape = a.tiny ? Polygon{{{4, 6}, {27, 3}, {22, 28}, {8, 20}}}
                               : Polygon{{{40, 60}, {300, 30}, {250, 310}, {90, 220}}};
  const BinaryMask mask = rasterize(shape, image);
  const FeatureMap map = random_feature_map(grid, grid, cfg.channels, derive_seed(c.seed, 1));
  const SamplerParams params = SamplerParams::init(cfg, derive_seed(c.seed, 2));

  const auto path = [&](const char* name) { return (fs::path(a.out_dir) / name).string(); };
  write_file(path("mask.json"), json::mask_to_json(mask).dump() + "\n");
  save_fmap(path("map.fmap"), map);
  save_sparams(path("params.sparams"), cfg, params);
  Json report{{"out_dir", a.out_dir},
              {"config",
               {{"num_points", cfg.num_points},
                {"ratio", cfg.ratio},
                {"neighbors", cfg.neighbors},
                {"blocks", cfg.blocks},
                {"channels", cfg.channels},
                {"out_dim", cfg.out_dim}}},
              {"files", {"mask.json", "map.fmap", "params.sparams"}}};
  if (a.tiny) {
    // Feature computed from the files as written, for cross-checking.
    const SamplerBundle bundle = load_sparams(path("params.sparams"));
    const SamplerOutput fwd = sampler_forward(mask, load_fmap(path("map.fmap")), bundle.cfg, bundle.params, c.seed);
    write_file(path("expected.json"), Json{{"seed", c.seed}, {"feature", fwd.feature.values}}.dump(2) + "\n");
    report["files"].push_back("expected.json");
  }
  out << report.dump(2) << "\n";
}

// ---- entry -------------------------------------------------------------------------

inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"ferret: region rasterization, visual sampler, grounding metrics and instruction-data tools"};
  app.name("ferret");
  app.require_subcommand(1);

  Common common;
  RasterizeArgs ra;
  auto* rasterize_cmd = app.add_subcommand("rasterize", "rasterize a region JSON into a mask");
  rasterize_cmd->add_option("--region", ra.region, "region JSON")->required();
  rasterize_cmd->add_option("--out", ra.out, "output mask JSON")->required();
  rasterize_cmd->add_option("--width", ra.width, "image width (overrides the region's image)");
  rasterize_cmd->add_option("--height", ra.height, "image height (overrides the region's image)");
  rasterize_cmd->add_option("--name", ra.name, "region name for the hybrid encoding");
  add_common(rasterize_cmd, common, false);

  SampleArgs sa;
  auto* sample_cmd = app.add_subcommand("sample", "compute a region feature with the visual sampler");
  sample_cmd->add_option("--mask", sa.mask, "mask or region JSON")->required();
  sample_cmd->add_option("--fmap", sa.fmap, "feature map (.fmap)")->required();
  sample_cmd->add_option("--params", sa.params, "sampler parameters (.sparams)")->required();
  sample_cmd->add_option("--out", sa.out, "output JSON (default stdout)");
  add_common(sample_cmd, common, true);

  EvalArgs ea;
  std::map<CLI::App*, EvalTask> eval_cmds;
  auto add_eval = [&](const char* name, EvalTask task, const char* help) {
    auto* cmd = app.add_subcommand(name, help);
    cmd->add_option("--pred", ea.pred, "predictions JSON-lines")->required();
    cmd->add_option("--gt", ea.gt, "ground-truth JSON-lines (default: --pred)");
    add_common(cmd, common, false);
    eval_cmds[cmd] = task;
    return cmd;
  };
  add_eval("eval-rec", EvalTask::kRec, "referring expression comprehension accuracy");
  add_eval("eval-ground", EvalTask::kPhraseGrounding, "phrase grounding accuracy");
  add_eval("eval-groundcap", EvalTask::kGroundedCaption, "grounded captioning F1")
      ->add_option("--captions", ea.captions, "write box-free captions JSON-lines for external scorers");
  add_eval("eval-refer", EvalTask::kReferCls, "referring object classification accuracy");
  add_eval("eval-pope", EvalTask::kPope, "object hallucination yes/no metrics");
  add_eval("bench-ratio", EvalTask::kBench, "score ratio against judge scores");

  GritArgs ga;
  auto add_grit_common = [&](CLI::App* cmd) {
    cmd->add_option("--scenes", ga.scenes, "scene records JSON-lines")->required();
    cmd->add_option("--coords", ga.coords, "coordinate rendering: bins or relative")->capture_default_str();
    cmd->add_flag("--no-spe", ga.no_spe, "omit <SPE> after referred locations");
    cmd->add_option("--exclude-ids", ga.exclude_ids, "file of image ids to drop");
    add_common(cmd, common, true);
  };
  auto* compile_cmd = app.add_subcommand("grit-compile", "convert scene records into instruction samples");
  add_grit_common(compile_cmd);
  compile_cmd->add_option("--out", ga.out, "output samples JSON-lines")->required();
  compile_cmd->add_option("--tasks", ga.tasks, "comma-separated task list (default: all)");
  compile_cmd->add_option("--vocab", ga.vocab, "class vocabulary for image-conditioned negatives");
  auto* neg_cmd = app.add_subcommand("grit-negatives", "semantic negatives through the LLM client");
  add_grit_common(neg_cmd);
  neg_cmd->add_option("--out", ga.out, "output samples JSON-lines");
  neg_cmd->add_option("--prompts-out", ga.prompts_out, "write the LLM prompts JSON-lines");
  neg_cmd->add_flag("--dry-run", ga.dry_run, "build prompts only, do not call the client");

  FixtureArgs fa;
  auto* fixtures_cmd = app.add_subcommand("gen-fixtures", "write synthetic mask, feature map and sampler parameters");
  fixtures_cmd->add_option("--out-dir", fa.out_dir, "output directory")->required();
  fixtures_cmd->add_flag("--tiny", fa.tiny, "tiny gradient-check configuration (C=3, N=16)");
  fixtures_cmd->add_option("--channels", fa.channels, "channels for the full-size configuration")->capture_default_str();
  add_common(fixtures_cmd, common, true);

  try {
    std::reverse(args.begin(), args.end());
    app.parse(std::move(args));
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "ferret: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (rasterize_cmd->parsed()) {
      cmd_rasterize(ra, common, out);
    } else if (sample_cmd->parsed()) {
      cmd_sample(sa, common, out);
    } else if (compile_cmd->parsed()) {
      cmd_grit_compile(ga, common, out);
    } else if (neg_cmd->parsed()) {
      if (!ga.dry_run && ga.out.empty()) throw UsageFailure("grit-negatives needs --out unless --dry-run");
      cmd_grit_negatives(ga, common, out);
    } else if (fixtures_cmd->parsed()) {
      cmd_gen_fixtures(fa, common, out);
    } else {
      for (const auto& [cmd, task] : eval_cmds) {
        if (cmd->parsed()) cmd_eval(task, ea, common, out);
      }
    }
  } catch (const UsageFailure& e) {
    err << "ferret: " << e.what() << "\n";
    return kExitUsage;
  } catch (const IoFailure& e) {
    err << "ferret: " << e.what() << "\n";
    return kExitIo;
  } catch (const InvalidInput& e) {
    err << "ferret: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const ferret::Error& e) {
    err << "ferret: " << e.what() << "\n";
    return e.code() == ErrorCode::kIo ? kExitIo : kExitInvalid;
  }
  return kExitOk;
}

}  // namespace ferret::cli
