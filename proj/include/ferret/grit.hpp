#pragma once

// Instruction-data compiler: turns scene records (objects, relationships,
// region descriptions, captions) into prompt/response samples using the task
// templates, mines negative localization questions and balances polarities.

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ferret/error.hpp"
#include "ferret/geometry.hpp"
#include "ferret/grounding.hpp"
#include "ferret/quantizer.hpp"
#include "ferret/rng.hpp"

namespace ferret::grit {

enum class Task {
  kReferObject,
  kReferRelation,
  kReferRegion,
  kRec,
  kPhraseGrounding,
  kDetection,
  kGroundedCaption,
  kHallucination,
};

inline constexpr std::array<Task, 8> kAllTasks = {
    Task::kReferObject, Task::kReferRelation,  Task::kReferRegion,     Task::kRec,
    Task::kPhraseGrounding, Task::kDetection, Task::kGroundedCaption, Task::kHallucination};

inline const char* to_string(Task t) {
  switch (t) {
    case Task::kReferObject: return "refer_object";
    case Task::kReferRelation: return "refer_relation";
    case Task::kReferRegion: return "refer_region";
    case Task::kRec: return "rec";
    case Task::kPhraseGrounding: return "phrase_grounding";
    case Task::kDetection: return "detection";
    case Task::kGroundedCaption: return "grounded_caption";
    case Task::kHallucination: return "hallucination";
  }
  return "?";
}

inline Task parse_task(std::string_view s) {
  for (Task t : kAllTasks) {
    if (s == to_string(t)) return t;
  }
  throw Error(ErrorCode::kUnknownTask, "unknown task '" + std::string(s) + "'");
}

enum class Polarity { kPositive, kNegative };
inline const char* to_string(Polarity p) { return p == Polarity::kPositive ? "positive" : "negative"; }

// Which negative-mining family a hallucination sample belongs to; balancing
// equalizes polarities within each family.
enum class Mining { kNone, kImageConditioned, kSemanticConditioned };

struct InstructionSample {
  std::string prompt;
  std::string response;
  Task task = Task::kReferObject;
  Polarity polarity = Polarity::kPositive;
  std::string image_id;
  Mining mining = Mining::kNone;

  bool operator==(const InstructionSample&) const = default;
};

// ---- templates -------------------------------------------------------------------

inline std::span<const std::string_view> templates(Task task) {
  static constexpr std::string_view kReferObject[] = {
      "What is the class of the object <location> within the image?",
      "Classify object <location> in the image.",
      "Identify the object <location> in the image.",
  };
  static constexpr std::string_view kReferRelation[] = {
      "What does <object1> <location1> do to <object2> <location2> of the image?",
      "What is the physical relation between <object1> <location1> and <object2> <location2>?",
      "Can you figure out the geometric relation of the <object1> <location1> and <object2> <location2>?",
  };
  static constexpr std::string_view kReferRegion[] = {
      "Describe the region <location> in a short phrase.",
      "What is in the region <location>? Describe in a phrase.",
      "Capture in a phrase: what's near region <location> in the picture?",
  };
  static constexpr std::string_view kRec[] = {
      "Where is <object> in the image?",
      "What are the coordinates for the given <object> in the image?",
      "Given the image, could you please tell me where is <object>",
  };
  static constexpr std::string_view kPhraseGrounding[] = {
      "What are the locations of <objects>?",
      "Could you provide me with the exact locations of <objects>?",
      "Please indicate the positions of <objects> in the image?",
  };
  static constexpr std::string_view kDetection[] = {
      "Detect all objects among <class> in the image.",
      "Perform object detection given the image within <class>.",
      "Given the image and set <class>, identify all the objects that belong to the set.",
  };
  static constexpr std::string_view kGroundedCaption[] = {
      "What is this photo about? Use concise language.",
      "Describe the overall picture in just a few words.",
      "What do you see happening in this image? Provide the answer in short.",
  };
  static constexpr std::string_view kHallucination[] = {
      "Is there a <object> in the image?",
      "Are there <object> in the image?",
      "Please tell me whether <object> exists in the image?",
  };
  switch (task) {
    case Task::kReferObject: return kReferObject;
    case Task::kReferRelation: return kReferRelation;
    case Task::kReferRegion: return kReferRegion;
    case Task::kRec: return kRec;
    case Task::kPhraseGrounding: return kPhraseGrounding;
    case Task::kDetection: return kDetection;
    case Task::kGroundedCaption: return kGroundedCaption;
    case Task::kHallucination: return kHallucination;
  }
  throw Error(ErrorCode::kUnknownTask, "no templates for task");
}

using Slots = std::map<std::string, std::string, std::less<>>;

inline bool is_placeholder(std::string_view name) {
  static constexpr std::string_view kNames[] = {"location",  "location1", "location2", "object", "object1",
                                                "object2",   "objects",   "class"};
  return std::find(std::begin(kNames), std::end(kNames), name) != std::end(kNames);
}

/// Substitutes the placeholders of template `index` of `task`. Unknown
/// angle-bracket text (such as "<SPE>" inside slot values) is left alone.
inline std::string fill_template_at(Task task, std::size_t index, const Slots& slots) {
  const auto all = templates(task);
  if (index >= all.size()) throw Error(ErrorCode::kOutOfRange, "template index out of range");
  const std::string_view tpl = all[index];
  std::string out;
  std::size_t pos = 0;
  while (pos < tpl.size()) {
    const std::size_t open = tpl.find('<', pos);
    if (open == std::string_view::npos) break;
    const std::size_t close = tpl.find('>', open);
    if (close == std::string_view::npos) break;
    const std::string_view name = tpl.substr(open + 1, close - open - 1);
    out.append(tpl.substr(pos, open - pos));
    if (is_placeholder(name)) {
      auto it = slots.find(name);
      if (it == slots.end()) {
        throw Error(ErrorCode::kMissingSlot, "template for " + std::string(to_string(task)) + " needs <" +
                                                 std::string(name) + ">");
      }
      out += it->second;
    } else {
      out.append(tpl.substr(open, close - open + 1));
    }
    pos = close + 1;
  }
  out.append(tpl.substr(pos));
  return out;
}

/// One template chosen uniformly by `seed`, then filled.
inline std::string fill_template(Task task, const Slots& slots, std::uint64_t seed) {
  RandomStream rng(seed);
  return fill_template_at(task, rng.uniform_index(templates(task).size()), slots);
}

// ---- scene records ----------------------------------------------------------------

// Box in relative [0, 1] image coordinates, as written in scene descriptions.
struct RelBox {
  double x_min = 0.0, y_min = 0.0, x_max = 0.0, y_max = 0.0;

  bool valid() const {
    auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    return unit(x_min) && unit(y_min) && unit(x_max) && unit(y_max) && x_min <= x_max && y_min <= y_max;
  }
  bool operator==(const RelBox&) const = default;
};

struct SceneObject {
  std::string name;
  RelBox box;
  std::optional<BinaryMask> mask;  // image-resolution free-form region
};

struct Relationship {
  int object = 0;
  std::string predicate;
  int subject = 0;
};

struct RegionDescription {
  RelBox box;
  std::string text;
};

// Phrase [begin, end) of captions[caption] grounded to the listed objects.
struct CaptionAlignment {
  int caption = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
  std::vector<int> objects;
};

struct SceneRecord {
  std::string image_id;
  ImageSize size;
  std::vector<SceneObject> objects;
  std::vector<Relationship> relationships;
  std::vector<RegionDescription> regions;
  std::vector<std::string> captions;
  std::vector<CaptionAlignment> alignments;

  void validate() const {
    detail::check_image(size);
    auto obj_ok = [&](int i) { return i >= 0 && i < static_cast<int>(objects.size()); };
    for (const SceneObject& o : objects) {
      if (!o.box.valid()) throw Error(ErrorCode::kOutOfBounds, "object box outside [0,1] in " + image_id);
      if (o.mask && o.mask->size() != size) throw Error(ErrorCode::kSizeMismatch, "object mask size in " + image_id);
    }
    for (const Relationship& r : relationships) {
      if (!obj_ok(r.object) || !obj_ok(r.subject)) {
        throw Error(ErrorCode::kOutOfRange, "relationship index out of range in " + image_id);
      }
    }
    for (const RegionDescription& d : regions) {
      if (!d.box.valid()) throw Error(ErrorCode::kOutOfBounds, "region box outside [0,1] in " + image_id);
    }
    for (const CaptionAlignment& a : alignments) {
      if (a.caption < 0 || a.caption >= static_cast<int>(captions.size()) || a.begin > a.end ||
          a.end > captions[a.caption].size()) {
        throw Error(ErrorCode::kOutOfRange, "caption alignment out of range in " + image_id);
      }
      for (int o : a.objects) {
        if (!obj_ok(o)) throw Error(ErrorCode::kOutOfRange, "alignment object index out of range in " + image_id);
      }
    }
  }
};

enum class CoordStyle { kBins, kRelative };

struct CompileOptions {
  QuantizerConfig quantizer;
  CoordStyle coords = CoordStyle::kBins;
  bool include_spe = true;  // "<SPE>" after referred locations in prompts
};

inline BinBox rel_box_bins(const RelBox& b, const QuantizerConfig& q) {
  return {quantize_relative(b.x_min, q), quantize_relative(b.y_min, q), quantize_relative(b.x_max, q),
          quantize_relative(b.y_max, q)};
}

inline std::string format_relative(const RelBox& b) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "[%.3f, %.3f, %.3f, %.3f]", b.x_min, b.y_min, b.x_max, b.y_max);
  return buf;
}

inline std::string render_box(const RelBox& b, const CompileOptions& opts) {
  return opts.coords == CoordStyle::kBins ? format_bins(rel_box_bins(b, opts.quantizer)) : format_relative(b);
}

// Location text of a referred object: its mask extent when one is attached
// (bins only), otherwise its box; "<SPE>" appended on request.
inline std::string render_location(const SceneRecord& scene, const SceneObject& o, const CompileOptions& opts) {
  std::string loc = (o.mask && opts.coords == CoordStyle::kBins)
                        ? format_bins(region_bins(*o.mask, scene.size, opts.quantizer))
                        : render_box(o.box, opts);
  if (opts.include_spe) loc += std::string(" ") + kSpeToken;
  return loc;
}

inline std::string render_region_location(const RelBox& b, const CompileOptions& opts) {
  std::string loc = render_box(b, opts);
  if (opts.include_spe) loc += std::string(" ") + kSpeToken;
  return loc;
}

// ---- box insertion ------------------------------------------------------------------

struct BoxInsertion {
  std::size_t begin = 0;  // phrase range the boxes follow
  std::size_t end = 0;
  std::string boxes;      // rendered coordinate text, e.g. "[1, 2, 3, 4]"
};

/// Inserts " <boxes>" right after each range, right to left so earlier
/// offsets stay valid. Identical ranges share one insertion point (boxes in
/// input order); partially overlapping ranges are rejected.
inline std::string insert_boxes(std::string_view text, std::vector<BoxInsertion> items) {
  for (const BoxInsertion& it : items) {
    if (it.begin > it.end || it.end > text.size()) throw Error(ErrorCode::kOutOfRange, "phrase range outside text");
  }
  std::stable_sort(items.begin(), items.end(), [](const BoxInsertion& a, const BoxInsertion& b) {
    return a.begin != b.begin ? a.begin < b.begin : a.end < b.end;
  });
  for (std::size_t i = 1; i < items.size(); ++i) {
    const bool same = items[i].begin == items[i - 1].begin && items[i].end == items[i - 1].end;
    if (!same && items[i].begin < items[i - 1].end) {
      throw Error(ErrorCode::kOverlappingRanges, "phrase ranges overlap");
    }
  }
  std::string out(text);
  for (std::size_t i = items.size(); i-- > 0;) {
    std::string run;
    std::size_t first = i;
    while (first > 0 && items[first - 1].begin == items[i].begin && items[first - 1].end == items[i].end) --first;
    for (std::size_t j = first; j <= i; ++j) run += " " + items[j].boxes;
    out.insert(items[i].end, run);
    i = first;
  }
  return out;
}

struct Detection {
  std::string phrase;
  std::size_t begin = 0;
  std::size_t end = 0;
  Box box;  // pixels
};

/// Appends quantized detection boxes after their phrases, producing
/// pseudo-grounded text.
inline GroundedText append_pseudo_grounding(std::string_view text, std::span<const Detection> detections,
                                            ImageSize image, const QuantizerConfig& q = {}) {
  std::vector<BoxInsertion> items;
  for (const Detection& d : detections) {
    items.push_back({d.begin, d.end, format_bins(quantize_box(d.box, image, q))});
  }
  return parse_grounded_text(insert_boxes(text, std::move(items)), q.n_bins);
}

// ---- record conversion -----------------------------------------------------------

// Responses for hallucination questions. Negative answers pick one refusal
// by seed; "{object}" is replaced by the class name.
inline constexpr std::string_view kRefusals[] = {
    "There is no {object} in the image.",
    "No, there is no {object} in the image.",
    "Sorry, I cannot find any {object} in the image.",
};

inline std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
  return s;
}

inline std::string refusal(std::string_view object, std::uint64_t seed) {
  RandomStream rng(seed);
  return replace_all(std::string(kRefusals[rng.uniform_index(std::size(kRefusals))]), "{object}", object);
}

inline std::string affirmation(std::string_view object, std::string_view boxes) {
  std::string out = "Yes, there is " + std::string(object);
  if (!boxes.empty()) out += " " + std::string(boxes);
  return out + " in the image.";
}

namespace detail {

inline std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

inline std::string lower(std::string_view s) { return ferret::detail::ascii_lower(s); }

// Distinct object names in first-appearance order.
inline std::vector<std::string> distinct_names(const SceneRecord& scene) {
  std::vector<std::string> names;
  std::set<std::string> seen;
  for (const SceneObject& o : scene.objects) {
    if (seen.insert(lower(o.name)).second) names.push_back(o.name);
  }
  return names;
}

inline std::string boxes_of_class(const SceneRecord& scene, std::string_view name, const CompileOptions& opts) {
  std::vector<std::string> runs;
  for (const SceneObject& o : scene.objects) {
    if (lower(o.name) == lower(name)) runs.push_back(render_box(o.box, opts));
  }
  return join(runs, " ");
}

inline std::vector<BoxInsertion> caption_insertions(const SceneRecord& scene, int caption,
                                                    const CompileOptions& opts) {
  std::vector<BoxInsertion> items;
  for (const CaptionAlignment& a : scene.alignments) {
    if (a.caption != caption) continue;
    for (int o : a.objects) items.push_back({a.begin, a.end, render_box(scene.objects[o].box, opts)});
  }
  return items;
}

inline bool has_alignments(const SceneRecord& scene, int caption) {
  return std::any_of(scene.alignments.begin(), scene.alignments.end(),
                     [&](const CaptionAlignment& a) { return a.caption == caption && !a.objects.empty(); });
}

}  // namespace detail

inline std::uint64_t sample_seed(std::uint64_t seed, Task task, std::size_t index) {
  return derive_seed(derive_seed(seed, static_cast<std::uint64_t>(task) + 1), index);
}

/// Samples of one task for one scene. Region-in tasks put rendered locations
/// in the prompt; text-in tasks put boxes in the response as "<query> [box].".
inline std::vector<InstructionSample> convert_record(const SceneRecord& scene, Task task, const CompileOptions& opts,
                                                     std::uint64_t seed) {
  scene.validate();
  std::vector<InstructionSample> out;
  auto emit = [&](std::string prompt, std::string response, Polarity pol = Polarity::kPositive,
                  Mining mining = Mining::kNone) {
    out.push_back({std::move(prompt), std::move(response), task, pol, scene.image_id, mining});
  };
  auto next_seed = [&] { return sample_seed(seed, task, out.size()); };

  switch (task) {
    case Task::kReferObject:
      for (const SceneObject& o : scene.objects) {
        emit(fill_template(task, {{"location", render_location(scene, o, opts)}}, next_seed()), o.name);
      }
      break;
    case Task::kReferRelation:
      for (const Relationship& r : scene.relationships) {
        const SceneObject& a = scene.objects[r.object];
        const SceneObject& b = scene.objects[r.subject];
        Slots slots{{"object1", a.name},
                    {"location1", render_location(scene, a, opts)},
                    {"object2", b.name},
                    {"location2", render_location(scene, b, opts)}};
        emit(fill_template(task, slots, next_seed()), a.name + " " + r.predicate + " " + b.name);
      }
      break;
    case Task::kReferRegion:
      for (const RegionDescription& d : scene.regions) {
        emit(fill_template(task, {{"location", render_region_location(d.box, opts)}}, next_seed()), d.text);
      }
      break;
    case Task::kRec: {
      for (const RegionDescription& d : scene.regions) {
        emit(fill_template(task, {{"object", d.text}}, next_seed()), d.text + " " + render_box(d.box, opts) + ".");
      }
      // Objects whose class occurs once are unambiguous referring expressions.
      std::map<std::string, int> counts;
      for (const SceneObject& o : scene.objects) ++counts[detail::lower(o.name)];
      for (const SceneObject& o : scene.objects) {
        if (counts[detail::lower(o.name)] != 1) continue;
        emit(fill_template(task, {{"object", o.name}}, next_seed()), o.name + " " + render_box(o.box, opts) + ".");
      }
      break;
    }
    case Task::kPhraseGrounding:
      for (int c = 0; c < static_cast<int>(scene.captions.size()); ++c) {
        if (!detail::has_alignments(scene, c)) continue;
        std::vector<std::string> phrases, parts;
        std::vector<const CaptionAlignment*> aligned;
        for (const CaptionAlignment& a : scene.alignments) {
          if (a.caption == c && !a.objects.empty()) aligned.push_back(&a);
        }
        std::stable_sort(aligned.begin(), aligned.end(),
                         [](const CaptionAlignment* x, const CaptionAlignment* y) { return x->begin < y->begin; });
        for (const CaptionAlignment* a : aligned) {
          const std::string phrase = scene.captions[c].substr(a->begin, a->end - a->begin);
          std::vector<std::string> boxes;
          for (int o : a->objects) boxes.push_back(render_box(scene.objects[o].box, opts));
          phrases.push_back(phrase);
          parts.push_back(phrase + " " + detail::join(boxes, " "));
        }
        emit(fill_template(task, {{"objects", detail::join(phrases, ", ")}}, next_seed()),
             detail::join(parts, ", ") + ".");
      }
      break;
    case Task::kDetection: {
      const std::vector<std::string> names = detail::distinct_names(scene);
      if (names.empty()) break;
      std::vector<std::string> parts;
      for (const std::string& n : names) parts.push_back(n + " " + detail::boxes_of_class(scene, n, opts));
      emit(fill_template(task, {{"class", detail::join(names, ", ")}}, next_seed()), detail::join(parts, ", ") + ".");
      break;
    }
    case Task::kGroundedCaption: {
      if (scene.captions.empty()) break;
      bool any = false;
      for (int c = 0; c < static_cast<int>(scene.captions.size()); ++c) {
        if (!detail::has_alignments(scene, c)) continue;
        any = true;
        emit(fill_template(task, {}, next_seed()),
             insert_boxes(scene.captions[c], detail::caption_insertions(scene, c, opts)));
      }
      if (!any) throw Error(ErrorCode::kMissingAlignment, "grounded captioning needs caption alignments in " + scene.image_id);
      break;
    }
    case Task::kHallucination:
      for (const std::string& n : detail::distinct_names(scene)) {
        emit(fill_template(task, {{"object", n}}, next_seed()),
             affirmation(n, detail::boxes_of_class(scene, n, opts)), Polarity::kPositive, Mining::kImageConditioned);
      }
      break;
  }
  return out;
}

inline std::vector<InstructionSample> convert_record(const SceneRecord& scene, std::span<const Task> tasks,
                                                     const CompileOptions& opts, std::uint64_t seed) {
  std::vector<InstructionSample> out;
  for (Task t : tasks) {
    auto part = convert_record(scene, t, opts, seed);
    out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return out;
}

// ---- negative mining ---------------------------------------------------------------

/// Localization question about a vocabulary class absent from the scene,
/// answered with a refusal.
inline InstructionSample mine_negative_image_conditioned(const SceneRecord& scene,
                                                         std::span<const std::string> vocabulary,
                                                         std::uint64_t seed) {
  std::set<std::string> present;
  for (const SceneObject& o : scene.objects) present.insert(detail::lower(o.name));
  std::vector<std::string> candidates;
  std::set<std::string> seen;
  for (const std::string& v : vocabulary) {
    const std::string key = detail::lower(v);
    if (v.empty() || present.count(key) || !seen.insert(key).second) continue;
    candidates.push_back(v);
  }
  if (candidates.empty()) {
    throw Error(ErrorCode::kExhaustedVocabulary, "every vocabulary class occurs in " + scene.image_id);
  }
  RandomStream rng(seed);
  const std::string& cls = candidates[rng.uniform_index(candidates.size())];
  return {fill_template(Task::kHallucination, {{"object", cls}}, derive_seed(seed, 1)),
          refusal(cls, derive_seed(seed, 2)),
          Task::kHallucination,
          Polarity::kNegative,
          scene.image_id,
          Mining::kImageConditioned};
}

/// Paired samples for semantic negatives: a positive question about each
/// original entity and a refused question about its misleading replacement.
inline std::vector<InstructionSample> semantic_negative_samples(const SceneRecord& scene,
                                                                std::span<const std::string> entities,
                                                                std::span<const std::string> misleading,
                                                                const CompileOptions& opts, std::uint64_t seed) {
  if (entities.size() != misleading.size()) {
    throw Error(ErrorCode::kLengthMismatch, "misleading list length differs from entity list");
  }
  std::vector<InstructionSample> out;
  for (std::size_t i = 0; i < entities.size(); ++i) {
    const std::uint64_t s = derive_seed(seed, i);
    out.push_back({fill_template(Task::kHallucination, {{"object", entities[i]}}, derive_seed(s, 1)),
                   affirmation(entities[i], detail::boxes_of_class(scene, entities[i], opts)), Task::kHallucination,
                   Polarity::kPositive, scene.image_id, Mining::kSemanticConditioned});
    out.push_back({fill_template(Task::kHallucination, {{"object", misleading[i]}}, derive_seed(s, 2)),
                   refusal(misleading[i], derive_seed(s, 3)), Task::kHallucination, Polarity::kNegative,
                   scene.image_id, Mining::kSemanticConditioned});
  }
  return out;
}

/// Downsamples the larger polarity within each mining family to the size of
/// the smaller one (seeded); other samples pass through. Order is preserved.
inline std::vector<InstructionSample> balance(std::span<const InstructionSample> samples, std::uint64_t seed = 0) {
  std::vector<char> keep(samples.size(), 1);
  for (Mining family : {Mining::kImageConditioned, Mining::kSemanticConditioned}) {
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (samples[i].mining != family) continue;
      (samples[i].polarity == Polarity::kPositive ? pos : neg).push_back(i);
    }
    std::vector<std::size_t>& larger = pos.size() > neg.size() ? pos : neg;
    const std::size_t target = std::min(pos.size(), neg.size());
    RandomStream rng(derive_seed(seed, static_cast<std::uint64_t>(family)));
    // Partial Fisher-Yates: the first `target` entries survive.
    for (std::size_t i = 0; i < target; ++i) {
      std::swap(larger[i], larger[i + rng.uniform_index(larger.size() - i)]);
    }
    for (std::size_t i = target; i < larger.size(); ++i) keep[larger[i]] = 0;
  }
  std::vector<InstructionSample> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (keep[i]) out.push_back(samples[i]);
  }
  return out;
}

}  // namespace ferret::grit
