#pragma once

// JSON encodings of regions, scene records, instruction samples and
// evaluation records. Field names and layouts are specified in FORMATS.md.

#include <algorithm>
#include <cstdint>
#include <istream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ferret/error.hpp"
#include "ferret/geometry.hpp"
#include "ferret/grit.hpp"
#include "ferret/metrics.hpp"

namespace ferret::json {

using Json = nlohmann::ordered_json;

namespace detail {

[[noreturn]] inline void fail(const std::string& what) { throw Error(ErrorCode::kFormat, what); }

inline const Json& field(const Json& j, const char* name) {
  if (!j.is_object()) fail("expected an object");
  auto it = j.find(name);
  if (it == j.end()) fail(std::string("missing field '") + name + "'");
  return *it;
}

inline double number(const Json& j, const char* what) {
  if (!j.is_number()) fail(std::string(what) + " must be a number");
  return j.get<double>();
}

inline int integer(const Json& j, const char* what) {
  if (!j.is_number_integer()) fail(std::string(what) + " must be an integer");
  return j.get<int>();
}

inline std::string text(const Json& j, const char* what) {
  if (!j.is_string()) fail(std::string(what) + " must be a string");
  return j.get<std::string>();
}

inline Vec2 vec2(const Json& j) {
  if (!j.is_array() || j.size() != 2) fail("a vertex must be [x, y]");
  return {number(j[0], "x"), number(j[1], "y")};
}

template <typename T>
T quad(const Json& j, const char* what) {
  if (!j.is_array() || j.size() != 4) fail(std::string(what) + " must be [x_min, y_min, x_max, y_max]");
  return {number(j[0], what), number(j[1], what), number(j[2], what), number(j[3], what)};
}

}  // namespace detail

// ---- masks and regions ---------------------------------------------------------

// Each row is a list of run lengths alternating off/on, starting with an
// off-run (possibly 0); runs sum to the width.
inline Json mask_to_json(const BinaryMask& mask) {
  Json rows = Json::array();
  for (int y = 0; y < mask.height(); ++y) {
    Json runs = Json::array();
    bool value = false;
    int run = 0;
    for (int x = 0; x < mask.width(); ++x) {
      if (mask.at(x, y) != value) {
        runs.push_back(run);
        value = !value;
        run = 0;
      }
      ++run;
    }
    runs.push_back(run);
    rows.push_back(std::move(runs));
  }
  return Json{{"type", "mask"}, {"width", mask.width()}, {"height", mask.height()}, {"rle", std::move(rows)}};
}

inline BinaryMask mask_from_json(const Json& j) {
  const int w = detail::integer(detail::field(j, "width"), "width");
  const int h = detail::integer(detail::field(j, "height"), "height");
  if (w <= 0 || h <= 0) detail::fail("mask dimensions must be positive");
  const Json& rows = detail::field(j, "rle");
  if (!rows.is_array() || static_cast<int>(rows.size()) != h) detail::fail("rle must have one entry per row");
  BinaryMask mask(w, h);
  for (int y = 0; y < h; ++y) {
    if (!rows[y].is_array()) detail::fail("rle row must be an array");
    int x = 0;
    bool value = false;
    for (const Json& r : rows[y]) {
      const int len = detail::integer(r, "run length");
      if (len < 0 || x + len > w) detail::fail("rle row " + std::to_string(y) + " does not sum to the width");
      for (int i = 0; i < len; ++i) mask.set(x + i, y, value);
      x += len;
      value = !value;
    }
    if (x != w) detail::fail("rle row " + std::to_string(y) + " does not sum to the width");
  }
  return mask;
}

inline Json region_to_json(const Region& region) {
  return std::visit(
      [](const auto& r) -> Json {
        using T = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<T, Point>) {
          return {{"type", "point"}, {"x", r.x}, {"y", r.y}, {"radius", r.radius}};
        } else if constexpr (std::is_same_v<T, Box>) {
          return {{"type", "box"}, {"box", {r.x_min, r.y_min, r.x_max, r.y_max}}};
        } else if constexpr (std::is_same_v<T, Polygon>) {
          Json v = Json::array();
          for (const Vec2& p : r.vertices) v.push_back({p.x, p.y});
          return {{"type", "polygon"}, {"vertices", std::move(v)}};
        } else if constexpr (std::is_same_v<T, Scribble>) {
          Json strokes = Json::array();
          for (const auto& s : r.strokes) {
            Json v = Json::array();
            for (const Vec2& p : s) v.push_back({p.x, p.y});
            strokes.push_back(std::move(v));
          }
          return {{"type", "scribble"}, {"strokes", std::move(strokes)}, {"stroke_width", r.stroke_width}};
        } else {
          return mask_to_json(r);
        }
      },
      region);
}

inline Region region_from_json(const Json& j) {
  const std::string type = detail::text(detail::field(j, "type"), "type");
  if (type == "point") {
    Point p{detail::number(detail::field(j, "x"), "x"), detail::number(detail::field(j, "y"), "y")};
    if (j.contains("radius")) p.radius = detail::number(j["radius"], "radius");
    return p;
  }
  if (type == "box") return detail::quad<Box>(detail::field(j, "box"), "box");
  if (type == "polygon") {
    Polygon poly;
    const Json& v = detail::field(j, "vertices");
    if (!v.is_array()) detail::fail("vertices must be an array");
    for (const Json& p : v) poly.vertices.push_back(detail::vec2(p));
    return poly;
  }
  if (type == "scribble") {
    Scribble s;
    const Json& strokes = detail::field(j, "strokes");
    if (!strokes.is_array()) detail::fail("strokes must be an array");
    for (const Json& stroke : strokes) {
      if (!stroke.is_array()) detail::fail("a stroke must be an array of vertices");
      std::vector<Vec2> pts;
      for (const Json& p : stroke) pts.push_back(detail::vec2(p));
      s.strokes.push_back(std::move(pts));
    }
    if (j.contains("stroke_width")) s.stroke_width = detail::number(j["stroke_width"], "stroke_width");
    return s;
  }
  if (type == "mask") return mask_from_json(j);
  detail::fail("unknown region type '" + type + "'");
}

inline Json image_to_json(ImageSize s) { return {{"width", s.width}, {"height", s.height}}; }

inline ImageSize image_from_json(const Json& j) {
  return {detail::integer(detail::field(j, "width"), "width"), detail::integer(detail::field(j, "height"), "height")};
}

inline Json box_to_json(const Box& b) { return {b.x_min, b.y_min, b.x_max, b.y_max}; }

// ---- scenes ------------------------------------------------------------------------

inline grit::SceneRecord scene_from_json(const Json& j) {
  grit::SceneRecord s;
  s.image_id = detail::text(detail::field(j, "image_id"), "image_id");
  s.size = {detail::integer(detail::field(j, "width"), "width"), detail::integer(detail::field(j, "height"), "height")};
  if (j.contains("objects")) {
    for (const Json& o : j["objects"]) {
      grit::SceneObject obj{detail::text(detail::field(o, "name"), "name"),
                            detail::quad<grit::RelBox>(detail::field(o, "box"), "box"), std::nullopt};
      if (o.contains("mask")) obj.mask = mask_from_json(o["mask"]);
      s.objects.push_back(std::move(obj));
    }
  }
  if (j.contains("relationships")) {
    for (const Json& r : j["relationships"]) {
      s.relationships.push_back({detail::integer(detail::field(r, "object"), "object"),
                                 detail::text(detail::field(r, "predicate"), "predicate"),
                                 detail::integer(detail::field(r, "subject"), "subject")});
    }
  }
  if (j.contains("regions")) {
    for (const Json& r : j["regions"]) {
      s.regions.push_back({detail::quad<grit::RelBox>(detail::field(r, "box"), "box"),
                           detail::text(detail::field(r, "text"), "text")});
    }
  }
  if (j.contains("captions")) {
    for (const Json& c : j["captions"]) s.captions.push_back(detail::text(c, "caption"));
  }
  if (j.contains("alignments")) {
    for (const Json& a : j["alignments"]) {
      grit::CaptionAlignment al;
      al.caption = detail::integer(detail::field(a, "caption"), "caption");
      if (al.caption < 0 || al.caption >= static_cast<int>(s.captions.size())) detail::fail("alignment caption index");
      if (a.contains("phrase")) {
        // First occurrence of the phrase in the caption.
        const std::string phrase = detail::text(a["phrase"], "phrase");
        const std::size_t at = s.captions[al.caption].find(phrase);
        if (phrase.empty() || at == std::string::npos) detail::fail("alignment phrase '" + phrase + "' not in caption");
        al.begin = at;
        al.end = at + phrase.size();
      } else {
        al.begin = static_cast<std::size_t>(detail::integer(detail::field(a, "begin"), "begin"));
        al.end = static_cast<std::size_t>(detail::integer(detail::field(a, "end"), "end"));
      }
      for (const Json& o : detail::field(a, "objects")) al.objects.push_back(detail::integer(o, "object index"));
      s.alignments.push_back(std::move(al));
    }
  }
  s.validate();
  return s;
}

// Entity list used for semantic negatives: the "entities" field when
// present, otherwise the aligned caption phrases in order, deduplicated.
inline std::vector<std::string> scene_entities(const Json& j, const grit::SceneRecord& s) {
  std::vector<std::string> out;
  if (j.contains("entities")) {
    for (const Json& e : j["entities"]) out.push_back(detail::text(e, "entity"));
    return out;
  }
  for (const grit::CaptionAlignment& a : s.alignments) {
    std::string phrase = s.captions[a.caption].substr(a.begin, a.end - a.begin);
    if (std::find(out.begin(), out.end(), phrase) == out.end()) out.push_back(std::move(phrase));
  }
  return out;
}

inline Json sample_to_json(const grit::InstructionSample& s) {
  return {{"prompt", s.prompt},
          {"response", s.response},
          {"task", grit::to_string(s.task)},
          {"polarity", grit::to_string(s.polarity)},
          {"image_id", s.image_id}};
}

// ---- evaluation records -------------------------------------------------------
// A line carries "id", "task", the prediction ("text", or "score" for bench
// ratios) and/or "gt". Prediction and ground-truth files are joined on id.

inline RecRecord rec_record(const std::string& id, const std::string& text, const Json& gt) {
  return {id, text, detail::quad<Box>(detail::field(gt, "box"), "gt box"), image_from_json(detail::field(gt, "image"))};
}

inline PhraseRecord phrase_record(const std::string& id, const std::string& text, const Json& gt) {
  PhraseRecord r{id, text, {}, image_from_json(detail::field(gt, "image"))};
  for (const Json& p : detail::field(gt, "phrases")) {
    GtPhrase g{detail::text(detail::field(p, "phrase"), "phrase"), {}};
    for (const Json& b : detail::field(p, "boxes")) g.boxes.push_back(detail::quad<Box>(b, "gt box"));
    r.gt.push_back(std::move(g));
  }
  return r;
}

inline CaptionRecord caption_record(const std::string& id, const std::string& text, const Json& gt) {
  CaptionRecord r{id, text, {}, image_from_json(detail::field(gt, "image"))};
  for (const Json& o : detail::field(gt, "objects")) {
    r.gt.push_back({detail::text(detail::field(o, "word"), "word"), detail::quad<Box>(detail::field(o, "box"), "gt box")});
  }
  return r;
}

inline ReferRecord refer_record(const std::string& id, const std::string& text, const Json& gt) {
  ReferRecord r{id, text, detail::text(detail::field(gt, "class"), "class"), ""};
  if (gt.contains("negative")) r.neg_class = detail::text(gt["negative"], "negative");
  return r;
}

inline PopeRecord pope_record(const std::string& id, const std::string& text, const Json& gt) {
  const std::string answer = ferret::detail::ascii_lower(detail::text(detail::field(gt, "answer"), "answer"));
  if (answer != "yes" && answer != "no") detail::fail("gt answer must be \"yes\" or \"no\"");
  return {id, text, answer == "yes"};
}

}  // namespace ferret::json
