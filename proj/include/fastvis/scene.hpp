#pragma once

// Scene-graph oracle: a rule-based implementation of every adapter role that
// answers from ground-truth object annotations. It is the reference backend for
// end-to-end tests and benchmarks.
//
// Supported question grammar (case-insensitive):
//   What <attribute> ... <label> ...   -> attributes[<attribute>]
//   Where ... <label> ...              -> attributes["location"], else the object's clue
//   Is ... <label> ...                 -> "yes" / "no"
// The target is the longest scene label appearing as a word sequence in the
// question, otherwise the word following the first article (a/an/the).

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "fastvis/adapter.hpp"

namespace fastvis {

inline constexpr int kDefaultThreshold = 20;
inline constexpr double kRegionPadding = 0.10;

struct SceneObject {
  std::string label;
  BBox bbox;
  std::map<std::string, std::string> attributes;
  std::string clue;

  bool operator==(const SceneObject&) const = default;
};

class SceneGraph {
 public:
  SceneGraph(int image_w, int image_h, std::vector<SceneObject> objects)
      : image_w_(image_w), image_h_(image_h), objects_(std::move(objects)) {
    if (image_w <= 0 || image_h <= 0) throw GeometryError("scene: image dimensions must be positive");
    for (std::size_t i = 0; i < objects_.size(); ++i) {
      const auto& o = objects_[i];
      if (o.label.empty()) throw ConfigError("scene: empty object label");
      if (o.bbox.image_w() != image_w || o.bbox.image_h() != image_h) {
        throw GeometryError(fmt::format("scene: bbox of '{}' refers to a different image size", o.label));
      }
      for (std::size_t k = 0; k < i; ++k) {
        if (objects_[k].label == o.label) {
          throw ConfigError(fmt::format("scene: duplicate label '{}'", o.label));
        }
      }
    }
  }

  int image_w() const { return image_w_; }
  int image_h() const { return image_h_; }
  const std::vector<SceneObject>& objects() const { return objects_; }

  const SceneObject* find(std::string_view label) const {
    for (const auto& o : objects_) {
      if (o.label == label) return &o;
    }
    return nullptr;
  }

  bool operator==(const SceneGraph&) const = default;

 private:
  int image_w_, image_h_;
  std::vector<SceneObject> objects_;
};

/// Scenes keyed by image_ref.
using SceneLibrary = std::map<std::string, SceneGraph, std::less<>>;

// ---------------------------------------------------------------------------
// JSON

inline Json encode(const SceneGraph& s) {
  Json objs = Json::array();
  for (const auto& o : s.objects()) {
    objs.push_back(Json{{"label", o.label}, {"bbox", encode(o.bbox)},
                        {"attributes", o.attributes}, {"clue", o.clue}});
  }
  return Json{{"image_w", s.image_w()}, {"image_h", s.image_h()}, {"objects", std::move(objs)}};
}

inline SceneGraph decode_scene(const Json& j, std::string_view path = "scene") {
  detail::expect_object(j, path);
  detail::expect_only(j, path, {"image_w", "image_h", "objects"});
  const int w = detail::get_int(j, path, "image_w");
  const int h = detail::get_int(j, path, "image_h");
  std::vector<SceneObject> objects = decode_list<SceneObject>(
      j, path, "objects", [&](const Json& o, const std::string& p) {
        detail::expect_object(o, p);
        detail::expect_only(o, p, {"label", "bbox", "attributes", "clue"});
        std::map<std::string, std::string> attrs;
        if (o.contains("attributes")) {
          const Json& a = o["attributes"];
          if (!a.is_object()) throw ParseError(p + ".attributes: expected object");
          for (const auto& [k, v] : a.items()) {
            if (!v.is_string()) throw ParseError(p + ".attributes." + k + ": expected string");
            attrs[k] = v.get<std::string>();
          }
        }
        // Boxes may omit image_w/image_h; they default to the scene's size.
        Json bb = detail::member(o, p, "bbox");
        if (bb.is_object()) {
          if (!bb.contains("image_w")) bb["image_w"] = w;
          if (!bb.contains("image_h")) bb["image_h"] = h;
        }
        return SceneObject{detail::get_string(o, p, "label"), decode_bbox(bb, p + ".bbox"), std::move(attrs),
                           o.contains("clue") ? detail::get_string(o, p, "clue") : std::string{}};
      });
  return detail::with_path(path, [&] { return SceneGraph(w, h, std::move(objects)); });
}

inline Json encode(const SceneLibrary& lib) {
  Json j = Json::object();
  for (const auto& [ref, scene] : lib) j[ref] = encode(scene);
  return j;
}

inline SceneLibrary decode_scene_library(const Json& j) {
  detail::expect_object(j, "scenes");
  SceneLibrary lib;
  for (const auto& [ref, s] : j.items()) lib.emplace(ref, decode_scene(s, "scenes." + ref));
  return lib;
}

// ---------------------------------------------------------------------------
// Question grammar

enum class QuestionKind { What, Where, Is };

struct OracleQuestion {
  QuestionKind kind;
  std::string attribute;  // What-questions only
  std::string target;
};

namespace detail {

inline std::vector<std::string> words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline bool contains_sequence(const std::vector<std::string>& hay,
                              const std::vector<std::string>& needle) {
  if (needle.empty() || needle.size() > hay.size()) return false;
  return std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) != hay.end();
}

/// Longest scene label mentioned in `text`, if any.
inline const SceneObject* mentioned_object(const SceneGraph& scene, std::string_view text) {
  const auto toks = words(text);
  const SceneObject* best = nullptr;
  std::size_t best_len = 0;
  for (const auto& o : scene.objects()) {
    const auto lw = words(o.label);
    if (lw.size() > best_len && contains_sequence(toks, lw)) {
      best = &o;
      best_len = lw.size();
    }
  }
  return best;
}

}  // namespace detail

inline OracleQuestion parse_oracle_question(std::string_view question, const SceneGraph& scene) {
  const auto toks = detail::words(question);
  if (toks.empty()) throw UnsupportedQuestionError("oracle: empty question");
  OracleQuestion q{};
  if (toks[0] == "what") {
    q.kind = QuestionKind::What;
    if (toks.size() < 2 || toks[1] == "is" || toks[1] == "are") {
      throw UnsupportedQuestionError(
          fmt::format("oracle: what-question names no attribute: '{}'", question));
    }
    q.attribute = toks[1];
  } else if (toks[0] == "where") {
    q.kind = QuestionKind::Where;
  } else if (toks[0] == "is" || toks[0] == "are") {
    q.kind = QuestionKind::Is;
  } else {
    throw UnsupportedQuestionError(fmt::format("oracle: unsupported question '{}'", question));
  }

  if (const auto* obj = detail::mentioned_object(scene, question)) {
    q.target = obj->label;
    return q;
  }
  for (std::size_t i = 1; i + 1 < toks.size(); ++i) {
    if (toks[i] == "a" || toks[i] == "an" || toks[i] == "the") {
      q.target = toks[i + 1];
      return q;
    }
  }
  throw UnsupportedQuestionError(fmt::format("oracle: question names no target: '{}'", question));
}

/// Ground-truth answer, independent of the object's size.
inline std::string oracle_answer(const SceneGraph& scene, const OracleQuestion& q) {
  const SceneObject* obj = scene.find(q.target);
  if (!obj) {
    if (q.kind == QuestionKind::Is) return "no";
    return fmt::format("There is no {} in the image.", q.target);
  }
  switch (q.kind) {
    case QuestionKind::Is:
      return "yes";
    case QuestionKind::What: {
      auto it = obj->attributes.find(q.attribute);
      if (it == obj->attributes.end()) {
        throw UnsupportedQuestionError(
            fmt::format("oracle: '{}' has no attribute '{}'", obj->label, q.attribute));
      }
      return it->second;
    }
    case QuestionKind::Where: {
      auto it = obj->attributes.find("location");
      if (it != obj->attributes.end()) return it->second;
      if (!obj->clue.empty()) return obj->clue;
      throw UnsupportedQuestionError(fmt::format("oracle: no location known for '{}'", obj->label));
    }
  }
  return {};
}

/// The structured refusal emitted when slow thinking is needed.
inline std::string format_trigger_text(const std::vector<std::string>& missing,
                                       std::string_view clue) {
  std::string text = fmt::format("Sorry, I can not answer. Missing objects: [{}].",
                                 fmt::join(missing, ", "));
  if (!clue.empty()) text += fmt::format(" Context: {}", clue);
  return text;
}

/// Switch-adapter behaviour of the oracle: a direct answer when the target is
/// present and perceivable, otherwise the trigger text naming what is missing.
inline AdapterResponse oracle_switch(const SceneGraph& scene, const Query& q, int threshold_w,
                                     int threshold_h) {
  const OracleQuestion parsed = parse_oracle_question(q.question(), scene);
  const SceneObject* obj = scene.find(parsed.target);
  AdapterResponse resp{.role = AdapterRole::Switch};
  if (obj && classify_visibility(obj->bbox, threshold_w, threshold_h) == Visibility::Visible) {
    resp.raw_text = oracle_answer(scene, parsed);
  } else {
    resp.raw_text = format_trigger_text({parsed.target}, obj ? obj->clue : std::string_view{});
  }
  return resp;
}

/// Smallest region covering `boxes`, grown by `pad` of its own extent on each
/// side and clipped to the frame.
inline Region padded_region(const std::vector<BBox>& boxes, double pad = kRegionPadding) {
  if (boxes.empty()) return Region::full_frame();
  double l = 1, r = 0, t = 1, b = 0;
  for (const auto& bx : boxes) {
    const Region n = bx.normalized();
    l = std::min(l, n.left());
    r = std::max(r, n.right());
    t = std::min(t, n.top());
    b = std::max(b, n.bottom());
  }
  const double dw = (r - l) * pad, dh = (b - t) * pad;
  return Region(std::max(0.0, l - dw), std::min(1.0, r + dw), std::max(0.0, t - dh),
                std::min(1.0, b + dh));
}

class OracleBackend final : public Backend {
 public:
  explicit OracleBackend(SceneLibrary scenes, int threshold_w = kDefaultThreshold,
                         int threshold_h = kDefaultThreshold)
      : scenes_(std::move(scenes)), threshold_w_(threshold_w), threshold_h_(threshold_h) {
    if (threshold_w <= 0 || threshold_h <= 0) throw ConfigError("oracle: threshold must be positive");
  }

  const SceneLibrary& scenes() const { return scenes_; }

  AdapterResponse call(const AdapterRequest& req) override {
    const SceneGraph& scene = scene_for(req.query);
    switch (req.role) {
      case AdapterRole::Switch:
        return oracle_switch(scene, req.query, threshold_w_, threshold_h_);
      case AdapterRole::ProposeRegion:
        return propose_region(scene, req);
      case AdapterRole::ProposeBoxes:
        return propose_boxes(scene, req);
      case AdapterRole::Segment:
        return segment(scene, req);
      case AdapterRole::Summarize:
        return AdapterResponse{
            .role = AdapterRole::Summarize,
            .raw_text = oracle_answer(scene, parse_oracle_question(req.query.question(), scene))};
    }
    throw ProtocolError("oracle: unknown role");
  }

 private:
  const SceneGraph& scene_for(const Query& q) const {
    auto it = scenes_.find(q.image_ref());
    if (it == scenes_.end()) throw AdapterError(fmt::format("oracle: unknown image '{}'", q.image_ref()));
    return it->second;
  }

  static const SceneObject* target_of(const SceneGraph& scene, const Query& q) {
    return scene.find(parse_oracle_question(q.question(), scene).target);
  }

  // Region covering the target and every object a clue refers to.
  static AdapterResponse propose_region(const SceneGraph& scene, const AdapterRequest& req) {
    std::vector<BBox> anchors;
    if (const auto* t = target_of(scene, req.query)) anchors.push_back(t->bbox);
    for (const auto& c : req.clues) {
      if (const auto* o = detail::mentioned_object(scene, c.text())) anchors.push_back(o->bbox);
    }
    const Region region = padded_region(anchors);
    return AdapterResponse{
        .role = AdapterRole::ProposeRegion, .raw_text = format_region(region), .region = region};
  }

  static AdapterResponse propose_boxes(const SceneGraph& scene, const AdapterRequest& req) {
    AdapterResponse resp{.role = AdapterRole::ProposeBoxes};
    if (const auto* t = target_of(scene, req.query)) resp.boxes.push_back(t->bbox);
    return resp;
  }

  // Mask support is exactly the target rectangle. Without input boxes the
  // response also reports the box the mask was drawn from.
  static AdapterResponse segment(const SceneGraph& scene, const AdapterRequest& req) {
    AdapterResponse resp{.role = AdapterRole::Segment};
    if (const auto* t = target_of(scene, req.query)) {
      resp.mask = mask_from_bbox(t->bbox);
      if (req.boxes.empty()) resp.boxes.push_back(t->bbox);
    } else {
      resp.mask = Mask::empty(scene.image_w(), scene.image_h());
    }
    return resp;
  }

  SceneLibrary scenes_;
  int threshold_w_, threshold_h_;
};

}  // namespace fastvis
