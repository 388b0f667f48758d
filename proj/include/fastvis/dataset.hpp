#pragma once

// Builds the switching dataset: (image, question, answer) triples whose answer
// refuses and names the missing objects, for objects that are absent from the
// image or too small to perceive, plus proposal-training prompt/answer records.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "fastvis/adapter.hpp"
#include "fastvis/records.hpp"
#include "fastvis/scene.hpp"

namespace fastvis {

struct AnnotatedObject {
  std::string label;
  BBox bbox;
  std::map<std::string, std::string> attributes;
};

struct AnnotatedImage {
  std::string image_ref;
  int width = 0;
  int height = 0;
  std::vector<AnnotatedObject> objects;
};

struct AnnotationSet {
  std::vector<AnnotatedImage> images;
};

enum class Negativity { Absent, Invisible, Positive };

inline std::string_view to_string(Negativity n) {
  switch (n) {
    case Negativity::Absent: return "Absent";
    case Negativity::Invisible: return "Invisible";
    case Negativity::Positive: return "Positive";
  }
  return "?";
}

struct TripleRecord {
  std::string image_ref;
  std::string question;
  std::string answer;
  Negativity negativity = Negativity::Absent;
  std::vector<MissingObject> missing;
  std::optional<ContextClue> clue;

  bool operator==(const TripleRecord&) const = default;
};

struct ProposalRecord {
  std::string prompt;
  std::string answer;
  std::string image_ref;

  bool operator==(const ProposalRecord&) const = default;
};

/// Question phrasings, loaded from data. "{label}" marks the object name; the
/// proposal prompt carries "[Q]" and "[C]" slots for question and clue.
struct DatasetTemplates {
  std::vector<std::string> absent;
  std::vector<std::string> invisible;
  std::string proposal_prompt;
  std::vector<std::string> proposal_questions;

  void validate() const {
    auto check = [](const std::vector<std::string>& list, const char* name) {
      if (list.empty()) throw ConfigError(fmt::format("templates: '{}' must be non-empty", name));
      for (const auto& t : list) {
        if (t.find("{label}") == std::string::npos) {
          throw ConfigError(fmt::format("templates: '{}' entry lacks {{label}}: {}", name, t));
        }
      }
    };
    check(absent, "absent");
    check(invisible, "invisible");
    check(proposal_questions, "proposal_questions");
    if (proposal_prompt.find("[Q]") == std::string::npos ||
        proposal_prompt.find("[C]") == std::string::npos) {
      throw ConfigError("templates: proposal_prompt needs [Q] and [C] slots");
    }
  }
};

inline DatasetTemplates default_templates() {
  return DatasetTemplates{
      .absent = {"Is there a {label} in the image?", "What color is the {label}?"},
      .invisible = {"What color is the {label}?", "Where is the {label}?"},
      .proposal_prompt = "<Image>\nTo answer the question: [Q],\n"
                         "where is the region of interest in the image based on [C]?",
      .proposal_questions = {"What color is the {label}?", "Where is the {label}?"},
  };
}

struct DatasetOptions {
  int threshold_w = kDefaultThreshold;
  int threshold_h = kDefaultThreshold;
  std::uint64_t seed = 0;
  /// Absent labels sampled per image; 0 takes every absent vocabulary label.
  int absent_per_image = 0;
};

struct NegativeDataset {
  std::vector<TripleRecord> triples;
  std::vector<std::string> warnings;
};

// ---------------------------------------------------------------------------
// JSON

inline Json encode(const TripleRecord& t) {
  Json j{{"image_ref", t.image_ref}, {"question", t.question}, {"answer", t.answer},
         {"negativity", to_string(t.negativity)}, {"missing", encode_list(t.missing)}};
  if (t.clue) j["clue"] = encode(*t.clue);
  return j;
}

inline TripleRecord decode_triple(const Json& j, std::string_view path = "triple") {
  detail::expect_object(j, path);
  detail::expect_only(j, path, {"image_ref", "question", "answer", "negativity", "missing", "clue"});
  TripleRecord t;
  t.image_ref = detail::get_string(j, path, "image_ref");
  t.question = detail::get_string(j, path, "question");
  t.answer = detail::get_string(j, path, "answer");
  const auto neg = detail::get_string(j, path, "negativity");
  if (neg == "Absent") t.negativity = Negativity::Absent;
  else if (neg == "Invisible") t.negativity = Negativity::Invisible;
  else if (neg == "Positive") t.negativity = Negativity::Positive;
  else throw ParseError(detail::join_path(path, "negativity") + ": unknown value '" + neg + "'");
  t.missing = decode_list<MissingObject>(j, path, "missing", decode_missing);
  if (j.contains("clue")) t.clue = decode_clue(j["clue"], detail::join_path(path, "clue"));
  return t;
}

inline Json encode(const ProposalRecord& p) {
  return Json{{"prompt", p.prompt}, {"answer", p.answer}, {"image_ref", p.image_ref}};
}

inline DatasetTemplates decode_templates(const Json& j) {
  detail::expect_object(j, "templates");
  detail::expect_only(j, "templates", {"absent", "invisible", "proposal_prompt", "proposal_questions"});
  DatasetTemplates t = default_templates();
  if (j.contains("absent")) t.absent = detail::string_list(j, "templates", "absent");
  if (j.contains("invisible")) t.invisible = detail::string_list(j, "templates", "invisible");
  if (j.contains("proposal_prompt")) t.proposal_prompt = detail::get_string(j, "templates", "proposal_prompt");
  if (j.contains("proposal_questions")) {
    t.proposal_questions = detail::string_list(j, "templates", "proposal_questions");
  }
  try {
    t.validate();
  } catch (const ConfigError& e) {
    throw ParseError(e.what());
  }
  return t;
}

inline Json encode(const AnnotationSet& a) {
  Json images = Json::array();
  for (const auto& img : a.images) {
    Json objs = Json::array();
    for (const auto& o : img.objects) {
      objs.push_back(Json{{"label", o.label}, {"bbox", encode(o.bbox)}, {"attributes", o.attributes}});
    }
    images.push_back(Json{{"image_ref", img.image_ref}, {"width", img.width},
                          {"height", img.height}, {"objects", std::move(objs)}});
  }
  return Json{{"images", std::move(images)}};
}

/// Object bboxes may omit image_w/image_h; they default to the image's size.
inline AnnotationSet decode_annotations(const Json& j) {
  detail::expect_object(j, "annotations");
  AnnotationSet set;
  set.images = decode_list<AnnotatedImage>(j, "annotations", "images", [](const Json& im, const std::string& p) {
    detail::expect_object(im, p);
    detail::expect_only(im, p, {"image_ref", "width", "height", "objects"});
    AnnotatedImage img;
    img.image_ref = detail::get_string(im, p, "image_ref");
    img.width = detail::get_int(im, p, "width");
    img.height = detail::get_int(im, p, "height");
    if (img.width <= 0 || img.height <= 0) throw ParseError(p + ": image dimensions must be positive");
    img.objects = decode_list<AnnotatedObject>(im, p, "objects", [&](const Json& o, const std::string& op) {
      detail::expect_object(o, op);
      detail::expect_only(o, op, {"label", "bbox", "attributes"});
      Json bb = detail::member(o, op, "bbox");
      if (bb.is_object()) {
        if (!bb.contains("image_w")) bb["image_w"] = img.width;
        if (!bb.contains("image_h")) bb["image_h"] = img.height;
      }
      BBox box = decode_bbox(bb, op + ".bbox");
      if (box.image_w() != img.width || box.image_h() != img.height) {
        throw ParseError(op + ".bbox: image size disagrees with the image entry");
      }
      std::map<std::string, std::string> attrs;
      if (o.contains("attributes")) {
        for (const auto& [k, v] : o["attributes"].items()) {
          if (!v.is_string()) throw ParseError(op + ".attributes." + k + ": expected string");
          attrs[k] = v.get<std::string>();
        }
      }
      return AnnotatedObject{detail::get_string(o, op, "label"), box, std::move(attrs)};
    });
    return img;
  });
  return set;
}

// ---------------------------------------------------------------------------
// Builders

namespace detail {

inline std::string fill_label(std::string_view tmpl, std::string_view label) {
  std::string out(tmpl);
  for (auto pos = out.find("{label}"); pos != std::string::npos; pos = out.find("{label}", pos)) {
    out.replace(pos, 7, label);
    pos += label.size();
  }
  return out;
}

/// Per-image generator, so output does not depend on processing order.
inline std::mt19937_64 image_rng(std::uint64_t seed, std::string_view image_ref) {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  for (unsigned char c : image_ref) h = (h ^ c) * 1099511628211ull;
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
  return std::mt19937_64(seq);
}

inline std::size_t pick(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

/// Nearest visible object other than `self` by center distance; ties go to the
/// lexicographically smaller label.
inline const AnnotatedObject* nearest_visible(const AnnotatedImage& img, const AnnotatedObject& self,
                                              int tw, int th) {
  const AnnotatedObject* best = nullptr;
  double best_d = std::numeric_limits<double>::infinity();
  for (const auto& o : img.objects) {
    if (&o == &self || o.label == self.label) continue;
    if (classify_visibility(o.bbox, tw, th) != Visibility::Visible) continue;
    const double d = std::hypot(o.bbox.center_x() - self.bbox.center_x(),
                                o.bbox.center_y() - self.bbox.center_y());
    if (d < best_d || (d == best_d && best && o.label < best->label)) {
      best = &o;
      best_d = d;
    }
  }
  return best;
}

inline std::string near_clue(const AnnotatedObject& anchor) { return "near the " + anchor.label; }

}  // namespace detail

inline NegativeDataset build_negative_triples(const AnnotationSet& ann,
                                              const std::vector<std::string>& vocab,
                                              const DatasetTemplates& templates,
                                              const DatasetOptions& opts = {}) {
  if (vocab.empty()) throw ConfigError("dataset: vocabulary must be non-empty");
  if (opts.absent_per_image < 0) throw ConfigError("dataset: absent_per_image must be >= 0");
  templates.validate();
  const std::set<std::string> vocab_set(vocab.begin(), vocab.end());

  NegativeDataset out;
  for (const auto& img : ann.images) {
    auto rng = detail::image_rng(opts.seed, img.image_ref);
    std::set<std::string> present;
    for (const auto& o : img.objects) present.insert(o.label);

    for (const auto& o : img.objects) {
      if (classify_visibility(o.bbox, opts.threshold_w, opts.threshold_h) != Visibility::Invisible) {
        continue;
      }
      TripleRecord t;
      t.image_ref = img.image_ref;
      t.negativity = Negativity::Invisible;
      t.question = detail::fill_label(templates.invisible[detail::pick(rng, templates.invisible.size())], o.label);
      t.missing.emplace_back(o.label);
      if (const auto* anchor = detail::nearest_visible(img, o, opts.threshold_w, opts.threshold_h)) {
        t.clue = ContextClue(detail::near_clue(*anchor));
      } else {
        out.warnings.push_back(fmt::format("{}: no visible object to anchor a clue for '{}'",
                                           img.image_ref, o.label));
      }
      t.answer = format_trigger_text({o.label}, t.clue ? t.clue->text() : std::string_view{});
      out.triples.push_back(std::move(t));
    }

    std::vector<std::string> absent;
    std::set_difference(vocab_set.begin(), vocab_set.end(), present.begin(), present.end(),
                        std::back_inserter(absent));
    if (opts.absent_per_image > 0 && absent.size() > static_cast<std::size_t>(opts.absent_per_image)) {
      // Partial Fisher-Yates, then restore canonical order.
      for (std::size_t i = 0; i < static_cast<std::size_t>(opts.absent_per_image); ++i) {
        std::swap(absent[i], absent[i + detail::pick(rng, absent.size() - i)]);
      }
      absent.resize(static_cast<std::size_t>(opts.absent_per_image));
      std::sort(absent.begin(), absent.end());
    }
    for (const auto& label : absent) {
      TripleRecord t;
      t.image_ref = img.image_ref;
      t.negativity = Negativity::Absent;
      t.question = detail::fill_label(templates.absent[detail::pick(rng, templates.absent.size())], label);
      t.missing.emplace_back(label);
      t.answer = format_trigger_text({label}, {});
      out.triples.push_back(std::move(t));
    }
  }

  std::stable_sort(out.triples.begin(), out.triples.end(), [](const TripleRecord& a, const TripleRecord& b) {
    if (a.image_ref != b.image_ref) return a.image_ref < b.image_ref;
    return a.missing.front().label() < b.missing.front().label();
  });
  return out;
}

/// One record per annotated object: the proposal prompt with question and clue
/// filled in, answered by the object's normalized bounds at 4 decimals.
inline std::vector<ProposalRecord> build_proposal_records(const AnnotationSet& ann,
                                                          const DatasetTemplates& templates,
                                                          const DatasetOptions& opts = {}) {
  templates.validate();
  std::vector<ProposalRecord> out;
  for (const auto& img : ann.images) {
    auto rng = detail::image_rng(opts.seed ^ 0x9e3779b97f4a7c15ull, img.image_ref);
    std::vector<const AnnotatedObject*> objs;
    for (const auto& o : img.objects) objs.push_back(&o);
    std::stable_sort(objs.begin(), objs.end(),
                     [](const auto* a, const auto* b) { return a->label < b->label; });
    for (const auto* o : objs) {
      const auto* anchor = detail::nearest_visible(img, *o, opts.threshold_w, opts.threshold_h);
      const std::string clue = anchor ? detail::near_clue(*anchor) : o->label;
      const std::string question = detail::fill_label(
          templates.proposal_questions[detail::pick(rng, templates.proposal_questions.size())], o->label);
      std::string prompt = templates.proposal_prompt;
      prompt.replace(prompt.find("[Q]"), 3, question);
      prompt.replace(prompt.find("[C]"), 3, clue);
      out.push_back(ProposalRecord{std::move(prompt), format_region(o->bbox.normalized()), img.image_ref});
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const ProposalRecord& a, const ProposalRecord& b) { return a.image_ref < b.image_ref; });
  return out;
}

}  // namespace fastvis
