#pragma once

// Evaluation metrics: exact-match accuracy, POPE precision/recall/F1, MME
// accuracy / accuracy+ / score, and the cumulative (CIoU) and per-image mean
// (GIoU) segmentation IoUs.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "fastvis/records.hpp"

namespace fastvis {

/// Lowercase, trim, and drop terminal punctuation ("Red." -> "red").
inline std::string normalize_answer(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (unsigned char c : s) out.push_back(static_cast<char>(std::tolower(c)));
  auto is_strip = [](unsigned char c) {
    return std::isspace(c) || c == '.' || c == ',' || c == '!' || c == '?' || c == ';' || c == ':';
  };
  while (!out.empty() && is_strip(static_cast<unsigned char>(out.back()))) out.pop_back();
  std::size_t b = 0;
  while (b < out.size() && std::isspace(static_cast<unsigned char>(out[b]))) ++b;
  return out.substr(b);
}

inline bool is_scored(const EvalRecord& r) { return !r.gold.empty(); }

/// Normalized prediction equals any normalized gold. Failed records never match.
inline bool exact_match(const EvalRecord& r) {
  if (r.mode == Mode::Failed) return false;
  const std::string p = normalize_answer(r.predicted);
  return std::any_of(r.gold.begin(), r.gold.end(),
                     [&](const std::string& g) { return normalize_answer(g) == p; });
}

struct AccuracyResult {
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy() const { return total ? static_cast<double>(correct) / total : 0.0; }
};

/// Fraction of scored records answered exactly. Records without gold are skipped.
inline AccuracyResult exact_match_accuracy(std::span<const EvalRecord> records) {
  AccuracyResult r;
  for (const auto& rec : records) {
    if (!is_scored(rec)) continue;
    ++r.total;
    if (exact_match(rec)) ++r.correct;
  }
  if (r.total == 0) throw MetricError("accuracy: no scored records");
  return r;
}

// ---------------------------------------------------------------------------
// POPE

struct PopeResult {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double precision = 0, recall = 0, f1 = 0;
  /// query_ids whose prediction or gold is not yes/no.
  std::vector<std::string> invalid;
};

/// "yes"/"no" from the first word of a normalized answer, or empty.
inline std::string yes_no(std::string_view answer) {
  const std::string n = normalize_answer(answer);
  std::size_t end = 0;
  while (end < n.size() && std::isalpha(static_cast<unsigned char>(n[end]))) ++end;
  const std::string word = n.substr(0, end);
  return (word == "yes" || word == "no") ? word : std::string{};
}

inline PopeResult pope_f1(std::span<const EvalRecord> records) {
  PopeResult r;
  for (const auto& rec : records) {
    const std::string g = rec.gold.empty() ? std::string{} : yes_no(rec.gold.front());
    const std::string p = rec.mode == Mode::Failed ? std::string{} : yes_no(rec.predicted);
    if (g.empty() || p.empty()) {
      r.invalid.push_back(rec.query_id);
      continue;
    }
    const bool pred_pos = p == "yes", gold_pos = g == "yes";
    if (pred_pos && gold_pos) ++r.tp;
    else if (pred_pos) ++r.fp;
    else if (gold_pos) ++r.fn;
    else ++r.tn;
  }
  if (r.tp + r.fp) r.precision = static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fp);
  if (r.tp + r.fn) r.recall = static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn);
  if (r.precision + r.recall > 0) r.f1 = 2 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

// ---------------------------------------------------------------------------
// MME

struct MmeSubtask {
  std::size_t questions = 0, correct = 0;
  std::size_t images = 0, images_both_correct = 0;
  double acc = 0, acc_plus = 0, score = 0;
};

struct MmeResult {
  std::map<std::string, MmeSubtask> per_subtask;
  double total = 0;
};

/// Every image must contribute exactly two questions per subtask.
inline MmeResult mme_score(std::span<const EvalRecord> records) {
  std::map<std::string, std::map<std::string, std::vector<bool>>> groups;
  for (const auto& rec : records) {
    if (!rec.subtask) throw MetricError(fmt::format("mme: record '{}' has no subtask", rec.query_id));
    groups[*rec.subtask][rec.image_ref].push_back(exact_match(rec));
  }
  MmeResult out;
  for (const auto& [subtask, images] : groups) {
    MmeSubtask s;
    for (const auto& [image, results] : images) {
      if (results.size() != 2) {
        throw MetricError(fmt::format("mme: image '{}' in subtask '{}' has {} questions, expected 2",
                                      image, subtask, results.size()));
      }
      ++s.images;
      s.questions += 2;
      const auto c = static_cast<std::size_t>(std::count(results.begin(), results.end(), true));
      s.correct += c;
      if (c == 2) ++s.images_both_correct;
    }
    s.acc = 100.0 * static_cast<double>(s.correct) / static_cast<double>(s.questions);
    s.acc_plus = 100.0 * static_cast<double>(s.images_both_correct) / static_cast<double>(s.images);
    s.score = s.acc + s.acc_plus;
    out.total += s.score;
    out.per_subtask.emplace(subtask, s);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Segmentation

struct MaskPair {
  Mask predicted;
  Mask gold;
  std::string image_ref;
};

struct ImageIou {
  std::string image_ref;
  std::uint64_t intersection = 0;
  std::uint64_t union_ = 0;
  double iou = 0;
};

namespace detail {
inline std::vector<ImageIou> per_image_iou(std::span<const MaskPair> pairs) {
  if (pairs.empty()) throw MetricError("iou: no mask pairs");
  std::vector<ImageIou> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (p.predicted.width() != p.gold.width() || p.predicted.height() != p.gold.height()) {
      throw MetricError(fmt::format("iou: mask dimensions differ for image '{}'", p.image_ref));
    }
    ImageIou r{p.image_ref, p.predicted.intersection_area(p.gold), 0, 1.0};
    r.union_ = p.predicted.area() + p.gold.area() - r.intersection;
    if (r.union_ > 0) r.iou = static_cast<double>(r.intersection) / static_cast<double>(r.union_);
    out.push_back(std::move(r));
  }
  return out;
}
}  // namespace detail

/// Cumulative intersection over cumulative union; 1 when every union is empty.
inline double ciou(std::span<const MaskPair> pairs) {
  std::uint64_t inter = 0, uni = 0;
  for (const auto& r : detail::per_image_iou(pairs)) {
    inter += r.intersection;
    uni += r.union_;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// Mean of per-image IoU; an image where both masks are empty scores 1.
inline double giou(std::span<const MaskPair> pairs) {
  const auto per = detail::per_image_iou(pairs);
  double sum = 0;
  for (const auto& r : per) sum += r.iou;
  return sum / static_cast<double>(per.size());
}

struct SegmentationReport {
  double ciou = 0, giou = 0;
  std::vector<ImageIou> per_image;
};

inline SegmentationReport segmentation_report(std::span<const MaskPair> pairs) {
  return SegmentationReport{ciou(pairs), giou(pairs), detail::per_image_iou(pairs)};
}

// ---------------------------------------------------------------------------
// Reports and manifests

inline Json encode(const AccuracyResult& a) {
  return Json{{"correct", a.correct}, {"total", a.total}, {"accuracy", a.accuracy()}};
}

inline Json encode(const PopeResult& p) {
  return Json{{"tp", p.tp}, {"fp", p.fp}, {"tn", p.tn}, {"fn", p.fn}, {"precision", p.precision},
              {"recall", p.recall}, {"f1", p.f1}, {"invalid", p.invalid}};
}

inline Json encode(const MmeResult& m) {
  Json per = Json::object();
  for (const auto& [name, s] : m.per_subtask) {
    per[name] = Json{{"questions", s.questions}, {"correct", s.correct}, {"images", s.images},
                     {"images_both_correct", s.images_both_correct}, {"acc", s.acc},
                     {"acc_plus", s.acc_plus}, {"score", s.score}};
  }
  return Json{{"per_subtask", std::move(per)}, {"total", m.total}};
}

inline Json encode(const SegmentationReport& s) {
  Json per = Json::array();
  for (const auto& r : s.per_image) {
    per.push_back(Json{{"image_ref", r.image_ref}, {"intersection", r.intersection},
                       {"union", r.union_}, {"iou", r.iou}});
  }
  return Json{{"ciou", s.ciou}, {"giou", s.giou}, {"per_image", std::move(per)}};
}

/// Manifest: {"pairs": [{"image_ref", "predicted", "gold"}]} where predicted and
/// gold are mask file paths (relative to the manifest) or inline mask objects.
inline std::vector<MaskPair> load_mask_manifest(const Json& j, const std::filesystem::path& base_dir) {
  detail::expect_object(j, "manifest");
  auto load = [&](const Json& v, const std::string& path) {
    if (v.is_object()) return decode_mask(v, path);
    if (!v.is_string()) throw ParseError(path + ": expected mask path or object");
    const std::filesystem::path file = base_dir / v.get<std::string>();
    std::ifstream in(file);
    if (!in) throw ParseError(fmt::format("{}: cannot open '{}'", path, file.string()));
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_mask(detail::parse_json(text, file.string()), path);
  };
  return decode_list<MaskPair>(j, "manifest", "pairs", [&](const Json& p, const std::string& path) {
    detail::expect_object(p, path);
    detail::expect_only(p, path, {"image_ref", "predicted", "gold"});
    return MaskPair{load(detail::member(p, path, "predicted"), path + ".predicted"),
                    load(detail::member(p, path, "gold"), path + ".gold"),
                    detail::get_string(p, path, "image_ref")};
  });
}

}  // namespace fastvis
