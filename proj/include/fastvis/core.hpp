#pragma once

// Domain types shared by every module, with their canonical JSON encodings.
// All value types validate on construction and are immutable afterwards.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fastvis/error.hpp"
#include "fastvis/json_util.hpp"

namespace fastvis {

enum class Mode { Fast, Slow, Failed };

inline std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::Fast: return "Fast";
    case Mode::Slow: return "Slow";
    case Mode::Failed: return "Failed";
  }
  return "?";
}

inline Mode mode_from_string(std::string_view s, std::string_view path) {
  if (s == "Fast") return Mode::Fast;
  if (s == "Slow") return Mode::Slow;
  if (s == "Failed") return Mode::Failed;
  throw ParseError(std::string(path) + ": unknown mode '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Query

class Query {
 public:
  Query(std::string image_ref, std::string question, std::string query_id)
      : image_ref_(std::move(image_ref)),
        question_(std::move(question)),
        query_id_(std::move(query_id)) {
    if (question_.empty()) throw ConfigError("query: question must be non-empty");
    if (query_id_.empty()) throw ConfigError("query: query_id must be non-empty");
  }

  const std::string& image_ref() const { return image_ref_; }
  const std::string& question() const { return question_; }
  const std::string& query_id() const { return query_id_; }

  bool operator==(const Query&) const = default;

 private:
  std::string image_ref_;
  std::string question_;
  std::string query_id_;
};

// ---------------------------------------------------------------------------
// Region: normalized [0,1] frame coordinates, left/right then top/bottom.

class Region {
 public:
  Region(double left, double right, double top, double bottom)
      : left_(left), right_(right), top_(top), bottom_(bottom) {
    auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!in_unit(left) || !in_unit(right) || !in_unit(top) || !in_unit(bottom)) {
      throw GeometryError("region: coordinates must lie in [0,1]");
    }
    if (!(left < right)) throw GeometryError("region: requires left < right");
    if (!(top < bottom)) throw GeometryError("region: requires top < bottom");
  }

  static Region full_frame() { return Region(0.0, 1.0, 0.0, 1.0); }

  double left() const { return left_; }
  double right() const { return right_; }
  double top() const { return top_; }
  double bottom() const { return bottom_; }

  bool contains(const Region& inner, double eps = 1e-9) const {
    return inner.left_ >= left_ - eps && inner.right_ <= right_ + eps &&
           inner.top_ >= top_ - eps && inner.bottom_ <= bottom_ + eps;
  }

  bool operator==(const Region&) const = default;

 private:
  double left_, right_, top_, bottom_;
};

// ---------------------------------------------------------------------------
// BBox: half-open pixel rectangle [x0,x1) x [y0,y1) inside an image.

class BBox {
 public:
  BBox(int x0, int y0, int x1, int y1, int image_w, int image_h)
      : x0_(x0), y0_(y0), x1_(x1), y1_(y1), image_w_(image_w), image_h_(image_h) {
    if (image_w <= 0 || image_h <= 0) throw GeometryError("bbox: image dimensions must be positive");
    if (x0 < 0 || y0 < 0) throw GeometryError("bbox: negative origin");
    if (!(x0 < x1) || !(y0 < y1)) throw GeometryError("bbox: degenerate box");
    if (x1 > image_w || y1 > image_h) throw GeometryError("bbox: box exceeds image bounds");
  }

  int x0() const { return x0_; }
  int y0() const { return y0_; }
  int x1() const { return x1_; }
  int y1() const { return y1_; }
  int image_w() const { return image_w_; }
  int image_h() const { return image_h_; }
  int width() const { return x1_ - x0_; }
  int height() const { return y1_ - y0_; }
  std::int64_t area() const { return std::int64_t{width()} * height(); }

  double center_x() const { return 0.5 * (x0_ + x1_); }
  double center_y() const { return 0.5 * (y0_ + y1_); }

  bool contains_pixel(int x, int y) const { return x >= x0_ && x < x1_ && y >= y0_ && y < y1_; }

  Region normalized() const {
    return Region(static_cast<double>(x0_) / image_w_, static_cast<double>(x1_) / image_w_,
                  static_cast<double>(y0_) / image_h_, static_cast<double>(y1_) / image_h_);
  }

  bool operator==(const BBox&) const = default;

 private:
  int x0_, y0_, x1_, y1_, image_w_, image_h_;
};

// ---------------------------------------------------------------------------
// Mask: uncompressed row-major run-length raster. Runs alternate starting with
// zeros; only the leading run may have length zero, so every mask has exactly
// one encoding.

class Mask {
 public:
  Mask(int width, int height, std::vector<std::uint32_t> rle)
      : width_(width), height_(height), rle_(std::move(rle)) {
    if (width <= 0 || height <= 0) throw GeometryError("mask: dimensions must be positive");
    if (rle_.empty()) throw GeometryError("mask: rle must be non-empty");
    std::uint64_t total = 0;
    for (std::size_t i = 0; i < rle_.size(); ++i) {
      if (i > 0 && rle_[i] == 0) throw GeometryError("mask: zero-length run after the leading run");
      total += rle_[i];
    }
    if (total != pixel_count()) throw GeometryError("mask: rle does not sum to width*height");
  }

  static Mask empty(int width, int height) {
    return Mask(width, height, {static_cast<std::uint32_t>(std::int64_t{width} * height)});
  }

  /// Builds from a row-major 0/non-0 raster of width*height entries.
  static Mask from_bitmap(int width, int height, std::span<const std::uint8_t> bits) {
    if (width <= 0 || height <= 0) throw GeometryError("mask: dimensions must be positive");
    if (bits.size() != static_cast<std::size_t>(width) * height) {
      throw GeometryError("mask: bitmap size does not match dimensions");
    }
    std::vector<std::uint32_t> rle{0};
    bool current = false;
    for (auto b : bits) {
      const bool v = b != 0;
      if (v != current) {
        rle.push_back(0);
        current = v;
      }
      ++rle.back();
    }
    return Mask(width, height, std::move(rle));
  }

  int width() const { return width_; }
  int height() const { return height_; }
  const std::vector<std::uint32_t>& rle() const { return rle_; }
  std::uint64_t pixel_count() const { return std::uint64_t(width_) * std::uint64_t(height_); }

  std::vector<std::uint8_t> to_bitmap() const {
    std::vector<std::uint8_t> bits;
    bits.reserve(pixel_count());
    std::uint8_t v = 0;
    for (auto run : rle_) {
      bits.insert(bits.end(), run, v);
      v ^= 1;
    }
    return bits;
  }

  /// Number of set pixels.
  std::uint64_t area() const {
    std::uint64_t n = 0;
    for (std::size_t i = 1; i < rle_.size(); i += 2) n += rle_[i];
    return n;
  }

  /// Calls fn(begin, end) for each maximal run of set pixels, as flat row-major offsets.
  template <typename Fn>
  void for_each_set_run(Fn&& fn) const {
    std::uint64_t pos = 0;
    for (std::size_t i = 0; i < rle_.size(); ++i) {
      if (i % 2 == 1) fn(pos, pos + rle_[i]);
      pos += rle_[i];
    }
  }

  /// |this ∩ other| computed by sweeping both run lists.
  std::uint64_t intersection_area(const Mask& other) const {
    if (width_ != other.width_ || height_ != other.height_) {
      throw GeometryError("mask: dimension mismatch");
    }
    std::uint64_t inter = 0;
    std::size_t i = 0, j = 0;
    std::uint64_t a_end = rle_[0], b_end = other.rle_[0];
    while (i < rle_.size() && j < other.rle_.size()) {
      const std::uint64_t a_begin = a_end - rle_[i];
      const std::uint64_t b_begin = b_end - other.rle_[j];
      if (i % 2 == 1 && j % 2 == 1) {
        const std::uint64_t lo = std::max(a_begin, b_begin);
        const std::uint64_t hi = std::min(a_end, b_end);
        if (hi > lo) inter += hi - lo;
      }
      if (a_end <= b_end) {
        if (++i < rle_.size()) a_end += rle_[i];
      } else {
        if (++j < other.rle_.size()) b_end += other.rle_[j];
      }
    }
    return inter;
  }

  std::uint64_t union_area(const Mask& other) const {
    return area() + other.area() - intersection_area(other);
  }

  bool operator==(const Mask&) const = default;

 private:
  int width_, height_;
  std::vector<std::uint32_t> rle_;
};

// ---------------------------------------------------------------------------

class ContextClue {
 public:
  explicit ContextClue(std::string text) : text_(std::move(text)) {
    if (text_.empty()) throw ConfigError("context clue: text must be non-empty");
  }
  const std::string& text() const { return text_; }
  bool operator==(const ContextClue&) const = default;

 private:
  std::string text_;
};

class MissingObject {
 public:
  explicit MissingObject(std::string label) : label_(std::move(label)) {
    if (label_.empty()) throw ConfigError("missing object: label must be non-empty");
  }
  const std::string& label() const { return label_; }
  bool operator==(const MissingObject&) const = default;

 private:
  std::string label_;
};

// ---------------------------------------------------------------------------
// EvidenceChain: clues -> region -> boxes -> mask, each level requiring the one above.

class EvidenceChain {
 public:
  EvidenceChain() = default;
  EvidenceChain(std::vector<ContextClue> clues, std::optional<Region> region,
                std::vector<BBox> boxes, std::vector<MissingObject> missing,
                std::optional<Mask> mask)
      : clues_(std::move(clues)),
        region_(std::move(region)),
        boxes_(std::move(boxes)),
        missing_(std::move(missing)),
        mask_(std::move(mask)) {
    if (mask_ && boxes_.empty()) throw GeometryError("evidence chain: mask requires boxes");
    if (!boxes_.empty() && !region_) throw GeometryError("evidence chain: boxes require a region");
  }

  const std::vector<ContextClue>& clues() const { return clues_; }
  const std::optional<Region>& region() const { return region_; }
  const std::vector<BBox>& boxes() const { return boxes_; }
  const std::vector<MissingObject>& missing() const { return missing_; }
  const std::optional<Mask>& mask() const { return mask_; }

  bool empty() const {
    return clues_.empty() && !region_ && boxes_.empty() && missing_.empty() && !mask_;
  }

  bool operator==(const EvidenceChain&) const = default;

 private:
  std::vector<ContextClue> clues_;
  std::optional<Region> region_;
  std::vector<BBox> boxes_;
  std::vector<MissingObject> missing_;
  std::optional<Mask> mask_;
};

class FinalAnswer {
 public:
  FinalAnswer(std::string text, Mode mode, std::optional<EvidenceChain> chain, double latency_ms)
      : text_(std::move(text)), mode_(mode), chain_(std::move(chain)), latency_ms_(latency_ms) {
    if (mode_ == Mode::Failed) throw ConfigError("final answer: mode must be Fast or Slow");
    if ((mode_ == Mode::Slow) != chain_.has_value()) {
      throw ConfigError("final answer: chain present iff mode is Slow");
    }
    if (latency_ms_ < 0) throw ConfigError("final answer: negative latency");
  }

  const std::string& text() const { return text_; }
  Mode mode() const { return mode_; }
  const std::optional<EvidenceChain>& chain() const { return chain_; }
  double latency_ms() const { return latency_ms_; }

  bool operator==(const FinalAnswer&) const = default;

 private:
  std::string text_;
  Mode mode_;
  std::optional<EvidenceChain> chain_;
  double latency_ms_;
};

// ---------------------------------------------------------------------------
// Geometry helpers

namespace detail {
/// Appends runs of alternating bits, merging same-bit neighbours. Starts on zeros.
class RunBuilder {
 public:
  void append(bool bit, std::uint32_t count) {
    if (count == 0) return;
    if (bit != current_) {
      runs_.push_back(0);
      current_ = bit;
    }
    runs_.back() += count;
  }
  std::vector<std::uint32_t> take() && { return std::move(runs_); }

 private:
  std::vector<std::uint32_t> runs_{0};
  bool current_ = false;
};
}  // namespace detail

/// Mask with exactly the pixels of `b` set, sized to b's image.
inline Mask mask_from_bbox(const BBox& b) {
  const auto W = static_cast<std::uint32_t>(b.image_w());
  const auto H = static_cast<std::uint32_t>(b.image_h());
  detail::RunBuilder runs;
  runs.append(false, static_cast<std::uint32_t>(b.y0()) * W);
  for (int y = b.y0(); y < b.y1(); ++y) {
    runs.append(false, static_cast<std::uint32_t>(b.x0()));
    runs.append(true, static_cast<std::uint32_t>(b.width()));
    runs.append(false, W - static_cast<std::uint32_t>(b.x1()));
  }
  runs.append(false, (H - static_cast<std::uint32_t>(b.y1())) * W);
  return Mask(b.image_w(), b.image_h(), std::move(runs).take());
}

enum class Visibility { Visible, Invisible };

/// An object is too small to perceive when it is strictly below the threshold
/// in both dimensions.
inline Visibility classify_visibility(const BBox& b, int threshold_w, int threshold_h) {
  if (threshold_w <= 0 || threshold_h <= 0) {
    throw ConfigError("visibility threshold must be positive");
  }
  return (b.width() < threshold_w && b.height() < threshold_h) ? Visibility::Invisible
                                                                : Visibility::Visible;
}

/// True when the normalized box lies inside `r` (with tolerance).
inline bool box_within_region(const BBox& b, const Region& r, double eps = 1e-9) {
  return r.contains(b.normalized(), eps);
}

/// True when every set pixel of `m` lies inside at least one of `boxes`.
inline bool mask_within_boxes(const Mask& m, std::span<const BBox> boxes) {
  bool ok = true;
  const auto W = static_cast<std::uint64_t>(m.width());
  m.for_each_set_run([&](std::uint64_t begin, std::uint64_t end) {
    for (std::uint64_t p = begin; p < end && ok; ++p) {
      const int x = static_cast<int>(p % W), y = static_cast<int>(p / W);
      ok = std::any_of(boxes.begin(), boxes.end(),
                       [&](const BBox& b) { return b.contains_pixel(x, y); });
    }
  });
  return ok;
}

// ---------------------------------------------------------------------------
// Canonical JSON encodings

inline Json encode(const Query& q) {
  return Json{{"image_ref", q.image_ref()}, {"question", q.question()}, {"query_id", q.query_id()}};
}

inline Json encode(const Region& r) {
  return Json{{"left", r.left()}, {"right", r.right()}, {"top", r.top()}, {"bottom", r.bottom()}};
}

inline Json encode(const BBox& b) {
  return Json{{"x0", b.x0()}, {"y0", b.y0()}, {"x1", b.x1()}, {"y1", b.y1()},
              {"image_w", b.image_w()}, {"image_h", b.image_h()}};
}

inline Json encode(const Mask& m) {
  return Json{{"width", m.width()}, {"height", m.height()}, {"rle", m.rle()}};
}

inline Json encode(const ContextClue& c) { return Json{{"text", c.text()}}; }
inline Json encode(const MissingObject& o) { return Json{{"label", o.label()}}; }

template <typename T>
Json encode_list(const std::vector<T>& items) {
  Json arr = Json::array();
  for (const auto& it : items) arr.push_back(encode(it));
  return arr;
}

inline Json encode(const EvidenceChain& c) {
  Json j{{"clues", encode_list(c.clues())}, {"boxes", encode_list(c.boxes())},
         {"missing", encode_list(c.missing())}};
  if (c.region()) j["region"] = encode(*c.region());
  if (c.mask()) j["mask"] = encode(*c.mask());
  return j;
}

inline Json encode(const FinalAnswer& a) {
  Json j{{"text", a.text()}, {"mode", to_string(a.mode())}, {"latency_ms", a.latency_ms()}};
  if (a.chain()) j["chain"] = encode(*a.chain());
  return j;
}

// Decoders rethrow constructor violations as ParseError tagged with the path.
namespace detail {
template <typename Fn>
auto with_path(std::string_view path, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(std::string(path.empty() ? "<root>" : path) + ": " + e.what());
  }
}

inline int get_int(const Json& j, std::string_view path, const char* field) {
  const long long v = get_integer(j, path, field);
  if (v < INT32_MIN || v > INT32_MAX) throw ParseError(join_path(path, field) + ": out of range");
  return static_cast<int>(v);
}
}  // namespace detail

inline Query decode_query(const Json& j, std::string_view path = "query") {
  detail::expect_object(j, path);
  detail::expect_only(j, path, {"image_ref", "question", "query_id"});
  return detail::with_path(path, [&] {
    return Query(detail::get_string(j, path, "image_ref"), detail::get_string(j, path, "question"),
                 detail::get_string(j, path, "query_id"));
  });
}

inline Region decode_region(const Json& j, std::string_view path = "region") {
  detail::expect_object(j, path);
  detail::expect_only(j, path, {"left", "right", "top", "bottom"});
  return detail::with_path(path, [&] {
    return Region(detail::get_number(j, path, "left"), detail::get_number(j, path, "right"),
                  detail::get_number(j, path, "top"), detail::get_number(j, path, "bottom"));
  });
}

inline BBox decode_bbox(const Json& j, std::string_view path = "bbox") {
  detail::expect_object(j, path);
  detail::expect_only(j, path, {"x0", "y0", "x1", "y1", "image_w", "image_h"});
  return detail::with_path(path, [&] {
    return BBox(detail::get_int(j, path, "x0"), detail::get_int(j, path, "y0"),
                detail::get_int(j, path, "x1"), detail::get_int(j, path, "y1"),
                detail::get_int(j, path, "image_w"), detail::get_int(j, path, "image_h"));
  });
}

inline Mask decode_mask(const Json& j, std::string_view path = "mask") {
  detail::expect_object(j, path);
  detail::expect_only(j, path, {"width", "height", "rle"});
  const int w = detail::get_int(j, path, "width");
  const int h = detail::get_int(j, path, "height");
  const Json& arr = detail::get_array(j, path, "rle");
  std::vector<std::uint32_t> rle;
  rle.reserve(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const auto& v = arr[i];
    if (!v.is_number_unsigned() || v.get<std::uint64_t>() > UINT32_MAX) {
      throw ParseError(detail::join_path(path, "rle") + "[" + std::to_string(i) +
                       "]: expected non-negative integer");
    }
    rle.push_back(v.get<std::uint32_t>());
  }
  return detail::with_path(path, [&] { return Mask(w, h, std::move(rle)); });
}

inline ContextClue decode_clue(const Json& j, std::string_view path = "clue") {
  detail::expect_object(j, path);
  detail::expect_only(j, path, {"text"});
  return detail::with_path(path, [&] { return ContextClue(detail::get_string(j, path, "text")); });
}

inline MissingObject decode_missing(const Json& j, std::string_view path = "missing") {
  detail::expect_object(j, path);
  detail::expect_only(j, path, {"label"});
  return detail::with_path(path,
                           [&] { return MissingObject(detail::get_string(j, path, "label")); });
}

template <typename T, typename Decode>
std::vector<T> decode_list(const Json& j, std::string_view path, const char* field, Decode&& dec) {
  const Json& arr = detail::get_array(j, path, field);
  std::vector<T> out;
  out.reserve(arr.size());
  const std::string base = detail::join_path(path, field);
  for (std::size_t i = 0; i < arr.size(); ++i) {
    out.push_back(dec(arr[i], base + "[" + std::to_string(i) + "]"));
  }
  return out;
}

inline EvidenceChain decode_chain(const Json& j, std::string_view path = "chain") {
  detail::expect_object(j, path);
  detail::expect_only(j, path, {"clues", "region", "boxes", "missing", "mask"});
  auto clues = decode_list<ContextClue>(j, path, "clues", decode_clue);
  auto boxes = decode_list<BBox>(j, path, "boxes", decode_bbox);
  auto missing = decode_list<MissingObject>(j, path, "missing", decode_missing);
  std::optional<Region> region;
  if (j.contains("region")) region = decode_region(j["region"], detail::join_path(path, "region"));
  std::optional<Mask> mask;
  if (j.contains("mask")) mask = decode_mask(j["mask"], detail::join_path(path, "mask"));
  return detail::with_path(path, [&] {
    return EvidenceChain(std::move(clues), std::move(region), std::move(boxes), std::move(missing),
                         std::move(mask));
  });
}

inline FinalAnswer decode_final_answer(const Json& j, std::string_view path = "answer") {
  detail::expect_object(j, path);
  detail::expect_only(j, path, {"text", "mode", "chain", "latency_ms"});
  std::optional<EvidenceChain> chain;
  if (j.contains("chain")) chain = decode_chain(j["chain"], detail::join_path(path, "chain"));
  const Mode mode =
      mode_from_string(detail::get_string(j, path, "mode"), detail::join_path(path, "mode"));
  return detail::with_path(path, [&] {
    return FinalAnswer(detail::get_string(j, path, "text"), mode, std::move(chain),
                       detail::get_number(j, path, "latency_ms"));
  });
}

/// Canonical byte encoding of a chain (compact JSON).
inline std::string serialize_chain(const EvidenceChain& c) { return encode(c).dump(); }

inline EvidenceChain deserialize_chain(std::string_view bytes) {
  return decode_chain(detail::parse_json(bytes, "chain"), "chain");
}

}  // namespace fastvis
