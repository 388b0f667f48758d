#pragma once

// Adapter roles, request/response messages and their wire encoding.
//
// Every adapter (switch, proposal, segmentation, summarizer) is a black-box
// service reached through a Backend. Requests and responses travel as one JSON
// object each; absent optionals are omitted rather than null.

#include <chrono>
#include <cctype>
#include <charconv>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "fastvis/core.hpp"

namespace fastvis {

enum class AdapterRole { Switch, ProposeRegion, ProposeBoxes, Segment, Summarize };

inline constexpr AdapterRole kAllRoles[] = {AdapterRole::Switch, AdapterRole::ProposeRegion,
                                            AdapterRole::ProposeBoxes, AdapterRole::Segment,
                                            AdapterRole::Summarize};

inline std::string_view to_string(AdapterRole r) {
  switch (r) {
    case AdapterRole::Switch: return "Switch";
    case AdapterRole::ProposeRegion: return "ProposeRegion";
    case AdapterRole::ProposeBoxes: return "ProposeBoxes";
    case AdapterRole::Segment: return "Segment";
    case AdapterRole::Summarize: return "Summarize";
  }
  return "?";
}

inline AdapterRole role_from_string(std::string_view s, std::string_view path = "role") {
  for (auto r : kAllRoles) {
    if (to_string(r) == s) return r;
  }
  throw ParseError(std::string(path) + ": unknown adapter role '" + std::string(s) + "'");
}

struct AdapterRequest {
  AdapterRole role = AdapterRole::Switch;
  Query query;
  std::vector<ContextClue> clues;
  std::optional<Region> region;
  std::vector<BBox> boxes;
  std::vector<MissingObject> missing;
  std::optional<EvidenceChain> chain;

  bool operator==(const AdapterRequest&) const = default;
};

struct AdapterResponse {
  AdapterRole role = AdapterRole::Switch;
  std::string raw_text;
  std::optional<Region> region;
  std::vector<BBox> boxes;
  std::optional<Mask> mask;
  double latency_ms = 0.0;

  bool operator==(const AdapterResponse&) const = default;
};

/// Throws ProtocolError unless the request carries what its role needs.
/// Segment accepts either boxes or a region so that both the box-driven and the
/// region-driven segmentation wirings are expressible.
inline void validate_request(const AdapterRequest& req) {
  const auto role = to_string(req.role);
  switch (req.role) {
    case AdapterRole::Switch:
    case AdapterRole::ProposeRegion:
      break;
    case AdapterRole::ProposeBoxes:
      if (!req.region) throw ProtocolError(fmt::format("{} request requires a region", role));
      break;
    case AdapterRole::Segment:
      if (req.boxes.empty() && !req.region) {
        throw ProtocolError(fmt::format("{} request requires boxes", role));
      }
      break;
    case AdapterRole::Summarize:
      if (!req.chain) throw ProtocolError(fmt::format("{} request requires a chain", role));
      break;
  }
}

/// Throws ProtocolError unless the response payload matches `expected`.
inline void validate_response(const AdapterResponse& resp, AdapterRole expected) {
  if (resp.role != expected) {
    throw ProtocolError(fmt::format("response role {} does not match request role {}",
                                    to_string(resp.role), to_string(expected)));
  }
  if (resp.latency_ms < 0) throw ProtocolError("response latency_ms is negative");
  switch (resp.role) {
    case AdapterRole::Switch:
    case AdapterRole::Summarize:
      if (resp.raw_text.empty()) {
        throw ProtocolError(fmt::format("{} response requires raw_text", to_string(resp.role)));
      }
      break;
    case AdapterRole::ProposeRegion:
      // Text-only models answer with "[w0, w1, h0, h1]"; the caller parses it.
      if (!resp.region && resp.raw_text.empty()) {
        throw ProtocolError("ProposeRegion response requires region or raw_text");
      }
      break;
    case AdapterRole::ProposeBoxes:
      break;
    case AdapterRole::Segment:
      if (!resp.mask) throw ProtocolError("Segment response requires mask");
      break;
  }
}

// ---------------------------------------------------------------------------
// Wire encoding

inline Json encode(const AdapterRequest& r) {
  Json j{{"role", to_string(r.role)},
         {"query", encode(r.query)},
         {"clues", encode_list(r.clues)},
         {"boxes", encode_list(r.boxes)},
         {"missing", encode_list(r.missing)}};
  if (r.region) j["region"] = encode(*r.region);
  if (r.chain) j["chain"] = encode(*r.chain);
  return j;
}

inline Json encode(const AdapterResponse& r) {
  Json j{{"role", to_string(r.role)},
         {"raw_text", r.raw_text},
         {"boxes", encode_list(r.boxes)},
         {"latency_ms", r.latency_ms}};
  if (r.region) j["region"] = encode(*r.region);
  if (r.mask) j["mask"] = encode(*r.mask);
  return j;
}

inline AdapterRequest decode_request(const Json& j, std::string_view path = "request") {
  detail::expect_object(j, path);
  detail::expect_only(j, path, {"role", "query", "clues", "region", "boxes", "missing", "chain"});
  auto p = [&](const char* f) { return detail::join_path(path, f); };
  AdapterRequest r{
      .role = role_from_string(detail::get_string(j, path, "role"), p("role")),
      .query = decode_query(detail::member(j, path, "query"), p("query")),
      .clues = decode_list<ContextClue>(j, path, "clues", decode_clue),
      .region = std::nullopt,
      .boxes = decode_list<BBox>(j, path, "boxes", decode_bbox),
      .missing = decode_list<MissingObject>(j, path, "missing", decode_missing),
      .chain = std::nullopt,
  };
  if (j.contains("region")) r.region = decode_region(j["region"], p("region"));
  if (j.contains("chain")) r.chain = decode_chain(j["chain"], p("chain"));
  return r;
}

inline AdapterResponse decode_response(const Json& j, std::string_view path = "response") {
  detail::expect_object(j, path);
  detail::expect_only(j, path, {"role", "raw_text", "region", "boxes", "mask", "latency_ms"});
  auto p = [&](const char* f) { return detail::join_path(path, f); };
  AdapterResponse r{
      .role = role_from_string(detail::get_string(j, path, "role"), p("role")),
      .raw_text = detail::get_string(j, path, "raw_text"),
      .region = std::nullopt,
      .boxes = decode_list<BBox>(j, path, "boxes", decode_bbox),
      .mask = std::nullopt,
      .latency_ms = detail::get_number(j, path, "latency_ms"),
  };
  if (j.contains("region")) r.region = decode_region(j["region"], p("region"));
  if (j.contains("mask")) r.mask = decode_mask(j["mask"], p("mask"));
  return r;
}

// ---------------------------------------------------------------------------
// Proposal answer text: "[w0, w1, h0, h1]" = left, right, top, bottom.

/// Formats a region the way the proposal adapter answers, at 4 decimal places.
inline std::string format_region(const Region& r) {
  return fmt::format("[{:.4f}, {:.4f}, {:.4f}, {:.4f}]", r.left(), r.right(), r.top(), r.bottom());
}

/// Parses the first bracketed 4-tuple in `raw`. Surrounding text (e.g. an
/// "Ans.str" prefix) is ignored.
inline Region parse_region_text(std::string_view raw) {
  const auto open = raw.find('[');
  if (open == std::string_view::npos) throw ParseError("region text: missing '['");
  const auto close = raw.find(']', open);
  if (close == std::string_view::npos) throw ParseError("region text: missing ']'");
  std::string_view body = raw.substr(open + 1, close - open - 1);

  double v[4];
  int n = 0;
  while (true) {
    const auto comma = body.find(',');
    std::string_view tok = body.substr(0, comma);
    while (!tok.empty() && std::isspace(static_cast<unsigned char>(tok.front()))) tok.remove_prefix(1);
    while (!tok.empty() && std::isspace(static_cast<unsigned char>(tok.back()))) tok.remove_suffix(1);
    if (n == 4) throw ParseError("region text: expected exactly 4 values");
    if (tok.empty()) throw ParseError(fmt::format("region text: empty value at position {}", n));
    const char* end = tok.data() + tok.size();
    auto [ptr, ec] = std::from_chars(tok.data(), end, v[n]);
    if (ec != std::errc{} || ptr != end) {
      throw ParseError(fmt::format("region text: bad number '{}'", tok));
    }
    ++n;
    if (comma == std::string_view::npos) break;
    body.remove_prefix(comma + 1);
  }
  if (n != 4) throw ParseError("region text: expected exactly 4 values");
  return Region(v[0], v[1], v[2], v[3]);  // GeometryError on inverted bounds
}

// ---------------------------------------------------------------------------
// Backends

/// A service answering adapter requests. Implementations must be safe to call
/// concurrently from several pipeline tasks.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual AdapterResponse call(const AdapterRequest& req) = 0;
};

/// Validates the request, invokes the backend and validates the response.
inline AdapterResponse call_adapter(Backend& backend, const AdapterRequest& req) {
  validate_request(req);
  AdapterResponse resp = backend.call(req);
  validate_response(resp, req.role);
  return resp;
}

}  // namespace fastvis
