#pragma once

#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fastvis/core.hpp"

namespace fastvis {

/// One scored query: what the engine answered, how, and how long it took.
struct EvalRecord {
  std::string query_id;
  std::string predicted;
  std::vector<std::string> gold;
  Mode mode = Mode::Fast;
  std::optional<std::string> subtask;
  std::string image_ref;
  double latency_ms = 0.0;
  std::optional<std::string> failed_step;
  std::optional<std::string> error;
  std::vector<std::string> flags;
  std::optional<std::string> trace;

  bool operator==(const EvalRecord&) const = default;
};

inline Json encode(const EvalRecord& r) {
  Json j{{"query_id", r.query_id}, {"predicted", r.predicted}, {"gold", r.gold},
         {"mode", to_string(r.mode)}, {"image_ref", r.image_ref}, {"latency_ms", r.latency_ms}};
  if (r.subtask) j["subtask"] = *r.subtask;
  if (r.failed_step) j["failed_step"] = *r.failed_step;
  if (r.error) j["error"] = *r.error;
  if (!r.flags.empty()) j["flags"] = r.flags;
  if (r.trace) j["trace"] = *r.trace;
  return j;
}

namespace detail {
inline std::vector<std::string> string_list(const Json& j, std::string_view path, const char* field) {
  std::vector<std::string> out;
  if (!j.contains(field)) return out;
  const Json& v = j[field];
  if (v.is_string()) return {v.get<std::string>()};
  if (!v.is_array()) throw ParseError(join_path(path, field) + ": expected string or array");
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_string()) {
      throw ParseError(join_path(path, field) + "[" + std::to_string(i) + "]: expected string");
    }
    out.push_back(v[i].get<std::string>());
  }
  return out;
}

inline std::optional<std::string> opt_string(const Json& j, std::string_view path, const char* field) {
  if (!j.contains(field)) return std::nullopt;
  return get_string(j, path, field);
}
}  // namespace detail

inline EvalRecord decode_eval_record(const Json& j, std::string_view path = "record") {
  detail::expect_object(j, path);
  detail::expect_only(j, path, {"query_id", "predicted", "gold", "mode", "subtask", "image_ref",
                                "latency_ms", "failed_step", "error", "flags", "trace"});
  EvalRecord r;
  r.query_id = detail::get_string(j, path, "query_id");
  r.predicted = detail::get_string(j, path, "predicted");
  r.gold = detail::string_list(j, path, "gold");
  r.mode = mode_from_string(detail::get_string(j, path, "mode"), detail::join_path(path, "mode"));
  r.subtask = detail::opt_string(j, path, "subtask");
  r.image_ref = j.contains("image_ref") ? detail::get_string(j, path, "image_ref") : std::string{};
  r.latency_ms = j.contains("latency_ms") ? detail::get_number(j, path, "latency_ms") : 0.0;
  r.failed_step = detail::opt_string(j, path, "failed_step");
  r.error = detail::opt_string(j, path, "error");
  r.flags = detail::string_list(j, path, "flags");
  r.trace = detail::opt_string(j, path, "trace");
  return r;
}

inline void write_jsonl(std::ostream& out, const std::vector<EvalRecord>& records) {
  for (const auto& r : records) out << encode(r).dump() << '\n';
}

/// Reads JSON Lines; blank lines are skipped. Errors name the 1-based line.
template <typename Decode>
auto read_jsonl(std::istream& in, Decode&& decode) {
  using T = decltype(decode(Json{}, std::string{}));
  std::vector<T> out;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "line " + std::to_string(n);
    out.push_back(decode(detail::parse_json(line, where), where));
  }
  return out;
}

inline std::vector<EvalRecord> read_eval_records(std::istream& in) {
  return read_jsonl(in, [](const Json& j, const std::string& p) { return decode_eval_record(j, p); });
}

}  // namespace fastvis
