#pragma once

// Fast/slow control flow. The switch adapter answers first; if its answer
// contains the trigger phrase the query takes the slow path and builds a chain
// of evidence (clues -> region -> boxes -> mask) before a final summarize call.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <fmt/format.h>

#include "fastvis/adapter.hpp"
#include "fastvis/log.hpp"
#include "fastvis/records.hpp"

namespace fastvis {

inline constexpr std::string_view kDefaultTrigger = "sorry, i can not answer";

enum class SummarizeWith { Boxes, Mask, Both };

inline std::string_view to_string(SummarizeWith s) {
  switch (s) {
    case SummarizeWith::Boxes: return "Boxes";
    case SummarizeWith::Mask: return "Mask";
    case SummarizeWith::Both: return "Both";
  }
  return "?";
}

struct PipelineConfig {
  bool two_stage_proposal = true;
  bool enable_segmentation = true;
  std::string trigger_phrase{kDefaultTrigger};
  SummarizeWith summarize_with = SummarizeWith::Both;

  void validate() const {
    if (trigger_phrase.empty()) throw ConfigError("pipeline: trigger_phrase must be non-empty");
  }

  /// Adapter calls a slow-path query makes when every step produces output.
  int slow_call_count() const {
    return 2 + int{two_stage_proposal} + int{enable_segmentation} + 1;
  }

  bool operator==(const PipelineConfig&) const = default;
};

inline Json encode(const PipelineConfig& c) {
  return Json{{"two_stage_proposal", c.two_stage_proposal},
              {"enable_segmentation", c.enable_segmentation},
              {"trigger_phrase", c.trigger_phrase},
              {"summarize_with", to_string(c.summarize_with)}};
}

/// Missing fields keep their defaults.
inline PipelineConfig decode_pipeline_config(const Json& j, std::string_view path = "config") {
  detail::expect_object(j, path);
  detail::expect_only(j, path,
                      {"two_stage_proposal", "enable_segmentation", "trigger_phrase", "summarize_with"});
  PipelineConfig c;
  if (j.contains("two_stage_proposal")) c.two_stage_proposal = detail::get_bool(j, path, "two_stage_proposal");
  if (j.contains("enable_segmentation")) c.enable_segmentation = detail::get_bool(j, path, "enable_segmentation");
  if (j.contains("trigger_phrase")) c.trigger_phrase = detail::get_string(j, path, "trigger_phrase");
  if (j.contains("summarize_with")) {
    const auto s = detail::get_string(j, path, "summarize_with");
    if (s == "Boxes") c.summarize_with = SummarizeWith::Boxes;
    else if (s == "Mask") c.summarize_with = SummarizeWith::Mask;
    else if (s == "Both") c.summarize_with = SummarizeWith::Both;
    else throw ParseError(detail::join_path(path, "summarize_with") + ": expected Boxes, Mask or Both");
  }
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ParseError(std::string(path) + ": " + e.what());
  }
  return c;
}

// ---------------------------------------------------------------------------
// Mode detection

struct ModeDecision {
  Mode mode = Mode::Fast;
  std::vector<MissingObject> missing;
  std::vector<ContextClue> clues;
  /// Trigger present but the "Missing objects: [...]" tail could not be parsed.
  bool degraded = false;
};

namespace detail {
inline std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}
}  // namespace detail

/// Slow iff the lowercased switch answer contains the trigger phrase. On the
/// slow path the structured tail "Missing objects: [a, b]. Context: <clue>"
/// supplies missing objects and clues; the context part is optional.
inline ModeDecision detect_mode(std::string_view raw_switch_text, const PipelineConfig& cfg) {
  const std::string lower = detail::lowercase(raw_switch_text);
  ModeDecision d;
  if (lower.find(detail::lowercase(cfg.trigger_phrase)) == std::string::npos) return d;
  d.mode = Mode::Slow;

  std::size_t after_list = 0;
  const auto tag = lower.find("missing objects:");
  const auto open = tag == std::string::npos ? tag : lower.find('[', tag);
  const auto close = open == std::string::npos ? open : lower.find(']', open);
  if (close == std::string::npos) {
    d.degraded = true;
  } else {
    std::string_view list = std::string_view(raw_switch_text).substr(open + 1, close - open - 1);
    while (!list.empty()) {
      const auto comma = list.find(',');
      const auto item = detail::trim(list.substr(0, comma));
      if (!item.empty()) d.missing.emplace_back(std::string(item));
      if (comma == std::string_view::npos) break;
      list.remove_prefix(comma + 1);
    }
    if (d.missing.empty()) d.degraded = true;
    after_list = close + 1;
  }

  const auto ctx = lower.find("context:", after_list);
  if (ctx != std::string::npos) {
    std::string_view clue = detail::trim(std::string_view(raw_switch_text).substr(ctx + 8));
    if (!clue.empty() && clue.back() == '.') clue = detail::trim(clue.substr(0, clue.size() - 1));
    if (!clue.empty()) d.clues.emplace_back(std::string(clue));
  }
  return d;
}

// ---------------------------------------------------------------------------
// Single query

struct TraceEvent {
  std::string step;
  Json request;
  Json response;
  double t_start = 0.0;  // ms since query start
  double t_end = 0.0;
};

inline Json encode(const TraceEvent& e) {
  return Json{{"step", e.step}, {"request", e.request}, {"response", e.response},
              {"t_start", e.t_start}, {"t_end", e.t_end}};
}

struct StepFailureInfo {
  std::string step;
  std::string message;
  bool transport = false;
};

/// Everything one query produced, successful or not.
struct QueryOutcome {
  Query query;
  std::optional<FinalAnswer> answer;
  std::optional<StepFailureInfo> failure;
  std::vector<TraceEvent> events;
  std::vector<std::string> flags;
  double latency_ms = 0.0;
};

class StepFailure : public Error {
 public:
  explicit StepFailure(StepFailureInfo info)
      : Error(fmt::format("step '{}' failed: {}", info.step, info.message)), info_(std::move(info)) {}
  const StepFailureInfo& info() const { return info_; }

 private:
  StepFailureInfo info_;
};

struct RunOptions {
  /// Zero every wall-clock quantity so outputs are byte-reproducible.
  bool no_timestamps = false;
};

namespace detail {

class QueryRun {
 public:
  QueryRun(const Query& q, Backend& backend, const PipelineConfig& cfg, const RunOptions& opts)
      : backend_(backend), cfg_(cfg), opts_(opts), out_{.query = q} {}

  QueryOutcome execute() && {
    try {
      run();
    } catch (const StepFailure& f) {
      out_.failure = f.info();
    }
    out_.latency_ms = opts_.no_timestamps ? 0.0 : elapsed_ms();
    if (out_.answer) {
      out_.answer = FinalAnswer(out_.answer->text(), out_.answer->mode(), out_.answer->chain(),
                                out_.latency_ms);
    }
    return std::move(out_);
  }

 private:
  double elapsed_ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0_).count();
  }

  AdapterResponse step(const char* name, const AdapterRequest& req) {
    const double start = elapsed_ms();
    try {
      AdapterResponse resp = call_adapter(backend_, req);
      const double end = elapsed_ms();
      logger().debug("query {}: {} {:.1f} ms", out_.query.query_id(), name, end - start);
      out_.events.push_back(TraceEvent{name, encode(req), encode(resp),
                                       opts_.no_timestamps ? 0.0 : start,
                                       opts_.no_timestamps ? 0.0 : end});
      return resp;
    } catch (const TransportError& e) {
      throw StepFailure({name, e.what(), true});
    } catch (const std::exception& e) {
      throw StepFailure({name, e.what(), false});
    }
  }

  void flag(std::string f) {
    logger().info("query {}: {}", out_.query.query_id(), f);
    out_.flags.push_back(std::move(f));
  }

  AdapterRequest request(AdapterRole role) const {
    return AdapterRequest{.role = role, .query = out_.query};
  }

  void run() {
    const AdapterResponse sw = step("switch", request(AdapterRole::Switch));
    const ModeDecision decision = detect_mode(sw.raw_text, cfg_);
    if (decision.mode == Mode::Fast) {
      out_.answer = FinalAnswer(sw.raw_text, Mode::Fast, std::nullopt, 0.0);
      return;
    }
    if (decision.degraded) {
      logger().warn("query {}: trigger without parseable tail; continuing with empty evidence",
                    out_.query.query_id());
      flag("degraded_slow");
    }

    const auto& clues = decision.clues;
    const auto& missing = decision.missing;

    AdapterRequest rreq = request(AdapterRole::ProposeRegion);
    rreq.clues = clues;
    rreq.missing = missing;
    const AdapterResponse rresp = step("propose_region", rreq);
    std::optional<Region> region = rresp.region;
    if (!region) {
      try {
        region = parse_region_text(rresp.raw_text);
      } catch (const Error& e) {
        flag(fmt::format("no_region: {}", e.what()));
      }
    }

    std::vector<BBox> boxes;
    if (cfg_.two_stage_proposal) {
      if (region) {
        AdapterRequest breq = request(AdapterRole::ProposeBoxes);
        breq.clues = clues;
        breq.region = region;
        breq.missing = missing;
        boxes = step("propose_boxes", breq).boxes;
        if (boxes.empty()) flag("no_boxes");
      } else {
        flag("skipped: propose_boxes");
      }
    }

    std::optional<Mask> mask;
    if (cfg_.enable_segmentation) {
      if (region || !boxes.empty()) {
        AdapterRequest sreq = request(AdapterRole::Segment);
        sreq.region = region;
        sreq.boxes = boxes;
        sreq.missing = missing;
        AdapterResponse sresp = step("segment", sreq);
        if (boxes.empty()) boxes = sresp.boxes;
        if (!boxes.empty()) {
          mask = std::move(sresp.mask);
        } else {
          flag("no_mask_target");
        }
      } else {
        flag("skipped: segment");
      }
    }

    EvidenceChain chain(clues, region, boxes, missing, mask);
    if (!chain.region()) flag("empty_chain");

    AdapterRequest sum = request(AdapterRole::Summarize);
    sum.clues = clues;
    sum.region = region;
    sum.missing = missing;
    if (cfg_.summarize_with != SummarizeWith::Mask) sum.boxes = boxes;
    sum.chain = cfg_.summarize_with == SummarizeWith::Boxes
                    ? EvidenceChain(clues, region, boxes, missing, std::nullopt)
                    : chain;
    const AdapterResponse final_resp = step("summarize", sum);
    out_.answer = FinalAnswer(final_resp.raw_text, Mode::Slow, std::move(chain), 0.0);
  }

  Backend& backend_;
  const PipelineConfig& cfg_;
  const RunOptions& opts_;
  QueryOutcome out_;
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

}  // namespace detail

/// Runs one query and returns its full outcome, including a failure if any
/// step failed.
inline QueryOutcome run_query_traced(const Query& q, Backend& backend, const PipelineConfig& cfg,
                                     const RunOptions& opts = {}) {
  cfg.validate();
  return detail::QueryRun(q, backend, cfg, opts).execute();
}

/// Runs one query; throws StepFailure naming the failing step.
inline FinalAnswer run_query(const Query& q, Backend& backend, const PipelineConfig& cfg,
                             const RunOptions& opts = {}) {
  QueryOutcome out = run_query_traced(q, backend, cfg, opts);
  if (out.failure) throw StepFailure(*out.failure);
  return std::move(*out.answer);
}

/// Per-query trace document (`<query_id>.trace.json`).
inline Json encode_trace(const QueryOutcome& o) {
  Json events = Json::array();
  for (const auto& e : o.events) events.push_back(encode(e));
  Json j{{"query", encode(o.query)}, {"events", std::move(events)}, {"flags", o.flags},
         {"latency_ms", o.latency_ms}};
  if (o.answer) {
    j["answer"] = encode(*o.answer);
    j["mode"] = to_string(o.answer->mode());
    if (o.answer->chain()) j["chain"] = encode(*o.answer->chain());
  } else {
    j["mode"] = to_string(Mode::Failed);
  }
  if (o.failure) {
    j["failure"] = Json{{"step", o.failure->step}, {"message", o.failure->message}};
  }
  return j;
}

inline std::string trace_file_name(const Query& q) { return q.query_id() + ".trace.json"; }

inline void write_trace(const std::filesystem::path& dir, const QueryOutcome& o) {
  std::filesystem::create_directories(dir);
  std::ofstream f(dir / trace_file_name(o.query));
  if (!f) throw ConfigError(fmt::format("cannot write trace to {}", dir.string()));
  f << encode_trace(o).dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Batches

struct BatchItem {
  Query query;
  std::vector<std::string> gold;
  std::optional<std::string> subtask;
};

inline BatchItem decode_batch_item(const Json& j, std::string_view path = "item") {
  detail::expect_object(j, path);
  detail::expect_only(j, path, {"query_id", "image_ref", "question", "gold", "subtask"});
  Query q = detail::with_path(path, [&] {
    return Query(detail::get_string(j, path, "image_ref"), detail::get_string(j, path, "question"),
                 detail::get_string(j, path, "query_id"));
  });
  return BatchItem{std::move(q), detail::string_list(j, path, "gold"),
                   detail::opt_string(j, path, "subtask")};
}

inline Json encode(const BatchItem& b) {
  Json j = encode(b.query);
  if (!b.gold.empty()) j["gold"] = b.gold;
  if (b.subtask) j["subtask"] = *b.subtask;
  return j;
}

struct BatchOptions {
  int parallelism = 1;
  bool no_timestamps = false;
  std::optional<std::filesystem::path> trace_dir;
};

inline EvalRecord to_eval_record(const BatchItem& item, const QueryOutcome& o, bool with_trace) {
  EvalRecord r;
  r.query_id = item.query.query_id();
  r.image_ref = item.query.image_ref();
  r.gold = item.gold;
  r.subtask = item.subtask;
  r.latency_ms = o.latency_ms;
  r.flags = o.flags;
  if (o.answer) {
    r.predicted = o.answer->text();
    r.mode = o.answer->mode();
  } else {
    r.mode = Mode::Failed;
  }
  if (o.failure) {
    r.failed_step = o.failure->step;
    r.error = o.failure->message;
  }
  if (with_trace) r.trace = trace_file_name(item.query);
  return r;
}

/// Runs every item with up to `parallelism` queries in flight. Output order
/// matches input order; a failing query yields a Failed record.
inline std::vector<EvalRecord> run_batch(const std::vector<BatchItem>& items, Backend& backend,
                                         const PipelineConfig& cfg, const BatchOptions& opts = {}) {
  cfg.validate();
  if (opts.parallelism < 1) throw ConfigError("batch: parallelism must be >= 1");
  {
    std::set<std::string_view> seen;
    for (const auto& it : items) {
      if (!seen.insert(it.query.query_id()).second) {
        throw ConfigError(fmt::format("batch: duplicate query_id '{}'", it.query.query_id()));
      }
    }
  }

  std::vector<EvalRecord> records(items.size());
  std::atomic<std::size_t> next{0};
  const RunOptions run_opts{.no_timestamps = opts.no_timestamps};
  auto worker = [&] {
    for (std::size_t i = next++; i < items.size(); i = next++) {
      QueryOutcome o = run_query_traced(items[i].query, backend, cfg, run_opts);
      if (o.failure) {
        logger().warn("query {} failed at {}: {}", o.query.query_id(), o.failure->step,
                      o.failure->message);
      }
      bool traced = false;
      if (opts.trace_dir) {
        try {
          write_trace(*opts.trace_dir, o);
          traced = true;
        } catch (const std::exception& e) {
          logger().error("query {}: {}", o.query.query_id(), e.what());
        }
      }
      records[i] = to_eval_record(items[i], o, traced);
    }
  };

  const auto n_workers = std::min<std::size_t>(static_cast<std::size_t>(opts.parallelism),
                                               std::max<std::size_t>(items.size(), 1));
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(worker);
    worker();
  }
  return records;
}

}  // namespace fastvis
