#pragma once

// Switch-ratio / per-mode accuracy reporting and the fast/slow runtime mixture.

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "fastvis/metrics.hpp"

namespace fastvis {

/// Exact ratio of two counts.
struct Fraction {
  std::uint64_t num = 0;
  std::uint64_t den = 0;

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  bool operator==(const Fraction& o) const { return den && o.den && num * o.den == o.num * den; }
};

struct ModeReport {
  std::string dataset;
  std::uint64_t n_fast = 0, n_slow = 0, n_failed = 0;
  std::uint64_t fast_correct = 0, slow_correct = 0;

  Fraction fast_ratio() const { return {n_fast, n_fast + n_slow}; }
  std::optional<Fraction> fast_acc() const {
    if (n_fast == 0) return std::nullopt;
    return Fraction{fast_correct, n_fast};
  }
  std::optional<Fraction> slow_acc() const {
    if (n_slow == 0) return std::nullopt;
    return Fraction{slow_correct, n_slow};
  }
};

/// Counts modes and per-mode exact-match correctness. Failed queries are
/// counted separately and excluded from the ratio.
inline ModeReport mode_report(std::span<const EvalRecord> records, std::string dataset = {}) {
  ModeReport r{.dataset = std::move(dataset)};
  for (const auto& rec : records) {
    if (rec.mode == Mode::Failed) {
      ++r.n_failed;
      continue;
    }
    if (!is_scored(rec)) {
      throw MetricError(fmt::format("mode report: record '{}' has no gold answer", rec.query_id));
    }
    const bool ok = exact_match(rec);
    if (rec.mode == Mode::Fast) {
      ++r.n_fast;
      r.fast_correct += ok;
    } else {
      ++r.n_slow;
      r.slow_correct += ok;
    }
  }
  if (r.n_fast + r.n_slow == 0) throw MetricError("mode report: no completed records");
  return r;
}

inline Json encode(const ModeReport& r) {
  Json j{{"dataset", r.dataset}, {"n_fast", r.n_fast}, {"n_slow", r.n_slow},
         {"n_failed", r.n_failed}, {"fast_correct", r.fast_correct},
         {"slow_correct", r.slow_correct}, {"fast_ratio", r.fast_ratio().value()}};
  if (auto a = r.fast_acc()) j["fast_acc"] = a->value();
  if (auto a = r.slow_acc()) j["slow_acc"] = a->value();
  return j;
}

// ---------------------------------------------------------------------------
// Runtime

struct RuntimeModel {
  double t_fast_ms = 0;
  double t_slow_ms = 0;
  double p_fast = 0;

  void validate() const {
    if (!(t_fast_ms > 0) || !(t_slow_ms > 0)) throw ConfigError("runtime model: latencies must be > 0");
    if (!(p_fast >= 0 && p_fast <= 1)) throw ConfigError("runtime model: p_fast must lie in [0,1]");
  }
};

/// Linear mixture p*t_fast + (1-p)*t_slow.
inline double expected_runtime(const RuntimeModel& m) {
  m.validate();
  return m.p_fast * m.t_fast_ms + (1.0 - m.p_fast) * m.t_slow_ms;
}

inline double relative_error(double model, double measured) {
  return std::abs(model - measured) / std::abs(measured);
}

struct RuntimeRow {
  std::string name;
  double runtime_ms = 0;
  std::optional<double> measured_ms;
  std::optional<double> result;  // pass-through score for this configuration
};

struct RuntimeTable {
  std::string dataset;
  RuntimeModel model;
  std::vector<RuntimeRow> rows;  // System 1 only, System 2 only, mixed
};

struct ModeValues {
  std::optional<double> fast, slow, mixed;
};

/// Three rows: pure fast, pure slow, and the mixture. Model runtimes are always
/// reported; measured runtimes and results are attached when given.
inline RuntimeTable compare_modes(double t_fast_ms, double t_slow_ms, double p_fast,
                                  const ModeValues& results = {}, const ModeValues& measured = {},
                                  std::string dataset = {}) {
  const RuntimeModel m{t_fast_ms, t_slow_ms, p_fast};
  RuntimeTable t{.dataset = std::move(dataset), .model = m};
  t.rows.push_back({"System 1 only", t_fast_ms, measured.fast, results.fast});
  t.rows.push_back({"System 2 only", t_slow_ms, measured.slow, results.slow});
  t.rows.push_back({"Mixed", expected_runtime(m), measured.mixed, results.mixed});
  return t;
}

struct EmpiricalRuntime {
  RuntimeModel model;
  double mean_all_ms = 0;
};

/// Mean per-mode latencies and the observed fast ratio from batch records.
inline EmpiricalRuntime runtime_from_records(std::span<const EvalRecord> records) {
  double sum_fast = 0, sum_slow = 0;
  std::uint64_t n_fast = 0, n_slow = 0;
  for (const auto& r : records) {
    if (r.mode == Mode::Fast) {
      sum_fast += r.latency_ms;
      ++n_fast;
    } else if (r.mode == Mode::Slow) {
      sum_slow += r.latency_ms;
      ++n_slow;
    }
  }
  if (n_fast == 0 || n_slow == 0) {
    throw MetricError("runtime: need both Fast and Slow records to estimate per-mode latency");
  }
  EmpiricalRuntime e;
  e.model = {sum_fast / static_cast<double>(n_fast), sum_slow / static_cast<double>(n_slow),
             static_cast<double>(n_fast) / static_cast<double>(n_fast + n_slow)};
  e.mean_all_ms = (sum_fast + sum_slow) / static_cast<double>(n_fast + n_slow);
  return e;
}

inline Json encode(const RuntimeTable& t) {
  Json rows = Json::array();
  for (const auto& r : t.rows) {
    Json row{{"name", r.name}, {"runtime_ms", r.runtime_ms}};
    if (r.measured_ms) {
      row["measured_ms"] = *r.measured_ms;
      row["relative_error"] = relative_error(r.runtime_ms, *r.measured_ms);
    }
    if (r.result) row["result"] = *r.result;
    rows.push_back(std::move(row));
  }
  return Json{{"dataset", t.dataset},
              {"model", {{"t_fast_ms", t.model.t_fast_ms}, {"t_slow_ms", t.model.t_slow_ms},
                         {"p_fast", t.model.p_fast}}},
              {"rows", std::move(rows)}};
}

/// Aligned plain-text rendering for terminals.
inline std::string format_table(const RuntimeTable& t) {
  std::string out;
  if (!t.dataset.empty()) out += fmt::format("dataset: {}\n", t.dataset);
  out += fmt::format("{:<15} {:>12} {:>12} {:>9} {:>10}\n", "mode", "model_ms", "measured_ms",
                     "gap", "result");
  for (const auto& r : t.rows) {
    const std::string measured = r.measured_ms ? fmt::format("{:.1f}", *r.measured_ms) : "-";
    const std::string gap =
        r.measured_ms ? fmt::format("{:.1f}%", 100.0 * relative_error(r.runtime_ms, *r.measured_ms)) : "-";
    const std::string result = r.result ? fmt::format("{:.1f}", *r.result) : "-";
    out += fmt::format("{:<15} {:>12.1f} {:>12} {:>9} {:>10}\n", r.name, r.runtime_ms, measured, gap,
                       result);
  }
  return out;
}

inline std::string format_mode_report(const ModeReport& r) {
  auto pct = [](const std::optional<Fraction>& f) {
    return f ? fmt::format("{:.1f}%", 100.0 * f->value()) : std::string("-");
  };
  return fmt::format(
      "dataset: {}\nfast ratio: {:.1f}% ({}/{})\nfast accuracy: {}\nslow accuracy: {}\nfailed: {}\n",
      r.dataset.empty() ? "-" : r.dataset, 100.0 * r.fast_ratio().value(), r.n_fast,
      r.n_fast + r.n_slow, pct(r.fast_acc()), pct(r.slow_acc()), r.n_failed);
}

}  // namespace fastvis
