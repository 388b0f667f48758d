#pragma once

// Command-line front end. Each subcommand parses flags, loads inputs and calls
// into the library; no engine logic lives here.
//
// Exit codes: 0 success, 2 adapter/transport failure, 64 usage, 65 data format.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fastvis/analysis.hpp"
#include "fastvis/dataset.hpp"
#include "fastvis/fixture.hpp"
#include "fastvis/metrics.hpp"
#include "fastvis/pipeline.hpp"
#include "fastvis/remote.hpp"
#include "fastvis/scene.hpp"
#include "fastvis/synth.hpp"

namespace fastvis::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitAdapter = 2;
inline constexpr int kExitUsage = 64;
inline constexpr int kExitData = 65;

/// Bad flag combination discovered after parsing.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Input that cannot be read or decoded.
class DataError : public Error {
 public:
  using Error::Error;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot read '{}'", p.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Json read_json_file(const std::filesystem::path& p) {
  return detail::parse_json(read_file(p), p.string());
}

/// Writes to `path`, or to `fallback` when path is empty.
inline void emit(const std::string& path, std::ostream& fallback, const std::string& text) {
  if (path.empty()) {
    fallback << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError(fmt::format("cannot write '{}'", path));
  f << text;
}

struct BackendFlags {
  std::string kind;
  std::string endpoint;
  std::string fixtures;
  std::string scenes;
  int threshold_w = kDefaultThreshold;
  int threshold_h = kDefaultThreshold;
};

struct PipelineFlags {
  std::string config;
  std::string trace_dir;
  std::string out;
  bool no_timestamps = false;
  int parallelism = 1;
  std::uint64_t seed = 0;
};

inline void add_backend_flags(CLI::App& cmd, BackendFlags& f, bool kind_required) {
  auto* opt = cmd.add_option("--backend", f.kind, "Adapter backend: remote, fixture or oracle")
                  ->check(CLI::IsMember({"remote", "fixture", "oracle"}));
  if (kind_required) opt->required();
  cmd.add_option("--endpoint", f.endpoint, "Remote adapter endpoint (host:port or URL)");
  cmd.add_option("--fixtures", f.fixtures, "Fixture JSON file");
  cmd.add_option("--scenes", f.scenes, "Scene library JSON file");
  cmd.add_option("--threshold-w", f.threshold_w, "Visibility threshold width (px)")->check(CLI::PositiveNumber);
  cmd.add_option("--threshold-h", f.threshold_h, "Visibility threshold height (px)")->check(CLI::PositiveNumber);
}

inline std::unique_ptr<Backend> make_backend(const BackendFlags& f) {
  if (f.kind == "remote") {
    if (f.endpoint.empty()) throw UsageError("--backend remote requires --endpoint");
    return std::make_unique<RemoteBackend>(f.endpoint);
  }
  if (f.kind == "fixture") {
    if (f.fixtures.empty()) throw UsageError("--backend fixture requires --fixtures");
    return std::make_unique<FixtureBackend>(decode_fixtures(read_json_file(f.fixtures)));
  }
  if (f.kind == "oracle") {
    if (f.scenes.empty()) throw UsageError("--backend oracle requires --scenes");
    return std::make_unique<OracleBackend>(decode_scene_library(read_json_file(f.scenes)),
                                           f.threshold_w, f.threshold_h);
  }
  throw UsageError("unknown backend '" + f.kind + "'");
}

inline PipelineConfig load_config(const std::string& path) {
  if (path.empty()) return PipelineConfig{};
  return decode_pipeline_config(read_json_file(path));
}

// ---------------------------------------------------------------------------

inline int cmd_run(const BackendFlags& bf, const PipelineFlags& pf, const std::string& image,
                   const std::string& question, const std::string& query_id, std::ostream& out,
                   std::ostream& err) {
  auto backend = make_backend(bf);
  const PipelineConfig cfg = load_config(pf.config);
  const Query q(image, question, query_id);
  const QueryOutcome o = run_query_traced(q, *backend, cfg, RunOptions{.no_timestamps = pf.no_timestamps});
  if (!pf.trace_dir.empty()) write_trace(pf.trace_dir, o);
  if (o.failure) {
    err << fmt::format("error: step '{}' failed: {}\n", o.failure->step, o.failure->message);
    return kExitAdapter;
  }
  emit(pf.out, out, encode(*o.answer).dump() + "\n");
  return kExitOk;
}

inline std::vector<BatchItem> read_batch_items(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot read '{}'", path));
  return read_jsonl(in, [](const Json& j, const std::string& p) { return decode_batch_item(j, p); });
}

inline int cmd_batch(const BackendFlags& bf, const PipelineFlags& pf, const std::string& queries,
                     std::ostream& out) {
  auto backend = make_backend(bf);
  const PipelineConfig cfg = load_config(pf.config);
  const auto items = read_batch_items(queries);
  BatchOptions opts{.parallelism = pf.parallelism, .no_timestamps = pf.no_timestamps};
  if (!pf.trace_dir.empty()) opts.trace_dir = pf.trace_dir;
  const auto records = run_batch(items, *backend, cfg, opts);
  std::ostringstream ss;
  write_jsonl(ss, records);
  emit(pf.out, out, ss.str());
  return kExitOk;
}

inline std::atomic<MockServer*>& active_server() {
  static std::atomic<MockServer*> s{nullptr};
  return s;
}

inline int cmd_serve_mock(const BackendFlags& bf, const std::string& host, int port, std::ostream& out,
                          std::ostream& err) {
  BackendFlags f = bf;
  if (f.kind.empty()) f.kind = !f.fixtures.empty() ? "fixture" : "oracle";
  if (f.kind == "remote") throw UsageError("serve-mock serves fixtures or scenes, not a remote backend");
  if (f.fixtures.empty() && f.scenes.empty()) throw UsageError("serve-mock requires --fixtures or --scenes");
  auto backend = make_backend(f);
  MockServer server(*backend, &err);
  const int bound = server.bind(host, port);
  out << fmt::format("listening on {}:{}\n", host, bound) << std::flush;
  active_server() = &server;
  auto on_signal = [](int) {
    if (auto* s = active_server().load()) s->stop();
  };
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  server.serve();
  active_server() = nullptr;
  return kExitOk;
}

inline std::vector<std::string> read_vocab(const std::string& path) {
  const std::string text = read_file(path);
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '[') {
    const Json j = detail::parse_json(text, path);
    std::vector<std::string> out;
    for (const auto& v : j) {
      if (!v.is_string()) throw ParseError(path + ": vocabulary entries must be strings");
      out.push_back(v.get<std::string>());
    }
    return out;
  }
  std::vector<std::string> out;
  std::istringstream ss(text);
  for (std::string line; std::getline(ss, line);) {
    const auto t = detail::trim(line);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

inline int cmd_build_dataset(const std::string& annotations, const std::string& vocab,
                             const std::string& templates, const std::string& proposals_out,
                             const DatasetOptions& opts, const std::string& out_path, std::ostream& out,
                             std::ostream& err) {
  const AnnotationSet ann = decode_annotations(read_json_file(annotations));
  const DatasetTemplates tmpl = templates.empty() ? default_templates() : decode_templates(read_json_file(templates));
  if (vocab.empty()) throw UsageError("build-dataset requires --vocab");
  const NegativeDataset ds = build_negative_triples(ann, read_vocab(vocab), tmpl, opts);
  for (const auto& w : ds.warnings) err << "warning: " << w << '\n';
  std::string text;
  for (const auto& t : ds.triples) text += encode(t).dump() + "\n";
  emit(out_path, out, text);
  if (!proposals_out.empty()) {
    std::string ptext;
    for (const auto& p : build_proposal_records(ann, tmpl, opts)) ptext += encode(p).dump() + "\n";
    emit(proposals_out, out, ptext);
  }
  return kExitOk;
}

inline std::vector<EvalRecord> read_records_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot read '{}'", path));
  return read_eval_records(in);
}

inline int cmd_evaluate(const std::string& records_path, const std::string& masks,
                        const std::vector<std::string>& metrics, const std::string& out_path,
                        std::ostream& out) {
  if (records_path.empty() && masks.empty()) throw UsageError("evaluate requires --records or --masks");
  Json report = Json::object();
  if (!records_path.empty()) {
    const auto records = read_records_file(records_path);
    for (const auto& m : metrics) {
      if (m == "accuracy") report["accuracy"] = encode(exact_match_accuracy(records));
      else if (m == "pope") report["pope"] = encode(pope_f1(records));
      else if (m == "mme") report["mme"] = encode(mme_score(records));
    }
  }
  if (!masks.empty()) {
    const auto base = std::filesystem::path(masks).parent_path();
    const auto pairs = load_mask_manifest(read_json_file(masks), base);
    report["segmentation"] = encode(segmentation_report(pairs));
  }
  emit(out_path, out, report.dump(2) + "\n");
  return kExitOk;
}

struct AnalyzeFlags {
  std::string records;
  std::string dataset;
  std::optional<double> t_fast, t_slow, p_fast, measured_mixed;
  std::string format = "text";
};

inline int cmd_analyze(const AnalyzeFlags& f, const std::string& out_path, std::ostream& out) {
  Json report = Json::object();
  std::string text;
  if (!f.records.empty()) {
    const auto records = read_records_file(f.records);
    const ModeReport mr = mode_report(records, f.dataset);
    report["modes"] = encode(mr);
    text += format_mode_report(mr);
    bool has_fast = mr.n_fast > 0, has_slow = mr.n_slow > 0;
    if (has_fast && has_slow) {
      const auto emp = runtime_from_records(records);
      const auto table = compare_modes(emp.model.t_fast_ms, emp.model.t_slow_ms, emp.model.p_fast, {},
                                       {.mixed = emp.mean_all_ms}, f.dataset);
      report["runtime"] = encode(table);
      text += format_table(table);
    }
  } else {
    if (!f.t_fast || !f.t_slow || !f.p_fast) {
      throw UsageError("analyze requires --records, or --t-fast, --t-slow and --p-fast");
    }
    const auto table = compare_modes(*f.t_fast, *f.t_slow, *f.p_fast, {}, {.mixed = f.measured_mixed},
                                     f.dataset);
    report["runtime"] = encode(table);
    text += format_table(table);
  }
  if (!out_path.empty()) emit(out_path, out, report.dump(2) + "\n");
  out << (f.format == "json" ? report.dump(2) + "\n" : text);
  return kExitOk;
}

inline int cmd_bench(const SynthOptions& so, const PipelineFlags& pf, std::ostream& out) {
  const SyntheticCorpus corpus = make_synthetic_corpus(so);
  OracleBackend backend(corpus.scenes, so.threshold, so.threshold);
  const PipelineConfig cfg = load_config(pf.config);
  BatchOptions opts{.parallelism = pf.parallelism, .no_timestamps = pf.no_timestamps};
  if (!pf.trace_dir.empty()) opts.trace_dir = pf.trace_dir;
  const auto records = run_batch(corpus.items, backend, cfg, opts);
  const ModeReport mr = mode_report(records, "synthetic");
  Json report{{"modes", encode(mr)}, {"accuracy", encode(exact_match_accuracy(records))}};
  std::string text = format_mode_report(mr);
  if (!pf.no_timestamps) {
    const auto emp = runtime_from_records(records);
    const auto table = compare_modes(emp.model.t_fast_ms, emp.model.t_slow_ms, emp.model.p_fast, {},
                                     {.mixed = emp.mean_all_ms}, "synthetic");
    report["runtime"] = encode(table);
    text += format_table(table);
  }
  if (!pf.out.empty()) emit(pf.out, out, report.dump(2) + "\n");
  out << text;
  return kExitOk;
}

// ---------------------------------------------------------------------------

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"fastvis: fast/slow visual agent orchestration engine", "fastvis"};
  app.require_subcommand(1);

  BackendFlags bf;
  PipelineFlags pf;
  std::string image, question, query_id = "q0", queries, host = "127.0.0.1";
  int port = 8080;

  auto add_pipeline_flags = [&](CLI::App& cmd, bool batch) {
    cmd.add_option("--config", pf.config, "Pipeline config JSON");
    cmd.add_option("--trace-dir", pf.trace_dir, "Directory for <query_id>.trace.json files");
    cmd.add_option("--out", pf.out, "Output file (default stdout)");
    cmd.add_flag("--no-timestamps", pf.no_timestamps, "Zero all timing fields");
    cmd.add_option("--seed", pf.seed, "Random seed");
    if (batch) cmd.add_option("--parallelism", pf.parallelism, "Concurrent queries")->check(CLI::PositiveNumber);
  };

  auto* run = app.add_subcommand("run", "Answer one query");
  add_backend_flags(*run, bf, true);
  add_pipeline_flags(*run, false);
  run->add_option("--image", image, "Image reference")->required();
  run->add_option("--question", question, "Question text")->required();
  run->add_option("--query-id", query_id, "Query id");

  auto* batch = app.add_subcommand("batch", "Answer a JSON Lines batch of queries");
  add_backend_flags(*batch, bf, true);
  add_pipeline_flags(*batch, true);
  batch->add_option("--queries", queries, "Queries JSONL")->required();

  auto* serve = app.add_subcommand("serve-mock", "Serve fixtures or scenes over the adapter protocol");
  add_backend_flags(*serve, bf, false);
  serve->add_option("--port", port, "Port (0 picks a free one)");
  serve->add_option("--host", host, "Bind address");

  std::string annotations, vocab, templates, proposals_out, ds_out;
  DatasetOptions dopts;
  auto* build = app.add_subcommand("build-dataset", "Build switching triples and proposal records");
  build->add_option("--annotations", annotations, "Annotation JSON")->required();
  build->add_option("--vocab", vocab, "Vocabulary (JSON array or one label per line)")->required();
  build->add_option("--templates", templates, "Templates JSON");
  build->add_option("--out", ds_out, "Triples JSONL (default stdout)");
  build->add_option("--proposals-out", proposals_out, "Proposal records JSONL");
  build->add_option("--seed", dopts.seed, "Random seed");
  build->add_option("--threshold-w", dopts.threshold_w)->check(CLI::PositiveNumber);
  build->add_option("--threshold-h", dopts.threshold_h)->check(CLI::PositiveNumber);
  build->add_option("--absent-per-image", dopts.absent_per_image, "Absent labels per image (0 = all)")
      ->check(CLI::NonNegativeNumber);

  std::string records, masks, eval_out;
  std::vector<std::string> metrics{"accuracy"};
  auto* evaluate = app.add_subcommand("evaluate", "Score batch records or mask pairs");
  evaluate->add_option("--records", records, "EvalRecord JSONL");
  evaluate->add_option("--masks", masks, "Mask-pair manifest JSON");
  evaluate->add_option("--metric", metrics, "accuracy, pope, mme (repeatable)")
      ->check(CLI::IsMember({"accuracy", "pope", "mme"}));
  evaluate->add_option("--out", eval_out, "Report JSON (default stdout)");

  AnalyzeFlags af;
  std::string analyze_out;
  double t_fast = 0, t_slow = 0, p_fast = 0, measured = 0;
  auto* analyze = app.add_subcommand("analyze", "Switch-ratio and runtime reports");
  analyze->add_option("--records", af.records, "EvalRecord JSONL");
  analyze->add_option("--dataset", af.dataset, "Dataset name");
  auto* o_tf = analyze->add_option("--t-fast", t_fast, "Fast-path latency (ms)");
  auto* o_ts = analyze->add_option("--t-slow", t_slow, "Slow-path latency (ms)");
  auto* o_pf = analyze->add_option("--p-fast", p_fast, "Fraction of fast-path queries");
  auto* o_mm = analyze->add_option("--measured", measured, "Measured mixed latency (ms)");
  analyze->add_option("--format", af.format, "Stdout format")->check(CLI::IsMember({"text", "json"}));
  analyze->add_option("--out", analyze_out, "Report JSON");

  SynthOptions so;
  auto* bench = app.add_subcommand("bench", "Run the oracle on a synthetic corpus and report modes/runtime");
  add_pipeline_flags(*bench, true);
  bench->add_option("--count", so.count, "Number of scenes")->check(CLI::PositiveNumber);
  bench->add_option("--threshold-w", so.threshold, "Visibility threshold (px)")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (*run) return cmd_run(bf, pf, image, question, query_id, out, err);
    if (*batch) return cmd_batch(bf, pf, queries, out);
    if (*serve) return cmd_serve_mock(bf, host, port, out, err);
    if (*build) return cmd_build_dataset(annotations, vocab, templates, proposals_out, dopts, ds_out, out, err);
    if (*evaluate) return cmd_evaluate(records, masks, metrics, eval_out, out);
    if (*analyze) {
      if (*o_tf) af.t_fast = t_fast;
      if (*o_ts) af.t_slow = t_slow;
      if (*o_pf) af.p_fast = p_fast;
      if (*o_mm) af.measured_mixed = measured;
      return cmd_analyze(af, analyze_out, out);
    }
    if (*bench) {
      so.seed = pf.seed ? pf.seed : so.seed;
      return cmd_bench(so, pf, out);
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const StepFailure& e) {
    err << "error: " << e.what() << '\n';
    return kExitAdapter;
  } catch (const TransportError& e) {
    err << "error: " << e.what() << '\n';
    return kExitAdapter;
  } catch (const AdapterError& e) {
    err << "error: " << e.what() << '\n';
    return kExitAdapter;
  } catch (const ProtocolError& e) {
    err << "error: " << e.what() << '\n';
    return kExitAdapter;
  } catch (const Error& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace fastvis::cli
