#include <filesystem>
#include <fstream>
#include <functional>

#include <gtest/gtest.h>

#include "fastvis/fixture.hpp"
#include "fastvis/pipeline.hpp"
#include "fastvis/synth.hpp"

namespace fastvis {
namespace {

SceneLibrary desk_library() {
  return SceneLibrary{
      {"img1", SceneGraph(640, 480,
                          {{"keyboard", BBox(200, 300, 400, 360, 640, 480), {{"color", "black"}}, ""},
                           {"mouse", BBox(410, 320, 418, 326, 640, 480), {{"color", "white"}}, "near the keyboard"},
                           {"bus", BBox(10, 10, 130, 90, 640, 480), {{"color", "red"}}, ""}})}};
}

/// Delegates to an inner backend unless a per-role override is installed.
class ScriptedBackend final : public Backend {
 public:
  using Handler = std::function<AdapterResponse(const AdapterRequest&)>;
  explicit ScriptedBackend(Backend& inner) : inner_(inner) {}

  void on(AdapterRole role, Handler h) { handlers_[role] = std::move(h); }

  AdapterResponse call(const AdapterRequest& req) override {
    seen.push_back(req);
    if (auto it = handlers_.find(req.role); it != handlers_.end()) return it->second(req);
    return inner_.call(req);
  }

  std::vector<AdapterRequest> seen;

 private:
  Backend& inner_;
  std::map<AdapterRole, Handler> handlers_;
};

// ---------------------------------------------------------------------------
// Mode detection

TEST(DetectMode, StructuredTail) {
  const auto d = detect_mode("Sorry, I can not answer. Missing objects: [glove]. Context: near home plate",
                             PipelineConfig{});
  EXPECT_EQ(d.mode, Mode::Slow);
  ASSERT_EQ(d.missing.size(), 1u);
  EXPECT_EQ(d.missing[0].label(), "glove");
  ASSERT_EQ(d.clues.size(), 1u);
  EXPECT_EQ(d.clues[0].text(), "near home plate");
  EXPECT_FALSE(d.degraded);
}

TEST(DetectMode, CaseInsensitiveAndDegraded) {
  const auto d = detect_mode("SORRY, I CAN NOT ANSWER", PipelineConfig{});
  EXPECT_EQ(d.mode, Mode::Slow);
  EXPECT_TRUE(d.degraded);
  EXPECT_TRUE(d.missing.empty());
  EXPECT_TRUE(detect_mode("Sorry, I can not answer. Missing objects: [].", PipelineConfig{}).degraded);
}

TEST(DetectMode, MultipleMissingObjectsAndNoContext) {
  const auto d = detect_mode("Sorry, I can not answer. Missing objects: [red cup , spoon].", PipelineConfig{});
  ASSERT_EQ(d.missing.size(), 2u);
  EXPECT_EQ(d.missing[0].label(), "red cup");
  EXPECT_EQ(d.missing[1].label(), "spoon");
  EXPECT_TRUE(d.clues.empty());
}

TEST(DetectMode, FastWhenPhraseAbsent) {
  EXPECT_EQ(detect_mode("A red bus.", PipelineConfig{}).mode, Mode::Fast);
  EXPECT_EQ(detect_mode("Sorry, I cannot answer.", PipelineConfig{}).mode, Mode::Fast);
  EXPECT_EQ(detect_mode("", PipelineConfig{}).mode, Mode::Fast);
}

TEST(DetectMode, CustomTriggerPhrase) {
  PipelineConfig cfg;
  cfg.trigger_phrase = "NEED A CLOSER LOOK";
  EXPECT_EQ(detect_mode("I need a closer look. Missing objects: [cat]", cfg).mode, Mode::Slow);
  EXPECT_EQ(detect_mode("Sorry, I can not answer.", cfg).mode, Mode::Fast);
}

TEST(PipelineConfig, JsonCodec) {
  PipelineConfig c;
  c.two_stage_proposal = false;
  c.summarize_with = SummarizeWith::Mask;
  EXPECT_EQ(decode_pipeline_config(Json::parse(encode(c).dump())), c);
  EXPECT_EQ(decode_pipeline_config(Json::object()), PipelineConfig{});
  EXPECT_THROW(decode_pipeline_config(Json{{"summarize_with", "Pixels"}}), ParseError);
  EXPECT_THROW(decode_pipeline_config(Json{{"trigger_phrase", ""}}), ParseError);
  EXPECT_THROW(decode_pipeline_config(Json{{"bogus", 1}}), ParseError);
}

// ---------------------------------------------------------------------------
// Single queries

TEST(RunQuery, LargeTargetTakesFastPath) {
  OracleBackend oracle(desk_library());
  const FinalAnswer a = run_query(Query("img1", "What color is the bus?", "q1"), oracle, PipelineConfig{});
  EXPECT_EQ(a.mode(), Mode::Fast);
  EXPECT_EQ(a.text(), "red");
  EXPECT_FALSE(a.chain());
}

TEST(RunQuery, TinyTargetTakesSlowPathWithMonotoneChain) {
  OracleBackend oracle(desk_library());
  const FinalAnswer a = run_query(Query("img1", "What color is the mouse?", "q1"), oracle, PipelineConfig{});
  EXPECT_EQ(a.mode(), Mode::Slow);
  EXPECT_EQ(a.text(), "white");
  ASSERT_TRUE(a.chain());
  const EvidenceChain& c = *a.chain();
  ASSERT_TRUE(c.region());
  ASSERT_EQ(c.boxes().size(), 1u);
  EXPECT_EQ(c.boxes()[0], BBox(410, 320, 418, 326, 640, 480));
  EXPECT_TRUE(box_within_region(c.boxes()[0], *c.region()));
  ASSERT_TRUE(c.mask());
  EXPECT_TRUE(mask_within_boxes(*c.mask(), c.boxes()));
  ASSERT_EQ(c.clues().size(), 1u);
  EXPECT_EQ(c.clues()[0].text(), "near the keyboard");
}

struct CallCase {
  bool two_stage;
  bool segment;
};

class CallCountLaw : public ::testing::TestWithParam<CallCase> {};

TEST_P(CallCountLaw, FastIsOneCallSlowMatchesConfig) {
  OracleBackend oracle(desk_library());
  RecordingBackend rec(oracle);
  PipelineConfig cfg;
  cfg.two_stage_proposal = GetParam().two_stage;
  cfg.enable_segmentation = GetParam().segment;

  run_query(Query("img1", "What color is the bus?", "f"), rec, cfg);
  EXPECT_EQ(rec.total_calls(), 1u);
  EXPECT_EQ(rec.calls(AdapterRole::Switch), 1u);

  rec.reset_counts();
  run_query(Query("img1", "What color is the mouse?", "s"), rec, cfg);
  const std::size_t expected = 2 + cfg.two_stage_proposal + cfg.enable_segmentation + 1;
  EXPECT_EQ(rec.total_calls(), expected);
  EXPECT_EQ(static_cast<std::size_t>(cfg.slow_call_count()), expected);
  EXPECT_EQ(rec.calls(AdapterRole::ProposeBoxes), std::size_t{cfg.two_stage_proposal});
  EXPECT_EQ(rec.calls(AdapterRole::Segment), std::size_t{cfg.enable_segmentation});
  EXPECT_EQ(rec.calls(AdapterRole::Summarize), 1u);
}

INSTANTIATE_TEST_SUITE_P(AllConfigs, CallCountLaw,
                         ::testing::Values(CallCase{true, true}, CallCase{true, false}, CallCase{false, true},
                                           CallCase{false, false}));

TEST(RunQuery, AbsentObjectMinimalConfigMakesThreeCalls) {
  OracleBackend oracle(desk_library());
  RecordingBackend rec(oracle);
  PipelineConfig cfg;
  cfg.two_stage_proposal = false;
  cfg.enable_segmentation = false;
  const FinalAnswer a = run_query(Query("img1", "Is there a zebra in the image?", "z"), rec, cfg);
  EXPECT_EQ(rec.total_calls(), 3u);
  EXPECT_EQ(a.mode(), Mode::Slow);
  EXPECT_EQ(a.text(), "no");
}

TEST(RunQuery, AbsentObjectFullConfigFlagsEmptyProposals) {
  OracleBackend oracle(desk_library());
  RecordingBackend rec(oracle);
  const QueryOutcome o = run_query_traced(Query("img1", "What color is the zebra?", "z"), rec, PipelineConfig{});
  ASSERT_TRUE(o.answer);
  EXPECT_EQ(o.answer->text(), "There is no zebra in the image.");
  EXPECT_EQ(rec.total_calls(), 5u);
  EXPECT_NE(std::find(o.flags.begin(), o.flags.end(), "no_boxes"), o.flags.end());
  EXPECT_NE(std::find(o.flags.begin(), o.flags.end(), "no_mask_target"), o.flags.end());
  EXPECT_FALSE(o.answer->chain()->mask());
}

TEST(RunQuery, UnparseableRegionSkipsDependentSteps) {
  OracleBackend oracle(desk_library());
  ScriptedBackend sb(oracle);
  sb.on(AdapterRole::ProposeRegion, [](const AdapterRequest&) {
    return AdapterResponse{.role = AdapterRole::ProposeRegion, .raw_text = "somewhere on the desk"};
  });
  const QueryOutcome o = run_query_traced(Query("img1", "What color is the mouse?", "q"), sb, PipelineConfig{});
  ASSERT_TRUE(o.answer);
  EXPECT_EQ(sb.seen.size(), 3u);
  EXPECT_EQ(o.flags.size(), 4u);
  EXPECT_EQ(o.flags[0].rfind("no_region", 0), 0u);
  EXPECT_EQ(o.flags[1], "skipped: propose_boxes");
  EXPECT_EQ(o.flags[2], "skipped: segment");
  EXPECT_EQ(o.flags[3], "empty_chain");
}

TEST(RunQuery, RegionParsedFromRawText) {
  OracleBackend oracle(desk_library());
  ScriptedBackend sb(oracle);
  sb.on(AdapterRole::ProposeRegion, [](const AdapterRequest&) {
    return AdapterResponse{.role = AdapterRole::ProposeRegion, .raw_text = "[0.3, 0.7, 0.6, 0.8]"};
  });
  const FinalAnswer a = run_query(Query("img1", "What color is the mouse?", "q"), sb, PipelineConfig{});
  EXPECT_EQ(*a.chain()->region(), Region(0.3, 0.7, 0.6, 0.8));
  EXPECT_EQ(sb.seen[2].region, Region(0.3, 0.7, 0.6, 0.8));
}

TEST(RunQuery, DegradedTriggerStillRunsSlowPath) {
  OracleBackend oracle(desk_library());
  ScriptedBackend sb(oracle);
  sb.on(AdapterRole::Switch, [](const AdapterRequest&) {
    return AdapterResponse{.role = AdapterRole::Switch, .raw_text = "Sorry, I can not answer."};
  });
  const QueryOutcome o = run_query_traced(Query("img1", "What color is the mouse?", "q"), sb, PipelineConfig{});
  ASSERT_TRUE(o.answer);
  EXPECT_EQ(o.answer->mode(), Mode::Slow);
  EXPECT_EQ(o.flags.front(), "degraded_slow");
  EXPECT_EQ(o.answer->text(), "white");
}

TEST(RunQuery, StepFailureNamesTheStep) {
  OracleBackend oracle(desk_library());
  ScriptedBackend sb(oracle);
  sb.on(AdapterRole::Segment, [](const AdapterRequest&) -> AdapterResponse {
    throw TransportError("connection reset");
  });
  const Query q("img1", "What color is the mouse?", "q");
  const QueryOutcome o = run_query_traced(q, sb, PipelineConfig{});
  EXPECT_FALSE(o.answer);
  ASSERT_TRUE(o.failure);
  EXPECT_EQ(o.failure->step, "segment");
  EXPECT_TRUE(o.failure->transport);
  EXPECT_EQ(o.events.size(), 3u);  // switch, propose_region, propose_boxes completed
  try {
    run_query(q, sb, PipelineConfig{});
    FAIL();
  } catch (const StepFailure& f) {
    EXPECT_EQ(f.info().step, "segment");
  }
}

TEST(RunQuery, MalformedStepResponseIsNonTransportFailure) {
  OracleBackend oracle(desk_library());
  ScriptedBackend sb(oracle);
  sb.on(AdapterRole::Segment, [](const AdapterRequest&) {
    return AdapterResponse{.role = AdapterRole::Segment, .raw_text = ""};  // no mask
  });
  const QueryOutcome o = run_query_traced(Query("img1", "What color is the mouse?", "q"), sb, PipelineConfig{});
  ASSERT_TRUE(o.failure);
  EXPECT_EQ(o.failure->step, "segment");
  EXPECT_FALSE(o.failure->transport);
}

TEST(RunQuery, SummarizeWithControlsEvidence) {
  OracleBackend oracle(desk_library());
  const Query q("img1", "What color is the mouse?", "q");
  for (auto mode : {SummarizeWith::Boxes, SummarizeWith::Mask, SummarizeWith::Both}) {
    ScriptedBackend sb(oracle);
    PipelineConfig cfg;
    cfg.summarize_with = mode;
    const FinalAnswer a = run_query(q, sb, cfg);
    const AdapterRequest& sum = sb.seen.back();
    ASSERT_EQ(sum.role, AdapterRole::Summarize);
    EXPECT_EQ(sum.boxes.empty(), mode == SummarizeWith::Mask);
    EXPECT_EQ(sum.chain->mask().has_value(), mode != SummarizeWith::Boxes);
    EXPECT_TRUE(a.chain()->mask());  // the returned chain always keeps its mask
  }
}

TEST(RunQuery, DeterministicTracesWithoutTimestamps) {
  OracleBackend oracle(desk_library());
  const Query q("img1", "What color is the mouse?", "q");
  const RunOptions opts{.no_timestamps = true};
  const auto a = encode_trace(run_query_traced(q, oracle, PipelineConfig{}, opts)).dump();
  const auto b = encode_trace(run_query_traced(q, oracle, PipelineConfig{}, opts)).dump();
  EXPECT_EQ(a, b);
  const Json t = Json::parse(a);
  EXPECT_EQ(t["events"].size(), 5u);
  EXPECT_EQ(t["events"][0]["step"], "switch");
  EXPECT_EQ(t["events"][4]["step"], "summarize");
  EXPECT_EQ(t["latency_ms"], 0.0);
  EXPECT_EQ(t["mode"], "Slow");
}

// ---------------------------------------------------------------------------
// Batches

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("fastvis_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  return p;
}

TEST(RunBatch, PreservesOrderUnderParallelism) {
  const SyntheticCorpus c = make_synthetic_corpus({.count = 40, .seed = 3});
  OracleBackend oracle(c.scenes);
  const auto serial = run_batch(c.items, oracle, PipelineConfig{}, {.parallelism = 1, .no_timestamps = true});
  const auto parallel = run_batch(c.items, oracle, PipelineConfig{}, {.parallelism = 4, .no_timestamps = true});
  ASSERT_EQ(serial.size(), c.items.size());
  for (std::size_t i = 0; i < serial.size(); ++i) {
    EXPECT_EQ(serial[i].query_id, c.items[i].query.query_id());
    EXPECT_EQ(encode(serial[i]).dump(), encode(parallel[i]).dump());
  }
}

TEST(RunBatch, DuplicateIdsRejected) {
  OracleBackend oracle(desk_library());
  const std::vector<BatchItem> items{{Query("img1", "What color is the bus?", "a"), {}, {}},
                                     {Query("img1", "What color is the mouse?", "a"), {}, {}}};
  EXPECT_THROW(run_batch(items, oracle, PipelineConfig{}), ConfigError);
  EXPECT_THROW(run_batch({}, oracle, PipelineConfig{}, {.parallelism = 0}), ConfigError);
}

TEST(RunBatch, FailuresBecomeRecordsAndTracesAreWritten) {
  OracleBackend oracle(desk_library());
  const std::vector<BatchItem> items{{Query("img1", "What color is the bus?", "ok"), {"red"}, {}},
                                     {Query("missing-image", "What color is the bus?", "bad"), {"red"}, {}},
                                     {Query("img1", "Describe the scene.", "odd"), {}, {}}};
  const auto dir = temp_dir("traces");
  const auto recs = run_batch(items, oracle, PipelineConfig{}, {.parallelism = 2, .trace_dir = dir});
  ASSERT_EQ(recs.size(), 3u);
  EXPECT_EQ(recs[0].mode, Mode::Fast);
  EXPECT_EQ(recs[0].predicted, "red");
  EXPECT_EQ(recs[1].mode, Mode::Failed);
  EXPECT_EQ(recs[1].failed_step, "switch");
  ASSERT_TRUE(recs[1].error);
  EXPECT_NE(recs[1].error->find("unknown image"), std::string::npos);
  EXPECT_EQ(recs[2].mode, Mode::Failed);
  for (const auto& id : {"ok", "bad", "odd"}) {
    const auto path = dir / (std::string(id) + ".trace.json");
    ASSERT_TRUE(std::filesystem::exists(path)) << path;
    std::ifstream f(path);
    const Json t = Json::parse(f);
    EXPECT_EQ(t["query"]["query_id"], id);
  }
  EXPECT_EQ(recs[0].trace, "ok.trace.json");
  std::filesystem::remove_all(dir);
}

TEST(RunBatch, SyntheticCorpusModesAndAnswers) {
  const SyntheticCorpus c = make_synthetic_corpus({.count = 200});
  OracleBackend oracle(c.scenes);
  const auto recs = run_batch(c.items, oracle, PipelineConfig{}, {.parallelism = 2});
  std::size_t fast = 0;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    EXPECT_EQ(recs[i].mode, c.expected_modes[i]) << recs[i].query_id;
    ASSERT_EQ(recs[i].gold.size(), 1u);
    EXPECT_EQ(recs[i].predicted, recs[i].gold[0]) << recs[i].query_id;
    fast += recs[i].mode == Mode::Fast;
  }
  EXPECT_EQ(fast, 100u);  // Visible and Thin placements, half of an i%4 cycle
}

TEST(BatchItem, JsonCodec) {
  const Json j = Json::parse(R"({"query_id":"a","image_ref":"i","question":"q?","gold":"yes","subtask":"existence"})");
  const BatchItem b = decode_batch_item(j);
  EXPECT_EQ(b.gold, std::vector<std::string>{"yes"});
  EXPECT_EQ(b.subtask, "existence");
  EXPECT_THROW(decode_batch_item(Json::parse(R"({"query_id":"a","image_ref":"i"})")), ParseError);
}

}  // namespace
}  // namespace fastvis
