#include <atomic>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "corpus.hpp"
#include "fakes.hpp"
#include "support.hpp"
#include "vrmod/error.hpp"
#include "vrmod/io.hpp"
#include "vrmod/pipeline.hpp"

namespace vrmod {
namespace {

using testing::Corpus;
using testing::ManualClock;
using testing::ok_reply;
using testing::ScriptedBackend;
using testing::TempDir;

// One generated corpus shared by every test in this file.
class PipelineTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir();
    corpus_ = new Corpus(testing::make_corpus(dir_->path(), 2, 11, 21.0));
  }
  static void TearDownTestSuite() {
    delete corpus_;
    delete dir_;
  }

  RunConfig config(const std::string& id, StageMode mode = StageMode::Independent,
                   PromptVariant variant = PromptVariant::Baseline) const {
    RunConfig cfg;
    cfg.run_id = id;
    cfg.stage_mode = mode;
    cfg.variant = variant;
    cfg.backend.kind = BackendKind::MockOracle;
    cfg.backend.requests_per_minute = 600000;
    cfg.backend.sidecar_dir = corpus_->sidecars();
    return cfg;
  }

  const std::vector<IngestedSegment>& segments() const { return corpus_->ingested.segments; }
  std::vector<IngestedSegment> first(std::size_t n) const {
    return {segments().begin(), segments().begin() + static_cast<long>(n)};
  }

  static TempDir* dir_;
  static Corpus* corpus_;
  TempDir runs_;
  FrameStore store_{corpus_->store_root()};
};

TempDir* PipelineTest::dir_ = nullptr;
Corpus* PipelineTest::corpus_ = nullptr;

// Counts calls and forwards to the real mock.
struct CountingFactory {
  std::shared_ptr<std::atomic<int>> calls = std::make_shared<std::atomic<int>>(0);
  int fail_after = -1;

  BackendFactory make() const {
    return [calls = calls, fail_after = fail_after](const BackendConfig& cfg, Clock& clock) -> std::unique_ptr<Backend> {
      struct Wrapped : Backend {
        std::unique_ptr<Backend> inner;
        std::shared_ptr<std::atomic<int>> calls;
        int fail_after;
        BackendReply call(const InferenceRequest& r) override {
          const int n = ++*calls;
          if (fail_after >= 0 && n > fail_after) {
            BackendReply down;
            down.outcome = TransportOutcome::Unreachable;
            down.detail = "connection refused";
            return down;
          }
          return inner->call(r);
        }
      };
      auto w = std::make_unique<Wrapped>();
      w->inner = make_backend(cfg, clock);
      w->calls = calls;
      w->fail_after = fail_after;
      return w;
    };
  }
};

TEST(StageModes, WireStrings) {
  for (auto m : {StageMode::Stage1Only, StageMode::Stage2Only, StageMode::Independent, StageMode::Cascade}) {
    EXPECT_EQ(parse_stage_mode(wire(m)), m);
  }
  EXPECT_EQ(wire(StageMode::Stage1Only), "stage1-only");
  EXPECT_TRUE(runs_stage(StageMode::Cascade, Stage::Two));
  EXPECT_FALSE(runs_stage(StageMode::Stage2Only, Stage::One));
}

TEST(RunConfigTest, ValidationAndJson) {
  RunConfig cfg;
  EXPECT_THROW(cfg.validate(), Error);  // empty run id
  cfg.run_id = "../escape";
  EXPECT_THROW(cfg.validate(), Error);
  cfg.run_id = "exp-1.a";
  cfg.validate();
  cfg.n_frames = 1;
  EXPECT_THROW(cfg.validate(), Error);
  cfg.n_frames = 8;
  cfg.variant = PromptVariant::CoT;
  cfg.stage_mode = StageMode::Cascade;
  cfg.fallback_stage1 = Stage1Label::Anomaly;
  const auto back = run_config_from_json(to_json(cfg));
  EXPECT_EQ(back.run_id, "exp-1.a");
  EXPECT_EQ(back.n_frames, 8);
  EXPECT_EQ(back.variant, PromptVariant::CoT);
  EXPECT_EQ(back.stage_mode, StageMode::Cascade);
  EXPECT_EQ(back.fallback_stage1, Stage1Label::Anomaly);
}

TEST_F(PipelineTest, IndependentModeCallsBothStagesPerSegment) {
  Classifier classifier(runs_.path(), store_);
  CountingFactory counting;
  classifier.set_backend_factory(counting.make());
  const auto result = classifier.run(first(4), config("four"));
  EXPECT_EQ(counting.calls->load(), 8);
  EXPECT_EQ(result.model_calls, 8u);
  ASSERT_EQ(result.segments.size(), 4u);
  for (const auto& r : result.segments) {
    ASSERT_TRUE(r.stage1 && r.stage2);
    EXPECT_EQ(r.stage1->parse_status, ParseStatus::Clean);
    EXPECT_EQ(*r.stage1->label, project(r.stage2->label->stage2() ? *r.stage2->label->stage2()
                                                                   : Stage2Label::BenignBehavior,
                                        Stage::One));
  }
  EXPECT_EQ(result.stage1_counts.clean, 4u);
  for (const char* f : {"run.json", "progress.jsonl", "verdicts.jsonl", "summary.json", "wire.log"}) {
    EXPECT_TRUE(std::filesystem::exists(classifier.run_dir("four") / f)) << f;
  }
}

TEST_F(PipelineTest, MockMatchesScriptLabels) {
  Classifier classifier(runs_.path(), store_);
  const auto result = classifier.run(segments(), config("all"));
  ASSERT_EQ(result.segments.size(), segments().size());
  for (const auto& r : result.segments) {
    const auto truth = r.segment.segment.truth->label;
    EXPECT_EQ(*r.stage2->label, Label(truth)) << r.segment.segment.segment_id;
    EXPECT_EQ(*r.stage1->label, project(truth, Stage::One));
  }
}

TEST_F(PipelineTest, CascadeSkipsStageTwoForBenign) {
  Classifier classifier(runs_.path(), store_);
  CountingFactory counting;
  classifier.set_backend_factory(counting.make());
  const auto result = classifier.run(segments(), config("cascade", StageMode::Cascade));
  std::size_t benign = 0;
  for (const auto& r : result.segments) {
    if (*r.stage1->label == Label(Stage1Label::Benign)) {
      ++benign;
      EXPECT_EQ(r.stage2->origin, VerdictOrigin::CascadeDefault);
      EXPECT_EQ(*r.stage2->label, Label(Stage2Label::BenignBehavior));
      EXPECT_EQ(r.model_calls, 1);
    } else {
      EXPECT_EQ(r.stage2->origin, VerdictOrigin::Model);
      EXPECT_EQ(r.model_calls, 2);
    }
  }
  ASSERT_GT(benign, 0u);
  EXPECT_EQ(static_cast<std::size_t>(counting.calls->load()), 2 * segments().size() - benign);
  EXPECT_EQ(result.stage2_counts.clean, segments().size() - benign);
}

TEST_F(PipelineTest, RepairThenFallback) {
  ManualClock clock;
  BackendConfig cfg;
  cfg.requests_per_minute = 600000;
  const auto seg = segments().front();
  ClassifyOptions opts;
  opts.run_id = "r";
  opts.frame_base_url = "http://frames.local";
  opts.fallback_stage2 = Stage2Label::DisruptiveBehavior;

  auto backend = std::make_unique<ScriptedBackend>(std::vector{
      ok_reply("I think it is fine."), ok_reply(R"({"label": "Benign", "reason": "idle chat"})")});
  auto* scripted = backend.get();
  Gateway gw(cfg, std::move(backend), clock);
  SegmentClassifier sc(gw, store_, opts);
  const auto repaired = sc.classify(seg, Stage::One);
  EXPECT_EQ(repaired.model_calls, 2);
  EXPECT_EQ(repaired.verdict.parse_status, ParseStatus::Clean);
  EXPECT_EQ(repaired.verdict.origin, VerdictOrigin::Model);
  const auto ids = scripted->requests();
  ASSERT_EQ(ids.size(), 2u);
  EXPECT_EQ(ids[0], "r/" + seg.segment.segment_id + "/stage1");
  EXPECT_EQ(ids[1], ids[0] + "/repair");

  Gateway gw2(cfg, std::make_unique<ScriptedBackend>(std::vector{ok_reply("nope")}), clock);
  SegmentClassifier sc2(gw2, store_, opts);
  const auto fb = sc2.classify(seg, Stage::Two);
  EXPECT_EQ(fb.model_calls, 2);
  EXPECT_EQ(fb.verdict.parse_status, ParseStatus::Failed);
  EXPECT_EQ(fb.verdict.origin, VerdictOrigin::Fallback);
  EXPECT_EQ(*fb.verdict.label, Label(Stage2Label::DisruptiveBehavior));
  EXPECT_TRUE(fb.verdict.reason.empty());
}

TEST_F(PipelineTest, RunExistsAndUnknownRun) {
  Classifier classifier(runs_.path(), store_);
  classifier.run(first(1), config("once"));
  try {
    classifier.run(first(1), config("once"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::RunExists);
  }
  try {
    classifier.resume("never");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownRun);
  }
}

TEST_F(PipelineTest, AbortedRunResumesToIdenticalVerdicts) {
  TempDir other;
  Classifier reference(other.path(), store_);
  reference.run(segments(), config("r1"));
  const auto expected = read_text(reference.run_dir("r1") / "verdicts.jsonl");

  Classifier flaky(runs_.path(), store_);
  CountingFactory failing;
  failing.fail_after = 5;
  flaky.set_backend_factory(failing.make());
  auto cfg = config("r1");
  cfg.backend.backoff_base = 0.0;
  cfg.backend.max_retries = 0;
  EXPECT_THROW(flaky.run(segments(), cfg), BackendError);
  std::size_t journaled = 0;
  for_each_line(flaky.run_dir("r1") / "progress.jsonl", [&](std::string_view, std::size_t) { ++journaled; });
  EXPECT_EQ(journaled, 2u);  // two complete segments before the sixth call failed

  // Simulate a crash mid-append.
  {
    AppendLog log(flaky.run_dir("r1") / "progress.jsonl", false);
  }
  std::ofstream(flaky.run_dir("r1") / "progress.jsonl", std::ios::app) << "{\"segment_id\":";

  Classifier healthy(runs_.path(), store_);
  CountingFactory counting;
  healthy.set_backend_factory(counting.make());
  const auto resumed = healthy.resume("r1");
  EXPECT_EQ(static_cast<std::size_t>(counting.calls->load()), 2 * (segments().size() - 2));
  EXPECT_EQ(resumed.segments.size(), segments().size());
  EXPECT_EQ(read_text(healthy.run_dir("r1") / "verdicts.jsonl"), expected);
}

TEST_F(PipelineTest, FewShotWithholdsExemplarClips) {
  Classifier classifier(runs_.path(), store_);
  const auto result = classifier.run(segments(), config("fs", StageMode::Independent, PromptVariant::FewShot));
  EXPECT_FALSE(result.exemplar_clips.empty());
  const std::set<std::string> withheld(result.exemplar_clips.begin(), result.exemplar_clips.end());
  for (const auto& r : result.segments) EXPECT_FALSE(withheld.count(r.segment.segment.clip_id));

  const auto ex1 = select_exemplars(segments(), Stage::One, 2);
  ASSERT_EQ(ex1.size(), 4u);
  EXPECT_EQ(ex1[0].gold, Label(Stage1Label::Benign));
  EXPECT_EQ(ex1[2].gold, Label(Stage1Label::Anomaly));
  EXPECT_NE(ex1[2].segment.segment.truth->subcategory, ex1[3].segment.segment.truth->subcategory);
  std::set<std::string> clips;
  for (const auto& e : ex1) clips.insert(e.segment.segment.clip_id);
  EXPECT_EQ(clips.size(), 4u);
  EXPECT_THROW(select_exemplars(first(1), Stage::Two, 1), Error);
}

TEST_F(PipelineTest, VerdictsReloadFromDisk) {
  Classifier classifier(runs_.path(), store_);
  const auto result = classifier.run(first(3), config("reload"));
  const auto loaded = load_verdicts(classifier.run_dir("reload"));
  ASSERT_EQ(loaded.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(loaded[i].segment.segment.segment_id, result.segments[i].segment.segment.segment_id);
    EXPECT_EQ(loaded[i].stage2->label, result.segments[i].stage2->label);
  }
  EXPECT_EQ(load_run_config(classifier.run_dir("reload")).run_id, "reload");
}

}  // namespace
}  // namespace vrmod
