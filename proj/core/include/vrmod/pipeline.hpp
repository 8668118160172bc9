#pragma once

// Two-stage classification runs: prompt building, gateway calls, parsing with
// one repair attempt, fallback policy and resumable on-disk persistence.

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vrmod/gateway.hpp"
#include "vrmod/media.hpp"
#include "vrmod/prompts.hpp"
#include "vrmod/verdict.hpp"

namespace vrmod {

enum class StageMode { Stage1Only, Stage2Only, Independent, Cascade };
std::string_view wire(StageMode m) noexcept;  // stage1-only, stage2-only, independent, cascade
std::optional<StageMode> parse_stage_mode(std::string_view text) noexcept;
bool runs_stage(StageMode mode, Stage stage) noexcept;

struct RunConfig {
  std::string run_id;
  StageMode stage_mode = StageMode::Independent;
  PromptVariant variant = PromptVariant::Baseline;
  BackendConfig backend;
  int n_frames = kDefaultFramesPerSegment;
  Stage1Label fallback_stage1 = Stage1Label::Benign;
  Stage2Label fallback_stage2 = Stage2Label::BenignBehavior;
  int workers = 1;
  std::string frame_base_url = "http://127.0.0.1:8080";
  // Few-shot exemplars per class: Stage 1 has two classes, Stage 2 four.
  int stage1_shots_per_class = 2;
  int stage2_shots_per_class = 1;

  void validate() const;  // throws InvalidArgument / InvalidFrameCount
};

nlohmann::json to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const nlohmann::json& j);

// A few-shot exemplar drawn from a labeled segment.
struct ExemplarChoice {
  IngestedSegment segment;
  Label gold;
  std::string reason;
};

// Deterministic pick of `per_class` labeled segments per stage class, at most
// one per clip, preferring distinct subcategories. Throws MissingExemplars.
std::vector<ExemplarChoice> select_exemplars(std::span<const IngestedSegment> pool, Stage stage,
                                             int per_class);

struct StageResult {
  Verdict verdict;
  int model_calls = 0;
  double latency = 0.0;  // summed gateway latency, seconds
};

struct SegmentResult {
  IngestedSegment segment;
  std::optional<Verdict> stage1;
  std::optional<Verdict> stage2;
  int model_calls = 0;
  double latency = 0.0;
};

struct ClassifyOptions {
  std::string run_id;
  PromptVariant variant = PromptVariant::Baseline;
  int n_frames = kDefaultFramesPerSegment;
  Stage1Label fallback_stage1 = Stage1Label::Benign;
  Stage2Label fallback_stage2 = Stage2Label::BenignBehavior;
  std::string frame_base_url;
  std::vector<ExemplarChoice> stage1_exemplars;  // FewShot only
  std::vector<ExemplarChoice> stage2_exemplars;
};

// Classifies single segments. Thread-safe; the gateway applies its own limits.
class SegmentClassifier {
 public:
  SegmentClassifier(Gateway& gateway, const FrameStore& store, ClassifyOptions options);

  StageResult classify(const IngestedSegment& segment, Stage stage);
  SegmentResult classify(const IngestedSegment& segment, StageMode mode);

 private:
  struct StagePlan {
    PromptBundle bundle;
    std::vector<std::vector<std::string>> exemplar_urls;
    ResponseSchema schema;
  };

  Gateway& gateway_;
  const FrameStore& store_;
  ClassifyOptions options_;
  StagePlan plans_[2];
};

struct ParseCounts {
  std::size_t clean = 0;
  std::size_t salvaged = 0;
  std::size_t failed = 0;
};

struct RunResult {
  std::string run_id;
  RunConfig config;
  std::vector<SegmentResult> segments;  // ordered by (clip_id, index)
  std::vector<std::string> exemplar_clips;  // withheld from classification
  ParseCounts stage1_counts;
  ParseCounts stage2_counts;
  std::size_t model_calls = 0;        // calls made by this invocation
  double mean_segment_latency = 0.0;  // over segments that reached the model
  double max_segment_latency = 0.0;
  double wall_seconds = 0.0;
};

using BackendFactory = std::function<std::unique_ptr<Backend>(const BackendConfig&, Clock&)>;

// Owns runs/<run-id>/ directories:
//   run.json        config, exemplars and the segment list
//   progress.jsonl  one durable line per finished segment (resume journal)
//   verdicts.jsonl  final verdicts ordered by (clip_id, index)
//   summary.json    counts and latency statistics
//   wire.log        every gateway attempt
class Classifier {
 public:
  explicit Classifier(std::filesystem::path runs_root, const FrameStore& store,
                      Clock& clock = default_clock());

  // Replaces make_backend; used to inject instrumented backends.
  void set_backend_factory(BackendFactory factory);

  // Throws RunExists, and BackendError when the backend fails (the journal
  // keeps every finished segment so the run can be resumed).
  RunResult run(std::span<const IngestedSegment> segments, const RunConfig& cfg);

  // Throws UnknownRun.
  RunResult resume(const std::string& run_id);

  std::filesystem::path run_dir(const std::string& run_id) const;

 private:
  RunResult execute(const std::filesystem::path& dir, const RunConfig& cfg,
                    const std::vector<IngestedSegment>& todo_pool,
                    const std::vector<ExemplarChoice>& ex1, const std::vector<ExemplarChoice>& ex2,
                    const std::vector<std::string>& exemplar_clips);

  std::filesystem::path runs_root_;
  const FrameStore& store_;
  Clock& clock_;
  BackendFactory factory_;
};

// verdicts.jsonl line for one segment.
nlohmann::json to_json(const SegmentResult& r);
nlohmann::json summary_json(const RunResult& result);

// Reads verdicts.jsonl of a finished run.
std::vector<SegmentResult> load_verdicts(const std::filesystem::path& run_dir);
// Segments recorded in run.json, including their ground truth.
std::vector<IngestedSegment> load_run_segments(const std::filesystem::path& run_dir);
RunConfig load_run_config(const std::filesystem::path& run_dir);

}  // namespace vrmod
