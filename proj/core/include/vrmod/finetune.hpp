#pragma once

// Supervised fine-tuning export: label-preserving stratified sampling and
// chat-format JSON-lines records whose final turn is the gold answer.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vrmod/media.hpp"
#include "vrmod/prompts.hpp"
#include "vrmod/taxonomy.hpp"

namespace vrmod {

inline constexpr int kRecommendedEpochs = 3;

// Largest-remainder apportionment of k over classes of the given sizes, using
// exact integer arithmetic. Remainder ties go to the lower class index.
// Throws InvalidArgument when k exceeds the population.
std::vector<std::size_t> apportion(std::span<const std::size_t> class_sizes, std::size_t k);

// Picks quotas[c] members of every class uniformly at random. `class_of[i]`
// is item i's class. Returns selected item indices in ascending order.
// Throws InsufficientClassMembers.
std::vector<std::size_t> sample_quotas(std::span<const std::size_t> class_of,
                                       std::span<const std::size_t> quotas, std::uint64_t seed);

struct StratifiedSample {
  std::vector<std::size_t> indices;  // ascending positions in the population
  std::map<Stage2Label, std::size_t> quotas;
};

// Stage 2 labels of the population; classes follow taxonomy order.
StratifiedSample stratified_sample(std::span<const Stage2Label> labels, std::size_t k, std::uint64_t seed);

// Segment-level convenience used by the exporter.
std::vector<Segment> stratified_sample(std::span<const std::pair<Segment, Stage2Label>> population,
                                       std::size_t k, std::uint64_t seed);

// Segments of the clips picked by a clip-level stratified draw.
std::vector<IngestedSegment> sample_by_clip(std::span<const IngestedSegment> segments, std::size_t k,
                                            std::uint64_t seed);
std::vector<IngestedSegment> sample_by_segment(std::span<const IngestedSegment> segments, std::size_t k,
                                               std::uint64_t seed);

struct SftItem {
  IngestedSegment segment;
  Stage2Label gold = Stage2Label::BenignBehavior;
  std::string reason;
};

// Gold labels and catalog reason phrases from segment ground truth.
// Throws MissingTruth.
std::vector<SftItem> items_from_truth(std::span<const IngestedSegment> segments);

struct ExportOptions {
  std::vector<Stage> stages{Stage::One, Stage::Two};
  PromptVariant variant = PromptVariant::Baseline;
  int n_frames = kDefaultFramesPerSegment;
  std::string frame_base_url;
  std::vector<Exemplar> stage1_exemplars;  // FewShot only
  std::vector<Exemplar> stage2_exemplars;
};

struct ExportSummary {
  std::size_t records = 0;
  std::size_t approx_tokens = 0;  // characters / 4
  std::map<std::string, std::map<std::string, std::size_t>> labels;  // stage -> label -> count
  int recommended_epochs = kRecommendedEpochs;
};

nlohmann::json sft_record(const SftItem& item, Stage stage, const PromptBundle& bundle,
                          std::span<const std::string> frame_urls,
                          std::span<const std::vector<std::string>> exemplar_urls);

// Writes one JSON object per line. Throws MissingFrames when a segment's
// frames are absent from the store or the wrong count.
ExportSummary export_sft(std::span<const SftItem> items, const FrameStore& store,
                         const ExportOptions& options, const std::filesystem::path& out_path);

nlohmann::json to_json(const ExportSummary& summary);

}  // namespace vrmod
