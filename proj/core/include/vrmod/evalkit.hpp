#pragma once

// Confusion matrices, macro-averaged metrics and fixed-width result tables.

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vrmod/media.hpp"
#include "vrmod/pipeline.hpp"
#include "vrmod/prompts.hpp"
#include "vrmod/taxonomy.hpp"

namespace vrmod {

// Rows are truth, columns are prediction.
class ConfusionMatrix {
 public:
  // Throws InvalidArgument on an empty or duplicated label set.
  explicit ConfusionMatrix(std::vector<std::string> label_set);

  const std::vector<std::string>& labels() const noexcept { return labels_; }
  std::size_t size() const noexcept { return labels_.size(); }

  void add(std::string_view truth, std::string_view pred);  // throws UnknownLabel
  std::size_t count(std::size_t truth, std::size_t pred) const { return counts_.at(truth * size() + pred); }
  std::size_t total() const noexcept { return total_; }
  std::size_t trace() const noexcept;
  std::optional<std::size_t> index_of(std::string_view label) const noexcept;

 private:
  std::vector<std::string> labels_;
  std::vector<std::size_t> counts_;
  std::size_t total_ = 0;
};

// Throws LengthMismatch (including two empty lists) and UnknownLabel.
ConfusionMatrix confusion(std::span<const std::string> truths, std::span<const std::string> preds,
                          std::vector<std::string> label_set);

// Canonical wire labels of a stage, in taxonomy order.
std::vector<std::string> stage_labels(Stage stage);

struct ClassMetrics {
  std::string label;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;  // truth count
};

struct EvalReport {
  Stage stage = Stage::One;
  PromptVariant variant = PromptVariant::Baseline;
  std::string backend;  // table group, e.g. "gpt-4o-2024-08-06"
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  std::vector<ClassMetrics> per_class;
  std::size_t total = 0;
};

// Zero denominators give 0; classes without truth support are left out of
// the macro averages. Throws EmptyMatrix.
EvalReport macro_metrics(const ConfusionMatrix& cm);

// Rows grouped by backend (first-appearance order), then variant; values
// printed to four decimals separated by single spaces.
std::string render_table(std::span<const EvalReport> reports);

nlohmann::json to_json(const EvalReport& report);

// Scores one stage of a finished run. Truth comes from `truth_by_clip` when
// given, else from the segments themselves; unlabeled segments are skipped.
struct RunEvaluation {
  EvalReport report;
  ConfusionMatrix matrix;
  std::size_t skipped_unlabeled = 0;
};

RunEvaluation evaluate_run(std::span<const SegmentResult> results, Stage stage, PromptVariant variant,
                           const std::string& backend,
                           const std::map<std::string, ClipTruth>* truth_by_clip = nullptr);

nlohmann::json to_json(const ConfusionMatrix& cm);

}  // namespace vrmod
