#include "vrmod/evalkit.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "vrmod/error.hpp"

namespace vrmod {

using nlohmann::json;

ConfusionMatrix::ConfusionMatrix(std::vector<std::string> label_set) : labels_(std::move(label_set)) {
  if (labels_.empty()) throw Error(ErrorCode::InvalidArgument, "label set is empty");
  std::set<std::string> seen(labels_.begin(), labels_.end());
  if (seen.size() != labels_.size()) throw Error(ErrorCode::InvalidArgument, "label set has duplicates");
  counts_.assign(labels_.size() * labels_.size(), 0);
}

std::optional<std::size_t> ConfusionMatrix::index_of(std::string_view label) const noexcept {
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] == label) return i;
  }
  return std::nullopt;
}

void ConfusionMatrix::add(std::string_view truth, std::string_view pred) {
  const auto t = index_of(truth);
  const auto p = index_of(pred);
  if (!t) throw Error(ErrorCode::UnknownLabel, "unknown truth label: " + std::string(truth));
  if (!p) throw Error(ErrorCode::UnknownLabel, "unknown predicted label: " + std::string(pred));
  ++counts_[*t * size() + *p];
  ++total_;
}

std::size_t ConfusionMatrix::trace() const noexcept {
  std::size_t t = 0;
  for (std::size_t i = 0; i < size(); ++i) t += counts_[i * size() + i];
  return t;
}

ConfusionMatrix confusion(std::span<const std::string> truths, std::span<const std::string> preds,
                          std::vector<std::string> label_set) {
  if (truths.size() != preds.size()) {
    throw Error(ErrorCode::LengthMismatch, "truth and prediction lists differ in length (" +
                                               std::to_string(truths.size()) + " vs " +
                                               std::to_string(preds.size()) + ")");
  }
  if (truths.empty()) throw Error(ErrorCode::LengthMismatch, "truth and prediction lists are empty");
  ConfusionMatrix cm(std::move(label_set));
  for (std::size_t i = 0; i < truths.size(); ++i) cm.add(truths[i], preds[i]);
  return cm;
}

std::vector<std::string> stage_labels(Stage stage) {
  std::vector<std::string> out;
  if (stage == Stage::One) {
    for (auto l : kStage1Labels) out.emplace_back(wire(l));
  } else {
    for (auto l : kStage2Labels) out.emplace_back(wire(l));
  }
  return out;
}

EvalReport macro_metrics(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw Error(ErrorCode::EmptyMatrix, "confusion matrix has no entries");
  const std::size_t n = cm.size();
  EvalReport r;
  r.total = cm.total();
  r.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(cm.total());
  std::size_t supported = 0;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t tp = cm.count(c, c), row = 0, col = 0;
    for (std::size_t k = 0; k < n; ++k) {
      row += cm.count(c, k);
      col += cm.count(k, c);
    }
    ClassMetrics m;
    m.label = cm.labels()[c];
    m.support = row;
    m.precision = col ? static_cast<double>(tp) / static_cast<double>(col) : 0.0;
    m.recall = row ? static_cast<double>(tp) / static_cast<double>(row) : 0.0;
    m.f1 = (m.precision + m.recall) > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    if (row > 0) {
      r.macro_precision += m.precision;
      r.macro_recall += m.recall;
      r.macro_f1 += m.f1;
      ++supported;
    }
    r.per_class.push_back(std::move(m));
  }
  r.macro_precision /= static_cast<double>(supported);
  r.macro_recall /= static_cast<double>(supported);
  r.macro_f1 /= static_cast<double>(supported);
  return r;
}

namespace {

constexpr int kSettingWidth = 28;

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

std::string render_table(std::span<const EvalReport> reports) {
  std::string out = pad("Model / Setting", kSettingWidth) + "Accuracy Precision Recall F1-Score\n";
  std::vector<std::string> groups;
  for (const auto& r : reports) {
    if (std::find(groups.begin(), groups.end(), r.backend) == groups.end()) groups.push_back(r.backend);
  }
  for (const auto& g : groups) {
    out += g + "\n";
    std::vector<const EvalReport*> rows;
    for (const auto& r : reports) {
      if (r.backend == g) rows.push_back(&r);
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [](const EvalReport* a, const EvalReport* b) { return a->variant < b->variant; });
    for (const auto* r : rows) {
      std::string name(display_name(r->variant));
      if (r->variant != PromptVariant::Baseline) name = "  " + name;
      out += pad(name, kSettingWidth) + fixed4(r->accuracy) + " " + fixed4(r->macro_precision) + " " +
             fixed4(r->macro_recall) + " " + fixed4(r->macro_f1) + "\n";
    }
  }
  return out;
}

json to_json(const EvalReport& report) {
  json per_class = json::array();
  for (const auto& m : report.per_class) {
    per_class.push_back({{"label", m.label},
                         {"precision", m.precision},
                         {"recall", m.recall},
                         {"f1", m.f1},
                         {"support", m.support}});
  }
  return {{"stage", wire(report.stage)},
          {"variant", wire(report.variant)},
          {"backend", report.backend},
          {"accuracy", report.accuracy},
          {"macro_precision", report.macro_precision},
          {"macro_recall", report.macro_recall},
          {"macro_f1", report.macro_f1},
          {"total", report.total},
          {"per_class", per_class}};
}

json to_json(const ConfusionMatrix& cm) {
  json rows = json::array();
  for (std::size_t t = 0; t < cm.size(); ++t) {
    json row = json::array();
    for (std::size_t p = 0; p < cm.size(); ++p) row.push_back(cm.count(t, p));
    rows.push_back(row);
  }
  return {{"labels", cm.labels()}, {"counts", rows}};
}

RunEvaluation evaluate_run(std::span<const SegmentResult> results, Stage stage, PromptVariant variant,
                           const std::string& backend, const std::map<std::string, ClipTruth>* truth_by_clip) {
  std::vector<std::string> truths, preds;
  std::size_t skipped = 0;
  for (const auto& r : results) {
    const auto& verdict = stage == Stage::One ? r.stage1 : r.stage2;
    if (!verdict || !verdict->label) continue;
    std::optional<ClipTruth> truth = r.segment.segment.truth;
    if (truth_by_clip) {
      auto it = truth_by_clip->find(r.segment.segment.clip_id);
      truth = it == truth_by_clip->end() ? std::nullopt : std::optional<ClipTruth>(it->second);
    }
    if (!truth) {
      ++skipped;
      continue;
    }
    truths.emplace_back(project(truth->label, stage).wire());
    preds.emplace_back(verdict->label->wire());
  }
  if (truths.empty()) throw Error(ErrorCode::EmptyMatrix, "no labeled " + std::string(wire(stage)) + " verdicts to score");
  ConfusionMatrix cm = confusion(truths, preds, stage_labels(stage));
  EvalReport report = macro_metrics(cm);
  report.stage = stage;
  report.variant = variant;
  report.backend = backend;
  return {std::move(report), std::move(cm), skipped};
}

}  // namespace vrmod
