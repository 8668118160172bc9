#include <algorithm>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "vrmod/error.hpp"
#include "vrmod/evalkit.hpp"

namespace vrmod {
namespace {

using Labels = std::vector<std::string>;

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no vrmod::Error thrown";
  return ErrorCode::InvalidArgument;
}

TEST(Confusion, TalliesPairs) {
  const Labels t{"A", "A", "B", "B"}, p{"A", "B", "B", "B"};
  const auto cm = confusion(t, p, {"A", "B"});
  EXPECT_EQ(cm.count(0, 0), 1u);
  EXPECT_EQ(cm.count(0, 1), 1u);
  EXPECT_EQ(cm.count(1, 0), 0u);
  EXPECT_EQ(cm.count(1, 1), 2u);
  EXPECT_EQ(cm.total(), 4u);
  EXPECT_EQ(cm.trace(), 3u);
}

TEST(Confusion, IdenticalListsAreDiagonal) {
  const Labels t{"A", "B", "C", "C", "A"};
  const auto cm = confusion(t, t, {"A", "B", "C"});
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      if (i != j) EXPECT_EQ(cm.count(i, j), 0u);
    }
  }
  EXPECT_EQ(cm.trace(), 5u);
}

TEST(Confusion, Errors) {
  const Labels empty;
  EXPECT_EQ(code_of([&] { confusion(empty, empty, {"A"}); }), ErrorCode::LengthMismatch);
  EXPECT_EQ(code_of([] { confusion(Labels{"A"}, Labels{"A", "B"}, {"A", "B"}); }), ErrorCode::LengthMismatch);
  EXPECT_EQ(code_of([] { confusion(Labels{"A"}, Labels{"Z"}, {"A", "B"}); }), ErrorCode::UnknownLabel);
  EXPECT_EQ(code_of([] { ConfusionMatrix({"A", "A"}); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { macro_metrics(ConfusionMatrix({"A", "B"})); }), ErrorCode::EmptyMatrix);
}

TEST(Metrics, HandDerivedExample) {
  const auto r = macro_metrics(confusion(Labels{"A", "A", "B", "B"}, Labels{"A", "B", "B", "B"}, {"A", "B"}));
  EXPECT_DOUBLE_EQ(r.accuracy, 0.75);
  EXPECT_NEAR(r.macro_precision, (1.0 + 2.0 / 3.0) / 2, 1e-12);
  EXPECT_NEAR(r.macro_recall, 0.75, 1e-12);
  EXPECT_NEAR(r.macro_f1, (2.0 / 3.0 + 0.8) / 2, 1e-12);
  ASSERT_EQ(r.per_class.size(), 2u);
  EXPECT_EQ(r.per_class[0].support, 2u);
}

TEST(Metrics, PerfectFourClass) {
  const Labels t{"a", "b", "c", "d", "a"};
  const auto r = macro_metrics(confusion(t, t, {"a", "b", "c", "d"}));
  EXPECT_DOUBLE_EQ(r.accuracy, 1.0);
  EXPECT_DOUBLE_EQ(r.macro_precision, 1.0);
  EXPECT_DOUBLE_EQ(r.macro_recall, 1.0);
  EXPECT_DOUBLE_EQ(r.macro_f1, 1.0);
}

TEST(Metrics, SingleClassPredictions) {
  const auto r = macro_metrics(confusion(Labels{"A", "A", "B", "B"}, Labels{"A", "A", "A", "A"}, {"A", "B"}));
  EXPECT_DOUBLE_EQ(r.accuracy, 0.5);
  EXPECT_NEAR(r.macro_f1, (2.0 / 3.0) / 2, 1e-12);
}

TEST(Metrics, ZeroSupportClassExcluded) {
  // C never occurs in truth but is predicted once: it adds a false positive to
  // nobody's precision average.
  const auto r = macro_metrics(confusion(Labels{"A", "B"}, Labels{"A", "C"}, {"A", "B", "C"}));
  EXPECT_DOUBLE_EQ(r.macro_recall, 0.5);
  EXPECT_DOUBLE_EQ(r.macro_precision, 0.5);
}

TEST(Metrics, MatchesBruteForceAndIsPermutationInvariant) {
  std::mt19937_64 rng(99);
  for (int it = 0; it < 300; ++it) {
    Labels classes = it % 2 ? Labels{"Benign", "Anomaly"}
                            : Labels{"Benign", "Aggressive Behavior", "Personal Space Violation",
                                     "Disruptive Behavior"};
    const std::size_t n = 1 + rng() % 60;
    Labels t(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = classes[rng() % classes.size()];
      p[i] = classes[rng() % classes.size()];
    }
    const auto want = oracle::brute_force_macro(t, p, classes);
    const auto got = macro_metrics(confusion(t, p, classes));
    EXPECT_NEAR(got.accuracy, want.accuracy, 1e-9);
    EXPECT_NEAR(got.macro_precision, want.precision, 1e-9);
    EXPECT_NEAR(got.macro_recall, want.recall, 1e-9);
    EXPECT_NEAR(got.macro_f1, want.f1, 1e-9);

    Labels shuffled = classes;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto perm = macro_metrics(confusion(t, p, shuffled));
    EXPECT_NEAR(perm.macro_f1, got.macro_f1, 1e-12);
    EXPECT_NEAR(perm.macro_precision, got.macro_precision, 1e-12);
  }
}

EvalReport seeded(PromptVariant v, const std::string& backend, double a, double p, double r, double f) {
  EvalReport rep;
  rep.variant = v;
  rep.backend = backend;
  rep.accuracy = a;
  rep.macro_precision = p;
  rep.macro_recall = r;
  rep.macro_f1 = f;
  return rep;
}

std::string row(const std::string& name, const std::string& values) {
  std::string s = name;
  s.resize(28, ' ');
  return s + values;
}

TEST(Table, RendersFourDecimalRows) {
  const auto derived = macro_metrics(confusion(Labels{"A", "A", "B", "B"}, Labels{"A", "B", "B", "B"}, {"A", "B"}));
  auto rep = derived;
  rep.backend = "toy";
  const std::vector<EvalReport> one{rep};
  const auto text = render_table(one);
  EXPECT_NE(text.find(row("Baseline Prompt", "0.7500 0.8333 0.7500 0.7333") + "\n"), std::string::npos) << text;
}

TEST(Table, ReferenceRowsAndGrouping) {
  const std::vector<EvalReport> reports{
      seeded(PromptVariant::CoT, "gpt-4o (fine-tuned)", 0.8809, 0.8407, 0.8260, 0.8329),
      seeded(PromptVariant::Baseline, "gpt-4o", 0.6677, 0.6888, 0.7576, 0.6505),
      seeded(PromptVariant::FewShot, "gpt-4o (fine-tuned)", 0.6885, 0.6035, 0.5716, 0.5678),
  };
  const auto text = render_table(reports);
  const std::string expected = row("Model / Setting", "Accuracy Precision Recall F1-Score") + "\n" +
                               "gpt-4o (fine-tuned)\n" +
                               row("  + CoT", "0.8809 0.8407 0.8260 0.8329") + "\n" +
                               row("  + Few-shot", "0.6885 0.6035 0.5716 0.5678") + "\n" + "gpt-4o\n" +
                               row("Baseline Prompt", "0.6677 0.6888 0.7576 0.6505") + "\n";
  EXPECT_EQ(text, expected);
}

TEST(Table, EmptyIsHeaderOnly) {
  EXPECT_EQ(render_table({}), row("Model / Setting", "Accuracy Precision Recall F1-Score") + "\n");
}

SegmentResult result_for(const std::string& clip, int index, Stage2Label truth, Stage2Label pred) {
  SegmentResult r;
  r.segment.segment.clip_id = clip;
  r.segment.segment.index = index;
  r.segment.segment.segment_id = make_segment_id(clip, index);
  r.segment.segment.truth = ClipTruth{truth, Subcategory::BenignOther};
  Verdict v1, v2;
  v1.label = project(pred, Stage::One);
  v2.label = Label(pred);
  r.stage1 = v1;
  r.stage2 = v2;
  return r;
}

TEST(EvaluateRun, UsesSegmentOrOverrideTruth) {
  std::vector<SegmentResult> results{
      result_for("a", 0, Stage2Label::AggressiveBehavior, Stage2Label::AggressiveBehavior),
      result_for("b", 0, Stage2Label::BenignBehavior, Stage2Label::DisruptiveBehavior),
  };
  results.push_back(result_for("c", 0, Stage2Label::BenignBehavior, Stage2Label::BenignBehavior));
  results.back().segment.segment.truth.reset();

  const auto s1 = evaluate_run(results, Stage::One, PromptVariant::CoT, "mock-oracle");
  EXPECT_EQ(s1.skipped_unlabeled, 1u);
  EXPECT_EQ(s1.matrix.total(), 2u);
  EXPECT_DOUBLE_EQ(s1.report.accuracy, 0.5);

  std::map<std::string, ClipTruth> truth{{"b", {Stage2Label::DisruptiveBehavior, Subcategory::Blocking}},
                                         {"a", {Stage2Label::AggressiveBehavior, Subcategory::Punching}},
                                         {"c", {Stage2Label::BenignBehavior, Subcategory::BenignOther}}};
  const auto s2 = evaluate_run(results, Stage::Two, PromptVariant::CoT, "mock-oracle", &truth);
  EXPECT_EQ(s2.skipped_unlabeled, 0u);
  EXPECT_DOUBLE_EQ(s2.report.accuracy, 1.0);
  EXPECT_EQ(s2.matrix.labels(), stage_labels(Stage::Two));
}

}  // namespace
}  // namespace vrmod
