#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "vrmod/error.hpp"
#include "vrmod/prompts.hpp"

namespace vrmod {
namespace {

std::string golden(Stage stage, PromptVariant variant, int n) {
  const std::string path = std::string(VRMOD_PROMPTS_DIR) + "/" + std::string(wire(stage)) + "/" +
                           std::string(wire(variant)) + ".txt";
  std::ifstream in(path, std::ios::binary);
  EXPECT_TRUE(in.good()) << path;
  std::stringstream ss;
  ss << in.rdbuf();
  std::string text = ss.str();
  for (auto pos = text.find("{N}"); pos != std::string::npos; pos = text.find("{N}", pos)) {
    text.replace(pos, 3, std::to_string(n));
  }
  return text;
}

Exemplar exemplar(Label gold, const std::string& tag, int frames = 6) {
  Exemplar e{FrameSet{}, gold, "example " + tag};
  e.frames.segment_id = "ex-" + tag;
  for (int i = 0; i < frames; ++i) e.frames.frames.push_back({i * 1.0, tag + std::to_string(i), ""});
  return e;
}

std::vector<Exemplar> exemplars_for(Stage stage) {
  if (stage == Stage::One) {
    return {exemplar(Stage1Label::Benign, "b1"), exemplar(Stage1Label::Benign, "b2"),
            exemplar(Stage1Label::Anomaly, "a1"), exemplar(Stage1Label::Anomaly, "a2")};
  }
  std::vector<Exemplar> out;
  for (auto l : kStage2Labels) out.push_back(exemplar(l, std::string(wire(l))));
  return out;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no vrmod::Error thrown";
  return ErrorCode::InvalidArgument;
}

TEST(Prompts, MatchGoldenFiles) {
  for (auto stage : {Stage::One, Stage::Two}) {
    for (auto variant : kPromptVariants) {
      for (int n : {6, 8}) {
        const auto ex = variant == PromptVariant::FewShot ? exemplars_for(stage) : std::vector<Exemplar>{};
        const auto bundle = build_prompt(stage, variant, n, ex);
        EXPECT_EQ(bundle.user_text, golden(stage, variant, n))
            << wire(stage) << "/" << wire(variant) << " n=" << n;
        EXPECT_EQ(bundle.system_text, "You are a strict VR harassment video classifier");
        EXPECT_EQ(bundle.frame_slots, n);
      }
    }
  }
}

TEST(Prompts, Stage1BaselineExample) {
  const auto text = build_prompt(Stage::One, PromptVariant::Baseline, 6).user_text;
  EXPECT_EQ(text.rfind("You are given 6 sequential frames", 0), 0u);
  EXPECT_NE(text.find("If you are uncertain, choose Benign."), std::string::npos);
  EXPECT_NE(text.find("Return ONLY a strict JSON object"), std::string::npos);
}

TEST(Prompts, Stage1ContextCarriesMultiCueRule) {
  const auto text = build_prompt(Stage::One, PromptVariant::Context, 6).user_text;
  EXPECT_NE(text.find("If multiple weak cues occur together (e.g., following + blocking), classify as Anomaly."),
            std::string::npos);
}

TEST(Prompts, Stage2CotHasSixSteps) {
  const auto text = build_prompt(Stage::Two, PromptVariant::CoT, 6).user_text;
  const auto at = text.find("Reasoning (internal, do NOT output):");
  ASSERT_NE(at, std::string::npos);
  for (int i = 1; i <= 6; ++i) {
    EXPECT_NE(text.find("\n" + std::to_string(i) + ") ", at), std::string::npos) << i;
  }
  const auto step6 = text.find("\n6) ", at);
  const auto eol = text.find('\n', step6 + 1);
  EXPECT_EQ(text.substr(eol - std::string_view("otherwise Benign.").size(), 17), "otherwise Benign.");
}

TEST(Prompts, VariantsLayerMonotonically) {
  for (auto stage : {Stage::One, Stage::Two}) {
    const auto base = build_prompt(stage, PromptVariant::Baseline, 6).user_text;
    const auto ctx = build_prompt(stage, PromptVariant::Context, 6).user_text;
    const auto cot = build_prompt(stage, PromptVariant::CoT, 6).user_text;
    const auto out = base.substr(base.rfind("Return ONLY"));
    const auto head = base.substr(0, base.rfind("Return ONLY"));
    for (const auto* t : {&ctx, &cot}) {
      EXPECT_EQ(t->rfind(head, 0), 0u);
      EXPECT_EQ(t->substr(t->size() - out.size()), out);
    }
    const auto ctx_head = ctx.substr(0, ctx.rfind("Return ONLY"));
    EXPECT_EQ(cot.rfind(ctx_head, 0), 0u);
  }
}

TEST(Prompts, PureFunctionOfArguments) {
  const auto a = build_prompt(Stage::Two, PromptVariant::CoT, 6);
  const auto b = build_prompt(Stage::Two, PromptVariant::CoT, 6);
  EXPECT_EQ(a.user_text, b.user_text);
}

TEST(Prompts, ArgumentErrors) {
  const auto ex = exemplars_for(Stage::One);
  EXPECT_EQ(code_of([] { build_prompt(Stage::One, PromptVariant::Baseline, 1); }), ErrorCode::InvalidFrameCount);
  EXPECT_EQ(code_of([] { build_prompt(Stage::One, PromptVariant::FewShot, 6); }), ErrorCode::MissingExemplars);
  EXPECT_EQ(code_of([&] { build_prompt(Stage::One, PromptVariant::CoT, 6, ex); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([&] { build_prompt(Stage::Two, PromptVariant::FewShot, 6, ex); }), ErrorCode::InvalidArgument);
}

TEST(Schema, AllowedLabelsPerStage) {
  const auto s1 = expected_schema(Stage::One);
  EXPECT_EQ(s1.allowed_labels, (std::vector<std::string>{"Benign", "Anomaly"}));
  const auto s2 = expected_schema(Stage::Two);
  EXPECT_EQ(s2.allowed_labels.size(), 4u);
  EXPECT_TRUE(s2.allows("Personal Space Violation"));
  EXPECT_FALSE(s2.allows("Anomaly"));
  for (const auto* s : {&s1, &s2}) EXPECT_EQ(s->required_fields, (std::vector<std::string>{"label", "reason"}));
}

TEST(Answer, FormatEscapesReason) {
  EXPECT_EQ(format_answer(Stage1Label::Anomaly, "a \"quoted\" hit"),
            R"({"label": "Anomaly", "reason": "a \"quoted\" hit"})");
}

TEST(Messages, QueryFramesFollowUserText) {
  const auto bundle = build_prompt(Stage::One, PromptVariant::Baseline, 3);
  const std::vector<std::string> urls{"http://h/frames/a.jpg", "http://h/frames/b.jpg", "http://h/frames/c.jpg"};
  const auto msgs = render_messages(bundle, urls);
  ASSERT_EQ(msgs.size(), 2u);
  EXPECT_EQ(msgs[0]["role"], "system");
  EXPECT_EQ(msgs[0]["content"], bundle.system_text);
  const auto& parts = msgs[1]["content"];
  ASSERT_EQ(parts.size(), 7u);
  EXPECT_EQ(parts[0]["text"], bundle.user_text);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(parts[1 + 2 * i]["text"], "Frame " + std::to_string(i + 1) + "/3");
    EXPECT_EQ(parts[2 + 2 * i]["image_url"]["url"], urls[i]);
  }
  EXPECT_THROW(render_messages(bundle, std::vector<std::string>{"x"}), Error);
}

TEST(Messages, FewShotExemplarsPrecedeQuery) {
  const auto ex = exemplars_for(Stage::Two);
  const auto bundle = build_prompt(Stage::Two, PromptVariant::FewShot, 6, ex);
  EXPECT_EQ(bundle.total_frames(), 30u);
  std::vector<std::string> query(6, "http://h/q.jpg");
  std::vector<std::vector<std::string>> ex_urls(4, std::vector<std::string>(6, "http://h/e.jpg"));
  const auto msgs = render_messages(bundle, query, ex_urls);
  // system, instructions, 4 x (example, answer), query
  ASSERT_EQ(msgs.size(), 11u);
  for (std::size_t e = 0; e < 4; ++e) {
    EXPECT_EQ(msgs[2 + 2 * e]["role"], "user");
    EXPECT_EQ(msgs[3 + 2 * e]["role"], "assistant");
    EXPECT_EQ(msgs[3 + 2 * e]["content"], format_answer(ex[e].gold, ex[e].reason));
  }
  EXPECT_EQ(msgs.back()["content"][0]["text"], "Query video");
  EXPECT_EQ(msgs.back()["content"].size(), 13u);
}

TEST(Variants, WireAndDisplayNames) {
  EXPECT_EQ(parse_variant("cot"), PromptVariant::CoT);
  EXPECT_EQ(parse_variant("CoT"), std::nullopt);
  EXPECT_EQ(display_name(PromptVariant::FewShot), "+ Few-shot");
  EXPECT_EQ(display_name(PromptVariant::Baseline), "Baseline Prompt");
}

}  // namespace
}  // namespace vrmod
