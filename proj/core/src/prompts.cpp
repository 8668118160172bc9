#include "vrmod/prompts.hpp"

#include <algorithm>

#include "vrmod/error.hpp"

namespace vrmod {

using nlohmann::json;

std::string_view wire(PromptVariant v) noexcept {
  switch (v) {
    case PromptVariant::Baseline: return "baseline";
    case PromptVariant::Context: return "context";
    case PromptVariant::CoT: return "cot";
    case PromptVariant::FewShot: return "fewshot";
  }
  return "";
}

std::string_view display_name(PromptVariant v) noexcept {
  switch (v) {
    case PromptVariant::Baseline: return "Baseline Prompt";
    case PromptVariant::Context: return "+ Context";
    case PromptVariant::CoT: return "+ CoT";
    case PromptVariant::FewShot: return "+ Few-shot";
  }
  return "";
}

std::optional<PromptVariant> parse_variant(std::string_view text) noexcept {
  for (auto v : kPromptVariants) {
    if (wire(v) == text) return v;
  }
  if (text == "few-shot") return PromptVariant::FewShot;
  return std::nullopt;
}

namespace {

constexpr std::string_view kIntro =
    "You are given {N} sequential frames sampled from ONE short VR video (chronological order).\n"
    "Judge ONLY avatars' actions toward other avatars (ignore background/camera).";

constexpr std::string_view kStage1Definitions =
    "Benign  = normal play with no hostile intent.\n"
    "Anomaly = clear hostile actions such as punching, slapping, or very close following.\n"
    "If you are uncertain, choose Benign.";

constexpr std::string_view kStage2Definitions =
    "Benign                   = normal play with no hostile intent.\n"
    "Aggressive Behavior      = punching, slapping, striking with objects.\n"
    "Personal Space Violation = standing uncomfortably close, persistent following, looming.\n"
    "Disruptive Behavior      = blocking, cornering, targeted interference.\n"
    "If you are uncertain, choose Benign.";

constexpr std::string_view kStage1Context =
    "Anomaly =\n"
    "1) Aggressive behavior: punching, slapping, striking with objects.\n"
    "2) Personal space violation: standing uncomfortably close, persistent following, looming.\n"
    "3) Disruptive behavior: blocking, cornering, targeted interference.\n"
    "4) If multiple weak cues occur together (e.g., following + blocking), classify as Anomaly.";

constexpr std::string_view kStage2Context =
    "Hostile classes =\n"
    "1) Aggressive Behavior: attacking another avatar with a fist, an open hand, or an object.\n"
    "2) Personal Space Violation: bringing one's avatar face close to another avatar (looming), "
    "or tracking a user repeatedly over time (following/stalking).\n"
    "3) Disruptive Behavior: obstructing the movement of another avatar (blocking, cornering, "
    "targeted interference).\n"
    "4) Benign: all other behaviors (e.g., talking, rock-paper-scissors, walking, normal game play).\n"
    "5) Assign a hostile class only when multiple cues occur together (e.g., following + "
    "blocking); otherwise choose Benign.";

constexpr std::string_view kReasoningSteps =
    "Reasoning (internal, do NOT output):\n"
    "1) Are multiple avatars present?\n"
    "2) Is there interaction between them?\n"
    "3) Any striking or object-based attack?\n"
    "4) Any invasive closeness, following, or looming?\n"
    "5) Any blocking, cornering, or targeted interference?\n";

constexpr std::string_view kStage1FinalStep = "6) If cues exist, choose Anomaly; otherwise Benign.";
constexpr std::string_view kStage2FinalStep =
    "6) If cues exist, assign the most appropriate hostile class; otherwise Benign.";

constexpr std::string_view kOutputInstruction =
    "Return ONLY a strict JSON object with EXACTLY these fields (no extra text):\n";

std::string output_block(Stage stage) {
  std::string alternation;
  const auto schema = expected_schema(stage);
  for (std::size_t i = 0; i < schema.allowed_labels.size(); ++i) {
    if (i) alternation += '|';
    alternation += schema.allowed_labels[i];
  }
  return std::string(kOutputInstruction) + "{\"label\": \"<" + alternation +
         ">\", \"reason\": \"<one short phrase about avatars/actions/intent>\"}";
}

std::string substitute_n(std::string_view text, int n) {
  std::string out(text);
  const std::string value = std::to_string(n);
  for (std::size_t pos = out.find("{N}"); pos != std::string::npos; pos = out.find("{N}", pos)) {
    out.replace(pos, 3, value);
    pos += value.size();
  }
  return out;
}

}  // namespace

std::size_t PromptBundle::total_frames() const noexcept {
  std::size_t n = static_cast<std::size_t>(frame_slots);
  for (const auto& e : exemplars) n += e.frames.frames.size();
  return n;
}

PromptBundle build_prompt(Stage stage, PromptVariant variant, int n_frames,
                          std::span<const Exemplar> exemplars) {
  if (n_frames < 2) throw Error(ErrorCode::InvalidFrameCount, "a prompt needs at least two frames");
  if (variant == PromptVariant::FewShot && exemplars.empty()) {
    throw Error(ErrorCode::MissingExemplars, "few-shot prompts require exemplars");
  }
  if (variant != PromptVariant::FewShot && !exemplars.empty()) {
    throw Error(ErrorCode::InvalidArgument, "exemplars are only valid for the few-shot variant");
  }
  for (const auto& e : exemplars) {
    if (e.gold.stage() != stage) {
      throw Error(ErrorCode::InvalidArgument, "exemplar gold label belongs to the other stage");
    }
  }

  std::vector<std::string> sections;
  sections.push_back(substitute_n(kIntro, n_frames));
  sections.emplace_back(stage == Stage::One ? kStage1Definitions : kStage2Definitions);
  if (variant == PromptVariant::Context || variant == PromptVariant::CoT) {
    sections.emplace_back(stage == Stage::One ? kStage1Context : kStage2Context);
  }
  if (variant == PromptVariant::CoT) {
    sections.push_back(std::string(kReasoningSteps) +
                       std::string(stage == Stage::One ? kStage1FinalStep : kStage2FinalStep));
  }
  if (variant == PromptVariant::FewShot) {
    sections.push_back("Before the query frames you will see " + std::to_string(exemplars.size()) +
                       " labeled example videos, each followed by its correct JSON answer.\n"
                       "Classify ONLY the query video.");
  }
  sections.push_back(output_block(stage));

  PromptBundle bundle;
  bundle.stage = stage;
  bundle.variant = variant;
  bundle.system_text = std::string(kSystemPrompt);
  for (std::size_t i = 0; i < sections.size(); ++i) {
    if (i) bundle.user_text += "\n\n";
    bundle.user_text += sections[i];
  }
  bundle.frame_slots = n_frames;
  bundle.exemplars.assign(exemplars.begin(), exemplars.end());
  return bundle;
}

bool ResponseSchema::allows(std::string_view label) const noexcept {
  return std::find(allowed_labels.begin(), allowed_labels.end(), label) != allowed_labels.end();
}

ResponseSchema expected_schema(Stage stage) {
  ResponseSchema schema;
  schema.stage = stage;
  if (stage == Stage::One) {
    for (auto l : kStage1Labels) schema.allowed_labels.emplace_back(wire(l));
  } else {
    for (auto l : kStage2Labels) schema.allowed_labels.emplace_back(wire(l));
  }
  schema.required_fields = {"label", "reason"};
  return schema;
}

std::string format_answer(const Label& label, std::string_view reason) {
  return "{\"label\": " + json(std::string(label.wire())).dump() +
         ", \"reason\": " + json(std::string(reason)).dump() + "}";
}

std::string format_reminder(Stage stage) {
  return "Your previous reply did not follow the required format.\n" + output_block(stage);
}

json render_messages(const PromptBundle& bundle, std::span<const std::string> query_urls,
                     std::span<const std::vector<std::string>> exemplar_urls) {
  if (query_urls.size() != static_cast<std::size_t>(bundle.frame_slots)) {
    throw Error(ErrorCode::InvalidArgument, "query frame count does not match the prompt");
  }
  if (exemplar_urls.size() != bundle.exemplars.size()) {
    throw Error(ErrorCode::InvalidArgument, "exemplar frame lists do not match the prompt");
  }
  auto frame_parts = [](json& content, std::span<const std::string> urls) {
    const std::size_t n = urls.size();
    for (std::size_t i = 0; i < n; ++i) {
      content.push_back(
          {{"type", "text"}, {"text", "Frame " + std::to_string(i + 1) + "/" + std::to_string(n)}});
      content.push_back({{"type", "image_url"}, {"image_url", {{"url", urls[i]}}}});
    }
  };

  json messages = json::array();
  messages.push_back({{"role", "system"}, {"content", bundle.system_text}});
  json first = json::array();
  first.push_back({{"type", "text"}, {"text", bundle.user_text}});
  if (bundle.exemplars.empty()) {
    frame_parts(first, query_urls);
    messages.push_back({{"role", "user"}, {"content", first}});
    return messages;
  }
  messages.push_back({{"role", "user"}, {"content", first}});
  const std::size_t k = bundle.exemplars.size();
  for (std::size_t e = 0; e < k; ++e) {
    json content = json::array();
    content.push_back({{"type", "text"},
                       {"text", "Example " + std::to_string(e + 1) + "/" + std::to_string(k)}});
    frame_parts(content, exemplar_urls[e]);
    messages.push_back({{"role", "user"}, {"content", content}});
    messages.push_back({{"role", "assistant"},
                        {"content", format_answer(bundle.exemplars[e].gold, bundle.exemplars[e].reason)}});
  }
  json query = json::array();
  query.push_back({{"type", "text"}, {"text", "Query video"}});
  frame_parts(query, query_urls);
  messages.push_back({{"role", "user"}, {"content", query}});
  return messages;
}

}  // namespace vrmod
