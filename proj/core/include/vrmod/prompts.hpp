#pragma once

// Stage 1 / Stage 2 instruction prompts in four layered variants:
// Baseline, Baseline+Context, Baseline+Context+CoT, and Baseline+Few-shot.

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vrmod/media.hpp"
#include "vrmod/taxonomy.hpp"

namespace vrmod {

enum class PromptVariant { Baseline, Context, CoT, FewShot };

inline constexpr std::array<PromptVariant, 4> kPromptVariants{
    PromptVariant::Baseline, PromptVariant::Context, PromptVariant::CoT, PromptVariant::FewShot};

std::string_view wire(PromptVariant v) noexcept;          // baseline, context, cot, fewshot
std::string_view display_name(PromptVariant v) noexcept;  // "Baseline Prompt", "+ Context", ...
std::optional<PromptVariant> parse_variant(std::string_view text) noexcept;

inline constexpr std::string_view kSystemPrompt = "You are a strict VR harassment video classifier";

struct Exemplar {
  FrameSet frames;
  Label gold;
  std::string reason;
};

struct PromptBundle {
  Stage stage = Stage::One;
  PromptVariant variant = PromptVariant::Baseline;
  std::string system_text;
  std::string user_text;
  int frame_slots = 0;
  std::vector<Exemplar> exemplars;

  // Query frames plus every exemplar frame.
  std::size_t total_frames() const noexcept;
};

// Throws InvalidFrameCount (n < 2), MissingExemplars (FewShot without
// exemplars) and InvalidArgument (exemplars for other variants, or gold labels
// from the wrong stage).
PromptBundle build_prompt(Stage stage, PromptVariant variant, int n_frames,
                          std::span<const Exemplar> exemplars = {});

struct ResponseSchema {
  Stage stage = Stage::One;
  std::vector<std::string> allowed_labels;
  std::vector<std::string> required_fields;  // exactly: label, reason

  bool allows(std::string_view label) const noexcept;
};

ResponseSchema expected_schema(Stage stage);

// `{"label": "<label>", "reason": "<reason>"}` with JSON string escaping.
std::string format_answer(const Label& label, std::string_view reason);

// Appended to the user text when a reply has to be re-requested.
std::string format_reminder(Stage stage);

// OpenAI-style chat messages: system, user text, optional exemplar turns
// (frames then gold answer), then the query frames labeled "Frame i/N".
nlohmann::json render_messages(const PromptBundle& bundle, std::span<const std::string> query_urls,
                               std::span<const std::vector<std::string>> exemplar_urls = {});

}  // namespace vrmod
