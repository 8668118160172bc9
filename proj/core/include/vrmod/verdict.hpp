#pragma once

#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "vrmod/prompts.hpp"
#include "vrmod/taxonomy.hpp"

namespace vrmod {

enum class ParseStatus { Clean, Salvaged, Failed };
std::string_view wire(ParseStatus s) noexcept;
std::optional<ParseStatus> parse_parse_status(std::string_view text) noexcept;

// Where a verdict's label came from.
enum class VerdictOrigin {
  Model,           // parsed from a model reply
  CascadeDefault,  // Stage 2 skipped because Stage 1 said Benign
  Fallback,        // reply unparseable after repair; policy label applied
};
std::string_view wire(VerdictOrigin o) noexcept;
std::optional<VerdictOrigin> parse_origin(std::string_view text) noexcept;

struct RawRef {
  std::string request_id;
  int attempt = 0;
  double latency = 0.0;
};

struct Verdict {
  std::string segment_id;
  Stage stage = Stage::One;
  std::optional<Label> label;  // empty only when Failed and no policy applied yet
  std::string reason;
  ParseStatus parse_status = ParseStatus::Failed;
  VerdictOrigin origin = VerdictOrigin::Model;
  std::optional<RawRef> raw;
};

// Total, deterministic and non-throwing.
//   Clean    - the trimmed body is one JSON object with exactly `label` and
//              `reason`, both strings, label allowed, reason non-empty.
//   Salvaged - the first balanced {...} substring that would be Clean.
//   Failed   - anything else.
Verdict parse(std::string_view body, const ResponseSchema& schema) noexcept;

// Serializes label+reason exactly as the strict answer format.
nlohmann::json answer_json(const Verdict& v);

nlohmann::json to_json(const Verdict& v);
Verdict verdict_from_json(const nlohmann::json& j, Stage stage);

}  // namespace vrmod
