#include "vrmod/verdict.hpp"

#include "vrmod/error.hpp"

namespace vrmod {

using nlohmann::json;

std::string_view wire(ParseStatus s) noexcept {
  switch (s) {
    case ParseStatus::Clean: return "Clean";
    case ParseStatus::Salvaged: return "Salvaged";
    case ParseStatus::Failed: return "Failed";
  }
  return "";
}

std::optional<ParseStatus> parse_parse_status(std::string_view text) noexcept {
  for (auto s : {ParseStatus::Clean, ParseStatus::Salvaged, ParseStatus::Failed}) {
    if (wire(s) == text) return s;
  }
  return std::nullopt;
}

std::string_view wire(VerdictOrigin o) noexcept {
  switch (o) {
    case VerdictOrigin::Model: return "model";
    case VerdictOrigin::CascadeDefault: return "cascade-default";
    case VerdictOrigin::Fallback: return "fallback";
  }
  return "";
}

std::optional<VerdictOrigin> parse_origin(std::string_view text) noexcept {
  for (auto o : {VerdictOrigin::Model, VerdictOrigin::CascadeDefault, VerdictOrigin::Fallback}) {
    if (wire(o) == text) return o;
  }
  return std::nullopt;
}

namespace {

constexpr std::string_view kWhitespace = " \t\r\n\f\v";

std::string_view trim(std::string_view s) noexcept {
  const auto b = s.find_first_not_of(kWhitespace);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(kWhitespace);
  return s.substr(b, e - b + 1);
}

struct Accepted {
  Label label;
  std::string reason;
};

// Validates one candidate object text against the strict contract.
std::optional<Accepted> validate_object(std::string_view text, const ResponseSchema& schema) {
  int top_level_keys = 0;
  bool duplicate = false;
  bool seen_label = false;
  bool seen_reason = false;
  json::parser_callback_t count_keys = [&](int depth, json::parse_event_t event, json& parsed) {
    if (event == json::parse_event_t::key && depth == 1) {
      ++top_level_keys;
      const auto& key = parsed.get_ref<const std::string&>();
      bool& seen = key == "label" ? seen_label : seen_reason;
      if (key == "label" || key == "reason") {
        if (seen) duplicate = true;
        seen = true;
      }
    }
    return true;
  };
  json j = json::parse(text.begin(), text.end(), count_keys, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  if (top_level_keys != 2 || duplicate || j.size() != 2) return std::nullopt;
  const auto label_it = j.find("label");
  const auto reason_it = j.find("reason");
  if (label_it == j.end() || reason_it == j.end()) return std::nullopt;
  if (!label_it->is_string() || !reason_it->is_string()) return std::nullopt;
  const std::string_view label_text = trim(label_it->get_ref<const std::string&>());
  if (!schema.allows(label_text)) return std::nullopt;
  auto label = parse_label(schema.stage, label_text);
  if (!label) return std::nullopt;
  std::string reason = reason_it->get<std::string>();
  if (trim(reason).empty()) return std::nullopt;
  return Accepted{*label, std::move(reason)};
}

// End of the balanced object starting at `begin`, or npos. Objects that nest
// further braces are rejected outright: a valid answer is flat.
std::size_t flat_object_end(std::string_view s, std::size_t begin) noexcept {
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = begin + 1; i < s.size(); ++i) {
    const char c = s[i];
    if (in_string) {
      if (escaped) escaped = false;
      else if (c == '\\') escaped = true;
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '"') in_string = true;
    else if (c == '{' || c == '[') return std::string_view::npos;
    else if (c == '}') return i;
  }
  return std::string_view::npos;
}

}  // namespace

Verdict parse(std::string_view body, const ResponseSchema& schema) noexcept {
  Verdict v;
  v.stage = schema.stage;
  v.parse_status = ParseStatus::Failed;
  try {
    const std::string_view trimmed = trim(body);
    if (!trimmed.empty() && trimmed.front() == '{' && trimmed.back() == '}') {
      if (auto ok = validate_object(trimmed, schema)) {
        v.label = ok->label;
        v.reason = std::move(ok->reason);
        v.parse_status = ParseStatus::Clean;
        return v;
      }
    }
    for (std::size_t pos = body.find('{'); pos != std::string_view::npos;
         pos = body.find('{', pos + 1)) {
      const std::size_t end = flat_object_end(body, pos);
      if (end == std::string_view::npos) continue;
      if (auto ok = validate_object(body.substr(pos, end - pos + 1), schema)) {
        v.label = ok->label;
        v.reason = std::move(ok->reason);
        v.parse_status = ParseStatus::Salvaged;
        return v;
      }
    }
  } catch (...) {
    // Allocation failure or a parser edge case: report as unparseable.
    v.label.reset();
    v.reason.clear();
    v.parse_status = ParseStatus::Failed;
  }
  return v;
}

json answer_json(const Verdict& v) {
  json j = json::object();
  j["label"] = v.label ? std::string(v.label->wire()) : std::string();
  j["reason"] = v.reason;
  return j;
}

json to_json(const Verdict& v) {
  json j = {{"label", v.label ? json(std::string(v.label->wire())) : json(nullptr)},
            {"reason", v.reason},
            {"parse_status", wire(v.parse_status)},
            {"origin", wire(v.origin)}};
  if (v.raw) {
    j["request_id"] = v.raw->request_id;
    j["attempt"] = v.raw->attempt;
  }
  return j;
}

Verdict verdict_from_json(const json& j, Stage stage) {
  Verdict v;
  v.stage = stage;
  if (!j.at("label").is_null()) {
    v.label = parse_label(stage, j.at("label").get<std::string>());
    if (!v.label) throw Error(ErrorCode::UnknownLabel, "bad label in verdict record: " + j.dump());
  }
  v.reason = j.value("reason", std::string());
  v.parse_status = parse_parse_status(j.value("parse_status", std::string("Failed"))).value_or(ParseStatus::Failed);
  v.origin = parse_origin(j.value("origin", std::string("model"))).value_or(VerdictOrigin::Model);
  if (j.contains("request_id")) {
    v.raw = RawRef{j.at("request_id").get<std::string>(), j.value("attempt", 1), 0.0};
  }
  return v;
}

}  // namespace vrmod
