#include "vrmod/taxonomy.hpp"

namespace vrmod {

std::string_view wire(Stage1Label label) noexcept {
  return label == Stage1Label::Benign ? "Benign" : "Anomaly";
}

std::string_view wire(Stage2Label label) noexcept {
  switch (label) {
    case Stage2Label::BenignBehavior: return "Benign";
    case Stage2Label::AggressiveBehavior: return "Aggressive Behavior";
    case Stage2Label::PersonalSpaceViolation: return "Personal Space Violation";
    case Stage2Label::DisruptiveBehavior: return "Disruptive Behavior";
  }
  return "";
}

std::string_view wire(Subcategory sub) noexcept {
  switch (sub) {
    case Subcategory::Punching: return "Punching";
    case Subcategory::Slapping: return "Slapping";
    case Subcategory::HittingWithObject: return "HittingWithObject";
    case Subcategory::Looming: return "Looming";
    case Subcategory::FollowingStalking: return "FollowingStalking";
    case Subcategory::Blocking: return "Blocking";
    case Subcategory::BenignOther: return "BenignOther";
  }
  return "";
}

std::string_view wire(Room room) noexcept {
  switch (room) {
    case Room::Communication: return "Communication";
    case Room::WhackAPig: return "WhackAPig";
    case Room::SlingShot: return "SlingShot";
    case Room::Climbing: return "Climbing";
  }
  return "";
}

std::string_view wire(Stage stage) noexcept { return stage == Stage::One ? "stage1" : "stage2"; }

namespace {

template <typename Enum, std::size_t N>
std::optional<Enum> lookup(const std::array<Enum, N>& values, std::string_view text) noexcept {
  for (Enum v : values) {
    if (wire(v) == text) return v;
  }
  return std::nullopt;
}

}  // namespace

std::optional<Stage1Label> parse_stage1(std::string_view text) noexcept {
  return lookup(kStage1Labels, text);
}
std::optional<Stage2Label> parse_stage2(std::string_view text) noexcept {
  return lookup(kStage2Labels, text);
}
std::optional<Subcategory> parse_subcategory(std::string_view text) noexcept {
  return lookup(kSubcategories, text);
}
std::optional<Room> parse_room(std::string_view text) noexcept { return lookup(kRooms, text); }

std::optional<Stage> parse_stage(std::string_view text) noexcept {
  if (text == "stage1" || text == "1") return Stage::One;
  if (text == "stage2" || text == "2") return Stage::Two;
  return std::nullopt;
}

Stage1Label coarsen(Stage2Label label) noexcept {
  return label == Stage2Label::BenignBehavior ? Stage1Label::Benign : Stage1Label::Anomaly;
}

Stage2Label parent_of(Subcategory sub) noexcept {
  switch (sub) {
    case Subcategory::Punching:
    case Subcategory::Slapping:
    case Subcategory::HittingWithObject: return Stage2Label::AggressiveBehavior;
    case Subcategory::Looming:
    case Subcategory::FollowingStalking: return Stage2Label::PersonalSpaceViolation;
    case Subcategory::Blocking: return Stage2Label::DisruptiveBehavior;
    case Subcategory::BenignOther: return Stage2Label::BenignBehavior;
  }
  return Stage2Label::BenignBehavior;
}

std::string_view definition(Subcategory sub) noexcept {
  switch (sub) {
    case Subcategory::Punching: return "Attacking another avatar with a fist";
    case Subcategory::Slapping: return "Attacking another avatar with an open hand";
    case Subcategory::HittingWithObject: return "Attacking another avatar using an object";
    case Subcategory::Looming: return "Bringing one's avatar face close to another user's avatar";
    case Subcategory::FollowingStalking: return "Tracking a user repeatedly over time";
    case Subcategory::Blocking: return "Obstructing the movement of another avatar";
    case Subcategory::BenignOther:
      return "All other benign behaviors (e.g., talking, rock-paper-scissors, walking)";
  }
  return "";
}

std::string_view reason_phrase(Subcategory sub) noexcept {
  switch (sub) {
    case Subcategory::Punching: return "attacking another avatar with a fist";
    case Subcategory::Slapping: return "attacking another avatar with an open hand";
    case Subcategory::HittingWithObject: return "attacking another avatar using an object";
    case Subcategory::Looming: return "bringing avatar face close to another avatar";
    case Subcategory::FollowingStalking: return "tracking another avatar repeatedly over time";
    case Subcategory::Blocking: return "obstructing the movement of another avatar";
    case Subcategory::BenignOther: return "normal play such as talking or walking";
  }
  return "";
}

std::string_view reason_phrase(Stage2Label label) noexcept {
  switch (label) {
    case Stage2Label::BenignBehavior: return "normal play with no hostile intent";
    case Stage2Label::AggressiveBehavior: return "striking contact between avatars";
    case Stage2Label::PersonalSpaceViolation: return "invasive closeness toward another avatar";
    case Stage2Label::DisruptiveBehavior: return "obstructing the movement of another avatar";
  }
  return "";
}

std::string_view Label::wire() const noexcept {
  return std::visit([](auto l) { return vrmod::wire(l); }, value_);
}

std::optional<Label> parse_label(Stage stage, std::string_view text) noexcept {
  if (stage == Stage::One) {
    if (auto l = parse_stage1(text)) return Label{*l};
    return std::nullopt;
  }
  if (auto l = parse_stage2(text)) return Label{*l};
  return std::nullopt;
}

Label project(Stage2Label truth, Stage stage) noexcept {
  if (stage == Stage::One) return Label{coarsen(truth)};
  return Label{truth};
}

}  // namespace vrmod
