#pragma once

// Canonical label sets for both classification stages and the harassment
// subcategory catalog. The wire strings defined here are the only spellings
// accepted in prompts, manifests, model output and API payloads.

#include <array>
#include <optional>
#include <string_view>
#include <variant>

namespace vrmod {

enum class Stage { One, Two };

// Binary decision: does the clip show hostile behavior at all.
enum class Stage1Label { Benign, Anomaly };

enum class Stage2Label {
  BenignBehavior,
  AggressiveBehavior,
  PersonalSpaceViolation,
  DisruptiveBehavior,
};

// Ground-truth metadata only; models are never asked for these.
enum class Subcategory {
  Punching,
  Slapping,
  HittingWithObject,
  Looming,
  FollowingStalking,
  Blocking,
  BenignOther,
};

enum class Room { Communication, WhackAPig, SlingShot, Climbing };

inline constexpr std::array<Stage1Label, 2> kStage1Labels{Stage1Label::Benign, Stage1Label::Anomaly};

inline constexpr std::array<Stage2Label, 4> kStage2Labels{
    Stage2Label::BenignBehavior, Stage2Label::AggressiveBehavior,
    Stage2Label::PersonalSpaceViolation, Stage2Label::DisruptiveBehavior};

inline constexpr std::array<Subcategory, 7> kSubcategories{
    Subcategory::Punching,  Subcategory::Slapping,          Subcategory::HittingWithObject,
    Subcategory::Looming,   Subcategory::FollowingStalking, Subcategory::Blocking,
    Subcategory::BenignOther};

inline constexpr std::array<Room, 4> kRooms{Room::Communication, Room::WhackAPig, Room::SlingShot,
                                            Room::Climbing};

std::string_view wire(Stage1Label label) noexcept;
std::string_view wire(Stage2Label label) noexcept;
std::string_view wire(Subcategory sub) noexcept;
std::string_view wire(Room room) noexcept;
std::string_view wire(Stage stage) noexcept;  // "stage1" / "stage2"

// Exact, case-sensitive matches against the wire strings.
std::optional<Stage1Label> parse_stage1(std::string_view text) noexcept;
std::optional<Stage2Label> parse_stage2(std::string_view text) noexcept;
std::optional<Subcategory> parse_subcategory(std::string_view text) noexcept;
std::optional<Room> parse_room(std::string_view text) noexcept;
std::optional<Stage> parse_stage(std::string_view text) noexcept;

Stage1Label coarsen(Stage2Label label) noexcept;
Stage2Label parent_of(Subcategory sub) noexcept;

// Category definition text from the behavior catalog.
std::string_view definition(Subcategory sub) noexcept;

// Short lower-case rationale phrase used as the gold `reason` in training
// records, derived from the catalog definition.
std::string_view reason_phrase(Subcategory sub) noexcept;
std::string_view reason_phrase(Stage2Label label) noexcept;

// A label from either stage; verdicts and reports carry this.
class Label {
 public:
  Label(Stage1Label l) : value_(l) {}  // NOLINT(google-explicit-constructor)
  Label(Stage2Label l) : value_(l) {}  // NOLINT(google-explicit-constructor)

  Stage stage() const noexcept { return value_.index() == 0 ? Stage::One : Stage::Two; }
  std::string_view wire() const noexcept;

  const Stage1Label* stage1() const noexcept { return std::get_if<Stage1Label>(&value_); }
  const Stage2Label* stage2() const noexcept { return std::get_if<Stage2Label>(&value_); }

  friend bool operator==(const Label&, const Label&) = default;

 private:
  std::variant<Stage1Label, Stage2Label> value_;
};

std::optional<Label> parse_label(Stage stage, std::string_view text) noexcept;

// Projects a Stage 2 truth onto the requested stage.
Label project(Stage2Label truth, Stage stage) noexcept;

}  // namespace vrmod
