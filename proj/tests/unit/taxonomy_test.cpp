#include <gtest/gtest.h>

#include "vrmod/taxonomy.hpp"

namespace vrmod {
namespace {

TEST(Taxonomy, WireStringsRoundTrip) {
  for (auto l : kStage1Labels) EXPECT_EQ(parse_stage1(wire(l)), l);
  for (auto l : kStage2Labels) EXPECT_EQ(parse_stage2(wire(l)), l);
  for (auto s : kSubcategories) EXPECT_EQ(parse_subcategory(wire(s)), s);
  for (auto r : kRooms) EXPECT_EQ(parse_room(wire(r)), r);
  EXPECT_EQ(parse_stage("stage1"), Stage::One);
  EXPECT_EQ(parse_stage("stage2"), Stage::Two);
}

TEST(Taxonomy, CanonicalStage2Strings) {
  EXPECT_EQ(wire(Stage2Label::BenignBehavior), "Benign");
  EXPECT_EQ(wire(Stage2Label::AggressiveBehavior), "Aggressive Behavior");
  EXPECT_EQ(wire(Stage2Label::PersonalSpaceViolation), "Personal Space Violation");
  EXPECT_EQ(wire(Stage2Label::DisruptiveBehavior), "Disruptive Behavior");
}

TEST(Taxonomy, ParsingIsExact) {
  EXPECT_FALSE(parse_stage1("benign"));
  EXPECT_FALSE(parse_stage1(" Benign"));
  EXPECT_FALSE(parse_stage2("Anomaly"));
  EXPECT_FALSE(parse_label(Stage::One, "Aggressive Behavior"));
  EXPECT_TRUE(parse_label(Stage::Two, "Benign"));
}

TEST(Taxonomy, CoarsenMapsOnlyBenignToBenign) {
  EXPECT_EQ(coarsen(Stage2Label::BenignBehavior), Stage1Label::Benign);
  EXPECT_EQ(coarsen(Stage2Label::AggressiveBehavior), Stage1Label::Anomaly);
  EXPECT_EQ(coarsen(Stage2Label::PersonalSpaceViolation), Stage1Label::Anomaly);
  EXPECT_EQ(coarsen(Stage2Label::DisruptiveBehavior), Stage1Label::Anomaly);
}

TEST(Taxonomy, SubcategoryParents) {
  EXPECT_EQ(parent_of(Subcategory::Punching), Stage2Label::AggressiveBehavior);
  EXPECT_EQ(parent_of(Subcategory::Slapping), Stage2Label::AggressiveBehavior);
  EXPECT_EQ(parent_of(Subcategory::HittingWithObject), Stage2Label::AggressiveBehavior);
  EXPECT_EQ(parent_of(Subcategory::Looming), Stage2Label::PersonalSpaceViolation);
  EXPECT_EQ(parent_of(Subcategory::FollowingStalking), Stage2Label::PersonalSpaceViolation);
  EXPECT_EQ(parent_of(Subcategory::Blocking), Stage2Label::DisruptiveBehavior);
  EXPECT_EQ(parent_of(Subcategory::BenignOther), Stage2Label::BenignBehavior);
}

TEST(Taxonomy, DefinitionsAndReasonsAreNonEmpty) {
  for (auto s : kSubcategories) {
    EXPECT_FALSE(definition(s).empty());
    EXPECT_FALSE(reason_phrase(s).empty());
  }
  EXPECT_EQ(definition(Subcategory::FollowingStalking), "Tracking a user repeatedly over time");
}

TEST(Taxonomy, ProjectFollowsStage) {
  EXPECT_EQ(project(Stage2Label::DisruptiveBehavior, Stage::One), Label(Stage1Label::Anomaly));
  EXPECT_EQ(project(Stage2Label::DisruptiveBehavior, Stage::Two), Label(Stage2Label::DisruptiveBehavior));
  EXPECT_EQ(Label(Stage1Label::Benign).stage(), Stage::One);
  EXPECT_NE(Label(Stage1Label::Benign), Label(Stage2Label::BenignBehavior));
}

}  // namespace
}  // namespace vrmod
