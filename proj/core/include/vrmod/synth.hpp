#pragma once

// Synthetic two-avatar corpus: scripted top-down trajectories, a rule oracle
// over them, and schematic frame rendering into native clips.

#include <cstdint>
#include <filesystem>
#include <vector>

#include <nlohmann/json.hpp>

#include "vrmod/image.hpp"
#include "vrmod/media.hpp"
#include "vrmod/taxonomy.hpp"

namespace vrmod::synth {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

struct AvatarSample {
  Vec2 position;             // meters
  double heading = 0.0;      // radians, 0 = +x
  double limb_extension = 0.1;  // meters from body center to limb tip
  bool fist_closed = false;
  bool held_object = false;
};

struct Trajectory {
  double dt = 0.1;
  double arena_width = 12.0;
  double arena_height = 12.0;
  // avatars[a][tick]; all series share one length.
  std::vector<std::vector<AvatarSample>> avatars;

  std::size_t ticks() const noexcept { return avatars.empty() ? 0 : avatars.front().size(); }
  double duration() const noexcept { return static_cast<double>(ticks()) * dt; }
};

struct BehaviorScript {
  Subcategory scenario = Subcategory::BenignOther;
  double duration = 10.0;  // seconds, >= 10
  int actor = 0;           // index of the acting avatar; the other is the target
  std::uint64_t seed = 0;
};

// Kinematic thresholds of the rule oracle. These are calibration constants
// for the synthetic corpus, not measured quantities.
struct OracleThresholds {
  double strike_distance = 0.5;         // m, bodies closer than this
  double strike_tip_speed = 2.0;        // m/s, attacker limb tip
  double loom_distance = 0.4;           // m
  double loom_duration = 2.0;           // s
  double loom_target_speed = 0.2;       // m/s, target nearly still
  double follow_min_speed = 0.3;        // m/s, both avatars
  double follow_min_distance = 0.5;     // m
  double follow_max_distance = 2.0;     // m
  double follow_heading_deg = 30.0;     // attacker heading vs bearing to target
  double follow_duration = 5.0;         // s
  double block_cone_deg = 60.0;         // full cone around target's motion
  double block_distance = 0.8;          // m
  double block_duration = 2.0;          // s
  double block_speed_drop = 0.5;        // target speed falls below this fraction
  double block_reference_window = 1.0;  // s of motion before the obstruction
  double block_min_reference_speed = 0.3;  // m/s, target must have been moving
  double block_min_attacker_speed = 0.3;   // m/s, attacker must have moved into the path
};

struct OracleResult {
  Stage2Label label = Stage2Label::BenignBehavior;
  Subcategory subcategory = Subcategory::BenignOther;

  friend bool operator==(const OracleResult&, const OracleResult&) = default;
};

inline constexpr double kWindowSeconds = 10.0;

// Evaluates the rules over ticks [t0/dt, t0/dt + 10/dt) in priority order
// Aggressive > Disruptive > PersonalSpaceViolation > Benign. Throws
// WindowOutOfRange when the window leaves the trajectory.
OracleResult oracle_classify(const Trajectory& traj, double window_start,
                             const OracleThresholds& th = {});

// Throws InvalidScript for durations under 10 s or an actor index not in {0,1}.
Trajectory simulate(const BehaviorScript& script);

// Rotates by `angle` about the origin then translates by `offset`.
Trajectory rigid_transform(const Trajectory& traj, double angle, Vec2 offset);

struct RenderOptions {
  int size_px = 256;
  int jpeg_quality = 85;
};

Image render_frame(const Trajectory& traj, std::size_t tick, const RenderOptions& options = {});

struct GeneratedClip {
  Trajectory trajectory;
  std::vector<std::uint8_t> clip_bytes;  // native clip container at 1/dt fps
  std::string clip_hash;                 // sha256 of clip_bytes
  nlohmann::json sidecar;
};

GeneratedClip generate(const BehaviorScript& script, const RenderOptions& options = {});

nlohmann::json trajectory_to_json(const Trajectory& traj);
Trajectory trajectory_from_json(const nlohmann::json& j);

// Sidecars live at <dir>/<clip_hash>.json.
std::filesystem::path sidecar_path(const std::filesystem::path& dir, const std::string& clip_hash);
Trajectory load_sidecar(const std::filesystem::path& dir, const std::string& clip_hash);

struct CorpusOptions {
  int count_per_class = 20;
  std::uint64_t seed = 7;
  double min_duration = 10.0;
  double max_duration = 25.0;
  int workers = 1;
  RenderOptions render;
};

// Writes clips/, sidecars/ and manifest.jsonl under `out` and returns the
// manifest records (paths absolute).
std::vector<ClipRecord> generate_corpus(const std::filesystem::path& out, const CorpusOptions& options);

}  // namespace vrmod::synth
