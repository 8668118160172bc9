#include "vrmod/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "vrmod/clip_format.hpp"
#include "vrmod/error.hpp"
#include "vrmod/hash.hpp"
#include "vrmod/image.hpp"
#include "vrmod/io.hpp"
#include "vrmod/parallel.hpp"

namespace vrmod::synth {

namespace fs = std::filesystem;
using nlohmann::json;
using std::numbers::pi;

namespace {

Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
Vec2 operator*(Vec2 a, double s) { return {a.x * s, a.y * s}; }
double norm(Vec2 a) { return std::hypot(a.x, a.y); }
double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
Vec2 unit(double angle) { return {std::cos(angle), std::sin(angle)}; }

// True when the angle between a and b is at most max_rad. Zero vectors never
// satisfy the test.
bool within_angle(Vec2 a, Vec2 b, double max_rad) {
  const double na = norm(a);
  const double nb = norm(b);
  if (na < 1e-12 || nb < 1e-12) return false;
  return dot(a, b) / (na * nb) >= std::cos(max_rad) - 1e-12;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// mt19937_64 is fully specified by the standard; the distributions are not,
// so draws are mapped to doubles by hand for cross-platform determinism.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}
  double uniform(double lo, double hi) {
    const double u = static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
  }
  bool coin() { return (eng_() >> 63) != 0; }
  std::uint64_t next() { return eng_(); }

 private:
  std::mt19937_64 eng_;
};

struct Key {
  double t;
  Vec2 p;
};

Vec2 interpolate(const std::vector<Key>& keys, double t) {
  if (t <= keys.front().t) return keys.front().p;
  for (std::size_t i = 1; i < keys.size(); ++i) {
    if (t <= keys[i].t) {
      const double span = keys[i].t - keys[i - 1].t;
      const double u = span > 0 ? (t - keys[i - 1].t) / span : 1.0;
      return keys[i - 1].p + (keys[i].p - keys[i - 1].p) * u;
    }
  }
  return keys.back().p;
}

double heading_towards(Vec2 from, Vec2 to) { return std::atan2(to.y - from.y, to.x - from.x); }

struct Pair {
  AvatarSample actor;
  AvatarSample target;
};

// Per-tick extension profile of one strike, starting at the onset tick.
constexpr double kStrikeProfile[] = {0.4, 0.7, 0.7, 0.5, 0.3};
constexpr double kRestExtension = 0.1;

double strike_extension(long tick_in_block, const std::vector<long>& onsets) {
  for (long onset : onsets) {
    const long k = tick_in_block - onset;
    if (k >= 0 && k < static_cast<long>(std::size(kStrikeProfile))) return kStrikeProfile[k];
  }
  return kRestExtension;
}

}  // namespace

// ---------------------------------------------------------------------------

Trajectory simulate(const BehaviorScript& script) {
  if (!(script.duration >= kWindowSeconds) || !std::isfinite(script.duration)) {
    throw Error(ErrorCode::InvalidScript, "scripts must last at least 10 seconds");
  }
  if (script.actor != 0 && script.actor != 1) {
    throw Error(ErrorCode::InvalidScript, "actor index must be 0 or 1");
  }
  Rng rng(script.seed);
  Trajectory traj;
  const double dt = traj.dt;
  const auto ticks = static_cast<std::size_t>(std::llround(script.duration / dt));
  const auto block_ticks = std::lround(kWindowSeconds / dt);

  std::vector<Pair> local(ticks);

  switch (script.scenario) {
    case Subcategory::Punching:
    case Subcategory::Slapping:
    case Subcategory::HittingWithObject: {
      const double stop = rng.uniform(0.40, 0.46);
      std::vector<long> onsets;
      for (double base : {3.0, 5.0, 7.0}) onsets.push_back(std::lround((base + rng.uniform(-0.3, 0.3)) / dt));
      const std::vector<Key> path = {{0.0, {-1.5, 0}}, {1.5, {-stop, 0}}, {8.5, {-stop, 0}}, {10.0, {-1.5, 0}}};
      for (std::size_t i = 0; i < ticks; ++i) {
        const long k = static_cast<long>(i) % block_ticks;
        const double tau = static_cast<double>(k) * dt;
        Pair& p = local[i];
        p.target.position = {0, 0};
        p.target.heading = pi;
        p.actor.position = interpolate(path, tau);
        p.actor.heading = 0.0;
        p.actor.limb_extension = strike_extension(k, onsets);
        p.actor.fist_closed = script.scenario == Subcategory::Punching;
        p.actor.held_object = script.scenario == Subcategory::HittingWithObject;
      }
      break;
    }
    case Subcategory::Looming: {
      const double close = rng.uniform(0.25, 0.32);
      const std::vector<Key> path = {
          {0.0, {-1.2, 0}}, {4.0, {-close, 0}}, {8.0, {-close, 0}}, {10.0, {-1.2, 0}}};
      for (std::size_t i = 0; i < ticks; ++i) {
        const double tau = static_cast<double>(static_cast<long>(i) % block_ticks) * dt;
        Pair& p = local[i];
        p.target.position = {0, 0};
        p.target.heading = pi;
        p.actor.position = interpolate(path, tau);
        p.actor.heading = 0.0;
      }
      break;
    }
    case Subcategory::FollowingStalking: {
      const double radius = rng.uniform(2.6, 3.2);
      const double speed = rng.uniform(0.7, 0.9);
      const double gap = rng.uniform(1.0, 1.4);
      const double dir = rng.coin() ? 1.0 : -1.0;
      const double phase0 = rng.uniform(0, 2 * pi);
      const double omega = speed / radius;
      for (std::size_t i = 0; i < ticks; ++i) {
        const double t = static_cast<double>(i) * dt;
        const double phi_t = phase0 + dir * omega * t;
        const double phi_a = phi_t - dir * gap / radius;
        Pair& p = local[i];
        p.target.position = unit(phi_t) * radius;
        p.target.heading = phi_t + dir * pi / 2;
        p.actor.position = unit(phi_a) * radius;
        p.actor.heading = phi_a + dir * pi / 2;
      }
      break;
    }
    case Subcategory::Blocking: {
      const double gap = rng.uniform(0.55, 0.65);
      const std::vector<Key> target_path = {{0.0, {0, 0}}, {2.0, {2.0, 0}}, {6.0, {2.6, 0}}, {10.0, {0, 0}}};
      const std::vector<Key> actor_path = {
          {0.0, {3.0, 1.2}}, {2.0, {2.0 + gap, 0}}, {6.0, {2.6 + gap, 0}}, {10.0, {3.0, 1.2}}};
      for (std::size_t i = 0; i < ticks; ++i) {
        const double tau = static_cast<double>(static_cast<long>(i) % block_ticks) * dt;
        Pair& p = local[i];
        p.target.position = interpolate(target_path, tau);
        p.target.heading = tau < 6.0 ? 0.0 : pi;
        p.actor.position = interpolate(actor_path, tau);
        p.actor.heading = heading_towards(p.actor.position, p.target.position);
      }
      break;
    }
    case Subcategory::BenignOther: {
      const auto mode = rng.next() % 3;
      if (mode == 0) {
        // Conversation with hand gestures.
        const double gap = rng.uniform(1.5, 2.5);
        const double period = rng.uniform(1.1, 1.6);
        for (std::size_t i = 0; i < ticks; ++i) {
          const double t = static_cast<double>(i) * dt;
          Pair& p = local[i];
          p.target.position = {0.05 * std::sin(0.7 * t), 0};
          p.target.heading = pi;
          p.actor.position = {-gap, 0.05 * std::sin(0.9 * t)};
          p.actor.heading = 0.0;
          p.actor.limb_extension = 0.1 + 0.25 * (1 - std::cos(2 * pi * t / period)) / 2;
          p.target.limb_extension = 0.1 + 0.2 * (1 - std::cos(2 * pi * t / (period * 1.3))) / 2;
        }
      } else if (mode == 1) {
        // Walking side by side and back.
        const double sep = rng.uniform(0.9, 1.2);
        const std::vector<Key> path = {{0.0, {-2.0, 0}}, {4.0, {1.2, 0}}, {5.0, {1.2, 0}}, {9.0, {-2.0, 0}}, {10.0, {-2.0, 0}}};
        for (std::size_t i = 0; i < ticks; ++i) {
          const double tau = static_cast<double>(static_cast<long>(i) % block_ticks) * dt;
          const Vec2 base = interpolate(path, tau);
          const double h = tau < 5.0 ? 0.0 : pi;
          Pair& p = local[i];
          p.target.position = base;
          p.actor.position = base + Vec2{0, sep};
          p.target.heading = h;
          p.actor.heading = h;
        }
      } else {
        // Both play a whack game with hammers, aimed away from each other.
        const double gap = rng.uniform(2.2, 3.0);
        std::vector<long> onsets_a;
        std::vector<long> onsets_t;
        for (double base : {1.0, 2.5, 4.0, 5.5, 7.0, 8.5}) {
          onsets_a.push_back(std::lround((base + rng.uniform(-0.2, 0.2)) / dt));
          onsets_t.push_back(std::lround((base + 0.6 + rng.uniform(-0.2, 0.2)) / dt));
        }
        for (std::size_t i = 0; i < ticks; ++i) {
          const long k = static_cast<long>(i) % block_ticks;
          Pair& p = local[i];
          p.target.position = {0, 0};
          p.target.heading = -pi / 2;
          p.target.held_object = true;
          p.target.limb_extension = strike_extension(k, onsets_t);
          p.actor.position = {-gap, 0};
          p.actor.heading = -pi / 2;
          p.actor.held_object = true;
          p.actor.limb_extension = strike_extension(k, onsets_a);
        }
      }
      break;
    }
  }

  // Place the scene at a random pose inside the arena.
  const double angle = rng.uniform(0, 2 * pi);
  const Vec2 offset{traj.arena_width / 2 + rng.uniform(-1, 1), traj.arena_height / 2 + rng.uniform(-1, 1)};
  traj.avatars.assign(2, std::vector<AvatarSample>(ticks));
  const int actor = script.actor;
  const int target = 1 - actor;
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  for (std::size_t i = 0; i < ticks; ++i) {
    for (int role = 0; role < 2; ++role) {
      AvatarSample a = role == 0 ? local[i].actor : local[i].target;
      const Vec2 p = a.position;
      a.position = Vec2{c * p.x - s * p.y, s * p.x + c * p.y} + offset +
                   Vec2{rng.uniform(-0.003, 0.003), rng.uniform(-0.003, 0.003)};
      a.position.x = std::clamp(a.position.x, 0.0, traj.arena_width);
      a.position.y = std::clamp(a.position.y, 0.0, traj.arena_height);
      a.heading = std::remainder(a.heading + angle, 2 * pi);
      traj.avatars[role == 0 ? actor : target][i] = a;
    }
  }
  return traj;
}

Trajectory rigid_transform(const Trajectory& traj, double angle, Vec2 offset) {
  Trajectory out = traj;
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  for (auto& series : out.avatars) {
    for (auto& a : series) {
      const Vec2 p = a.position;
      a.position = Vec2{c * p.x - s * p.y, s * p.x + c * p.y} + offset;
      a.heading += angle;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

class WindowView {
 public:
  WindowView(const Trajectory& traj, std::size_t first, std::size_t count)
      : traj_(traj), first_(first), count_(count) {}

  std::size_t begin() const { return first_; }
  std::size_t end() const { return first_ + count_; }

  Vec2 pos(int a, std::size_t i) const { return traj_.avatars[a][i].position; }
  Vec2 tip(int a, std::size_t i) const {
    const auto& s = traj_.avatars[a][i];
    return s.position + unit(s.heading) * s.limb_extension;
  }
  // Backward differences, forward at the first tick so the window never reads
  // samples outside itself.
  Vec2 vel(int a, std::size_t i) const {
    if (i == first_) return (pos(a, i + 1) - pos(a, i)) * (1.0 / traj_.dt);
    return (pos(a, i) - pos(a, i - 1)) * (1.0 / traj_.dt);
  }
  double tip_speed(int a, std::size_t i) const {
    if (i == first_) return norm(tip(a, i + 1) - tip(a, i)) / traj_.dt;
    return norm(tip(a, i) - tip(a, i - 1)) / traj_.dt;
  }
  double distance(std::size_t i) const { return norm(pos(1, i) - pos(0, i)); }
  const AvatarSample& sample(int a, std::size_t i) const { return traj_.avatars[a][i]; }

 private:
  const Trajectory& traj_;
  std::size_t first_;
  std::size_t count_;
};

std::size_t ticks_for(double seconds, double dt) {
  return static_cast<std::size_t>(std::ceil(seconds / dt - 1e-9));
}

std::optional<Subcategory> aggressive(const WindowView& w, const OracleThresholds& th) {
  for (std::size_t i = w.begin(); i < w.end(); ++i) {
    if (w.distance(i) >= th.strike_distance) continue;
    for (int att = 0; att < 2; ++att) {
      if (w.tip_speed(att, i) > th.strike_tip_speed) {
        const auto& s = w.sample(att, i);
        if (s.fist_closed) return Subcategory::Punching;
        if (s.held_object) return Subcategory::HittingWithObject;
        return Subcategory::Slapping;
      }
    }
  }
  return std::nullopt;
}

bool blocking(const WindowView& w, const OracleThresholds& th, double dt) {
  const std::size_t need = ticks_for(th.block_duration, dt);
  const std::size_t ref = std::max<std::size_t>(1, ticks_for(th.block_reference_window, dt));
  const double half_cone = th.block_cone_deg * pi / 360.0;
  for (int tgt = 0; tgt < 2; ++tgt) {
    const int att = 1 - tgt;
    for (std::size_t s = w.begin() + ref; s + need <= w.end(); ++s) {
      Vec2 v_ref{0, 0};
      for (std::size_t j = s - ref; j < s; ++j) v_ref = v_ref + w.vel(tgt, j);
      v_ref = v_ref * (1.0 / static_cast<double>(ref));
      const double ref_speed = norm(v_ref);
      if (ref_speed < th.block_min_reference_speed) continue;
      Vec2 a_ref{0, 0};
      for (std::size_t j = s - ref; j < s; ++j) a_ref = a_ref + w.vel(att, j);
      if (norm(a_ref) / static_cast<double>(ref) < th.block_min_attacker_speed) continue;
      bool held = true;
      for (std::size_t j = s; j < s + need && held; ++j) {
        held = w.distance(j) < th.block_distance &&
               within_angle(v_ref, w.pos(att, j) - w.pos(tgt, j), half_cone) &&
               norm(w.vel(tgt, j)) < th.block_speed_drop * ref_speed;
      }
      if (held) return true;
    }
  }
  return false;
}

bool looming(const WindowView& w, const OracleThresholds& th, double dt) {
  const std::size_t need = ticks_for(th.loom_duration, dt);
  for (int tgt = 0; tgt < 2; ++tgt) {
    std::size_t run = 0;
    for (std::size_t i = w.begin(); i < w.end(); ++i) {
      const bool ok = w.distance(i) < th.loom_distance && norm(w.vel(tgt, i)) < th.loom_target_speed;
      run = ok ? run + 1 : 0;
      if (run >= need) return true;
    }
  }
  return false;
}

bool following(const WindowView& w, const OracleThresholds& th, double dt) {
  const std::size_t need = ticks_for(th.follow_duration, dt);
  const double max_angle = th.follow_heading_deg * pi / 180.0;
  for (int att = 0; att < 2; ++att) {
    const int tgt = 1 - att;
    std::size_t run = 0;
    for (std::size_t i = w.begin(); i < w.end(); ++i) {
      const double d = w.distance(i);
      const bool ok = norm(w.vel(att, i)) > th.follow_min_speed &&
                      norm(w.vel(tgt, i)) > th.follow_min_speed && d >= th.follow_min_distance &&
                      d <= th.follow_max_distance &&
                      within_angle(unit(w.sample(att, i).heading), w.pos(tgt, i) - w.pos(att, i), max_angle);
      run = ok ? run + 1 : 0;
      if (run >= need) return true;
    }
  }
  return false;
}

}  // namespace

OracleResult oracle_classify(const Trajectory& traj, double window_start, const OracleThresholds& th) {
  if (traj.avatars.size() != 2) {
    throw Error(ErrorCode::InvalidArgument, "the oracle expects exactly two avatars");
  }
  const std::size_t count = static_cast<std::size_t>(std::llround(kWindowSeconds / traj.dt));
  if (!(window_start >= 0) || !std::isfinite(window_start)) {
    throw Error(ErrorCode::WindowOutOfRange, "window start must be non-negative");
  }
  const auto first = static_cast<std::size_t>(std::llround(window_start / traj.dt));
  if (first + count > traj.ticks() || count < 2) {
    throw Error(ErrorCode::WindowOutOfRange, "window exceeds trajectory extent");
  }
  const WindowView w(traj, first, count);
  if (auto sub = aggressive(w, th)) return {Stage2Label::AggressiveBehavior, *sub};
  if (blocking(w, th, traj.dt)) return {Stage2Label::DisruptiveBehavior, Subcategory::Blocking};
  if (looming(w, th, traj.dt)) return {Stage2Label::PersonalSpaceViolation, Subcategory::Looming};
  if (following(w, th, traj.dt)) return {Stage2Label::PersonalSpaceViolation, Subcategory::FollowingStalking};
  return {Stage2Label::BenignBehavior, Subcategory::BenignOther};
}

// ---------------------------------------------------------------------------

Image render_frame(const Trajectory& traj, std::size_t tick, const RenderOptions& options) {
  const int size = options.size_px;
  Image img(size, size, Rgb{236, 236, 232});
  const double scale = size / std::max(traj.arena_width, traj.arena_height);
  auto to_px = [&](Vec2 p) { return Vec2{p.x * scale, (traj.arena_height - p.y) * scale}; };
  for (int m = 1; m < static_cast<int>(traj.arena_width); ++m) {
    draw_line(img, m * scale, 0, m * scale, size, 1.0, Rgb{216, 216, 212});
    draw_line(img, 0, m * scale, size, m * scale, 1.0, Rgb{216, 216, 212});
  }
  static constexpr Rgb kColors[] = {{222, 110, 40}, {40, 128, 200}};
  const double body_r = 0.25 * scale;
  for (std::size_t a = 0; a < traj.avatars.size(); ++a) {
    const auto& s = traj.avatars[a][tick];
    const Rgb color = kColors[a % 2];
    const Vec2 c = to_px(s.position);
    const Vec2 fwd{std::cos(s.heading), -std::sin(s.heading)};
    const Vec2 side{-fwd.y, fwd.x};
    // Limb stroke from the body edge, tip marker on top.
    const Vec2 edge = c + fwd * body_r;
    const Vec2 tip = c + fwd * (body_r + s.limb_extension * scale);
    draw_line(img, edge.x, edge.y, tip.x, tip.y, 2.5, Rgb{60, 60, 60});
    fill_circle(img, c.x, c.y, body_r, color);
    const Vec2 nose = c + fwd * (body_r * 1.6);
    const Vec2 l = c + side * (body_r * 0.6);
    const Vec2 r = c - side * (body_r * 0.6);
    fill_triangle(img, nose.x, nose.y, l.x, l.y, r.x, r.y, Rgb{30, 30, 30});
    if (s.held_object) {
      fill_rect(img, tip.x - 3, tip.y - 3, tip.x + 3, tip.y + 3, Rgb{120, 70, 20});
    } else if (s.fist_closed) {
      fill_circle(img, tip.x, tip.y, 3.0, Rgb{20, 20, 20});
    } else {
      draw_ring(img, tip.x, tip.y, 2.5, 1.2, Rgb{20, 20, 20});
    }
  }
  return img;
}

json trajectory_to_json(const Trajectory& traj) {
  json avatars = json::array();
  for (const auto& series : traj.avatars) {
    json x = json::array(), y = json::array(), h = json::array(), limb = json::array(),
         fist = json::array(), held = json::array();
    for (const auto& s : series) {
      x.push_back(s.position.x);
      y.push_back(s.position.y);
      h.push_back(s.heading);
      limb.push_back(s.limb_extension);
      fist.push_back(s.fist_closed ? 1 : 0);
      held.push_back(s.held_object ? 1 : 0);
    }
    avatars.push_back({{"x", x}, {"y", y}, {"heading", h}, {"limb", limb}, {"fist", fist}, {"held", held}});
  }
  return {{"dt", traj.dt}, {"arena", {traj.arena_width, traj.arena_height}}, {"avatars", avatars}};
}

Trajectory trajectory_from_json(const json& j) {
  Trajectory traj;
  traj.dt = j.at("dt").get<double>();
  traj.arena_width = j.at("arena").at(0).get<double>();
  traj.arena_height = j.at("arena").at(1).get<double>();
  if (!(traj.dt > 0)) throw Error(ErrorCode::InvalidArgument, "trajectory dt must be positive");
  for (const auto& a : j.at("avatars")) {
    const auto& x = a.at("x");
    std::vector<AvatarSample> series(x.size());
    for (std::size_t i = 0; i < series.size(); ++i) {
      series[i].position = {x.at(i).get<double>(), a.at("y").at(i).get<double>()};
      series[i].heading = a.at("heading").at(i).get<double>();
      series[i].limb_extension = a.at("limb").at(i).get<double>();
      series[i].fist_closed = a.at("fist").at(i).get<int>() != 0;
      series[i].held_object = a.at("held").at(i).get<int>() != 0;
    }
    if (!traj.avatars.empty() && series.size() != traj.avatars.front().size()) {
      throw Error(ErrorCode::InvalidArgument, "avatar series lengths differ");
    }
    traj.avatars.push_back(std::move(series));
  }
  return traj;
}

GeneratedClip generate(const BehaviorScript& script, const RenderOptions& options) {
  GeneratedClip out;
  out.trajectory = simulate(script);
  const auto& traj = out.trajectory;
  std::vector<std::vector<std::uint8_t>> frames;
  frames.reserve(traj.ticks());
  for (std::size_t i = 0; i < traj.ticks(); ++i) {
    frames.push_back(encode_jpeg(render_frame(traj, i, options), options.jpeg_quality));
  }
  ClipInfo info;
  info.width = static_cast<std::uint32_t>(options.size_px);
  info.height = static_cast<std::uint32_t>(options.size_px);
  info.frame_count = static_cast<std::uint32_t>(frames.size());
  info.fps = 1.0 / traj.dt;
  out.clip_bytes = encode_clip(info, frames);
  out.clip_hash = sha256_hex(out.clip_bytes);
  out.sidecar = trajectory_to_json(traj);
  out.sidecar["scenario"] = wire(script.scenario);
  out.sidecar["actor"] = script.actor;
  out.sidecar["seed"] = script.seed;
  out.sidecar["clip_hash"] = out.clip_hash;
  return out;
}

fs::path sidecar_path(const fs::path& dir, const std::string& clip_hash) {
  return dir / (clip_hash + ".json");
}

Trajectory load_sidecar(const fs::path& dir, const std::string& clip_hash) {
  const auto path = sidecar_path(dir, clip_hash);
  if (!is_sha256_hex(clip_hash) || !fs::exists(path)) {
    throw Error(ErrorCode::Io, "no trajectory sidecar for clip " + clip_hash);
  }
  return trajectory_from_json(json::parse(read_text(path)));
}

namespace {

Room room_for(Subcategory sub, int index) {
  switch (sub) {
    case Subcategory::Blocking: return Room::Communication;
    case Subcategory::HittingWithObject: return Room::WhackAPig;
    case Subcategory::Looming: return index % 2 ? Room::WhackAPig : Room::Communication;
    case Subcategory::FollowingStalking: return index % 2 ? Room::SlingShot : Room::Communication;
    default: return kRooms[static_cast<std::size_t>(index) % kRooms.size()];
  }
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

std::vector<ClipRecord> generate_corpus(const fs::path& out, const CorpusOptions& options) {
  if (options.count_per_class < 0 || !(options.min_duration >= kWindowSeconds) ||
      options.max_duration < options.min_duration) {
    throw Error(ErrorCode::InvalidScript, "corpus options need count >= 0 and durations >= 10 s");
  }
  fs::create_directories(out / "clips");
  fs::create_directories(out / "sidecars");

  struct Job {
    BehaviorScript script;
    std::string clip_id;
    Room room;
  };
  std::vector<Job> jobs;
  for (std::size_t c = 0; c < kSubcategories.size(); ++c) {
    for (int i = 0; i < options.count_per_class; ++i) {
      Rng rng(splitmix64(options.seed * 1000003ull + c * 7919ull + static_cast<std::uint64_t>(i)));
      Job job;
      job.script.scenario = kSubcategories[c];
      job.script.duration = std::round(rng.uniform(options.min_duration, options.max_duration) * 10.0) / 10.0;
      job.script.actor = rng.coin() ? 1 : 0;
      job.script.seed = rng.next();
      char buf[16];
      std::snprintf(buf, sizeof buf, "%03d", i);
      job.clip_id = "synth-" + lower(wire(kSubcategories[c])) + "-" + buf;
      job.room = room_for(kSubcategories[c], i);
      jobs.push_back(job);
    }
  }

  std::vector<ClipRecord> records(jobs.size());
  parallel_for(jobs.size(), options.workers, [&](std::size_t k) {
    const Job& job = jobs[k];
    const GeneratedClip clip = generate(job.script, options.render);
    const fs::path clip_path = out / "clips" / (job.clip_id + ".vrclip");
    write_atomic(clip_path, std::string_view(reinterpret_cast<const char*>(clip.clip_bytes.data()),
                                             clip.clip_bytes.size()));
    json sidecar = clip.sidecar;
    sidecar["clip_id"] = job.clip_id;
    write_atomic(sidecar_path(out / "sidecars", clip.clip_hash), sidecar.dump());
    ClipRecord rec;
    rec.clip_id = job.clip_id;
    rec.path = fs::absolute(clip_path);
    rec.fps = 1.0 / clip.trajectory.dt;
    rec.duration = static_cast<double>(clip.trajectory.ticks()) / rec.fps;
    rec.participant_count = 2;
    rec.room = job.room;
    rec.truth = ClipTruth{parent_of(job.script.scenario), job.script.scenario};
    records[k] = std::move(rec);
  });

  std::vector<ClipRecord> manifest = records;
  for (auto& r : manifest) r.path = fs::path("clips") / r.path.filename();
  write_manifest(out / "manifest.jsonl", manifest);
  return records;
}

}  // namespace vrmod::synth
