#pragma once

// Procedural duets with known ground truth, and dataset splitting.
//
// Scenarios (leader and follower):
//   orbit           both circle a shared centre facing each other, dancing on the beat
//   mirror          follower is the leader's motion turned 180 degrees about the centre
//   handhold        face to face; in scheduled windows the leader's right hand and the
//                   follower's left hand meet tip to tip, 5 mm apart
//   approach-touch  the follower walks in and lays its right hand on the leader's left
//                   shoulder, `touch_depth` metres past the 5 mm touching distance
//                   (penetrating by default: the negative control for guidance)
//   walk            side-by-side walking with scripted stance phases
//
// Dance accents follow cos(pi * t / P) profiles, so all motion comes to rest
// on every metronome beat (period P frames).

#include "interdance/music.hpp"

#include <map>

namespace interdance {

struct ContactWindow {
  int begin = 0;  // frames [begin, end)
  int end = 0;
};

struct ScenarioSpec {
  std::string name = "handhold";
  double duration = 4.0;  // seconds
  double bpm = 120.0;
  std::uint64_t seed = 0;
  double fps = 30.0;
  std::vector<ContactWindow> contact;  // empty: scenario default
  double touch_depth = 0.03;           // approach-touch only
  bool random_placement = true;        // seeded global heading and offset

  int frame_count() const { return static_cast<int>(std::lround(duration * fps)); }
};

struct DuetSample {
  MotionSequence leader;
  MotionSequence follower;
  MusicFeatures music;
  std::string scenario;
  std::vector<ContactWindow> contact;
};

inline const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> names = {"orbit", "mirror", "handhold", "approach-touch", "walk"};
  return names;
}

namespace synth_detail {

inline Vec3 rot_x(double a) { return Vec3(a, 0.0, 0.0); }
inline Vec3 rot_y(double a) { return Vec3(0.0, a, 0.0); }
inline Vec3 rot_z(double a) { return Vec3(0.0, 0.0, a); }

inline Vec3 compose(const Vec3& first, const Vec3& second) {
  return axis_angle_from_rotation(rotation_from_axis_angle(first) * rotation_from_axis_angle(second));
}

inline double smoothstep(double s) {
  s = std::clamp(s, 0.0, 1.0);
  return s * s * (3.0 - 2.0 * s);
}

/// Seeded amplitudes of the beat-locked dance accents.
struct DanceStyle {
  double arm_raise = 0.5;
  double arm_swing = 0.3;
  double elbow = 0.4;
  double sway = 0.08;
  double nod = 0.1;
  double sign = 1.0;  // which arm leads

  static DanceStyle random(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    DanceStyle s;
    s.arm_raise = 0.3 + 0.4 * u(rng);
    s.arm_swing = 0.15 + 0.3 * u(rng);
    s.elbow = 0.2 + 0.5 * u(rng);
    s.sway = 0.04 + 0.08 * u(rng);
    s.nod = 0.05 + 0.1 * u(rng);
    s.sign = u(rng) < 0.5 ? -1.0 : 1.0;
    return s;
  }
};

/// Beat phase: stationary exactly at integer values.
inline double accent(int t, int period) { return std::cos(std::numbers::pi * t / period); }

inline void arms_down(PoseFrame& p, bool left, bool right) {
  if (left) p.joint_rotations[joint::left_shoulder] = rot_z(-0.5 * std::numbers::pi);
  if (right) p.joint_rotations[joint::right_shoulder] = rot_z(0.5 * std::numbers::pi);
}

/// Arm pointing straight ahead in the body frame.
inline void arm_forward(PoseFrame& p, bool left) {
  if (left) {
    p.joint_rotations[joint::left_shoulder] = rot_y(-0.5 * std::numbers::pi);
  } else {
    p.joint_rotations[joint::right_shoulder] = rot_y(0.5 * std::numbers::pi);
  }
}

inline void dance_arm(PoseFrame& p, bool left, double a, const DanceStyle& s) {
  const double side = left ? 1.0 : -1.0;
  const double lead = left ? s.sign : -s.sign;
  const double lowered = 0.9 - s.arm_raise * lead * a;
  const Vec3 shoulder = compose(rot_y(-side * s.arm_swing * a), rot_z(-side * lowered));
  p.joint_rotations[static_cast<std::size_t>(left ? joint::left_shoulder : joint::right_shoulder)] = shoulder;
  p.joint_rotations[static_cast<std::size_t>(left ? joint::left_elbow : joint::right_elbow)] =
      rot_y(-side * s.elbow * (1.0 + lead * a) * 0.5);
}

inline void dance_torso(PoseFrame& p, double a, const DanceStyle& s) {
  p.joint_rotations[joint::spine2] = rot_z(s.sway * a);
  p.joint_rotations[joint::head] = rot_x(s.nod * a);
}

/// Smallest distance between any vertex of `a` and any vertex of `b`.
inline double min_vertex_distance(const PointCloudFrame& a, const PointCloudFrame& b) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : a.vertices) {
    for (const auto& q : b.vertices) best = std::min(best, (p - q).squaredNorm());
  }
  return std::sqrt(best);
}

/// Follower z (body facing -Z) at which the closest vertex pair is `gap`
/// apart, found by stepping in from far away and then bisecting.
inline double contact_distance(const BodyModel& model, const PoseFrame& leader, PoseFrame follower, double gap) {
  const PointCloudFrame lead = realize_points(model, leader);
  auto distance_at = [&](double z) {
    follower.root_translation.z() = z;
    return min_vertex_distance(lead, realize_points(model, follower));
  };
  double far = 3.0;
  double near = far;
  while (distance_at(near) > gap) {
    far = near;
    near -= 0.005;
    if (near < 0.0) throw NumericalError("synth: contact distance search failed");
  }
  for (int k = 0; k < 60; ++k) {
    const double mid = 0.5 * (near + far);
    (distance_at(mid) > gap ? far : near) = mid;
  }
  return far;
}

inline bool in_windows(const std::vector<ContactWindow>& windows, int t) {
  for (const auto& w : windows) {
    if (t >= w.begin && t < w.end) return true;
  }
  return false;
}

/// Two-link sagittal leg IK: hip and knee rotations about X that put the
/// ankle at `target` (pelvis frame, metres); the ankle counter-rotates so
/// the foot stays level.
inline void leg_ik(const BodyModel& model, PoseFrame& pose, bool left, const Vec3& target) {
  const int hip = left ? joint::left_hip : joint::right_hip;
  const int knee = left ? joint::left_knee : joint::right_knee;
  const int ankle = left ? joint::left_ankle : joint::right_ankle;
  const Vec3 hip_pos = model.joints[static_cast<std::size_t>(hip)].offset;
  const Vec3 u0 = model.joints[static_cast<std::size_t>(knee)].offset;
  const Vec3 v0 = model.joints[static_cast<std::size_t>(ankle)].offset;
  auto ang = [](double y, double z) { return std::atan2(z, y); };
  const double l1 = std::hypot(u0.y(), u0.z());
  const double l2 = std::hypot(v0.y(), v0.z());
  const double dy = target.y() - hip_pos.y();
  const double dz = target.z() - hip_pos.z();
  const double len = std::clamp(std::hypot(dy, dz), std::abs(l1 - l2) + 1e-9, l1 + l2 - 1e-9);
  const double bend = std::numbers::pi - std::acos(std::clamp((l1 * l1 + l2 * l2 - len * len) / (2 * l1 * l2), -1.0, 1.0));
  const double alpha = std::acos(std::clamp((l1 * l1 + len * len - l2 * l2) / (2 * l1 * len), -1.0, 1.0));
  const double phi1 = ang(dy, dz) - alpha;
  const double phi2 = phi1 + bend;
  const double theta_hip = wrap_angle(phi1 - ang(u0.y(), u0.z()));
  const double theta_knee = wrap_angle(phi2 - ang(v0.y(), v0.z()) - theta_hip);
  pose.joint_rotations[static_cast<std::size_t>(hip)] = rot_x(theta_hip);
  pose.joint_rotations[static_cast<std::size_t>(knee)] = rot_x(theta_knee);
  pose.joint_rotations[static_cast<std::size_t>(ankle)] = rot_x(-(theta_hip + theta_knee));
}

struct WalkGait {
  double speed = 0.6;       // m/s
  double cycle = 1.0;       // s per left-right cycle
  double lift = 0.10;       // m
  double pelvis_drop = 0.03;
};

/// Scripted ankle position of a walker whose pelvis starts over the origin,
/// and whether the foot stays planted over [t, t+1].
struct FootState {
  Vec3 ankle;
  bool planted = false;
};

inline FootState walk_foot(const BodyModel& model, const WalkGait& g, bool left, double phase, int t, double fps) {
  const int ankle_joint = left ? joint::left_ankle : joint::right_ankle;
  const Vec3 rest = model.rest_joint_positions[static_cast<std::size_t>(ankle_joint)] - model.rest_joint_positions[0];
  auto footprint = [&](double k) { return g.speed * g.cycle * (k + phase + 0.25) + rest.z(); };
  auto position = [&](int frame, bool& stance) {
    const double u = frame / (fps * g.cycle) - phase;
    const double k = std::floor(u);
    const double f = u - k;
    const double ground = model.rest_joint_positions[static_cast<std::size_t>(ankle_joint)].y();
    if (f < 0.5) {
      stance = true;
      return Vec3(rest.x(), ground, footprint(k));
    }
    stance = false;
    const double s = (f - 0.5) / 0.5;
    const double z = footprint(k) + (footprint(k + 1) - footprint(k)) * smoothstep(s);
    return Vec3(rest.x(), ground + g.lift * std::sin(std::numbers::pi * s), z);
  };
  bool now = false;
  bool next = false;
  FootState out;
  out.ankle = position(t, now);
  const Vec3 after = position(t + 1, next);
  out.planted = (after - out.ankle).norm() < 1e-12;
  return out;
}

inline PoseFrame walk_pose(const BodyModel& model, const WalkGait& g, double phase, double x, int t, double fps,
                           const DanceStyle& style) {
  PoseFrame p;
  const double body_z = g.speed * t / fps;
  p.root_translation = Vec3(x, -g.pelvis_drop, body_z);
  const Vec3 pelvis = model.joints[0].offset + p.root_translation;
  for (bool left : {true, false}) {
    const FootState f = walk_foot(model, g, left, left ? phase : phase + 0.5, t, fps);
    leg_ik(model, p, left, f.ankle + Vec3(x, 0.0, 0.0) - pelvis);
  }
  const double swing = std::sin(2.0 * std::numbers::pi * (t / (fps * g.cycle) - phase));
  p.joint_rotations[joint::left_shoulder] = compose(rot_x(-0.35 * swing), rot_z(-1.35));
  p.joint_rotations[joint::right_shoulder] = compose(rot_x(0.35 * swing), rot_z(1.35));
  p.joint_rotations[joint::head] = rot_x(0.5 * style.nod);
  return p;
}

inline MotionSequence make_motion(std::vector<PoseFrame> frames, double fps, Subject subject) {
  MotionSequence m;
  m.frames = std::move(frames);
  m.fps = fps;
  m.subject = subject;
  return m;
}

}  // namespace synth_detail

/// Expected foot-contact labels of a walk sample (left/right ankle, left/right
/// toe), straight from the scripted stance phases.
inline Matrix walk_stance_oracle(const BodyModel& model, const ScenarioSpec& spec, Subject who) {
  using namespace synth_detail;
  const WalkGait gait;
  const int t_count = spec.frame_count();
  const double phase = who == Subject::leader ? 0.0 : 0.5;
  Matrix labels(t_count, 4);
  for (int t = 0; t < t_count; ++t) {
    const int ref = t + 1 < t_count ? t : t - 1;
    const bool left = walk_foot(model, gait, true, phase, ref, spec.fps).planted;
    const bool right = walk_foot(model, gait, false, phase + 0.5, ref, spec.fps).planted;
    labels(t, 0) = labels(t, 2) = left ? 1.0 : 0.0;
    labels(t, 1) = labels(t, 3) = right ? 1.0 : 0.0;
  }
  return labels;
}

inline std::vector<ContactWindow> default_contact(const ScenarioSpec& spec) {
  const int t_count = spec.frame_count();
  if (spec.name == "handhold") return {{t_count / 4, 3 * t_count / 4}};
  if (spec.name == "approach-touch") return {{t_count / 3, 2 * t_count / 3}};
  return {};
}

/// Generates one duet; fully determined by `spec`.
inline DuetSample synth_duet(const ScenarioSpec& spec, const BodyModel& model) {
  using namespace synth_detail;
  const int t_count = spec.frame_count();
  if (t_count < 2) throw ConfigError("synth: duration too short (need at least 2 frames)");
  if (!(spec.bpm > 0.0)) throw ConfigError("synth: bpm must be positive");
  const int period = beat_period_frames(spec.bpm, spec.fps);
  std::mt19937_64 rng(spec.seed);
  const DanceStyle lead_style = DanceStyle::random(rng);
  const DanceStyle follow_style = DanceStyle::random(rng);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  DuetSample out;
  out.scenario = spec.name;
  out.contact = spec.contact.empty() ? default_contact(spec) : spec.contact;
  for (const auto& w : out.contact) {
    if (w.begin < 0 || w.end > t_count || w.begin >= w.end) throw ConfigError("synth: contact window out of range");
  }
  std::vector<PoseFrame> lead(static_cast<std::size_t>(t_count));
  std::vector<PoseFrame> follow(static_cast<std::size_t>(t_count));
  const Vec3 facing_back = rot_y(std::numbers::pi);

  if (spec.name == "orbit") {
    const double radius = 0.75 + 0.1 * unit(rng);
    const double step = 0.1 + 0.15 * unit(rng);  // radians per beat
    const double start = 2.0 * std::numbers::pi * unit(rng);
    for (int t = 0; t < t_count; ++t) {
      const double u = static_cast<double>(t) / period;
      const double alpha = start + step * (u - std::sin(2.0 * std::numbers::pi * u) / (2.0 * std::numbers::pi));
      const double a = accent(t, period);
      const Vec3 dir(std::sin(alpha), 0.0, std::cos(alpha));
      PoseFrame& l = lead[static_cast<std::size_t>(t)];
      PoseFrame& f = follow[static_cast<std::size_t>(t)];
      l.root_translation = radius * dir;
      l.joint_rotations[0] = rot_y(wrap_angle(alpha + std::numbers::pi));
      f.root_translation = -radius * dir;
      f.joint_rotations[0] = rot_y(wrap_angle(alpha));
      for (bool left : {true, false}) {
        dance_arm(l, left, a, lead_style);
        dance_arm(f, left, -a, follow_style);
      }
      dance_torso(l, a, lead_style);
      dance_torso(f, -a, follow_style);
    }
  } else if (spec.name == "mirror") {
    const double gap = 0.75 + 0.1 * unit(rng);
    for (int t = 0; t < t_count; ++t) {
      const double a = accent(t, period);
      PoseFrame& l = lead[static_cast<std::size_t>(t)];
      l.root_translation = Vec3(0.0, 0.0, -gap);
      for (bool left : {true, false}) dance_arm(l, left, a, lead_style);
      dance_torso(l, a, lead_style);
    }
    MotionSequence turned = transform_motion(make_motion(lead, spec.fps, Subject::leader), std::numbers::pi, Vec3::Zero());
    follow = turned.frames;
  } else if (spec.name == "handhold") {
    PoseFrame l0;
    arm_forward(l0, false);
    arms_down(l0, true, false);
    PoseFrame f0;
    f0.joint_rotations[0] = facing_back;
    arm_forward(f0, true);
    arms_down(f0, false, true);
    const double distance = contact_distance(model, l0, f0, 0.005);
    for (int t = 0; t < t_count; ++t) {
      const bool touching = in_windows(out.contact, t);
      const double a = accent(t, period);
      PoseFrame& l = lead[static_cast<std::size_t>(t)];
      PoseFrame& f = follow[static_cast<std::size_t>(t)];
      f.joint_rotations[0] = facing_back;
      f.root_translation = Vec3(0.0, 0.0, distance);
      if (touching) {
        arm_forward(l, false);
        arms_down(l, true, false);
        arm_forward(f, true);
        arms_down(f, false, true);
      } else {
        arms_down(l, true, true);
        arms_down(f, true, true);
      }
      // equal world-space roll about +Z keeps the joined hands together
      const double roll = lead_style.sway * a;
      l.joint_rotations[joint::spine2] = rot_z(roll);
      f.joint_rotations[joint::spine2] = rot_z(-roll);
      l.joint_rotations[joint::head] = rot_x(lead_style.nod * a);
      f.joint_rotations[joint::head] = rot_x(-follow_style.nod * a);
    }
  } else if (spec.name == "approach-touch") {
    PoseFrame l0;
    arms_down(l0, true, true);
    PoseFrame f0;
    f0.joint_rotations[0] = facing_back;
    arm_forward(f0, false);
    arms_down(f0, true, false);
    const double touch = contact_distance(model, l0, f0, 0.005) - spec.touch_depth;
    const ContactWindow w = out.contact.empty() ? ContactWindow{t_count, t_count} : out.contact.front();
    const double far = touch + 0.8;
    for (int t = 0; t < t_count; ++t) {
      const double a = accent(t, period);
      PoseFrame& l = lead[static_cast<std::size_t>(t)];
      PoseFrame& f = follow[static_cast<std::size_t>(t)];
      arms_down(l, true, false);
      dance_arm(l, false, a, lead_style);
      l.joint_rotations[joint::head] = rot_x(lead_style.nod * a);
      double z = far;
      if (t >= w.begin && t < w.end) {
        z = touch;
      } else if (t < w.begin) {
        z = touch + (far - touch) * (1.0 - smoothstep(static_cast<double>(t) / std::max(1, w.begin - 2)));
        z = std::max(z, touch + 0.03);
      } else {
        z = touch + (far - touch) * smoothstep(static_cast<double>(t - w.end + 1) / std::max(1, t_count - w.end));
        z = std::max(z, touch + 0.03);
      }
      f.root_translation = Vec3(0.0, 0.0, z);
      f.joint_rotations[0] = facing_back;
      arm_forward(f, false);
      dance_arm(f, true, a, follow_style);
    }
  } else if (spec.name == "walk") {
    const WalkGait gait;
    for (int t = 0; t < t_count; ++t) {
      lead[static_cast<std::size_t>(t)] = walk_pose(model, gait, 0.0, -0.5, t, spec.fps, lead_style);
      follow[static_cast<std::size_t>(t)] = walk_pose(model, gait, 0.5, 0.5, t, spec.fps, follow_style);
    }
  } else {
    throw ConfigError("synth: unknown scenario '" + spec.name + "'");
  }

  out.leader = make_motion(std::move(lead), spec.fps, Subject::leader);
  out.follower = make_motion(std::move(follow), spec.fps, Subject::follower);
  if (spec.random_placement) {
    const double heading = wrap_angle(2.0 * std::numbers::pi * unit(rng));
    const Vec3 shift(2.0 * unit(rng) - 1.0, 0.0, 2.0 * unit(rng) - 1.0);
    out.leader = transform_motion(out.leader, heading, shift);
    out.follower = transform_motion(out.follower, heading, shift);
    out.follower.subject = Subject::follower;
  }
  out.music = metronome(t_count, spec.bpm, spec.fps, spec.seed);
  return out;
}

/// Pulsing motion for rhythm checks: limbs and torso accents of
/// cos(pi * (t - offset) / period), so motion stops exactly at
/// offset + k * period. Standing still at the origin.
inline MotionSequence pulse_motion(int frames, int period, int offset, double fps = 30.0, std::uint64_t seed = 0) {
  using namespace synth_detail;
  std::mt19937_64 rng(seed);
  const DanceStyle style = DanceStyle::random(rng);
  std::vector<PoseFrame> poses(static_cast<std::size_t>(frames));
  for (int t = 0; t < frames; ++t) {
    const double a = accent(t - offset, period);
    for (bool left : {true, false}) dance_arm(poses[static_cast<std::size_t>(t)], left, a, style);
    dance_torso(poses[static_cast<std::size_t>(t)], a, style);
  }
  return make_motion(std::move(poses), fps, Subject::leader);
}

// ---------------------------------------------------------------------------
// Splitting

struct SplitRatios {
  double test = 0.1622;
  double val = 0.0625;
};

struct DatasetSplit {
  std::vector<int> train, val, test;
};

namespace synth_detail {

/// Distributes round(total * ratio) over strata: floors first, then largest
/// remainders (earlier stratum wins ties).
inline std::vector<int> allocate(const std::vector<int>& sizes, double ratio, const std::vector<int>& cap) {
  int total = 0;
  for (int s : sizes) total += s;
  const int target = static_cast<int>(std::lround(total * ratio));
  std::vector<int> quota(sizes.size());
  std::vector<std::pair<double, std::size_t>> rem;
  int assigned = 0;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    const double share = sizes[k] * ratio;
    quota[k] = std::min(cap[k], static_cast<int>(std::floor(share)));
    assigned += quota[k];
    rem.push_back({share - std::floor(share), k});
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < target && k < rem.size(); ++k) {
    const std::size_t s = rem[k].second;
    if (quota[s] < cap[s]) {
      ++quota[s];
      ++assigned;
    }
  }
  return quota;
}

}  // namespace synth_detail

/// Stratified random split. `strata[i]` names the stratum of sample i.
inline DatasetSplit split_dataset(const std::vector<std::string>& strata, const SplitRatios& ratios = {},
                                  std::uint64_t seed = 0) {
  if (ratios.test < 0.0 || ratios.val < 0.0 || ratios.test + ratios.val > 1.0) {
    throw ConfigError("split: ratios must be non-negative and sum to at most 1");
  }
  if (strata.empty()) throw DataError("split: empty dataset");
  std::map<std::string, std::vector<int>> groups;
  for (std::size_t i = 0; i < strata.size(); ++i) {
    if (strata[i].empty()) throw DataError("split: empty stratum name for sample " + std::to_string(i));
    groups[strata[i]].push_back(static_cast<int>(i));
  }
  std::vector<int> sizes;
  for (const auto& [name, members] : groups) sizes.push_back(static_cast<int>(members.size()));
  const std::vector<int> test_quota = synth_detail::allocate(sizes, ratios.test, sizes);
  std::vector<int> left(sizes.size());
  for (std::size_t k = 0; k < sizes.size(); ++k) left[k] = sizes[k] - test_quota[k];
  const std::vector<int> val_quota = synth_detail::allocate(sizes, ratios.val, left);

  std::mt19937_64 rng(seed);
  DatasetSplit split;
  std::size_t k = 0;
  for (auto& [name, members] : groups) {
    std::shuffle(members.begin(), members.end(), rng);
    const auto test_end = members.begin() + test_quota[k];
    const auto val_end = test_end + val_quota[k];
    split.test.insert(split.test.end(), members.begin(), test_end);
    split.val.insert(split.val.end(), test_end, val_end);
    split.train.insert(split.train.end(), val_end, members.end());
    ++k;
  }
  for (auto* part : {&split.train, &split.val, &split.test}) std::sort(part->begin(), part->end());
  return split;
}

}  // namespace interdance
