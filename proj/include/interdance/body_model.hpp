#pragma once

// Articulated stand-in body: 55-joint skeleton, 655 skinned surface points,
// and a capsule proxy whose signed distance field replaces a learned one.

#include "interdance/common.hpp"
#include "interdance/geometry.hpp"

#include "json.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <sstream>

namespace interdance {

struct Joint {
  std::string name;
  int parent = -1;  // -1 for the root
  Vec3 offset = Vec3::Zero();  // rest offset from parent; absolute for the root
};

struct SkinWeight {
  int joint = 0;
  double weight = 0.0;
};

struct SurfacePoint {
  Vec3 rest_position = Vec3::Zero();
  std::vector<SkinWeight> skin;  // 1 or 2 entries
};

struct Capsule {
  int a = 0;
  int b = 0;
  double radius = 0.0;
};

struct BodyModel {
  std::vector<Joint> joints;
  std::vector<SurfacePoint> surface_points;
  std::vector<Capsule> capsules;
  std::array<int, 4> foot_joints{};  // left ankle, right ankle, left toe, right toe
  std::array<int, 2> wrists{};       // left, right
  std::vector<int> finger_joints;
  double fps = 30.0;

  // Derived by finalize_body_model().
  std::vector<Vec3> rest_joint_positions;
  std::vector<int> finger_wrist;  // wrist joint per joint, -1 for non-finger joints
};

struct PoseFrame {
  Vec3 root_translation = Vec3::Zero();
  std::array<Vec3, kJointCount> joint_rotations{};  // axis-angle; entry 0 is global

  PoseFrame() { joint_rotations.fill(Vec3::Zero()); }
};

struct PointCloudFrame {
  std::vector<Vec3> joints;    // 55
  std::vector<Vec3> vertices;  // 655

  /// Combined indexing: joints first, then vertices.
  const Vec3& point(int i) const {
    return i < kJointCount ? joints[static_cast<std::size_t>(i)]
                           : vertices[static_cast<std::size_t>(i - kJointCount)];
  }
};

using Transforms = std::vector<RigidTransform>;

/// Body joints of the shipped skeleton (SMPL-X order). Finger chains follow
/// from index 25: left hand 25-39, right hand 40-54.
namespace joint {
inline constexpr int pelvis = 0;
inline constexpr int left_hip = 1;
inline constexpr int right_hip = 2;
inline constexpr int spine1 = 3;
inline constexpr int left_knee = 4;
inline constexpr int right_knee = 5;
inline constexpr int spine2 = 6;
inline constexpr int left_ankle = 7;
inline constexpr int right_ankle = 8;
inline constexpr int spine3 = 9;
inline constexpr int left_foot = 10;
inline constexpr int right_foot = 11;
inline constexpr int neck = 12;
inline constexpr int left_collar = 13;
inline constexpr int right_collar = 14;
inline constexpr int head = 15;
inline constexpr int left_shoulder = 16;
inline constexpr int right_shoulder = 17;
inline constexpr int left_elbow = 18;
inline constexpr int right_elbow = 19;
inline constexpr int left_wrist = 20;
inline constexpr int right_wrist = 21;
}  // namespace joint

namespace detail {

[[noreturn]] inline void model_error(const std::string& field, const std::string& what) {
  throw DataError("body model: " + field + ": " + what);
}

}  // namespace detail

/// Checks every structural invariant; throws DataError naming the field.
inline void validate_body_model(const BodyModel& m) {
  using detail::model_error;
  if (m.joints.size() != kJointCount) model_error("joints", "joint count must be 55");
  if (m.surface_points.size() != kSurfacePointCount) {
    model_error("surface_points", "surface point count must be 655");
  }
  int roots = 0;
  for (std::size_t i = 0; i < m.joints.size(); ++i) {
    const int parent = m.joints[i].parent;
    const std::string field = "joints[" + std::to_string(i) + "].parent";
    if (parent < 0) {
      ++roots;
      continue;
    }
    if (parent >= static_cast<int>(i)) {
      model_error(field, "parent index must precede child (cyclic or unsorted hierarchy)");
    }
    if (!m.joints[i].offset.allFinite()) model_error(field, "non-finite offset");
  }
  if (roots != 1 || m.joints[0].parent >= 0) {
    model_error("joints", "exactly one root joint (index 0) is required");
  }
  for (std::size_t i = 0; i < m.surface_points.size(); ++i) {
    const auto& p = m.surface_points[i];
    const std::string field = "surface_points[" + std::to_string(i) + "]";
    if (p.skin.empty() || p.skin.size() > 2) model_error(field, "1 or 2 skinning pairs required");
    double sum = 0.0;
    for (const auto& w : p.skin) {
      if (w.joint < 0 || w.joint >= kJointCount) model_error(field, "skinning joint out of range");
      if (!(w.weight >= 0.0 && w.weight <= 1.0)) model_error(field, "weights must lie in [0,1]");
      sum += w.weight;
    }
    if (std::abs(sum - 1.0) > 1e-9) model_error(field, "weights must sum to 1");
    if (!p.rest_position.allFinite()) model_error(field, "non-finite rest position");
  }
  if (m.capsules.empty()) model_error("capsules", "at least one capsule required");
  for (std::size_t i = 0; i < m.capsules.size(); ++i) {
    const auto& c = m.capsules[i];
    const std::string field = "capsules[" + std::to_string(i) + "]";
    if (c.a < 0 || c.a >= kJointCount || c.b < 0 || c.b >= kJointCount) {
      model_error(field, "joint index out of range");
    }
    if (!(c.radius > 0.0)) model_error(field, "radius must be > 0");
  }
  for (int j : m.foot_joints) {
    if (j < 0 || j >= kJointCount) model_error("foot_joints", "index out of range");
  }
  for (int j : m.wrists) {
    if (j < 0 || j >= kJointCount) model_error("wrists", "index out of range");
  }
  if (m.finger_joints.size() != kFingerJointCount) {
    model_error("finger_joints", "finger joint count must be 30");
  }
  for (int j : m.finger_joints) {
    if (j < 0 || j >= kJointCount) model_error("finger_joints", "index out of range");
    int cursor = j;
    while (cursor >= 0 && cursor != m.wrists[0] && cursor != m.wrists[1]) {
      cursor = m.joints[static_cast<std::size_t>(cursor)].parent;
    }
    if (cursor < 0) model_error("finger_joints", "finger joint " + std::to_string(j) + " has no wrist ancestor");
  }
  if (!(m.fps > 0.0)) model_error("fps", "must be > 0");
}

/// Computes derived fields. Call after validate_body_model().
inline void finalize_body_model(BodyModel& m) {
  m.rest_joint_positions.assign(kJointCount, Vec3::Zero());
  for (int i = 0; i < kJointCount; ++i) {
    const auto& j = m.joints[static_cast<std::size_t>(i)];
    m.rest_joint_positions[static_cast<std::size_t>(i)] =
        j.parent < 0 ? j.offset : m.rest_joint_positions[static_cast<std::size_t>(j.parent)] + j.offset;
  }
  m.finger_wrist.assign(kJointCount, -1);
  for (int j : m.finger_joints) {
    int cursor = j;
    while (cursor != m.wrists[0] && cursor != m.wrists[1]) {
      cursor = m.joints[static_cast<std::size_t>(cursor)].parent;
    }
    m.finger_wrist[static_cast<std::size_t>(j)] = cursor;
  }
}

inline nlohmann::json body_model_to_json(const BodyModel& m) {
  using nlohmann::json;
  auto vec = [](const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); };
  json out;
  out["fps"] = m.fps;
  out["joints"] = json::array();
  for (const auto& j : m.joints) {
    out["joints"].push_back({{"name", j.name},
                             {"parent", j.parent < 0 ? json(nullptr) : json(j.parent)},
                             {"offset", vec(j.offset)}});
  }
  out["surface_points"] = json::array();
  for (const auto& p : m.surface_points) {
    json skin = json::array();
    for (const auto& w : p.skin) skin.push_back(json::array({w.joint, w.weight}));
    out["surface_points"].push_back({{"position", vec(p.rest_position)}, {"skin", skin}});
  }
  out["capsules"] = json::array();
  for (const auto& c : m.capsules) {
    out["capsules"].push_back({{"a", c.a}, {"b", c.b}, {"radius", c.radius}});
  }
  out["foot_joints"] = m.foot_joints;
  out["wrists"] = m.wrists;
  out["finger_joints"] = m.finger_joints;
  return out;
}

inline BodyModel body_model_from_json(const nlohmann::json& in) {
  using detail::model_error;
  BodyModel m;
  auto read_vec = [](const nlohmann::json& v, const std::string& field) {
    if (!v.is_array() || v.size() != 3) model_error(field, "expected a 3-vector");
    return Vec3(v[0].get<double>(), v[1].get<double>(), v[2].get<double>());
  };
  try {
    for (const char* key : {"fps", "joints", "surface_points", "capsules", "foot_joints", "wrists",
                            "finger_joints"}) {
      if (!in.contains(key)) model_error(key, "missing");
    }
    m.fps = in.at("fps").get<double>();
    const auto& joints = in.at("joints");
    for (std::size_t i = 0; i < joints.size(); ++i) {
      const auto& j = joints[i];
      const std::string field = "joints[" + std::to_string(i) + "]";
      Joint joint;
      joint.name = j.at("name").get<std::string>();
      joint.parent = j.at("parent").is_null() ? -1 : j.at("parent").get<int>();
      joint.offset = read_vec(j.at("offset"), field + ".offset");
      m.joints.push_back(std::move(joint));
    }
    const auto& points = in.at("surface_points");
    for (std::size_t i = 0; i < points.size(); ++i) {
      const auto& p = points[i];
      const std::string field = "surface_points[" + std::to_string(i) + "]";
      SurfacePoint sp;
      sp.rest_position = read_vec(p.at("position"), field + ".position");
      for (const auto& pair : p.at("skin")) {
        if (!pair.is_array() || pair.size() != 2) model_error(field + ".skin", "expected [joint, weight] pairs");
        sp.skin.push_back({pair[0].get<int>(), pair[1].get<double>()});
      }
      m.surface_points.push_back(std::move(sp));
    }
    for (const auto& c : in.at("capsules")) {
      m.capsules.push_back({c.at("a").get<int>(), c.at("b").get<int>(), c.at("radius").get<double>()});
    }
    const auto& feet = in.at("foot_joints");
    if (feet.size() != 4) model_error("foot_joints", "expected 4 indices");
    for (std::size_t i = 0; i < 4; ++i) m.foot_joints[i] = feet[i].get<int>();
    const auto& wrists = in.at("wrists");
    if (wrists.size() != 2) model_error("wrists", "expected 2 indices");
    for (std::size_t i = 0; i < 2; ++i) m.wrists[i] = wrists[i].get<int>();
    m.finger_joints = in.at("finger_joints").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("body model: schema violation: ") + e.what());
  }
  validate_body_model(m);
  finalize_body_model(m);
  return m;
}

inline BodyModel load_body_model(const std::string& path) {
  std::ifstream file(path);
  if (!file) throw DataError("body model: cannot open " + path);
  nlohmann::json doc;
  try {
    file >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("body model: " + path + ": parse error: " + e.what());
  }
  return body_model_from_json(doc);
}

/// Path of the shipped model, baked in at configure time.
inline std::string default_body_model_path() {
#ifdef INTERDANCE_DATA_DIR
  return std::string(INTERDANCE_DATA_DIR) + "/body_model.json";
#else
  return "data/body_model.json";
#endif
}

inline const BodyModel& default_body_model() {
  static const BodyModel model = load_body_model(default_body_model_path());
  return model;
}

// ---------------------------------------------------------------------------
// Kinematics

/// Global joint transforms. The root sits at root_translation + its rest offset.
inline Transforms forward_kinematics(const BodyModel& model, const PoseFrame& pose) {
  Transforms global(kJointCount);
  global[0].rotation = rotation_from_axis_angle(pose.joint_rotations[0]);
  global[0].translation = pose.root_translation + model.joints[0].offset;
  for (int i = 1; i < kJointCount; ++i) {
    const auto& joint = model.joints[static_cast<std::size_t>(i)];
    const RigidTransform local{rotation_from_axis_angle(pose.joint_rotations[static_cast<std::size_t>(i)]),
                               joint.offset};
    global[static_cast<std::size_t>(i)] = global[static_cast<std::size_t>(joint.parent)].compose(local);
  }
  return global;
}

inline std::vector<Vec3> joint_positions(const Transforms& transforms) {
  std::vector<Vec3> out;
  out.reserve(transforms.size());
  for (const auto& t : transforms) out.push_back(t.translation);
  return out;
}

/// Linear blend skinning of the rest-pose surface points.
inline std::vector<Vec3> skin_vertices(const BodyModel& model, const Transforms& transforms) {
  std::vector<Vec3> out(model.surface_points.size(), Vec3::Zero());
  for (std::size_t i = 0; i < model.surface_points.size(); ++i) {
    const auto& p = model.surface_points[i];
    for (const auto& w : p.skin) {
      const auto j = static_cast<std::size_t>(w.joint);
      const Vec3 local = p.rest_position - model.rest_joint_positions[j];
      out[i] += w.weight * transforms[j].apply(local);
    }
  }
  return out;
}

inline PointCloudFrame realize_points(const BodyModel& model, const PoseFrame& pose) {
  const Transforms transforms = forward_kinematics(model, pose);
  return {joint_positions(transforms), skin_vertices(model, transforms)};
}

// ---------------------------------------------------------------------------
// Capsule signed distance field

struct SdfSample {
  double distance = std::numeric_limits<double>::infinity();
  Vec3 gradient = Vec3::Zero();
  int capsule = -1;
};

/// Signed distance to the union of capsules spanned between global joint
/// positions. Exact ties resolve to the lowest capsule index.
inline SdfSample capsule_sdf(const BodyModel& model, std::span<const Vec3> joints, const Vec3& query) {
  SdfSample best;
  for (std::size_t c = 0; c < model.capsules.size(); ++c) {
    const auto& cap = model.capsules[c];
    const Vec3& a = joints[static_cast<std::size_t>(cap.a)];
    const Vec3& b = joints[static_cast<std::size_t>(cap.b)];
    const Vec3 ab = b - a;
    const double len2 = ab.squaredNorm();
    const double t = len2 > 0.0 ? std::clamp((query - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
    const Vec3 nearest = a + t * ab;
    const Vec3 diff = query - nearest;
    const double dist = diff.norm();
    const double sdf = dist - cap.radius;
    if (sdf < best.distance) {
      best.distance = sdf;
      best.capsule = static_cast<int>(c);
      if (dist > 0.0) {
        best.gradient = diff / dist;
      } else {
        best.gradient = len2 > 0.0 ? any_perpendicular(ab) : Vec3::UnitY();
      }
    }
  }
  return best;
}

inline SdfSample capsule_sdf(const BodyModel& model, const Transforms& transforms, const Vec3& query) {
  const std::vector<Vec3> joints = joint_positions(transforms);
  return capsule_sdf(model, std::span<const Vec3>(joints), query);
}

}  // namespace interdance
