#pragma once

// Independent reference implementations used by the tests. Deliberately
// naive: plain loops, no bounding boxes, no shared helpers from the library
// beyond the data types.

#include "interdance/body_model.hpp"
#include "interdance/motion.hpp"

#include <random>

namespace oracle {

using interdance::BodyModel;
using interdance::PointCloudFrame;
using interdance::Vec3;

inline double segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 d = b - a;
  double t = 0.0;
  const double dd = d.dot(d);
  if (dd > 0.0) t = (p - a).dot(d) / dd;
  if (t < 0.0) t = 0.0;
  if (t > 1.0) t = 1.0;
  return (p - (a + t * d)).norm();
}

inline double capsule_union_sdf(const BodyModel& model, const std::vector<Vec3>& joints, const Vec3& p) {
  double best = 1e300;
  for (const auto& c : model.capsules) {
    const double s = segment_distance(p, joints[static_cast<std::size_t>(c.a)], joints[static_cast<std::size_t>(c.b)]) -
                     c.radius;
    if (s < best) best = s;
  }
  return best;
}

struct ContactCounts {
  int contact_frames = 0;
  long leader_vertices = 0;
  long follower_vertices = 0;
  long penetrating = 0;
};

/// Surface vertex in contact: some partner surface vertex strictly closer
/// than `threshold` (squared distances compared).
inline ContactCounts contact_counts(const BodyModel& model, const std::vector<PointCloudFrame>& leader,
                                    const std::vector<PointCloudFrame>& follower, double threshold = 0.01) {
  ContactCounts c;
  const double t2 = threshold * threshold;
  for (std::size_t t = 0; t < leader.size(); ++t) {
    const auto& L = leader[t].vertices;
    const auto& F = follower[t].vertices;
    int lead_here = 0;
    for (const auto& v : L) {
      bool hit = false;
      for (const auto& w : F) hit = hit || (v - w).squaredNorm() < t2;
      lead_here += hit ? 1 : 0;
    }
    for (const auto& w : F) {
      bool hit = false;
      for (const auto& v : L) hit = hit || (w - v).squaredNorm() < t2;
      c.follower_vertices += hit ? 1 : 0;
      if (capsule_union_sdf(model, leader[t].joints, w) < 0.0) ++c.penetrating;
    }
    c.leader_vertices += lead_here;
    if (lead_here > 0) ++c.contact_frames;
  }
  return c;
}

/// Random but plausible poses: every joint rotated by up to `magnitude`
/// radians about a random axis, root anywhere in a 4 m square.
inline interdance::MotionSequence random_motion(int frames, std::mt19937_64& rng, double magnitude = 0.6,
                                                double fps = 30.0) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  interdance::MotionSequence m;
  m.fps = fps;
  for (int t = 0; t < frames; ++t) {
    interdance::PoseFrame p;
    p.root_translation = Vec3(2.0 * u(rng), 0.9 + 0.1 * u(rng), 2.0 * u(rng));
    for (auto& r : p.joint_rotations) r = magnitude * Vec3(u(rng), u(rng), u(rng)) / std::sqrt(3.0);
    p.joint_rotations[0] = Vec3(0.3 * u(rng), 3.0 * u(rng), 0.3 * u(rng));
    m.frames.push_back(p);
  }
  return m;
}

}  // namespace oracle
