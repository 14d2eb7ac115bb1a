#pragma once

#include "interdance/body_model.hpp"

namespace interdance {

enum class Subject { leader, follower };

struct MotionSequence {
  std::vector<PoseFrame> frames;
  double fps = 30.0;
  Subject subject = Subject::leader;

  int frame_count() const { return static_cast<int>(frames.size()); }
};

/// A motion pushed through FK and skinning, with the per-frame pelvis heading.
struct RealizedMotion {
  std::vector<PointCloudFrame> frames;
  std::vector<double> yaw;
  double fps = 30.0;

  int frame_count() const { return static_cast<int>(frames.size()); }
};

inline RealizedMotion realize_motion(const BodyModel& model, const MotionSequence& motion) {
  RealizedMotion out;
  out.fps = motion.fps;
  out.frames.reserve(motion.frames.size());
  out.yaw.reserve(motion.frames.size());
  for (const auto& pose : motion.frames) {
    const Transforms transforms = forward_kinematics(model, pose);
    out.frames.push_back({joint_positions(transforms), skin_vertices(model, transforms)});
    out.yaw.push_back(heading_yaw(transforms[0].rotation));
  }
  return out;
}

/// Applies a rotation about +Y by `yaw` followed by a translation to the
/// whole motion. The root rest offset is assumed vertical (it is in the
/// shipped model), so it commutes with the rotation.
inline MotionSequence transform_motion(const MotionSequence& motion, double yaw, const Vec3& translation) {
  const Mat3 r = rotation_y(yaw);
  MotionSequence out = motion;
  for (auto& frame : out.frames) {
    frame.root_translation = r * frame.root_translation + translation;
    frame.joint_rotations[0] =
        axis_angle_from_rotation(r * rotation_from_axis_angle(frame.joint_rotations[0]));
  }
  return out;
}

}  // namespace interdance
