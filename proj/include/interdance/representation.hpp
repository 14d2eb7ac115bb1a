#pragma once

// Canonical interaction-aware motion representation.
//
// One row per frame, 4981 channels:
//   [0,3)        root position (m)
//   [3]          yaw (rad, wrapped to (-pi, pi])
//   [4]          yaw velocity (rad/frame)
//   [5,7)        planar root velocity x, z in the canonical frame (m/frame)
//   [7,172)      joint offsets, 55x3 (fingers relative to their wrist)
//   [172,2137)   surface point offsets, 655x3
//   [2137,2302)  joint offset velocities
//   [2302,4267)  surface point offset velocities
//   [4267,4271)  foot-ground contact, 4 binary labels
//   [4271,4981)  person contact, 710 binary labels (joints, then points)

#include "interdance/body_model.hpp"
#include "interdance/motion.hpp"

#include <cstdint>

namespace interdance {

namespace layout {
inline constexpr int root_position = 0;
inline constexpr int yaw = 3;
inline constexpr int yaw_velocity = 4;
inline constexpr int root_velocity = 5;
inline constexpr int joint_offsets = 7;
inline constexpr int vertex_offsets = joint_offsets + 3 * kJointCount;
inline constexpr int joint_velocities = vertex_offsets + 3 * kSurfacePointCount;
inline constexpr int vertex_velocities = joint_velocities + 3 * kJointCount;
inline constexpr int foot_contact = vertex_velocities + 3 * kSurfacePointCount;
inline constexpr int person_contact = foot_contact + 4;
inline constexpr int channels = person_contact + kPointCount;

/// Column of the x coordinate of point i (joints first, then surface points).
inline constexpr int offset_column(int point) { return joint_offsets + 3 * point; }
inline constexpr int velocity_column(int point) { return joint_velocities + 3 * point; }

static_assert(vertex_offsets == 172);
static_assert(joint_velocities == 2137);
static_assert(vertex_velocities == 2302);
static_assert(foot_contact == 4267);
static_assert(person_contact == 4271);
static_assert(channels == 7 + 165 + 1965 + 165 + 1965 + 4 + 710);
static_assert(channels == 4981);
}  // namespace layout

struct RepSequence {
  Matrix data;  // T x 4981
  double fps = 30.0;

  int frame_count() const { return static_cast<int>(data.rows()); }
};

struct ContactThresholds {
  double foot_height = 0.08;         // m
  double foot_speed_at_30fps = 0.010;  // m/frame, scaled by 30/fps
  double person_distance = 0.01;     // m
};

using ContactLabels = std::vector<std::uint8_t>;

// ---------------------------------------------------------------------------
// Contact detection

/// T x 4 matrix of 0/1 foot-ground labels. The floor is y = 0.
inline Matrix detect_foot_contact(const std::vector<PointCloudFrame>& frames, const BodyModel& model,
                                  double fps, const ContactThresholds& thresholds = {}) {
  const int t_count = static_cast<int>(frames.size());
  Matrix labels = Matrix::Zero(t_count, 4);
  const double speed_limit = thresholds.foot_speed_at_30fps * 30.0 / fps;
  for (int t = 0; t < t_count; ++t) {
    // the last frame reuses the previous forward difference
    const int t0 = t + 1 < t_count ? t : t - 1;
    for (int k = 0; k < 4; ++k) {
      const auto j = static_cast<std::size_t>(model.foot_joints[static_cast<std::size_t>(k)]);
      const Vec3& p = frames[static_cast<std::size_t>(t)].joints[j];
      double speed = 0.0;
      if (t0 >= 0 && t0 + 1 < t_count) {
        speed = (frames[static_cast<std::size_t>(t0 + 1)].joints[j] - frames[static_cast<std::size_t>(t0)].joints[j]).norm();
      }
      labels(t, k) = (p.y() < thresholds.foot_height && speed < speed_limit) ? 1.0 : 0.0;
    }
  }
  return labels;
}

namespace detail {

struct Aabb {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());

  void grow(const Vec3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  bool near(const Vec3& p, double margin) const {
    return (p.array() >= lo.array() - margin).all() && (p.array() <= hi.array() + margin).all();
  }
};

}  // namespace detail

/// Label i is 1 iff point i of `self` (joints, then surface points) lies
/// within `threshold` of any surface point of `other`.
inline ContactLabels detect_person_contact(const PointCloudFrame& self, const PointCloudFrame& other,
                                           double threshold = ContactThresholds{}.person_distance) {
  ContactLabels labels(kPointCount, 0);
  detail::Aabb box;
  for (const auto& v : other.vertices) box.grow(v);
  const double limit2 = threshold * threshold;
  for (int i = 0; i < kPointCount; ++i) {
    const Vec3& p = self.point(i);
    if (!box.near(p, threshold)) continue;
    for (const auto& v : other.vertices) {
      if ((p - v).squaredNorm() < limit2) {
        labels[static_cast<std::size_t>(i)] = 1;
        break;
      }
    }
  }
  return labels;
}

// ---------------------------------------------------------------------------
// Encode / decode

/// Encodes `self` against its partner `other`. Both must be realized with the
/// same frame count and rate.
inline RepSequence encode_realized(const RealizedMotion& self, const RealizedMotion& other,
                                   const BodyModel& model, const ContactThresholds& thresholds = {}) {
  const int t_count = self.frame_count();
  if (other.frame_count() != t_count) {
    throw DataError("encode: frame count mismatch (" + std::to_string(t_count) + " vs " +
                    std::to_string(other.frame_count()) + ")");
  }
  if (self.fps != other.fps) throw DataError("encode: fps mismatch");
  if (t_count < 1) throw DataError("encode: empty motion");

  RepSequence rep;
  rep.fps = self.fps;
  rep.data = Matrix::Zero(t_count, layout::channels);
  Matrix& x = rep.data;

  for (int t = 0; t < t_count; ++t) {
    const auto& frame = self.frames[static_cast<std::size_t>(t)];
    const Vec3 root = frame.joints[0];
    const double yaw = wrap_angle(self.yaw[static_cast<std::size_t>(t)]);
    const Mat3 to_canonical = rotation_y(-yaw);
    x.block<1, 3>(t, layout::root_position) = root.transpose();
    x(t, layout::yaw) = yaw;
    for (int i = 0; i < kPointCount; ++i) {
      Vec3 anchor = root;
      if (i < kJointCount) {
        const int wrist = model.finger_wrist[static_cast<std::size_t>(i)];
        if (wrist >= 0) anchor = frame.joints[static_cast<std::size_t>(wrist)];
      }
      x.block<1, 3>(t, layout::offset_column(i)) = (to_canonical * (frame.point(i) - anchor)).transpose();
    }
  }

  for (int t = 0; t < t_count; ++t) {
    const int t0 = t + 1 < t_count ? t : t - 1;
    if (t0 < 0) continue;  // single frame: velocities stay zero
    x(t, layout::yaw_velocity) = wrap_angle(x(t0 + 1, layout::yaw) - x(t0, layout::yaw));
    const Vec3 step = (x.block<1, 3>(t0 + 1, layout::root_position) - x.block<1, 3>(t0, layout::root_position)).transpose();
    const Vec3 local = rotation_y(-x(t0, layout::yaw)) * step;
    x(t, layout::root_velocity) = local.x();
    x(t, layout::root_velocity + 1) = local.z();
    constexpr int n = 3 * kPointCount;
    x.block(t, layout::joint_velocities, 1, n) =
        x.block(t0 + 1, layout::joint_offsets, 1, n) - x.block(t0, layout::joint_offsets, 1, n);
  }

  const Matrix foot = detect_foot_contact(self.frames, model, self.fps, thresholds);
  x.block(0, layout::foot_contact, t_count, 4) = foot;
  for (int t = 0; t < t_count; ++t) {
    const ContactLabels labels = detect_person_contact(self.frames[static_cast<std::size_t>(t)],
                                                       other.frames[static_cast<std::size_t>(t)],
                                                       thresholds.person_distance);
    for (int i = 0; i < kPointCount; ++i) x(t, layout::person_contact + i) = labels[static_cast<std::size_t>(i)];
  }
  return rep;
}

inline RepSequence encode(const MotionSequence& self, const MotionSequence& other, const BodyModel& model,
                          const ContactThresholds& thresholds = {}) {
  if (self.frame_count() != other.frame_count()) {
    throw DataError("encode: frame count mismatch (" + std::to_string(self.frame_count()) + " vs " +
                    std::to_string(other.frame_count()) + ")");
  }
  if (self.fps != other.fps) throw DataError("encode: fps mismatch");
  return encode_realized(realize_motion(model, self), realize_motion(model, other), model, thresholds);
}

/// Global position of point i in frame t. Contact and velocity channels are ignored.
inline Vec3 decode_point(const Matrix& x, int t, int i, const BodyModel& model) {
  const Vec3 root = x.block<1, 3>(t, layout::root_position).transpose();
  const Mat3 r = rotation_y(x(t, layout::yaw));
  Vec3 offset = x.block<1, 3>(t, layout::offset_column(i)).transpose();
  if (i < kJointCount) {
    const int wrist = model.finger_wrist[static_cast<std::size_t>(i)];
    if (wrist >= 0) offset += x.block<1, 3>(t, layout::offset_column(wrist)).transpose();
  }
  return root + r * offset;
}

inline PointCloudFrame decode_frame(const Matrix& x, int t, const BodyModel& model) {
  const Vec3 root = x.block<1, 3>(t, layout::root_position).transpose();
  const Mat3 r = rotation_y(x(t, layout::yaw));
  PointCloudFrame frame;
  frame.joints.resize(kJointCount);
  frame.vertices.resize(kSurfacePointCount);
  for (int j = 0; j < kJointCount; ++j) {
    frame.joints[static_cast<std::size_t>(j)] = root + r * x.block<1, 3>(t, layout::offset_column(j)).transpose();
  }
  for (int j : model.finger_joints) {
    const auto wrist = static_cast<std::size_t>(model.finger_wrist[static_cast<std::size_t>(j)]);
    frame.joints[static_cast<std::size_t>(j)] += frame.joints[wrist] - root;
  }
  for (int v = 0; v < kSurfacePointCount; ++v) {
    frame.vertices[static_cast<std::size_t>(v)] =
        root + r * x.block<1, 3>(t, layout::offset_column(kJointCount + v)).transpose();
  }
  return frame;
}

inline std::vector<PointCloudFrame> decode(const RepSequence& rep, const BodyModel& model) {
  std::vector<PointCloudFrame> frames;
  frames.reserve(static_cast<std::size_t>(rep.frame_count()));
  for (int t = 0; t < rep.frame_count(); ++t) frames.push_back(decode_frame(rep.data, t, model));
  return frames;
}

/// Per-frame gradient with respect to decoded points: 710 vectors per frame.
using PointGradients = std::vector<std::vector<Vec3>>;

inline PointGradients zero_point_gradients(int frame_count) {
  return PointGradients(static_cast<std::size_t>(frame_count), std::vector<Vec3>(kPointCount, Vec3::Zero()));
}

/// Pulls point gradients back through decode. Offsets always receive
/// gradient; root and yaw only when `include_root_yaw` is set.
inline Matrix decode_backward(const Matrix& x, const PointGradients& grad, const BodyModel& model,
                              bool include_root_yaw) {
  Matrix out = Matrix::Zero(x.rows(), x.cols());
  for (int t = 0; t < x.rows(); ++t) {
    const auto& g = grad[static_cast<std::size_t>(t)];
    const double yaw = x(t, layout::yaw);
    const Mat3 rt = rotation_y(yaw).transpose();
    const Mat3 dr = rotation_y_derivative(yaw);
    Vec3 root_grad = Vec3::Zero();
    double yaw_grad = 0.0;
    for (int i = 0; i < kPointCount; ++i) {
      const Vec3& gi = g[static_cast<std::size_t>(i)];
      if (gi.isZero(0.0)) continue;
      const Vec3 local = rt * gi;
      out.block<1, 3>(t, layout::offset_column(i)) += local.transpose();
      Vec3 offset = x.block<1, 3>(t, layout::offset_column(i)).transpose();
      if (i < kJointCount) {
        const int wrist = model.finger_wrist[static_cast<std::size_t>(i)];
        if (wrist >= 0) {
          out.block<1, 3>(t, layout::offset_column(wrist)) += local.transpose();
          offset += x.block<1, 3>(t, layout::offset_column(wrist)).transpose();
        }
      }
      if (include_root_yaw) {
        root_grad += gi;
        yaw_grad += gi.dot(dr * offset);
      }
    }
    if (include_root_yaw) {
      out.block<1, 3>(t, layout::root_position) = root_grad.transpose();
      out(t, layout::yaw) = yaw_grad;
    }
  }
  return out;
}

/// Binary labels read back from a (possibly continuous) representation.
inline ContactLabels person_contact_labels(const Matrix& x, int t) {
  ContactLabels labels(kPointCount, 0);
  for (int i = 0; i < kPointCount; ++i) labels[static_cast<std::size_t>(i)] = x(t, layout::person_contact + i) >= 0.5 ? 1 : 0;
  return labels;
}

}  // namespace interdance
