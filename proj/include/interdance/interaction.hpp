#pragma once

// Per-frame interaction objectives shared by the training losses and the
// sampling-time guidance: the masked nearest-distance contact term and the
// capsule penetration cost.

#include "interdance/body_model.hpp"
#include "interdance/representation.hpp"

namespace interdance {

struct NearestPoint {
  int index = -1;
  double distance2 = std::numeric_limits<double>::infinity();
};

/// Nearest of the 710 points of `frame` to `query`; lowest index wins ties.
inline NearestPoint nearest_point(const PointCloudFrame& frame, const Vec3& query) {
  NearestPoint best;
  for (int i = 0; i < kPointCount; ++i) {
    const double d2 = (frame.point(i) - query).squaredNorm();
    if (d2 < best.distance2) best = {i, d2};
  }
  return best;
}

/// sum_i c_l[i] * min_j |l_i - f_j|^2 + sum_j c_f[j] * min_i |f_j - l_i|^2.
/// Gradient with respect to the follower points is added into `follower_grad`
/// (scaled by `scale`) when non-null. Labels are treated as constants.
inline double contact_term(const PointCloudFrame& leader, const PointCloudFrame& follower,
                           const ContactLabels& leader_labels, const ContactLabels& follower_labels,
                           std::vector<Vec3>* follower_grad = nullptr, double scale = 1.0) {
  double value = 0.0;
  for (int i = 0; i < kPointCount; ++i) {
    if (!leader_labels[static_cast<std::size_t>(i)]) continue;
    const Vec3& p = leader.point(i);
    const NearestPoint n = nearest_point(follower, p);
    value += n.distance2;
    if (follower_grad) {
      (*follower_grad)[static_cast<std::size_t>(n.index)] += scale * 2.0 * (follower.point(n.index) - p);
    }
  }
  for (int j = 0; j < kPointCount; ++j) {
    if (!follower_labels[static_cast<std::size_t>(j)]) continue;
    const Vec3& q = follower.point(j);
    const NearestPoint n = nearest_point(leader, q);
    value += n.distance2;
    if (follower_grad) (*follower_grad)[static_cast<std::size_t>(j)] += scale * 2.0 * (q - leader.point(n.index));
  }
  return value;
}

/// Label-masked mean nearest distance (not squared), the quantity contact
/// guidance is meant to shrink. Zero when no label is set.
inline double masked_min_distance(const PointCloudFrame& leader, const PointCloudFrame& follower,
                                  const ContactLabels& leader_labels, const ContactLabels& follower_labels) {
  double sum = 0.0;
  int count = 0;
  for (int i = 0; i < kPointCount; ++i) {
    if (!leader_labels[static_cast<std::size_t>(i)]) continue;
    sum += std::sqrt(nearest_point(follower, leader.point(i)).distance2);
    ++count;
  }
  for (int j = 0; j < kPointCount; ++j) {
    if (!follower_labels[static_cast<std::size_t>(j)]) continue;
    sum += std::sqrt(nearest_point(leader, follower.point(j)).distance2);
    ++count;
  }
  return count == 0 ? 0.0 : sum / count;
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// Sum over penetrating follower points of sigmoid(-sdf / sharpness), with
/// sdf taken against the leader's capsules. The penetration indicator is
/// frozen when differentiating. Callers normalise by the point count.
inline double penetration_term(const BodyModel& model, std::span<const Vec3> leader_joints,
                               const PointCloudFrame& follower, double sharpness,
                               std::vector<Vec3>* follower_grad = nullptr, double scale = 1.0) {
  double value = 0.0;
  for (int i = 0; i < kPointCount; ++i) {
    const SdfSample s = capsule_sdf(model, leader_joints, follower.point(i));
    if (!(s.distance < 0.0)) continue;
    const double sig = sigmoid(-s.distance / sharpness);
    value += sig;
    if (follower_grad) {
      (*follower_grad)[static_cast<std::size_t>(i)] += scale * (-sig * (1.0 - sig) / sharpness) * s.gradient;
    }
  }
  return value;
}

}  // namespace interdance
