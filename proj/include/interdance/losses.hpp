#pragma once

// Training objective for the x0-predicting denoiser: reconstruction plus the
// velocity, acceleration, foot, distance-matrix, relative-orientation and
// contact terms, each with its gradient with respect to the prediction.

#include "interdance/interaction.hpp"
#include "interdance/representation.hpp"

namespace interdance {

struct LossWeights {
  double vel = 1.0;
  double acc = 1.0;
  double dm = 0.5;
  double ro = 0.5;
  double foot = 0.5;
  double con = 1.0;
  double distance_threshold = 1.0;  // M-bar, metres
};

struct LossBreakdown {
  double recon = 0.0;
  double vel = 0.0;
  double acc = 0.0;
  double foot = 0.0;
  double dm = 0.0;
  double ro = 0.0;
  double con = 0.0;
  double total = 0.0;

  LossBreakdown& operator+=(const LossBreakdown& o) {
    recon += o.recon;
    vel += o.vel;
    acc += o.acc;
    foot += o.foot;
    dm += o.dm;
    ro += o.ro;
    con += o.con;
    total += o.total;
    return *this;
  }
  LossBreakdown scaled(double s) const {
    return {recon * s, vel * s, acc * s, foot * s, dm * s, ro * s, con * s, total * s};
  }
};

inline double weighted_total(const LossBreakdown& l, const LossWeights& w) {
  return l.recon + w.vel * l.vel + w.acc * l.acc + w.dm * l.dm + w.ro * l.ro + w.con * l.con + w.foot * l.foot;
}

struct LossResult {
  LossBreakdown losses;
  Matrix gradient;  // d total / d prediction, T x 4981
};

/// Leader-follower joint distance matrix entry.
inline double joint_distance(const PointCloudFrame& leader, const PointCloudFrame& follower, int i, int j) {
  return (leader.joints[static_cast<std::size_t>(i)] - follower.joints[static_cast<std::size_t>(j)]).norm();
}

/// Evaluates every loss term for one follower prediction against ground
/// truth, with `leader` as the partner. Set `with_gradient` to also get
/// d total / d pred.
inline LossResult compute_losses(const RepSequence& pred, const RepSequence& gt, const RepSequence& leader,
                                 const BodyModel& model, const LossWeights& w, bool with_gradient = true) {
  const int t_count = pred.frame_count();
  if (gt.frame_count() != t_count || leader.frame_count() != t_count || pred.data.cols() != layout::channels ||
      gt.data.cols() != layout::channels || leader.data.cols() != layout::channels) {
    throw DataError("compute_losses: shape mismatch");
  }
  LossResult result;
  LossBreakdown& l = result.losses;

  const Matrix diff = pred.data - gt.data;
  l.recon = diff.squaredNorm() / static_cast<double>(diff.size());
  if (with_gradient) result.gradient = (2.0 / static_cast<double>(diff.size())) * diff;

  const auto p_hat = decode(pred, model);
  const auto p_gt = decode(gt, model);
  const auto p_lead = decode(leader, model);
  PointGradients g = zero_point_gradients(t_count);
  auto grad_at = [&g](int t, int i) -> Vec3& { return g[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)]; };
  auto pt = [](const std::vector<PointCloudFrame>& f, int t, int i) -> const Vec3& {
    return f[static_cast<std::size_t>(t)].point(i);
  };

  // velocity
  if (t_count >= 2) {
    const double norm = 3.0 * kPointCount * (t_count - 1);
    for (int t = 0; t + 1 < t_count; ++t) {
      for (int i = 0; i < kPointCount; ++i) {
        const Vec3 e = (pt(p_hat, t + 1, i) - pt(p_hat, t, i)) - (pt(p_gt, t + 1, i) - pt(p_gt, t, i));
        l.vel += e.squaredNorm() / norm;
        if (with_gradient) {
          const Vec3 ge = (w.vel * 2.0 / norm) * e;
          grad_at(t + 1, i) += ge;
          grad_at(t, i) -= ge;
        }
      }
    }
  }
  // acceleration
  if (t_count >= 3) {
    const double norm = 3.0 * kPointCount * (t_count - 2);
    for (int t = 0; t + 2 < t_count; ++t) {
      for (int i = 0; i < kPointCount; ++i) {
        const Vec3 e = (pt(p_hat, t + 2, i) - 2.0 * pt(p_hat, t + 1, i) + pt(p_hat, t, i)) -
                       (pt(p_gt, t + 2, i) - 2.0 * pt(p_gt, t + 1, i) + pt(p_gt, t, i));
        l.acc += e.squaredNorm() / norm;
        if (with_gradient) {
          const Vec3 ge = (w.acc * 2.0 / norm) * e;
          grad_at(t + 2, i) += ge;
          grad_at(t + 1, i) -= 2.0 * ge;
          grad_at(t, i) += ge;
        }
      }
    }
  }
  // foot: predicted foot speed where the prediction claims ground contact
  if (t_count >= 2) {
    const double norm = 4.0 * (t_count - 1);
    for (int t = 0; t + 1 < t_count; ++t) {
      for (int k = 0; k < 4; ++k) {
        if (pred.data(t, layout::foot_contact + k) < 0.5) continue;
        const int j = model.foot_joints[static_cast<std::size_t>(k)];
        const Vec3 v = pt(p_hat, t + 1, j) - pt(p_hat, t, j);
        const double speed = v.norm();
        l.foot += speed / norm;
        if (with_gradient && speed > 0.0) {
          const Vec3 gv = (w.foot / norm / speed) * v;
          grad_at(t + 1, j) += gv;
          grad_at(t, j) -= gv;
        }
      }
    }
  }
  // distance matrix, masked to proximate ground-truth pairs
  {
    const double norm = static_cast<double>(t_count) * kJointCount * kJointCount;
    for (int t = 0; t < t_count; ++t) {
      const auto& lead = p_lead[static_cast<std::size_t>(t)];
      for (int i = 0; i < kJointCount; ++i) {
        for (int j = 0; j < kJointCount; ++j) {
          const double m_gt = joint_distance(lead, p_gt[static_cast<std::size_t>(t)], i, j);
          if (!(m_gt < w.distance_threshold)) continue;
          const Vec3 d = pt(p_hat, t, j) - lead.joints[static_cast<std::size_t>(i)];
          const double m_hat = d.norm();
          const double e = m_hat - m_gt;
          l.dm += e * e / norm;
          if (with_gradient && m_hat > 0.0) grad_at(t, j) += (w.dm * 2.0 * e / norm / m_hat) * d;
        }
      }
    }
  }
  // relative orientation about +Y
  Matrix yaw_grad = Matrix::Zero(t_count, 1);
  for (int t = 0; t < t_count; ++t) {
    const double o_hat = wrap_angle(leader.data(t, layout::yaw) - pred.data(t, layout::yaw));
    const double o_gt = wrap_angle(leader.data(t, layout::yaw) - gt.data(t, layout::yaw));
    const double e = wrap_angle(o_hat - o_gt);
    l.ro += e * e / t_count;
    yaw_grad(t, 0) = -w.ro * 2.0 * e / t_count;
  }
  // contact, masked by the leader's labels and the predicted follower labels
  for (int t = 0; t < t_count; ++t) {
    const ContactLabels lead_labels = person_contact_labels(leader.data, t);
    const ContactLabels pred_labels = person_contact_labels(pred.data, t);
    l.con += contact_term(p_lead[static_cast<std::size_t>(t)], p_hat[static_cast<std::size_t>(t)], lead_labels,
                          pred_labels, with_gradient ? &g[static_cast<std::size_t>(t)] : nullptr,
                          w.con / t_count) /
             t_count;
  }

  l.total = weighted_total(l, w);
  if (with_gradient) {
    result.gradient += decode_backward(pred.data, g, model, true);
    result.gradient.col(layout::yaw) += yaw_grad.col(0);
  }
  return result;
}

}  // namespace interdance
