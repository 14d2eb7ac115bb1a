#pragma once

// Interaction refine guidance: analytic value and gradient of the contact
// objective and the penetration cost with respect to the follower's offset
// channels, and the per-step descent update applied to the clean estimate.

#include "interdance/interaction.hpp"
#include "interdance/representation.hpp"

namespace interdance {

struct GuidanceConfig {
  double a_con = 0.0;
  double a_pene = 0.0;
  int first_step = 1;       // guidance applies for first_step <= n <= last_step
  int last_step = 1 << 30;
  double max_update_norm = 0.05;  // per-frame cap on any single point's displacement, m
  double sharpness = 0.05;        // sigmoid scale of the penetration cost, m
  int iterations = 1;             // refine passes per diffusion step

  bool active_at(int n) const { return n >= first_step && n <= last_step && (a_con != 0.0 || a_pene != 0.0); }
};

/// Decoded partner geometry the follower is refined against.
struct LeaderState {
  std::vector<PointCloudFrame> frames;
  std::vector<ContactLabels> labels;
};

inline LeaderState make_leader_state(const RepSequence& leader, const BodyModel& model) {
  LeaderState s;
  s.frames = decode(leader, model);
  for (int t = 0; t < leader.frame_count(); ++t) s.labels.push_back(person_contact_labels(leader.data, t));
  return s;
}

struct ValueGrad {
  double value = 0.0;
  Matrix gradient;  // T x 4981, non-zero only on offset channels
};

/// Contact objective summed over frames; follower labels come from the
/// follower's own contact channels (thresholded at 0.5).
inline ValueGrad contact_value_grad(const RepSequence& follower, const LeaderState& leader, const BodyModel& model,
                                    bool with_gradient = true) {
  const int t_count = follower.frame_count();
  const auto frames = decode(follower, model);
  PointGradients g = zero_point_gradients(t_count);
  ValueGrad out;
  for (int t = 0; t < t_count; ++t) {
    const auto ti = static_cast<std::size_t>(t);
    out.value += contact_term(leader.frames[ti], frames[ti], leader.labels[ti], person_contact_labels(follower.data, t),
                              with_gradient ? &g[ti] : nullptr);
  }
  if (with_gradient) out.gradient = decode_backward(follower.data, g, model, false);
  return out;
}

/// Penetration cost averaged over all follower points of all frames.
inline ValueGrad penetration_value_grad(const RepSequence& follower, const LeaderState& leader,
                                        const BodyModel& model, double sharpness = 0.05,
                                        bool with_gradient = true) {
  const int t_count = follower.frame_count();
  const auto frames = decode(follower, model);
  const double norm = 1.0 / (static_cast<double>(t_count) * kPointCount);
  PointGradients g = zero_point_gradients(t_count);
  ValueGrad out;
  for (int t = 0; t < t_count; ++t) {
    const auto ti = static_cast<std::size_t>(t);
    out.value += norm * penetration_term(model, std::span<const Vec3>(leader.frames[ti].joints), frames[ti],
                                         sharpness, with_gradient ? &g[ti] : nullptr, norm);
  }
  if (with_gradient) out.gradient = decode_backward(follower.data, g, model, false);
  return out;
}

struct RefineTrace {
  double contact_before = 0.0;
  double contact_after = 0.0;
  double penetration_before = 0.0;
  double penetration_after = 0.0;
};

namespace detail {

/// Largest displacement any decoded point of frame t would undergo.
inline double max_point_displacement(const Matrix& update, int t, const BodyModel& model) {
  double best = 0.0;
  for (int i = 0; i < kPointCount; ++i) {
    Vec3 d = update.block<1, 3>(t, layout::offset_column(i)).transpose();
    if (i < kJointCount) {
      const int wrist = model.finger_wrist[static_cast<std::size_t>(i)];
      if (wrist >= 0) d += update.block<1, 3>(t, layout::offset_column(wrist)).transpose();
    }
    best = std::max(best, d.norm());
  }
  return best;
}

}  // namespace detail

/// One descent step on both objectives, clipped per frame. Contact-label
/// channels are left untouched.
inline RepSequence refine(const RepSequence& x0_hat, const LeaderState& leader, const BodyModel& model,
                          const GuidanceConfig& config, RefineTrace* trace = nullptr) {
  RepSequence out = x0_hat;
  const int t_count = x0_hat.frame_count();
  if (config.a_con == 0.0 && config.a_pene == 0.0) {
    if (trace) {
      trace->contact_before = trace->contact_after = contact_value_grad(out, leader, model, false).value;
      trace->penetration_before = trace->penetration_after =
          penetration_value_grad(out, leader, model, config.sharpness, false).value;
    }
    return out;
  }
  Matrix update = Matrix::Zero(t_count, layout::channels);
  const ValueGrad con = contact_value_grad(x0_hat, leader, model, config.a_con != 0.0);
  const ValueGrad pene = penetration_value_grad(x0_hat, leader, model, config.sharpness, config.a_pene != 0.0);
  if (config.a_con != 0.0) update -= config.a_con * con.gradient;
  if (config.a_pene != 0.0) update -= config.a_pene * pene.gradient;
  if (!update.allFinite()) throw NumericalError("guidance: non-finite gradient");
  for (int t = 0; t < t_count; ++t) {
    const double largest = detail::max_point_displacement(update, t, model);
    if (largest > config.max_update_norm) update.row(t) *= config.max_update_norm / largest;
  }
  update.block(0, layout::foot_contact, t_count, layout::channels - layout::foot_contact).setZero();
  out.data += update;
  if (trace) {
    trace->contact_before = con.value;
    trace->penetration_before = pene.value;
    trace->contact_after = contact_value_grad(out, leader, model, false).value;
    trace->penetration_after = penetration_value_grad(out, leader, model, config.sharpness, false).value;
  }
  return out;
}

}  // namespace interdance
