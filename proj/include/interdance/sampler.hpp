#pragma once

// Reverse diffusion with interaction refine guidance.
//
// Each step: the denoiser predicts the clean follower, guidance refines it
// against the leader, and the posterior step moves x_n to x_{n-1}. In duet
// mode both dancers start from noise and the follower is refined against the
// leader the denoiser predicts at that step.

#include "interdance/denoiser.hpp"
#include "interdance/diffusion.hpp"
#include "interdance/guidance.hpp"
#include "interdance/music.hpp"

namespace interdance {

/// Clean-sample predictor: (noisy follower, leader or noisy leader, step).
using DenoiseFn = std::function<DenoiserOutput(const Matrix& follower, const Matrix& leader, int step)>;

inline DenoiseFn make_denoise_fn(const ParameterSet& params, const DenoiserConfig& config, const MusicFeatures& music) {
  return [&params, &config, &music](const Matrix& follower, const Matrix& leader, int step) {
    return denoiser_forward(params, config, follower, leader, step, music.data);
  };
}

struct StepTrace {
  int step = 0;
  bool guided = false;
  RefineTrace refine;
};

struct SampleResult {
  RepSequence follower;
  RepSequence leader;  // duet mode: the generated leader; reactive: a copy of the input
  std::vector<StepTrace> trace;
};

namespace sampler_detail {

inline RepSequence guide(const RepSequence& x0, const RepSequence& leader, const BodyModel& model,
                         const GuidanceConfig& guidance, int n, StepTrace& trace) {
  trace.step = n;
  if (!guidance.active_at(n)) return x0;
  trace.guided = true;
  const LeaderState state = make_leader_state(leader, model);
  RepSequence out = x0;
  for (int k = 0; k < std::max(1, guidance.iterations); ++k) {
    RefineTrace rt;
    out = refine(out, state, model, guidance, &rt);
    if (k == 0) {
      trace.refine.contact_before = rt.contact_before;
      trace.refine.penetration_before = rt.penetration_before;
    }
    trace.refine.contact_after = rt.contact_after;
    trace.refine.penetration_after = rt.penetration_after;
  }
  return out;
}

inline void check(const Matrix& m, const char* what, int n) {
  if (!m.allFinite()) throw NumericalError(std::string("sampler: non-finite ") + what + " at step " + std::to_string(n));
}

}  // namespace sampler_detail

/// Generates a follower for `leader` (reactive mode), or both dancers when
/// `mode` is duet (`leader` then only supplies the frame count and rate).
inline SampleResult sample(const DenoiseFn& denoise, const NoiseSchedule& schedule, const RepSequence& leader,
                           const BodyModel& model, const GuidanceConfig& guidance, std::uint64_t seed,
                           DenoiserMode mode = DenoiserMode::reactive) {
  const int t_count = leader.frame_count();
  const int channels = layout::channels;
  std::mt19937_64 rng(seed);
  SampleResult result;
  result.follower.fps = leader.fps;
  result.leader.fps = leader.fps;
  Matrix xf = standard_normal(t_count, channels, rng);
  Matrix xl;
  if (mode == DenoiserMode::duet) xl = standard_normal(t_count, channels, rng);

  for (int n = schedule.steps(); n >= 1; --n) {
    StepTrace trace;
    if (mode == DenoiserMode::reactive) {
      const DenoiserOutput out = denoise(xf, leader.data, n);
      sampler_detail::check(out.follower, "prediction", n);
      const RepSequence refined = sampler_detail::guide(RepSequence{out.follower, leader.fps}, leader, model, guidance, n, trace);
      sampler_detail::check(refined.data, "guided prediction", n);
      const Matrix noise = n > 1 ? standard_normal(t_count, channels, rng) : Matrix::Zero(t_count, channels);
      xf = posterior_step(schedule, xf, refined.data, n, noise);
    } else {
      const DenoiserOutput out = denoise(xf, xl, n);
      sampler_detail::check(out.follower, "follower prediction", n);
      sampler_detail::check(out.leader, "leader prediction", n);
      const RepSequence lead_hat{out.leader, leader.fps};
      const RepSequence refined = sampler_detail::guide(RepSequence{out.follower, leader.fps}, lead_hat, model, guidance, n, trace);
      sampler_detail::check(refined.data, "guided prediction", n);
      const Matrix noise_f = n > 1 ? standard_normal(t_count, channels, rng) : Matrix::Zero(t_count, channels);
      const Matrix noise_l = n > 1 ? standard_normal(t_count, channels, rng) : Matrix::Zero(t_count, channels);
      xf = posterior_step(schedule, xf, refined.data, n, noise_f);
      xl = posterior_step(schedule, xl, out.leader, n, noise_l);
    }
    result.trace.push_back(trace);
  }
  result.follower.data = std::move(xf);
  result.leader.data = mode == DenoiserMode::duet ? std::move(xl) : leader.data;
  return result;
}

/// Contact channels of a generated sequence snapped to 0/1.
inline void binarize_contacts(RepSequence& rep) {
  auto block = rep.data.rightCols(layout::channels - layout::foot_contact);
  block = (block.array() >= 0.5).cast<double>();
}

}  // namespace interdance
