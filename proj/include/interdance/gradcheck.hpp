#pragma once

// Central finite-difference checks of every analytic gradient: capsule SDF,
// contact and penetration guidance objectives, the training loss and the
// denoiser parameters. Configurations whose finite-difference stencil would
// straddle a min-tie or the SDF zero set are skipped and redrawn.

#include "interdance/denoiser.hpp"
#include "interdance/diffusion.hpp"
#include "interdance/guidance.hpp"
#include "interdance/losses.hpp"
#include "interdance/synth.hpp"

namespace interdance {

struct GradcheckReport {
  std::string name;
  int configurations = 0;
  int coordinates = 0;
  int skipped = 0;
  double max_rel_error = 0.0;
  double tolerance = 1e-3;

  bool passed() const { return configurations > 0 && max_rel_error < tolerance; }
};

struct GradcheckOptions {
  int configurations = 50;
  double step = 1e-5;
  std::uint64_t seed = 0;
};

namespace gradcheck_detail {

inline double rel_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Smallest and second-smallest capsule SDF, and the smallest distance of
/// the query to the minimizing capsule's segment.
struct SdfMargins {
  double best = std::numeric_limits<double>::infinity();
  double second = std::numeric_limits<double>::infinity();
  double axis = 0.0;
};

inline SdfMargins sdf_margins(const BodyModel& model, std::span<const Vec3> joints, const Vec3& q) {
  SdfMargins m;
  for (const auto& cap : model.capsules) {
    const Vec3& a = joints[static_cast<std::size_t>(cap.a)];
    const Vec3& b = joints[static_cast<std::size_t>(cap.b)];
    const Vec3 ab = b - a;
    const double len2 = ab.squaredNorm();
    const double t = len2 > 0.0 ? std::clamp((q - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
    const double dist = (q - (a + t * ab)).norm();
    const double sdf = dist - cap.radius;
    if (sdf < m.best) {
      m.second = m.best;
      m.best = sdf;
      m.axis = dist;
    } else if (sdf < m.second) {
      m.second = sdf;
    }
  }
  return m;
}

inline bool sdf_smooth_at(const BodyModel& model, std::span<const Vec3> joints, const Vec3& q, double margin) {
  const SdfMargins m = sdf_margins(model, joints, q);
  return m.second - m.best > margin && std::abs(m.best) > margin && m.axis > margin;
}

/// Penetration cost is flat outside the body, so only points inside or
/// within `margin` of the surface need a smooth SDF.
inline bool penetration_smooth_at(const BodyModel& model, std::span<const Vec3> joints, const Vec3& q,
                                  double margin) {
  return capsule_sdf(model, joints, q).distance > margin || sdf_smooth_at(model, joints, q, margin);
}

/// Gap between the nearest and second-nearest of the 710 points to `q`.
inline double nearest_gap(const PointCloudFrame& frame, const Vec3& q) {
  double best = std::numeric_limits<double>::infinity();
  double second = best;
  for (int i = 0; i < kPointCount; ++i) {
    const double d = (frame.point(i) - q).norm();
    if (d < best) {
      second = best;
      best = d;
    } else if (d < second) {
      second = d;
    }
  }
  return second - best;
}

/// Short all-contact duet encoded both ways.
struct Scene {
  RepSequence leader;
  RepSequence follower;
};

inline Scene contact_scene(const BodyModel& model, const std::string& scenario, double depth, std::uint64_t seed) {
  ScenarioSpec spec;
  spec.name = scenario;
  spec.duration = 0.1;
  spec.seed = seed;
  spec.touch_depth = depth;
  spec.contact = {{0, spec.frame_count()}};
  const DuetSample d = synth_duet(spec, model);
  const RealizedMotion l = realize_motion(model, d.leader);
  const RealizedMotion f = realize_motion(model, d.follower);
  return {encode_realized(l, f, model), encode_realized(f, l, model)};
}

inline void jitter_offsets(Matrix& x, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, sigma);
  for (Eigen::Index t = 0; t < x.rows(); ++t) {
    for (int c = layout::joint_offsets; c < layout::joint_velocities; ++c) x(t, c) += normal(rng);
  }
}

/// Offset coordinates with non-zero analytic gradient plus `extra` random ones.
inline std::vector<std::pair<int, int>> probe_coordinates(const Matrix& grad, int extra, std::mt19937_64& rng) {
  std::vector<std::pair<int, int>> coords;
  for (int t = 0; t < grad.rows(); ++t) {
    for (int c = layout::joint_offsets; c < layout::joint_velocities; ++c) {
      if (grad(t, c) != 0.0) coords.push_back({t, c});
    }
  }
  std::uniform_int_distribution<int> frame(0, static_cast<int>(grad.rows()) - 1);
  std::uniform_int_distribution<int> channel(layout::joint_offsets, layout::joint_velocities - 1);
  for (int k = 0; k < extra; ++k) coords.push_back({frame(rng), channel(rng)});
  return coords;
}

template <class Value>
double check_coordinates(Matrix x, const Matrix& grad, const std::vector<std::pair<int, int>>& coords, double h,
                         double floor, const Value& value) {
  double worst = 0.0;
  for (const auto& [t, c] : coords) {
    const double saved = x(t, c);
    x(t, c) = saved + h;
    const double up = value(x);
    x(t, c) = saved - h;
    const double down = value(x);
    x(t, c) = saved;
    worst = std::max(worst, rel_error(grad(t, c), (up - down) / (2.0 * h), floor));
  }
  return worst;
}

}  // namespace gradcheck_detail

/// Capsule SDF gradient at random queries around the rest body.
inline GradcheckReport gradcheck_sdf(const BodyModel& model, GradcheckOptions opt = {}) {
  using namespace gradcheck_detail;
  GradcheckReport r{"capsule_sdf", 0, 0, 0, 0.0, 1e-4};
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> box(-0.6, 0.6);
  std::uniform_real_distribution<double> height(0.0, 1.9);
  const std::span<const Vec3> joints(model.rest_joint_positions);
  const int target = std::max(opt.configurations, 100);
  while (r.configurations < target) {
    const Vec3 q(box(rng), height(rng), 0.5 * box(rng));
    if (!sdf_smooth_at(model, joints, q, 2.0 * opt.step)) {
      ++r.skipped;
      continue;
    }
    const Vec3 g = capsule_sdf(model, joints, q).gradient;
    double worst = 0.0;
    for (int k = 0; k < 3; ++k) {
      Vec3 e = Vec3::Zero();
      e(k) = opt.step;
      const double fd = (capsule_sdf(model, joints, q + e).distance - capsule_sdf(model, joints, q - e).distance) /
                        (2.0 * opt.step);
      worst = std::max(worst, rel_error(g(k), fd, 1e-6));
    }
    r.max_rel_error = std::max(r.max_rel_error, worst);
    r.coordinates += 3;
    ++r.configurations;
  }
  return r;
}

/// Contact objective on jittered handhold scenes with extra random labels.
inline GradcheckReport gradcheck_contact(const BodyModel& model, GradcheckOptions opt = {}) {
  using namespace gradcheck_detail;
  GradcheckReport r{"contact_value_grad"};
  std::mt19937_64 rng(opt.seed);
  const Scene base = contact_scene(model, "handhold", 0.0, opt.seed);
  std::bernoulli_distribution label(0.01);
  while (r.configurations < opt.configurations) {
    RepSequence follower = base.follower;
    RepSequence leader = base.leader;
    jitter_offsets(follower.data, 0.01, rng);
    for (int t = 0; t < leader.frame_count(); ++t) {
      for (int i = 0; i < kPointCount; ++i) {
        if (label(rng)) leader.data(t, layout::person_contact + i) = 1.0;
        if (label(rng)) follower.data(t, layout::person_contact + i) = 1.0;
      }
    }
    const LeaderState state = make_leader_state(leader, model);
    const auto frames = decode(follower, model);
    bool smooth = true;
    for (int t = 0; t < follower.frame_count() && smooth; ++t) {
      const auto ti = static_cast<std::size_t>(t);
      const ContactLabels fl = person_contact_labels(follower.data, t);
      for (int i = 0; i < kPointCount && smooth; ++i) {
        if (state.labels[ti][static_cast<std::size_t>(i)]) {
          smooth = nearest_gap(frames[ti], state.frames[ti].point(i)) > 2.0 * opt.step;
        }
        if (smooth && fl[static_cast<std::size_t>(i)]) {
          smooth = nearest_gap(state.frames[ti], frames[ti].point(i)) > 2.0 * opt.step;
        }
      }
    }
    if (!smooth) {
      ++r.skipped;
      continue;
    }
    const ValueGrad vg = contact_value_grad(follower, state, model);
    const auto coords = probe_coordinates(vg.gradient, 20, rng);
    const double worst = check_coordinates(follower.data, vg.gradient, coords, opt.step, 1e-8, [&](const Matrix& x) {
      return contact_value_grad(RepSequence{x, follower.fps}, state, model, false).value;
    });
    r.max_rel_error = std::max(r.max_rel_error, worst);
    r.coordinates += static_cast<int>(coords.size());
    ++r.configurations;
  }
  return r;
}

/// Penetration cost on jittered approach-touch scenes of random depth.
inline GradcheckReport gradcheck_penetration(const BodyModel& model, GradcheckOptions opt = {}) {
  using namespace gradcheck_detail;
  GradcheckReport r{"penetration_value_grad"};
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> depth(0.01, 0.05);
  const double sharpness = GuidanceConfig{}.sharpness;
  std::vector<Scene> scenes;
  for (int k = 0; k < 5; ++k) {
    scenes.push_back(contact_scene(model, "approach-touch", depth(rng), opt.seed + static_cast<std::uint64_t>(k)));
  }
  while (r.configurations < opt.configurations) {
    const Scene& base = scenes[static_cast<std::size_t>(r.configurations + r.skipped) % scenes.size()];
    RepSequence follower = base.follower;
    jitter_offsets(follower.data, 0.005, rng);
    const LeaderState state = make_leader_state(base.leader, model);
    const auto frames = decode(follower, model);
    bool smooth = true;
    for (std::size_t t = 0; t < frames.size() && smooth; ++t) {
      const std::span<const Vec3> joints(state.frames[t].joints);
      for (int i = 0; i < kPointCount && smooth; ++i) {
        smooth = penetration_smooth_at(model, joints, frames[t].point(i), 2.0 * opt.step);
      }
    }
    if (!smooth) {
      ++r.skipped;
      continue;
    }
    const ValueGrad vg = penetration_value_grad(follower, state, model, sharpness);
    if (vg.value == 0.0) {
      ++r.skipped;
      continue;
    }
    const auto coords = probe_coordinates(vg.gradient, 20, rng);
    const double worst = check_coordinates(follower.data, vg.gradient, coords, opt.step, 1e-10, [&](const Matrix& x) {
      return penetration_value_grad(RepSequence{x, follower.fps}, state, model, sharpness, false).value;
    });
    r.max_rel_error = std::max(r.max_rel_error, worst);
    r.coordinates += static_cast<int>(coords.size());
    ++r.configurations;
  }
  return r;
}

/// Training-loss gradient with respect to the prediction (all continuous
/// channels, contact channels held at their binary values).
inline GradcheckReport gradcheck_losses(const BodyModel& model, GradcheckOptions opt = {}) {
  using namespace gradcheck_detail;
  GradcheckReport r{"compute_losses"};
  std::mt19937_64 rng(opt.seed);
  ScenarioSpec spec;
  spec.name = "handhold";
  spec.duration = 0.2;
  spec.seed = opt.seed;
  spec.contact = {{0, spec.frame_count()}};
  const DuetSample d = synth_duet(spec, model);
  const RealizedMotion lr = realize_motion(model, d.leader);
  const RealizedMotion fr = realize_motion(model, d.follower);
  const RepSequence leader = encode_realized(lr, fr, model);
  const RepSequence gt = encode_realized(fr, lr, model);
  std::normal_distribution<double> normal(0.0, 0.01);
  std::uniform_int_distribution<int> frame(0, gt.frame_count() - 1);
  std::uniform_int_distribution<int> channel(0, layout::foot_contact - 1);
  const LossWeights weights;
  while (r.configurations < opt.configurations) {
    RepSequence pred = gt;
    for (int t = 0; t < pred.frame_count(); ++t) {
      for (int c = 0; c < layout::foot_contact; ++c) pred.data(t, c) += normal(rng);
    }
    const LossResult base = compute_losses(pred, gt, leader, model, weights);
    std::vector<std::pair<int, int>> coords;
    for (int k = 0; k < 40; ++k) coords.push_back({frame(rng), channel(rng)});
    // contact-labelled follower points and the yaw channel get a dedicated probe
    coords.push_back({frame(rng), layout::yaw});
    coords.push_back({frame(rng), layout::root_position});
    const double worst = check_coordinates(pred.data, base.gradient, coords, opt.step, 1e-8, [&](const Matrix& x) {
      return compute_losses(RepSequence{x, pred.fps}, gt, leader, model, weights, false).losses.total;
    });
    r.max_rel_error = std::max(r.max_rel_error, worst);
    r.coordinates += static_cast<int>(coords.size());
    ++r.configurations;
  }
  return r;
}

/// Denoiser parameter gradients of the reconstruction loss on a small
/// (width 8, one block) two-stream instance with fully random parameters.
inline GradcheckReport gradcheck_denoiser(GradcheckOptions opt = {}, DenoiserMode mode = DenoiserMode::reactive) {
  using namespace gradcheck_detail;
  GradcheckReport r{std::string("denoiser_parameters_") + to_string(mode)};
  DenoiserConfig config;
  config.width = 8;
  config.blocks = 1;
  config.heads = 2;
  config.ff_width = 16;
  config.mode = mode;
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int t_count = 3;
  while (r.configurations < opt.configurations) {
    config.seed = rng();
    config.attention_window = r.configurations % 2;
    ParameterSet params = init_parameters(config);
    visit_parameters(params, [&](const std::string&, Matrix& m) {
      for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = 0.3 * normal(rng);
    });
    std::uniform_real_distribution<double> spread(0.5, 1.5);
    params.norm.mean = standard_normal(2, layout::channels, rng);
    params.norm.scale = Matrix::NullaryExpr(2, layout::channels, [&] { return spread(rng); });
    const Matrix xf = standard_normal(t_count, layout::channels, rng);
    const Matrix xl = standard_normal(t_count, layout::channels, rng);
    const Matrix music = standard_normal(t_count, kMusicChannels, rng);
    const Matrix target_f = standard_normal(t_count, layout::channels, rng);
    const Matrix target_l = standard_normal(t_count, layout::channels, rng);
    const int step = 1 + static_cast<int>(rng() % 50);
    const double norm = static_cast<double>(t_count) * layout::channels;
    const OutputLoss loss = [&](const DenoiserOutput& out, Matrix& df, Matrix& dl) {
      const Matrix ef = out.follower - target_f;
      df = (2.0 / norm) * ef;
      double value = ef.squaredNorm() / norm;
      if (mode == DenoiserMode::duet) {
        const Matrix el = out.leader - target_l;
        dl = (2.0 / norm) * el;
        value += el.squaredNorm() / norm;
      }
      return value;
    };
    auto value_of = [&](const ParameterSet& p) {
      const DenoiserOutput out = denoiser_forward(p, config, xf, xl, step, music);
      Matrix df, dl;
      return loss(out, df, dl);
    };
    const GradientResult g = parameter_gradients(params, config, xf, xl, step, music, loss);

    std::vector<Matrix*> tensors;
    std::vector<const Matrix*> grads;
    visit_parameters(params, [&](const std::string&, Matrix& m) { tensors.push_back(&m); });
    visit_parameters(g.gradient, [&](const std::string&, const Matrix& m) { grads.push_back(&m); });
    std::vector<std::size_t> used;
    for (std::size_t k = 0; k < tensors.size(); ++k) {
      if (k != 4 || config.pooled_music) used.push_back(k);
    }
    double worst = 0.0;
    for (int probe = 0; probe < 100; ++probe) {
      const std::size_t k = used[static_cast<std::size_t>(rng() % used.size())];
      Matrix& m = *tensors[k];
      const Eigen::Index idx = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(m.size()));
      const double saved = m.data()[idx];
      m.data()[idx] = saved + opt.step;
      const double up = value_of(params);
      m.data()[idx] = saved - opt.step;
      const double down = value_of(params);
      m.data()[idx] = saved;
      worst = std::max(worst, rel_error(grads[k]->data()[idx], (up - down) / (2.0 * opt.step), 1e-6));
    }
    r.max_rel_error = std::max(r.max_rel_error, worst);
    r.coordinates += 100;
    ++r.configurations;
  }
  return r;
}

inline std::vector<GradcheckReport> run_all_gradchecks(const BodyModel& model, GradcheckOptions opt = {}) {
  return {gradcheck_sdf(model, opt),     gradcheck_contact(model, opt),
          gradcheck_penetration(model, opt), gradcheck_losses(model, opt),
          gradcheck_denoiser(opt, DenoiserMode::reactive), gradcheck_denoiser(opt, DenoiserMode::duet)};
}

}  // namespace interdance
