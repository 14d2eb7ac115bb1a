#include "interdance/gradcheck.hpp"
#include "interdance/guidance.hpp"
#include "interdance/synth.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace interdance;

namespace {

const BodyModel& model() { return default_body_model(); }

struct Pair {
  RepSequence leader, follower;
};

Pair scene(const std::string& name, double duration = 0.5, std::uint64_t seed = 3, double depth = 0.03) {
  ScenarioSpec spec;
  spec.name = name;
  spec.duration = duration;
  spec.seed = seed;
  spec.touch_depth = depth;
  const DuetSample d = synth_duet(spec, model());
  return {encode(d.leader, d.follower, model()), encode(d.follower, d.leader, model())};
}

}  // namespace

TEST(Interaction, NearestPointPrefersLowestIndexOnTies) {
  PointCloudFrame f;
  f.joints.assign(kJointCount, Vec3(5.0, 5.0, 5.0));
  f.vertices.assign(kSurfacePointCount, Vec3(5.0, 5.0, 5.0));
  f.joints[4] = Vec3(1.0, 0.0, 0.0);
  f.vertices[10] = Vec3(-1.0, 0.0, 0.0);
  const NearestPoint n = nearest_point(f, Vec3::Zero());
  EXPECT_EQ(n.index, 4);
  EXPECT_DOUBLE_EQ(n.distance2, 1.0);
}

TEST(Interaction, ContactTermIsZeroWithoutLabels) {
  const Pair p = scene("handhold");
  const LeaderState leader = make_leader_state(p.leader, model());
  RepSequence f = p.follower;
  f.data.rightCols(kPointCount).setZero();
  LeaderState unlabelled = leader;
  for (auto& l : unlabelled.labels) std::fill(l.begin(), l.end(), 0);
  const ValueGrad vg = contact_value_grad(f, unlabelled, model());
  EXPECT_EQ(vg.value, 0.0);
  EXPECT_EQ(vg.gradient.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Interaction, ContactValueMatchesBruteForce) {
  const Pair p = scene("handhold", 0.2);
  const LeaderState leader = make_leader_state(p.leader, model());
  const auto lf = decode(p.leader, model());
  const auto ff = decode(p.follower, model());
  double expected = 0.0;
  for (std::size_t t = 0; t < lf.size(); ++t) {
    const ContactLabels cl = person_contact_labels(p.leader.data, static_cast<int>(t));
    const ContactLabels cf = person_contact_labels(p.follower.data, static_cast<int>(t));
    for (int i = 0; i < kPointCount; ++i) {
      double best_l = 1e300, best_f = 1e300;
      for (int j = 0; j < kPointCount; ++j) {
        best_l = std::min(best_l, (lf[t].point(i) - ff[t].point(j)).squaredNorm());
        best_f = std::min(best_f, (ff[t].point(i) - lf[t].point(j)).squaredNorm());
      }
      if (cl[static_cast<std::size_t>(i)]) expected += best_l;
      if (cf[static_cast<std::size_t>(i)]) expected += best_f;
    }
  }
  EXPECT_GT(expected, 0.0);
  EXPECT_NEAR(contact_value_grad(p.follower, leader, model(), false).value, expected, 1e-12 * (1.0 + expected));
}

TEST(Interaction, PenetrationIsZeroWhenApart) {
  const Pair p = scene("orbit");
  const LeaderState leader = make_leader_state(p.leader, model());
  const ValueGrad vg = penetration_value_grad(p.follower, leader, model());
  EXPECT_EQ(vg.value, 0.0);
}

TEST(Interaction, PenetrationTermMatchesCapsuleOracle) {
  const Pair p = scene("approach-touch", 2.0, 3, 0.06);
  const auto lf = decode(p.leader, model());
  const auto ff = decode(p.follower, model());
  const double sharpness = 0.05;
  int penetrating = 0;
  for (std::size_t t = 0; t < lf.size(); t += 5) {
    double expected = 0.0;
    for (int i = 0; i < kPointCount; ++i) {
      const double sdf = oracle::capsule_union_sdf(model(), lf[t].joints, ff[t].point(i));
      if (sdf < 0.0) {
        expected += 1.0 / (1.0 + std::exp(sdf / sharpness));
        ++penetrating;
      }
    }
    const double v = penetration_term(model(), std::span<const Vec3>(lf[t].joints), ff[t], sharpness);
    EXPECT_NEAR(v, expected, 1e-12) << "frame " << t;
  }
  EXPECT_GT(penetrating, 0);
}

TEST(Gradients, ContactSuitePasses) {
  GradcheckOptions opt;
  opt.configurations = 10;
  opt.seed = 21;
  const GradcheckReport r = gradcheck_contact(model(), opt);
  EXPECT_TRUE(r.passed()) << r.max_rel_error;
  EXPECT_EQ(r.configurations, 10);
}

TEST(Gradients, PenetrationSuitePasses) {
  GradcheckOptions opt;
  opt.configurations = 10;
  opt.seed = 22;
  const GradcheckReport r = gradcheck_penetration(model(), opt);
  EXPECT_TRUE(r.passed()) << r.max_rel_error;
}

TEST(Gradients, SdfSuitePasses) {
  GradcheckOptions opt;
  opt.seed = 23;
  const GradcheckReport r = gradcheck_sdf(model(), opt);
  EXPECT_TRUE(r.passed()) << r.max_rel_error;
}

TEST(Refine, ZeroScalesLeaveEstimateUntouched) {
  const Pair p = scene("handhold", 0.2);
  const RepSequence out = refine(p.follower, make_leader_state(p.leader, model()), model(), GuidanceConfig{});
  EXPECT_EQ(out.data, p.follower.data);
}

TEST(Refine, ContactStepReducesContactObjective) {
  Pair p = scene("handhold", 0.3);
  p.follower.data.col(layout::root_position).array() += 0.03;
  const LeaderState leader = make_leader_state(p.leader, model());
  GuidanceConfig g;
  g.a_con = 0.1;
  RefineTrace trace;
  refine(p.follower, leader, model(), g, &trace);
  EXPECT_GT(trace.contact_before, 0.0);
  EXPECT_LT(trace.contact_after, trace.contact_before);
}

TEST(Refine, UpdatesAreClippedPerFrameAndSkipLabels) {
  Pair p = scene("approach-touch", 2.0, 3, 0.05);
  const LeaderState leader = make_leader_state(p.leader, model());
  GuidanceConfig g;
  g.a_pene = 1e6;
  g.a_con = 1e6;
  g.max_update_norm = 0.004;
  const RepSequence out = refine(p.follower, leader, model(), g);
  const Matrix update = out.data - p.follower.data;
  EXPECT_GT(update.cwiseAbs().maxCoeff(), 0.0);
  for (int t = 0; t < out.frame_count(); ++t) {
    EXPECT_LE(detail::max_point_displacement(update, t, model()), 0.004 + 1e-12);
  }
  EXPECT_EQ(update.rightCols(layout::channels - layout::foot_contact).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(update.leftCols(layout::joint_offsets).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Refine, ActiveWindowRequiresNonZeroScale) {
  GuidanceConfig g;
  g.first_step = 3;
  g.last_step = 5;
  EXPECT_FALSE(g.active_at(4));
  g.a_pene = 0.5;
  EXPECT_TRUE(g.active_at(4));
  EXPECT_FALSE(g.active_at(2));
  EXPECT_FALSE(g.active_at(6));
}
