#include "interdance/representation.hpp"
#include "interdance/synth.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace interdance;

namespace {

const BodyModel& model() { return default_body_model(); }

MotionSequence random_motion(int frames, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return oracle::random_motion(frames, rng);
}

double max_decode_error(const MotionSequence& m, const MotionSequence& partner) {
  const RealizedMotion real = realize_motion(model(), m);
  const auto frames = decode(encode(m, partner, model()), model());
  double worst = 0.0;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    for (int i = 0; i < kPointCount; ++i) {
      worst = std::max(worst, (frames[t].point(i) - real.frames[t].point(i)).norm());
    }
  }
  return worst;
}

}  // namespace

TEST(Layout, ChannelBlocksAreContiguous) {
  EXPECT_EQ(layout::offset_column(0), layout::joint_offsets);
  EXPECT_EQ(layout::offset_column(kJointCount), layout::vertex_offsets);
  EXPECT_EQ(layout::velocity_column(kPointCount), layout::foot_contact);
  EXPECT_EQ(layout::person_contact + kPointCount, layout::channels);
  EXPECT_EQ(layout::channels, 4981);
}

TEST(Representation, DecodeInvertsEncodeOnRandomPoses) {
  EXPECT_LT(max_decode_error(random_motion(40, 1), random_motion(40, 2)), 1e-9);
}

TEST(Representation, RoundTripOnEveryScenario) {
  for (const auto& name : scenario_names()) {
    ScenarioSpec spec;
    spec.name = name;
    spec.duration = 1.0;
    spec.seed = 4;
    const DuetSample d = synth_duet(spec, model());
    EXPECT_LT(max_decode_error(d.leader, d.follower), 1e-9) << name;
    EXPECT_LT(max_decode_error(d.follower, d.leader), 1e-9) << name;
  }
}

TEST(Representation, OffsetsAreInvariantToPlanarRigidMotion) {
  const MotionSequence a = random_motion(10, 3);
  const MotionSequence b = random_motion(10, 4);
  const RepSequence base = encode(a, b, model());
  const RepSequence moved = encode(transform_motion(a, 1.1, Vec3(0.7, 0.0, -2.0)),
                                   transform_motion(b, 1.1, Vec3(0.7, 0.0, -2.0)), model());
  const int n = layout::foot_contact - layout::joint_offsets;
  const double drift = (base.data.middleCols(layout::joint_offsets, n) - moved.data.middleCols(layout::joint_offsets, n))
                           .cwiseAbs()
                           .maxCoeff();
  EXPECT_LT(drift, 1e-9);
  EXPECT_NEAR(wrap_angle(moved.data(0, layout::yaw) - base.data(0, layout::yaw)), 1.1, 1e-9);
}

TEST(Representation, VelocitiesAreForwardDifferences) {
  const RepSequence rep = encode(random_motion(5, 5), random_motion(5, 6), model());
  const Matrix& x = rep.data;
  const int n = 3 * kPointCount;
  for (int t = 0; t < 4; ++t) {
    const Matrix diff = x.block(t + 1, layout::joint_offsets, 1, n) - x.block(t, layout::joint_offsets, 1, n);
    EXPECT_LT((x.block(t, layout::joint_velocities, 1, n) - diff).cwiseAbs().maxCoeff(), 1e-12);
  }
  EXPECT_LT((x.block(4, layout::joint_velocities, 1, n) - x.block(3, layout::joint_velocities, 1, n)).cwiseAbs().maxCoeff(),
            1e-12);
  EXPECT_NEAR(x(0, layout::yaw_velocity), wrap_angle(x(1, layout::yaw) - x(0, layout::yaw)), 1e-12);
}

TEST(Representation, FingerOffsetsAreRelativeToWrist) {
  const MotionSequence m = random_motion(1, 7);
  const RealizedMotion real = realize_motion(model(), m);
  const RepSequence rep = encode(m, m, model());
  const Mat3 to_canonical = rotation_y(-rep.data(0, layout::yaw));
  int checked = 0;
  for (int j = 0; j < kJointCount; ++j) {
    const int wrist = model().finger_wrist[static_cast<std::size_t>(j)];
    if (wrist < 0) continue;
    const Vec3 expected = to_canonical * (real.frames[0].joints[static_cast<std::size_t>(j)] -
                                          real.frames[0].joints[static_cast<std::size_t>(wrist)]);
    EXPECT_LT((rep.data.block<1, 3>(0, layout::offset_column(j)).transpose() - expected).norm(), 1e-12);
    ++checked;
  }
  EXPECT_EQ(checked, kFingerJointCount);
}

TEST(Representation, SingleFrameHasZeroVelocities) {
  const RepSequence rep = encode(random_motion(1, 8), random_motion(1, 9), model());
  EXPECT_EQ(rep.data.block(0, layout::joint_velocities, 1, 3 * kPointCount).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(rep.data(0, layout::yaw_velocity), 0.0);
}

TEST(Representation, RejectsMismatchedPartners) {
  EXPECT_THROW(encode(random_motion(3, 1), random_motion(4, 2), model()), DataError);
  MotionSequence other = random_motion(3, 2);
  other.fps = 60.0;
  EXPECT_THROW(encode(random_motion(3, 1), other, model()), DataError);
}

TEST(ContactDetection, PersonContactMatchesBruteForce) {
  ScenarioSpec spec;
  spec.name = "handhold";
  spec.duration = 0.5;
  spec.seed = 11;
  const DuetSample d = synth_duet(spec, model());
  const RealizedMotion l = realize_motion(model(), d.leader);
  const RealizedMotion f = realize_motion(model(), d.follower);
  const RepSequence rep = encode(d.leader, d.follower, model());
  long labelled = 0;
  for (int t = 0; t < rep.frame_count(); ++t) {
    const ContactLabels labels = person_contact_labels(rep.data, t);
    for (int i = 0; i < kPointCount; ++i) {
      bool near = false;
      for (const auto& v : f.frames[static_cast<std::size_t>(t)].vertices) {
        near = near || (l.frames[static_cast<std::size_t>(t)].point(i) - v).squaredNorm() < 1e-4;
      }
      EXPECT_EQ(labels[static_cast<std::size_t>(i)], near ? 1 : 0) << "t=" << t << " i=" << i;
      labelled += near ? 1 : 0;
    }
  }
  EXPECT_GT(labelled, 0);
}

TEST(ContactDetection, FootContactNeedsLowAndSlowFeet) {
  std::vector<PointCloudFrame> frames(3);
  for (auto& f : frames) {
    f.joints.assign(kJointCount, Vec3(0.0, 1.0, 0.0));
    f.vertices.assign(kSurfacePointCount, Vec3::Zero());
  }
  const auto foot = static_cast<std::size_t>(model().foot_joints[0]);
  frames[0].joints[foot] = Vec3(0.0, 0.02, 0.0);
  frames[1].joints[foot] = Vec3(0.005, 0.02, 0.0);
  frames[2].joints[foot] = Vec3(0.2, 0.02, 0.0);
  const Matrix labels = detect_foot_contact(frames, model(), 30.0);
  EXPECT_EQ(labels(0, 0), 1.0);
  EXPECT_EQ(labels(1, 0), 0.0);
  EXPECT_EQ(labels(2, 0), 0.0);
  EXPECT_EQ(labels(0, 1), 0.0);
}

TEST(DecodeBackward, MatchesFiniteDifferences) {
  const RepSequence rep = encode(random_motion(2, 12), random_motion(2, 13), model());
  std::mt19937_64 rng(14);
  std::normal_distribution<double> normal(0.0, 1.0);
  PointGradients g = zero_point_gradients(2);
  for (auto& frame : g) {
    for (auto& v : frame) v = Vec3(normal(rng), normal(rng), normal(rng));
  }
  auto objective = [&](const Matrix& x) {
    const auto frames = decode(RepSequence{x, rep.fps}, model());
    double s = 0.0;
    for (std::size_t t = 0; t < frames.size(); ++t) {
      for (int i = 0; i < kPointCount; ++i) s += g[t][static_cast<std::size_t>(i)].dot(frames[t].point(i));
    }
    return s;
  };
  const Matrix grad = decode_backward(rep.data, g, model(), true);
  const double h = 1e-6;
  for (int c : {0, 2, layout::yaw, layout::offset_column(3), layout::offset_column(20) + 1, layout::offset_column(400) + 2}) {
    for (int t = 0; t < 2; ++t) {
      Matrix plus = rep.data, minus = rep.data;
      plus(t, c) += h;
      minus(t, c) -= h;
      const double fd = (objective(plus) - objective(minus)) / (2.0 * h);
      EXPECT_NEAR(grad(t, c), fd, 1e-5 * std::max(1.0, std::abs(fd))) << "channel " << c;
    }
  }
}
