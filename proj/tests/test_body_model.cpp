#include "interdance/body_model.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace interdance;

namespace {

const BodyModel& model() { return default_body_model(); }

std::string error_of(const BodyModel& m) {
  try {
    validate_body_model(m);
  } catch (const DataError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(BodyModel, BundledModelHasExpectedShape) {
  EXPECT_EQ(model().joints.size(), 55u);
  EXPECT_EQ(model().surface_points.size(), 655u);
  EXPECT_EQ(model().finger_joints.size(), 30u);
  EXPECT_FALSE(model().capsules.empty());
  EXPECT_NO_THROW(validate_body_model(model()));
}

TEST(BodyModel, JsonRoundTripPreservesModel) {
  const BodyModel copy = body_model_from_json(body_model_to_json(model()));
  ASSERT_EQ(copy.joints.size(), model().joints.size());
  for (std::size_t i = 0; i < copy.joints.size(); ++i) {
    EXPECT_EQ(copy.joints[i].parent, model().joints[i].parent);
    EXPECT_LT((copy.joints[i].offset - model().joints[i].offset).norm(), 1e-12);
  }
  EXPECT_EQ(copy.capsules.size(), model().capsules.size());
}

TEST(BodyModel, RejectsWrongJointCount) {
  BodyModel m = model();
  m.joints.pop_back();
  EXPECT_NE(error_of(m).find("joints"), std::string::npos);
}

TEST(BodyModel, RejectsWrongPointCount) {
  BodyModel m = model();
  m.surface_points.pop_back();
  EXPECT_NE(error_of(m).find("surface_points"), std::string::npos);
}

TEST(BodyModel, RejectsCyclicHierarchy) {
  BodyModel m = model();
  m.joints[3].parent = 9;
  EXPECT_NE(error_of(m).find("joints[3].parent"), std::string::npos);
}

TEST(BodyModel, RejectsBadSkinWeights) {
  BodyModel m = model();
  m.surface_points[10].skin = {{0, 0.7}};
  EXPECT_NE(error_of(m).find("surface_points[10]"), std::string::npos);
}

TEST(BodyModel, RejectsSchemaViolation) {
  nlohmann::json j = body_model_to_json(model());
  j.erase("capsules");
  EXPECT_THROW(body_model_from_json(j), DataError);
}

TEST(BodyModel, RestPoseReproducesRestPositions) {
  const PointCloudFrame f = realize_points(model(), PoseFrame{});
  for (int j = 0; j < kJointCount; ++j) {
    EXPECT_LT((f.joints[static_cast<std::size_t>(j)] - model().rest_joint_positions[static_cast<std::size_t>(j)]).norm(),
              1e-12);
  }
  for (int i = 0; i < kSurfacePointCount; ++i) {
    EXPECT_LT((f.vertices[static_cast<std::size_t>(i)] - model().surface_points[static_cast<std::size_t>(i)].rest_position)
                  .norm(),
              1e-12);
  }
}

TEST(BodyModel, RootTranslationMovesEverything) {
  PoseFrame p;
  p.root_translation = Vec3(1.0, -0.5, 2.0);
  const PointCloudFrame rest = realize_points(model(), PoseFrame{});
  const PointCloudFrame moved = realize_points(model(), p);
  for (int i = 0; i < kPointCount; ++i) EXPECT_LT((moved.point(i) - rest.point(i) - p.root_translation).norm(), 1e-12);
}

TEST(BodyModel, BoneLengthsArePreservedByAnyPose) {
  std::mt19937_64 rng(11);
  const auto motion = oracle::random_motion(20, rng, 1.5);
  for (const auto& pose : motion.frames) {
    const PointCloudFrame f = realize_points(model(), pose);
    for (int j = 1; j < kJointCount; ++j) {
      const auto& joint = model().joints[static_cast<std::size_t>(j)];
      const double bone = (f.joints[static_cast<std::size_t>(j)] - f.joints[static_cast<std::size_t>(joint.parent)]).norm();
      EXPECT_NEAR(bone, joint.offset.norm(), 1e-12);
    }
  }
}

TEST(BodyModel, ElbowRotationOnlyMovesItsSubtree) {
  PoseFrame p;
  p.joint_rotations[joint::left_elbow] = Vec3(0.0, 0.0, 1.0);
  const PointCloudFrame rest = realize_points(model(), PoseFrame{});
  const PointCloudFrame bent = realize_points(model(), p);
  EXPECT_LT((bent.joints[joint::left_elbow] - rest.joints[joint::left_elbow]).norm(), 1e-12);
  EXPECT_LT((bent.joints[joint::right_wrist] - rest.joints[joint::right_wrist]).norm(), 1e-12);
  EXPECT_GT((bent.joints[joint::left_wrist] - rest.joints[joint::left_wrist]).norm(), 0.1);
}

TEST(CapsuleSdf, SignInsideAndOutside) {
  const std::span<const Vec3> joints(model().rest_joint_positions);
  const Vec3 chest = model().rest_joint_positions[joint::spine2];
  EXPECT_LT(capsule_sdf(model(), joints, chest).distance, 0.0);
  EXPECT_GT(capsule_sdf(model(), joints, chest + Vec3(0.0, 0.0, 1.0)).distance, 0.5);
}

TEST(CapsuleSdf, MatchesNaiveUnion) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const auto& rest = model().rest_joint_positions;
  for (int k = 0; k < 500; ++k) {
    const Vec3 q(0.8 * u(rng), 1.0 + u(rng), 0.4 * u(rng));
    EXPECT_NEAR(capsule_sdf(model(), std::span<const Vec3>(rest), q).distance,
                oracle::capsule_union_sdf(model(), rest, q), 1e-12);
  }
}

TEST(CapsuleSdf, SurfacePointsSitOnTheirCapsuleAtRest) {
  const std::span<const Vec3> joints(model().rest_joint_positions);
  for (const auto& p : model().surface_points) {
    EXPECT_LT(capsule_sdf(model(), joints, p.rest_position).distance, 1e-9);
  }
}

TEST(CapsuleSdf, GradientIsUnitAndMatchesFiniteDifferences) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const std::span<const Vec3> joints(model().rest_joint_positions);
  const double h = 1e-6;
  int checked = 0;
  for (int k = 0; k < 200; ++k) {
    const Vec3 q(0.8 * u(rng), 1.0 + u(rng), 0.4 * u(rng));
    const SdfSample s = capsule_sdf(model(), joints, q);
    EXPECT_NEAR(s.gradient.norm(), 1.0, 1e-12);
    Vec3 fd;
    for (int c = 0; c < 3; ++c) {
      Vec3 e = Vec3::Zero();
      e(c) = h;
      fd(c) = (capsule_sdf(model(), joints, q + e).distance - capsule_sdf(model(), joints, q - e).distance) / (2 * h);
    }
    // skip the measure-zero set where the minimizing capsule changes
    if (capsule_sdf(model(), joints, q + 10 * h * fd).capsule != s.capsule) continue;
    EXPECT_LT((fd - s.gradient).norm(), 1e-4);
    ++checked;
  }
  EXPECT_GT(checked, 150);
}

TEST(Geometry, AxisAngleRoundTrip) {
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int k = 0; k < 100; ++k) {
    const Vec3 v = 3.0 * Vec3(u(rng), u(rng), u(rng)).normalized() * std::abs(u(rng));
    const Mat3 r = rotation_from_axis_angle(v);
    EXPECT_LT((r * r.transpose() - Mat3::Identity()).norm(), 1e-12);
    EXPECT_LT((rotation_from_axis_angle(axis_angle_from_rotation(r)) - r).norm(), 1e-9);
  }
}
