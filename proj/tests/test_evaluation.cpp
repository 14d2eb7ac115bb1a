#include "interdance/metrics.hpp"
#include "interdance/synth.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace interdance;

namespace {

const BodyModel& model() { return default_body_model(); }

std::vector<FeatureVector> gaussian_set(int n, int dims, double mean, double stddev, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(mean, stddev);
  std::vector<FeatureVector> set;
  for (int i = 0; i < n; ++i) {
    FeatureVector f{FeatureKind::kinetic, Eigen::VectorXd(dims)};
    for (int k = 0; k < dims; ++k) f.values(k) = normal(rng);
    set.push_back(f);
  }
  return set;
}

EvalDuet decoded(const std::string& scenario, std::uint64_t seed, double duration = 1.0) {
  ScenarioSpec spec;
  spec.name = scenario;
  spec.seed = seed;
  spec.duration = duration;
  const DuetSample d = synth_duet(spec, model());
  return {realize_motion(model(), d.leader).frames, realize_motion(model(), d.follower).frames, d.music};
}

}  // namespace

TEST(Fid, SetAgainstItselfIsZero) {
  const auto set = gaussian_set(50, 4, 0.0, 1.0, 1);
  EXPECT_NEAR(fid(set, set), 0.0, 1e-6);
}

TEST(Fid, OneDimensionalMatchesClosedForm) {
  const auto a = gaussian_set(400, 1, 0.0, 1.0, 2);
  const auto b = gaussian_set(400, 1, 1.0, 2.0, 3);
  auto moments = [](const std::vector<FeatureVector>& s) {
    double m = 0.0, v = 0.0;
    for (const auto& f : s) m += f.values(0) / s.size();
    for (const auto& f : s) v += (f.values(0) - m) * (f.values(0) - m) / (s.size() - 1);
    return std::pair{m, v};
  };
  const auto [ma, va] = moments(a);
  const auto [mb, vb] = moments(b);
  const double ra = va + kFidRegularization, rb = vb + kFidRegularization;
  const double expected = (ma - mb) * (ma - mb) + ra + rb - 2.0 * std::sqrt(ra * rb);
  EXPECT_NEAR(fid(a, b), expected, 1e-9);
  EXPECT_NEAR(fid(a, b), fid(b, a), 1e-9);
}

TEST(Fid, RejectsMismatchedOrTinySets) {
  const auto a = gaussian_set(5, 3, 0.0, 1.0, 4);
  const auto b = gaussian_set(5, 2, 0.0, 1.0, 5);
  EXPECT_THROW(fid(a, b), DataError);
  EXPECT_THROW(fid(gaussian_set(1, 3, 0.0, 1.0, 6), a), DataError);
}

TEST(Diversity, MeanPairwiseDistance) {
  std::vector<FeatureVector> set(3, FeatureVector{FeatureKind::geometric, Eigen::VectorXd::Zero(2)});
  set[1].values << 3.0, 4.0;
  set[2].values << 0.0, 1.0;
  EXPECT_NEAR(diversity(set), (5.0 + 1.0 + std::sqrt(9.0 + 9.0)) / 3.0, 1e-12);
}

TEST(Features, KineticFeaturesOfStaticMotionAreZero) {
  const RealizedMotion m = realize_motion(model(), pulse_motion(1, 10, 0));
  const PointSequence still(5, m.frames.front());
  const FeatureVector f = kinetic_features(still, 30.0);
  EXPECT_EQ(f.values.size(), kKineticDims);
  EXPECT_EQ(f.values.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Features, CrossDistanceDimensionsAndStaticSpread) {
  const EvalDuet d = decoded("orbit", 1, 0.5);
  const PointSequence lead(4, d.leader.front()), follow(4, d.follower.front());
  const FeatureVector f = cross_distance_features(lead, follow);
  EXPECT_EQ(f.values.size(), kCrossDims);
  EXPECT_LT(f.values.tail(100).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_GT(f.values.head(100).minCoeff(), 0.0);
}

TEST(Features, GeometricFeaturesAreFractions) {
  const EvalDuet d = decoded("mirror", 2, 0.5);
  const FeatureVector f = geometric_features(d.follower);
  EXPECT_EQ(f.values.size(), kGeometricDims);
  EXPECT_GE(f.values.minCoeff(), 0.0);
  EXPECT_LE(f.values.maxCoeff(), 1.0);
}

TEST(ContactMetrics, MatchBruteForceOracle) {
  for (const std::string name : {"handhold", "approach-touch", "orbit"}) {
    const EvalDuet d = decoded(name, 5, 1.0);
    const ContactMetrics m = contact_metrics(d.leader, d.follower, model());
    const oracle::ContactCounts c = oracle::contact_counts(model(), d.leader, d.follower);
    const double n = static_cast<double>(d.leader.size());
    EXPECT_NEAR(m.cf, c.contact_frames / n, 1e-12) << name;
    EXPECT_NEAR(m.clr, c.leader_vertices / (kSurfacePointCount * n), 1e-12) << name;
    EXPECT_NEAR(m.cfr, c.follower_vertices / (kSurfacePointCount * n), 1e-12) << name;
    EXPECT_NEAR(m.pr, c.penetrating / (kSurfacePointCount * n), 1e-12) << name;
    EXPECT_NEAR(m.cvr, 0.5 * (m.clr + m.cfr), 1e-15) << name;
  }
}

TEST(ContactMetrics, RejectMismatchedLengths) {
  const EvalDuet d = decoded("handhold", 6, 0.5);
  PointSequence shorter = d.follower;
  shorter.pop_back();
  EXPECT_THROW(contact_metrics(d.leader, shorter, model()), DataError);
}

TEST(Rhythm, BeatAlignmentKernel) {
  EXPECT_DOUBLE_EQ(beat_alignment({0, 30}, {0, 30}, 30.0, 0.1), 1.0);
  EXPECT_NEAR(beat_alignment({0}, {3}, 30.0, 0.1), std::exp(-0.5), 1e-12);
  EXPECT_EQ(beat_alignment({}, {3}, 30.0, 0.1), 0.0);
  EXPECT_EQ(beat_alignment({0}, {}, 30.0, 0.1), 0.0);
}

TEST(Rhythm, MotionBeatsAreSpeedMinima) {
  const RealizedMotion m = realize_motion(model(), pulse_motion(90, 30, 5));
  const std::vector<int> beats = motion_beats(m.frames);
  ASSERT_FALSE(beats.empty());
  int interior = 0;
  for (int b : beats) {
    if (b == 0 || b == 89) continue;
    EXPECT_EQ((b - 5 + 30) % 30, 0) << b;
    ++interior;
  }
  EXPECT_EQ(interior, 3);
}

TEST(Rhythm, AlignmentDecaysWithOffset) {
  const MusicFeatures music = metronome(120, 60.0, 30.0);
  double previous = 2.0;
  for (int offset = 0; offset <= 9; ++offset) {
    const RealizedMotion m = realize_motion(model(), pulse_motion(120, 30, offset));
    const double bas = rhythm_metrics(music, m.frames, m.frames).bas;
    if (offset == 0) EXPECT_NEAR(bas, 1.0, 1e-12);
    EXPECT_LT(bas, previous) << offset;
    previous = bas;
  }
}

TEST(Evaluate, ReportsWarningsForSingleSample) {
  const EvalDuet d = decoded("handhold", 7, 0.5);
  const MetricsReport r = evaluate({d}, {d}, model());
  EXPECT_EQ(r.fid_k, 0.0);
  EXPECT_FALSE(r.warnings.empty());
  EXPECT_GT(r.cf, 0.0);
  const nlohmann::json j = to_json(r);
  for (const char* key : {"FID_k", "FID_g", "Div_k", "Div_g", "FID_cd", "Div_cd", "CF", "PR", "CLR", "CFR", "CVR",
                          "BED", "BAS"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_THROW(evaluate({d}, {}, model()), DataError);
}

TEST(Evaluate, IdenticalSetsHaveZeroFid) {
  const std::vector<EvalDuet> set = {decoded("orbit", 1, 0.5), decoded("mirror", 2, 0.5), decoded("walk", 3, 0.5)};
  const MetricsReport r = evaluate(set, set, model());
  EXPECT_NEAR(r.fid_k, 0.0, 1e-6);
  EXPECT_NEAR(r.fid_g, 0.0, 1e-6);
  EXPECT_NEAR(r.fid_cd, 0.0, 1e-6);
  EXPECT_GT(r.div_cd, 0.0);
}
