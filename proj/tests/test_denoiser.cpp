#include "interdance/denoiser.hpp"
#include "interdance/diffusion.hpp"
#include "interdance/gradcheck.hpp"

#include <gtest/gtest.h>

using namespace interdance;

namespace {

DenoiserConfig small(DenoiserMode mode = DenoiserMode::reactive) {
  DenoiserConfig c;
  c.width = 8;
  c.blocks = 1;
  c.heads = 2;
  c.ff_width = 16;
  c.mode = mode;
  c.seed = 5;
  return c;
}

struct Inputs {
  Matrix follower, leader, music;
};

Inputs random_inputs(int frames, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return {standard_normal(frames, layout::channels, rng), standard_normal(frames, layout::channels, rng),
          standard_normal(frames, kMusicChannels, rng)};
}

ParameterSet randomized(const DenoiserConfig& c, std::uint64_t seed) {
  ParameterSet p = init_parameters(c);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 0.3);
  visit_parameters(p, [&](const std::string&, Matrix& m) {
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = normal(rng);
  });
  return p;
}

}  // namespace

TEST(DenoiserConfig, ValidatesShape) {
  DenoiserConfig c = small();
  EXPECT_NO_THROW(validate(c));
  c.heads = 3;
  EXPECT_THROW(validate(c), ConfigError);
  c = small();
  c.width = 0;
  EXPECT_THROW(validate(c), ConfigError);
  c = small();
  c.attention_window = -1;
  EXPECT_THROW(validate(c), ConfigError);
  EXPECT_THROW(parse_mode("solo"), ConfigError);
  EXPECT_EQ(parse_mode("duet"), DenoiserMode::duet);
}

TEST(Parameters, CountMatchesClosedForm) {
  for (const DenoiserConfig& c : {small(), DenoiserConfig{}}) {
    EXPECT_EQ(parameter_count(init_parameters(c)), expected_parameter_count(c));
  }
}

TEST(Parameters, InitIsSeeded) {
  const ParameterSet a = init_parameters(small());
  const ParameterSet b = init_parameters(small());
  DenoiserConfig other = small();
  other.seed = 6;
  const ParameterSet c = init_parameters(other);
  EXPECT_EQ(a.follower.in_w, b.follower.in_w);
  EXPECT_NE(a.follower.in_w, c.follower.in_w);
}

TEST(Forward, UntrainedModelPredictsNormMean) {
  const DenoiserConfig c = small();
  ParameterSet p = init_parameters(c);
  p.norm.mean.row(1).setConstant(0.25);
  const Inputs in = random_inputs(4, 1);
  const DenoiserOutput out = denoiser_forward(p, c, in.follower, in.leader, 10, in.music);
  EXPECT_EQ(out.follower.rows(), 4);
  EXPECT_EQ(out.follower.cols(), layout::channels);
  EXPECT_TRUE(out.leader.size() == 0);
  EXPECT_LT((out.follower.array() - 0.25).abs().maxCoeff(), 1e-15);
}

TEST(Forward, OutputNormIsPerStream) {
  const DenoiserConfig c = small(DenoiserMode::duet);
  ParameterSet p = randomized(c, 2);
  p.norm = {Matrix::Zero(2, layout::channels), Matrix::Ones(2, layout::channels)};
  const Inputs in = random_inputs(3, 2);
  const DenoiserOutput raw = denoiser_forward(p, c, in.follower, in.leader, 7, in.music);
  p.norm.mean.row(0).setConstant(1.0);
  p.norm.scale.row(1).setConstant(3.0);
  const DenoiserOutput scaled = denoiser_forward(p, c, in.follower, in.leader, 7, in.music);
  EXPECT_LT((scaled.leader - (raw.leader.array() + 1.0).matrix()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((scaled.follower - 3.0 * raw.follower).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Forward, DuetModeReturnsBothStreams) {
  const DenoiserConfig c = small(DenoiserMode::duet);
  const Inputs in = random_inputs(5, 3);
  const DenoiserOutput out = denoiser_forward(randomized(c, 3), c, in.follower, in.leader, 1, in.music);
  EXPECT_EQ(out.leader.rows(), 5);
  EXPECT_EQ(out.follower.rows(), 5);
  EXPECT_NE(out.leader, out.follower);
}

TEST(Forward, FollowerDependsOnLeaderThroughCrossAttention) {
  const DenoiserConfig c = small();
  const ParameterSet p = randomized(c, 4);
  Inputs in = random_inputs(4, 4);
  const Matrix before = denoiser_forward(p, c, in.follower, in.leader, 3, in.music).follower;
  in.leader(2, 100) += 1.0;
  const Matrix after = denoiser_forward(p, c, in.follower, in.leader, 3, in.music).follower;
  EXPECT_GT((after - before).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Forward, AttentionWindowLimitsReceptiveField) {
  DenoiserConfig c = small();
  c.attention_window = 1;
  c.pooled_music = false;
  const ParameterSet p = randomized(c, 5);
  Inputs in = random_inputs(8, 5);
  const Matrix before = denoiser_forward(p, c, in.follower, in.leader, 3, in.music).follower;
  in.follower(7, 10) += 1.0;
  const Matrix after = denoiser_forward(p, c, in.follower, in.leader, 3, in.music).follower;
  // self then cross attention: at most two frames of reach
  EXPECT_EQ((after.topRows(5) - before.topRows(5)).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_GT((after.row(7) - before.row(7)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Forward, DependsOnTimestep) {
  const DenoiserConfig c = small();
  const ParameterSet p = randomized(c, 6);
  const Inputs in = random_inputs(3, 6);
  EXPECT_NE(denoiser_forward(p, c, in.follower, in.leader, 1, in.music).follower,
            denoiser_forward(p, c, in.follower, in.leader, 40, in.music).follower);
}

TEST(Forward, RejectsBadShapes) {
  const DenoiserConfig c = small();
  const ParameterSet p = init_parameters(c);
  const Inputs in = random_inputs(3, 7);
  EXPECT_THROW(denoiser_forward(p, c, in.follower, in.leader.topRows(2), 1, in.music), DataError);
  EXPECT_THROW(denoiser_forward(p, c, in.follower, in.leader, 1, in.music.leftCols(34)), DataError);
  ParameterSet bad = p;
  bad.norm.mean = Matrix::Zero(1, layout::channels);
  EXPECT_THROW(denoiser_forward(bad, c, in.follower, in.leader, 1, in.music), ConfigError);
}

TEST(Forward, BatchMatchesSingleCalls) {
  const DenoiserConfig c = small();
  const ParameterSet p = randomized(c, 8);
  const Inputs a = random_inputs(3, 8), b = random_inputs(5, 9);
  const auto out = denoiser_forward_batch(p, c, {{a.follower, a.leader, 4, a.music}, {b.follower, b.leader, 9, b.music}});
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[1].follower, denoiser_forward(p, c, b.follower, b.leader, 9, b.music).follower);
}

TEST(Backward, ReactiveGradientsMatchFiniteDifferences) {
  GradcheckOptions opt;
  opt.configurations = 5;
  opt.seed = 31;
  const GradcheckReport r = gradcheck_denoiser(opt, DenoiserMode::reactive);
  EXPECT_TRUE(r.passed()) << r.max_rel_error;
  EXPECT_GT(r.coordinates, 0);
}

TEST(Backward, DuetGradientsMatchFiniteDifferences) {
  GradcheckOptions opt;
  opt.configurations = 5;
  opt.seed = 32;
  const GradcheckReport r = gradcheck_denoiser(opt, DenoiserMode::duet);
  EXPECT_TRUE(r.passed()) << r.max_rel_error;
}

TEST(Backward, NonFiniteLossIsReported) {
  const DenoiserConfig c = small();
  const Inputs in = random_inputs(2, 10);
  const OutputLoss nan_loss = [](const DenoiserOutput&, Matrix&, Matrix&) { return std::nan(""); };
  EXPECT_THROW(parameter_gradients(init_parameters(c), c, in.follower, in.leader, 1, in.music, nan_loss),
               NumericalError);
}
