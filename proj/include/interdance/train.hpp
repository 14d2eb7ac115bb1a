#pragma once

// Denoiser training: x0-prediction with the auxiliary losses, AdamW, per-epoch
// loss log and IDC1 checkpoints.

#include "interdance/denoiser.hpp"
#include "interdance/diffusion.hpp"
#include "interdance/formats.hpp"
#include "interdance/losses.hpp"
#include "interdance/music.hpp"
#include "interdance/parallel.hpp"

#include <numeric>
#include <ostream>

namespace interdance {

struct TrainingExample {
  RepSequence leader;
  RepSequence follower;
  MusicFeatures music;
};

struct ScheduleConfig {
  int steps = 50;
  double beta_start = 1e-4;
  double beta_end = 0.02;
};

struct OptimizerConfig {
  double lr = 1e-4;
  double weight_decay = 2e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  int epochs = 10;
  int batch_size = 1;
  std::uint64_t seed = 0;
  OptimizerConfig optimizer;
  LossWeights weights;
  ScheduleConfig schedule;
};

struct EpochLog {
  int epoch = 0;
  LossBreakdown mean;
};

inline nlohmann::json to_json(const LossBreakdown& l) {
  return {{"recon", l.recon}, {"vel", l.vel}, {"acc", l.acc}, {"foot", l.foot}, {"dm", l.dm},
          {"ro", l.ro},       {"con", l.con}, {"total", l.total}};
}

inline nlohmann::json to_json(const EpochLog& e) {
  nlohmann::json j = to_json(e.mean);
  j["epoch"] = e.epoch;
  return j;
}

inline nlohmann::json to_json(const DenoiserConfig& c) {
  return {{"width", c.width},
          {"blocks", c.blocks},
          {"heads", c.heads},
          {"ff_width", c.ff_width},
          {"channels", c.channels},
          {"music_channels", c.music_channels},
          {"max_frames", c.max_frames},
          {"mode", to_string(c.mode)},
          {"seed", c.seed},
          {"attention_window", c.attention_window},
          {"pooled_music", c.pooled_music}};
}

inline DenoiserConfig denoiser_config_from_json(const nlohmann::json& j) {
  DenoiserConfig c;
  try {
    c.width = j.at("width").get<int>();
    c.blocks = j.at("blocks").get<int>();
    c.heads = j.at("heads").get<int>();
    c.ff_width = j.at("ff_width").get<int>();
    c.channels = j.at("channels").get<int>();
    c.music_channels = j.at("music_channels").get<int>();
    c.max_frames = j.at("max_frames").get<int>();
    c.mode = parse_mode(j.at("mode").get<std::string>());
    c.seed = j.at("seed").get<std::uint64_t>();
    c.attention_window = j.at("attention_window").get<int>();
    c.pooled_music = j.at("pooled_music").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("denoiser config: ") + e.what());
  }
  validate(c);
  return c;
}

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"optimizer",
           {{"name", "adamw"},
            {"lr", c.optimizer.lr},
            {"weight_decay", c.optimizer.weight_decay},
            {"beta1", c.optimizer.beta1},
            {"beta2", c.optimizer.beta2},
            {"eps", c.optimizer.eps}}},
          {"loss_weights",
           {{"vel", c.weights.vel},
            {"acc", c.weights.acc},
            {"dm", c.weights.dm},
            {"ro", c.weights.ro},
            {"foot", c.weights.foot},
            {"con", c.weights.con},
            {"distance_threshold", c.weights.distance_threshold}}},
          {"schedule",
           {{"steps", c.schedule.steps}, {"beta_start", c.schedule.beta_start}, {"beta_end", c.schedule.beta_end}}}};
}

// ---------------------------------------------------------------------------
// Checkpoints

/// Architecture plus any run metadata (stored under "run").
inline void save_checkpoint(const std::string& path, const ParameterSet& params, const DenoiserConfig& config,
                            const nlohmann::json& run = nlohmann::json::object()) {
  CheckpointFile ckpt;
  ckpt.config_json = nlohmann::json{{"denoiser", to_json(config)}, {"run", run}}.dump();
  visit_parameters(params, [&ckpt](const std::string& name, const Matrix& m) { ckpt.tensors.push_back({name, m}); });
  ckpt.tensors.push_back({"norm.mean", params.norm.mean});
  ckpt.tensors.push_back({"norm.scale", params.norm.scale});
  write_checkpoint(path, ckpt);
}

struct LoadedCheckpoint {
  DenoiserConfig config;
  ParameterSet params;
  nlohmann::json run;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  const CheckpointFile ckpt = read_checkpoint(path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(ckpt.config_json);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": config block is not valid JSON: " + e.what());
  }
  LoadedCheckpoint out;
  out.config = denoiser_config_from_json(doc.value("denoiser", nlohmann::json::object()));
  out.run = doc.value("run", nlohmann::json::object());
  out.params = init_parameters(out.config);
  std::size_t k = 0;
  visit_parameters(out.params, [&](const std::string& name, Matrix& m) {
    if (k >= ckpt.tensors.size()) {
      throw FormatError(FormatErrorCode::count_mismatch, path, 0, "missing tensor " + name);
    }
    const NamedTensor& t = ckpt.tensors[k++];
    if (t.name != name || t.value.rows() != m.rows() || t.value.cols() != m.cols()) {
      throw FormatError(FormatErrorCode::count_mismatch, path, 0,
                        "tensor " + std::to_string(k - 1) + " is " + t.name + " " + std::to_string(t.value.rows()) + "x" +
                            std::to_string(t.value.cols()) + ", expected " + name + " " + std::to_string(m.rows()) +
                            "x" + std::to_string(m.cols()));
    }
    m = t.value;
  });
  for (Matrix* m : {&out.params.norm.mean, &out.params.norm.scale}) {
    const std::string name = m == &out.params.norm.mean ? "norm.mean" : "norm.scale";
    if (k >= ckpt.tensors.size() || ckpt.tensors[k].name != name || ckpt.tensors[k].value.rows() != 2 ||
        ckpt.tensors[k].value.cols() != out.config.channels) {
      throw FormatError(FormatErrorCode::count_mismatch, path, 0, "missing or malformed tensor " + name);
    }
    *m = ckpt.tensors[k++].value;
  }
  if (k != ckpt.tensors.size()) throw FormatError(FormatErrorCode::count_mismatch, path, 0, "unexpected extra tensors");
  return out;
}

// ---------------------------------------------------------------------------
// Optimizer

class AdamW {
 public:
  AdamW(const ParameterSet& like, OptimizerConfig config)
      : config_(config), m_(zeros_like(like)), v_(zeros_like(like)) {}

  void step(ParameterSet& params, const ParameterSet& grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(config_.beta1, t_);
    const double c2 = 1.0 - std::pow(config_.beta2, t_);
    std::vector<const Matrix*> g;
    visit_parameters(grad, [&g](const std::string&, const Matrix& x) { g.push_back(&x); });
    std::vector<Matrix*> m;
    std::vector<Matrix*> v;
    visit_parameters(m_, [&m](const std::string&, Matrix& x) { m.push_back(&x); });
    visit_parameters(v_, [&v](const std::string&, Matrix& x) { v.push_back(&x); });
    std::size_t k = 0;
    visit_parameters(params, [&](const std::string&, Matrix& p) {
      Matrix& mk = *m[k];
      Matrix& vk = *v[k];
      const Matrix& gk = *g[k];
      ++k;
      mk = config_.beta1 * mk + (1.0 - config_.beta1) * gk;
      vk = config_.beta2 * vk + (1.0 - config_.beta2) * gk.cwiseAbs2();
      const Matrix update =
          ((mk / c1).array() / ((vk / c2).array().sqrt() + config_.eps)).matrix() + config_.weight_decay * p;
      p -= config_.lr * update;
    });
  }

  int steps_taken() const { return t_; }

 private:
  OptimizerConfig config_;
  ParameterSet m_, v_;
  int t_ = 0;
};

// ---------------------------------------------------------------------------
// Training loop

struct StepResult {
  LossBreakdown losses;
  ParameterSet gradient;
};

/// Loss and gradient for one example at diffusion step n with the given
/// noise. Duet mode adds the leader's terms, each dancer scored against the
/// partner's ground truth.
inline StepResult training_step(const ParameterSet& params, const DenoiserConfig& config, const NoiseSchedule& schedule,
                                const TrainingExample& ex, const BodyModel& model, const LossWeights& weights, int n,
                                const Matrix& noise_f, const Matrix& noise_l) {
  const Matrix xf = q_sample(schedule, ex.follower.data, n, noise_f);
  const Matrix xl = config.mode == DenoiserMode::duet ? q_sample(schedule, ex.leader.data, n, noise_l) : ex.leader.data;
  StepResult result;
  const OutputLoss loss = [&](const DenoiserOutput& out, Matrix& d_follower, Matrix& d_leader) {
    const LossResult f = compute_losses(RepSequence{out.follower, ex.follower.fps}, ex.follower, ex.leader, model, weights);
    d_follower = f.gradient;
    result.losses = f.losses;
    if (config.mode == DenoiserMode::duet) {
      const LossResult l = compute_losses(RepSequence{out.leader, ex.leader.fps}, ex.leader, ex.follower, model, weights);
      d_leader = l.gradient;
      result.losses += l.losses;
    }
    return result.losses.total;
  };
  result.gradient = parameter_gradients(params, config, xf, xl, n, ex.music.data, loss).gradient;
  return result;
}

struct TrainResult {
  ParameterSet params;
  std::vector<EpochLog> log;
};

/// Trains from `initial`. Each epoch visits the examples in a seeded order in
/// batches; every example draws its own step and noise. `on_epoch` (optional)
/// sees each log record as it is produced.
inline TrainResult train(const std::vector<TrainingExample>& data, ParameterSet initial, const DenoiserConfig& config,
                         const TrainConfig& tc, const BodyModel& model,
                         const std::function<void(const EpochLog&)>& on_epoch = {}) {
  if (data.empty()) throw DataError("train: empty dataset");
  if (tc.epochs < 1 || tc.batch_size < 1) throw ConfigError("train: epochs and batch_size must be >= 1");
  const NoiseSchedule schedule = make_schedule(tc.schedule.steps, tc.schedule.beta_start, tc.schedule.beta_end);
  std::mt19937_64 rng(tc.seed);
  TrainResult result;
  result.params = std::move(initial);
  AdamW optimizer(result.params, tc.optimizer);
  std::vector<int> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    LossBreakdown sum;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(tc.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(tc.batch_size));
      const int batch = static_cast<int>(end - start);
      // draw all randomness up front so results do not depend on threading
      std::vector<int> steps;
      std::vector<Matrix> noise_f, noise_l;
      std::uniform_int_distribution<int> pick(1, schedule.steps());
      for (std::size_t b = start; b < end; ++b) {
        const TrainingExample& ex = data[static_cast<std::size_t>(order[b])];
        steps.push_back(pick(rng));
        noise_f.push_back(standard_normal(ex.follower.frame_count(), layout::channels, rng));
        noise_l.push_back(config.mode == DenoiserMode::duet
                              ? standard_normal(ex.leader.frame_count(), layout::channels, rng)
                              : Matrix());
      }
      std::vector<StepResult> parts(static_cast<std::size_t>(batch));
      parallel_for(batch, [&](int b) {
        const auto bi = static_cast<std::size_t>(b);
        parts[bi] = training_step(result.params, config, schedule, data[static_cast<std::size_t>(order[start + bi])],
                                  model, tc.weights, steps[bi], noise_f[bi], noise_l[bi]);
      });
      ParameterSet grad = zeros_like(result.params);
      for (const auto& p : parts) {
        if (!std::isfinite(p.losses.total)) {
          throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch));
        }
        axpy(grad, 1.0 / batch, p.gradient);
        sum += p.losses;
      }
      optimizer.step(result.params, grad);
    }
    EpochLog record{epoch, sum.scaled(1.0 / static_cast<double>(data.size()))};
    result.log.push_back(record);
    if (on_epoch) on_epoch(record);
  }
  return result;
}

/// Per-channel mean and standard deviation (floored at `min_scale`) over
/// every frame, leader in row 0 and follower in row 1.
inline OutputNorm fit_output_norm(const std::vector<TrainingExample>& data, double min_scale = 0.01) {
  if (data.empty()) throw DataError("fit_output_norm: empty dataset");
  OutputNorm norm{Matrix(2, layout::channels), Matrix(2, layout::channels)};
  for (int s = 0; s < 2; ++s) {
    Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(layout::channels);
    Eigen::RowVectorXd sum2 = Eigen::RowVectorXd::Zero(layout::channels);
    double rows = 0.0;
    for (const auto& ex : data) {
      const Matrix& m = s == 0 ? ex.leader.data : ex.follower.data;
      sum += m.colwise().sum();
      sum2 += m.cwiseAbs2().colwise().sum();
      rows += static_cast<double>(m.rows());
    }
    const Eigen::RowVectorXd mean = sum / rows;
    const Eigen::RowVectorXd var = (sum2 / rows - mean.cwiseAbs2()).cwiseMax(0.0);
    norm.mean.row(s) = mean;
    norm.scale.row(s) = var.cwiseSqrt().cwiseMax(min_scale);
  }
  return norm;
}

/// Fresh parameters whose output normalisation is fitted to `data`.
inline ParameterSet init_for_training(const DenoiserConfig& config, const std::vector<TrainingExample>& data) {
  ParameterSet p = init_parameters(config);
  p.norm = fit_output_norm(data);
  return p;
}

/// Encodes a leader/follower pair (each against the other) for training.
inline TrainingExample make_example(const MotionSequence& leader, const MotionSequence& follower,
                                    const MusicFeatures& music, const BodyModel& model) {
  const RealizedMotion l = realize_motion(model, leader);
  const RealizedMotion f = realize_motion(model, follower);
  return {encode_realized(l, f, model), encode_realized(f, l, model), music};
}

}  // namespace interdance
