#pragma once

// Two-stream interactive decoder that predicts clean representations.
//
// Each dancer has its own stream of per-frame tokens. Every block runs, per
// stream: self-attention, cross-attention into the partner stream, and a
// feed-forward layer, each behind an adaptive-norm modulation (shift, scale,
// gate) driven by the music-frame + timestep embedding. Order inside a block:
//   h1 = h  + g1 * SelfAttn(LN(h)  * (1 + s1) + b1)
//   h2 = h1 + g2 * CrossAttn(LN(h1) * (1 + s2) + b2, LN(h_partner))
//   h3 = h2 + g3 * FF(LN(h2) * (1 + s3) + b3)
// Both streams of a block read the partner's block input.
//
// Reverse-mode gradients are written out by hand; see denoiser_backward.

#include "interdance/common.hpp"
#include "interdance/representation.hpp"

#include <functional>
#include <random>

namespace interdance {

enum class DenoiserMode { reactive, duet };

inline std::string to_string(DenoiserMode m) { return m == DenoiserMode::duet ? "duet" : "reactive"; }

inline DenoiserMode parse_mode(const std::string& s) {
  if (s == "reactive") return DenoiserMode::reactive;
  if (s == "duet") return DenoiserMode::duet;
  throw ConfigError("unknown mode '" + s + "' (expected reactive or duet)");
}

struct DenoiserConfig {
  int width = 64;
  int blocks = 2;
  int heads = 4;
  int ff_width = 128;
  int channels = layout::channels;
  int music_channels = kMusicChannels;
  int max_frames = 4096;
  DenoiserMode mode = DenoiserMode::reactive;
  std::uint64_t seed = 0;
  int attention_window = 0;  // 0: full attention; w > 0: |i - j| <= w
  bool pooled_music = true;  // add the sequence-mean music vector to the timestep embedding
};

inline void validate(const DenoiserConfig& c) {
  if (c.width <= 0 || c.blocks <= 0 || c.heads <= 0 || c.ff_width <= 0) {
    throw ConfigError("denoiser: width, blocks, heads and ff_width must be positive");
  }
  if (c.width % c.heads != 0) throw ConfigError("denoiser: width must be divisible by heads");
  if (c.width % 2 != 0) throw ConfigError("denoiser: width must be even (sinusoidal encodings)");
  if (c.channels != layout::channels) throw ConfigError("denoiser: channels must be 4981");
  if (c.music_channels != kMusicChannels) throw ConfigError("denoiser: music channels must be 35");
  if (c.attention_window < 0) throw ConfigError("denoiser: attention_window must be >= 0");
}

struct AttentionParams {
  Matrix wq, bq, wk, bk, wv, bv, wo, bo;
};

struct BlockParams {
  Matrix mod_w, mod_b;  // 9 chunks: shift/scale/gate for self, cross, feed-forward
  AttentionParams self_attn, cross_attn;
  Matrix ff_w1, ff_b1, ff_w2, ff_b2;
};

struct StreamParams {
  Matrix in_w, in_b;
  std::vector<BlockParams> blocks;
  Matrix final_mod_w, final_mod_b;  // shift/scale before the output map
  Matrix out_w, out_b;
};

/// Fixed per-channel affine after the output map: y = mean + scale * raw.
/// Fitted to the training data rather than learned; identity by default.
/// Row 0 applies to the leader stream, row 1 to the follower.
struct OutputNorm {
  Matrix mean, scale;  // 2 x channels
};

struct ParameterSet {
  Matrix time_w, time_b;    // timestep embedding projection
  Matrix music_w, music_b;  // per-frame music projection
  Matrix pool_w;            // pooled music summary
  StreamParams leader, follower;
  OutputNorm norm;          // not visited: never trained or decayed
};

namespace detail {

template <class Attn, class F>
void visit_attention(Attn& a, const std::string& prefix, F& f) {
  f(prefix + ".wq", a.wq);
  f(prefix + ".bq", a.bq);
  f(prefix + ".wk", a.wk);
  f(prefix + ".bk", a.bk);
  f(prefix + ".wv", a.wv);
  f(prefix + ".bv", a.bv);
  f(prefix + ".wo", a.wo);
  f(prefix + ".bo", a.bo);
}

template <class Stream, class F>
void visit_stream(Stream& s, const std::string& prefix, F& f) {
  f(prefix + ".in_w", s.in_w);
  f(prefix + ".in_b", s.in_b);
  for (std::size_t k = 0; k < s.blocks.size(); ++k) {
    auto& b = s.blocks[k];
    const std::string p = prefix + ".block" + std::to_string(k);
    f(p + ".mod_w", b.mod_w);
    f(p + ".mod_b", b.mod_b);
    visit_attention(b.self_attn, p + ".self", f);
    visit_attention(b.cross_attn, p + ".cross", f);
    f(p + ".ff_w1", b.ff_w1);
    f(p + ".ff_b1", b.ff_b1);
    f(p + ".ff_w2", b.ff_w2);
    f(p + ".ff_b2", b.ff_b2);
  }
  f(prefix + ".final_mod_w", s.final_mod_w);
  f(prefix + ".final_mod_b", s.final_mod_b);
  f(prefix + ".out_w", s.out_w);
  f(prefix + ".out_b", s.out_b);
}

}  // namespace detail

/// Calls f(name, matrix) for every tensor in a fixed order.
template <class P, class F>
  requires std::same_as<std::remove_const_t<P>, ParameterSet>
void visit_parameters(P& p, F&& f) {
  f(std::string("time_w"), p.time_w);
  f(std::string("time_b"), p.time_b);
  f(std::string("music_w"), p.music_w);
  f(std::string("music_b"), p.music_b);
  f(std::string("pool_w"), p.pool_w);
  detail::visit_stream(p.leader, "leader", f);
  detail::visit_stream(p.follower, "follower", f);
}

inline std::size_t parameter_count(const ParameterSet& p) {
  std::size_t n = 0;
  visit_parameters(p, [&n](const std::string&, const Matrix& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

inline ParameterSet zeros_like(const ParameterSet& p) {
  ParameterSet z = p;
  visit_parameters(z, [](const std::string&, Matrix& m) { m.setZero(); });
  return z;
}

/// a += s * b, tensor by tensor.
inline void axpy(ParameterSet& a, double s, const ParameterSet& b) {
  std::vector<const Matrix*> src;
  visit_parameters(b, [&src](const std::string&, const Matrix& m) { src.push_back(&m); });
  std::size_t i = 0;
  visit_parameters(a, [&](const std::string&, Matrix& m) { m += s * *src[i++]; });
}

inline ParameterSet init_parameters(const DenoiserConfig& c) {
  validate(c);
  std::mt19937_64 rng(c.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto random = [&](int rows, int cols, double stddev) {
    Matrix m(rows, cols);
    for (int r = 0; r < rows; ++r) {
      for (int k = 0; k < cols; ++k) m(r, k) = stddev * normal(rng);
    }
    return m;
  };
  auto fan_in = [&](int rows, int cols) { return random(rows, cols, 1.0 / std::sqrt(static_cast<double>(rows))); };
  auto zeros = [](int rows, int cols) { return Matrix::Zero(rows, cols).eval(); };
  const int d = c.width;

  ParameterSet p;
  p.time_w = fan_in(d, d);
  p.time_b = zeros(1, d);
  p.music_w = fan_in(c.music_channels, d);
  p.music_b = zeros(1, d);
  p.pool_w = fan_in(c.music_channels, d);
  auto make_attention = [&] {
    AttentionParams a;
    a.wq = fan_in(d, d);
    a.bq = zeros(1, d);
    a.wk = fan_in(d, d);
    a.bk = zeros(1, d);
    a.wv = fan_in(d, d);
    a.bv = zeros(1, d);
    a.wo = fan_in(d, d);
    a.bo = zeros(1, d);
    return a;
  };
  auto make_stream = [&] {
    StreamParams s;
    s.in_w = fan_in(c.channels, d);
    s.in_b = zeros(1, d);
    for (int k = 0; k < c.blocks; ++k) {
      BlockParams b;
      b.mod_w = random(d, 9 * d, 0.02);
      b.mod_b = zeros(1, 9 * d);
      b.self_attn = make_attention();
      b.cross_attn = make_attention();
      b.ff_w1 = fan_in(d, c.ff_width);
      b.ff_b1 = zeros(1, c.ff_width);
      b.ff_w2 = fan_in(c.ff_width, d);
      b.ff_b2 = zeros(1, d);
      s.blocks.push_back(std::move(b));
    }
    s.final_mod_w = random(d, 2 * d, 0.02);
    s.final_mod_b = zeros(1, 2 * d);
    // zero output map: the untrained model predicts its (zero) bias
    s.out_w = zeros(d, c.channels);
    s.out_b = zeros(1, c.channels);
    return s;
  };
  p.leader = make_stream();
  p.follower = make_stream();
  p.norm = {Matrix::Zero(2, c.channels), Matrix::Ones(2, c.channels)};
  return p;
}

/// Closed-form size of init_parameters(c).
inline std::size_t expected_parameter_count(const DenoiserConfig& c) {
  const std::size_t d = static_cast<std::size_t>(c.width);
  const std::size_t ch = static_cast<std::size_t>(c.channels);
  const std::size_t m = static_cast<std::size_t>(c.music_channels);
  const std::size_t f = static_cast<std::size_t>(c.ff_width);
  const std::size_t shared = d * d + d + m * d + d + m * d;
  const std::size_t attention = 4 * (d * d + d);
  const std::size_t block = (9 * d * d + 9 * d) + 2 * attention + (d * f + f) + (f * d + d);
  const std::size_t stream = (ch * d + d) + static_cast<std::size_t>(c.blocks) * block + (2 * d * d + 2 * d) +
                             (d * ch + ch);
  return shared + 2 * stream;
}

// ---------------------------------------------------------------------------
// Primitive layers

namespace nn {

inline Matrix sinusoidal(const Eigen::VectorXd& positions, int width) {
  const int half = width / 2;
  Matrix out(positions.size(), width);
  for (int r = 0; r < positions.size(); ++r) {
    for (int i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(10000.0) * i / half);
      out(r, i) = std::sin(positions(r) * freq);
      out(r, half + i) = std::cos(positions(r) * freq);
    }
  }
  return out;
}

inline Matrix linear(const Matrix& x, const Matrix& w, const Matrix& b) {
  Matrix y = x * w;
  y.rowwise() += b.row(0);
  return y;
}

struct LayerNormCache {
  Matrix y;
  Eigen::VectorXd inv_std;
};

inline constexpr double kLayerNormEps = 1e-6;

inline Matrix layer_norm(const Matrix& x, LayerNormCache& cache) {
  const Eigen::Index n = x.cols();
  cache.y.resize(x.rows(), n);
  cache.inv_std.resize(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const auto centered = (x.row(r).array() - mean).matrix();
    const double var = centered.squaredNorm() / static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    cache.inv_std(r) = inv;
    cache.y.row(r) = centered * inv;
  }
  return cache.y;
}

inline Matrix layer_norm_backward(const LayerNormCache& cache, const Matrix& dy) {
  const double n = static_cast<double>(dy.cols());
  Matrix dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double mean_dy = dy.row(r).sum() / n;
    const double mean_dy_y = dy.row(r).dot(cache.y.row(r)) / n;
    dx.row(r) = cache.inv_std(r) * (dy.row(r).array() - mean_dy - cache.y.row(r).array() * mean_dy_y).matrix();
  }
  return dx;
}

inline constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

inline double gelu(double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + 0.044715 * x * x * x))); }

inline double gelu_grad(double x) {
  const double th = std::tanh(kGeluC * (x + 0.044715 * x * x * x));
  return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * 0.044715 * x * x);
}

inline double silu(double x) { return x / (1.0 + std::exp(-x)); }

inline double silu_grad(double x) {
  const double s = 1.0 / (1.0 + std::exp(-x));
  return s * (1.0 + x * (1.0 - s));
}

struct AttentionCache {
  Matrix query_in, source_in;
  Matrix q, k, v, o;
  std::vector<Matrix> probs;  // per head, T x T
};

/// Multi-head scaled dot-product attention of `query_in` over `source_in`.
inline Matrix attention(const AttentionParams& p, const Matrix& query_in, const Matrix& source_in, int heads,
                        int window, AttentionCache& c) {
  c.query_in = query_in;
  c.source_in = source_in;
  c.q = linear(query_in, p.wq, p.bq);
  c.k = linear(source_in, p.wk, p.bk);
  c.v = linear(source_in, p.wv, p.bv);
  const Eigen::Index t_q = query_in.rows();
  const Eigen::Index t_s = source_in.rows();
  const int dh = static_cast<int>(c.q.cols()) / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  c.o.resize(t_q, c.q.cols());
  c.probs.assign(static_cast<std::size_t>(heads), Matrix());
  for (int h = 0; h < heads; ++h) {
    Matrix s = scale * c.q.middleCols(h * dh, dh) * c.k.middleCols(h * dh, dh).transpose();
    for (Eigen::Index i = 0; i < t_q; ++i) {
      double row_max = -std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < t_s; ++j) {
        if (window > 0 && std::abs(static_cast<long>(i - j)) > window) {
          s(i, j) = -std::numeric_limits<double>::infinity();
        } else {
          row_max = std::max(row_max, s(i, j));
        }
      }
      double sum = 0.0;
      for (Eigen::Index j = 0; j < t_s; ++j) {
        s(i, j) = std::isinf(s(i, j)) && s(i, j) < 0 ? 0.0 : std::exp(s(i, j) - row_max);
        sum += s(i, j);
      }
      s.row(i) /= sum;
    }
    c.o.middleCols(h * dh, dh) = s * c.v.middleCols(h * dh, dh);
    c.probs[static_cast<std::size_t>(h)] = std::move(s);
  }
  return linear(c.o, p.wo, p.bo);
}

inline void attention_backward(const AttentionParams& p, AttentionParams& g, const AttentionCache& c,
                               const Matrix& dout, int heads, Matrix& d_query_in, Matrix& d_source_in) {
  g.wo += c.o.transpose() * dout;
  g.bo += dout.colwise().sum();
  const Matrix d_o = dout * p.wo.transpose();
  const int dh = static_cast<int>(c.q.cols()) / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Matrix dq(c.q.rows(), c.q.cols());
  Matrix dk(c.k.rows(), c.k.cols());
  Matrix dv(c.v.rows(), c.v.cols());
  for (int h = 0; h < heads; ++h) {
    const Matrix& prob = c.probs[static_cast<std::size_t>(h)];
    const auto d_oh = d_o.middleCols(h * dh, dh);
    const Matrix d_prob = d_oh * c.v.middleCols(h * dh, dh).transpose();
    dv.middleCols(h * dh, dh) = prob.transpose() * d_oh;
    const Eigen::VectorXd row_dot = (d_prob.array() * prob.array()).rowwise().sum();
    const Matrix d_score = (prob.array() * (d_prob.colwise() - row_dot).array()).matrix() * scale;
    dq.middleCols(h * dh, dh) = d_score * c.k.middleCols(h * dh, dh);
    dk.middleCols(h * dh, dh) = d_score.transpose() * c.q.middleCols(h * dh, dh);
  }
  g.wq += c.query_in.transpose() * dq;
  g.bq += dq.colwise().sum();
  g.wk += c.source_in.transpose() * dk;
  g.bk += dk.colwise().sum();
  g.wv += c.source_in.transpose() * dv;
  g.bv += dv.colwise().sum();
  d_query_in = dq * p.wq.transpose();
  d_source_in = dk * p.wk.transpose() + dv * p.wv.transpose();
}

}  // namespace nn

// ---------------------------------------------------------------------------
// Forward / backward

struct BlockCache {
  Matrix h_in;
  Matrix mod;
  nn::LayerNormCache ln1, ln2, ln3, partner_ln;
  Matrix a1, a2, a3;
  nn::AttentionCache self_attn, cross_attn;
  Matrix z1, z2, z3;
  Matrix ff_pre, ff_act;
};

struct StreamCache {
  Matrix input;
  std::vector<BlockCache> blocks;
  Matrix h_final;
  nn::LayerNormCache final_ln;
  Matrix final_mod;
  Matrix final_a;
};

struct ForwardCache {
  Matrix step_embedding;  // 1 x d
  Matrix music_mean;      // 1 x 35
  Matrix music;           // T x 35
  Matrix cond_pre;        // T x d, before SiLU
  Matrix cond;            // T x d
  StreamCache leader, follower;
  bool leader_output = false;
};

struct DenoiserOutput {
  Matrix follower;
  Matrix leader;  // empty in reactive mode
};

namespace detail {

inline Matrix chunk(const Matrix& m, int index, int width) { return m.middleCols(index * width, width); }

inline void check_finite(const Matrix& m, const std::string& where) {
  if (!m.allFinite()) throw NumericalError("denoiser: non-finite values in " + where);
}

inline Matrix modulate(const Matrix& normed, const Matrix& shift, const Matrix& scale) {
  return (normed.array() * (1.0 + scale.array()) + shift.array()).matrix();
}

}  // namespace detail

/// Predicts clean representations. `follower_in` is the noisy follower;
/// `leader_in` is the clean leader (reactive) or the noisy leader (duet).
inline DenoiserOutput denoiser_forward(const ParameterSet& p, const DenoiserConfig& c, const Matrix& follower_in,
                                       const Matrix& leader_in, int step, const Matrix& music,
                                       ForwardCache* cache_out = nullptr) {
  const Eigen::Index t_count = follower_in.rows();
  if (leader_in.rows() != t_count || music.rows() != t_count || follower_in.cols() != c.channels ||
      leader_in.cols() != c.channels || music.cols() != c.music_channels) {
    throw DataError("denoiser: input shape mismatch");
  }
  if (t_count < 1 || t_count > c.max_frames) throw DataError("denoiser: frame count out of range");
  if (p.norm.mean.rows() != 2 || p.norm.scale.rows() != 2 || p.norm.mean.cols() != c.channels ||
      p.norm.scale.cols() != c.channels) {
    throw ConfigError("denoiser: output normalisation does not match the channel count");
  }
  const int d = c.width;
  ForwardCache local;
  ForwardCache& fc = cache_out ? *cache_out : local;

  Eigen::VectorXd step_pos(1);
  step_pos(0) = static_cast<double>(step);
  fc.step_embedding = nn::sinusoidal(step_pos, d);
  fc.music = music;
  fc.music_mean = music.colwise().mean();
  Matrix e = nn::linear(fc.step_embedding, p.time_w, p.time_b);
  if (c.pooled_music) e += fc.music_mean * p.pool_w;
  fc.cond_pre = nn::linear(music, p.music_w, p.music_b);
  fc.cond_pre.rowwise() += e.row(0);
  fc.cond = fc.cond_pre.unaryExpr([](double v) { return nn::silu(v); });

  Eigen::VectorXd frames(t_count);
  for (Eigen::Index t = 0; t < t_count; ++t) frames(t) = static_cast<double>(t);
  const Matrix positional = nn::sinusoidal(frames, d);

  StreamCache* caches[2] = {&fc.leader, &fc.follower};
  const StreamParams* params[2] = {&p.leader, &p.follower};
  const Matrix* inputs[2] = {&leader_in, &follower_in};
  const char* names[2] = {"leader", "follower"};
  Matrix h[2];
  for (int s = 0; s < 2; ++s) {
    caches[s]->input = *inputs[s];
    caches[s]->blocks.assign(static_cast<std::size_t>(c.blocks), BlockCache{});
    h[s] = nn::linear(*inputs[s], params[s]->in_w, params[s]->in_b) + positional;
  }
  for (int k = 0; k < c.blocks; ++k) {
    const Matrix block_in[2] = {h[0], h[1]};
    for (int s = 0; s < 2; ++s) {
      const BlockParams& bp = params[s]->blocks[static_cast<std::size_t>(k)];
      BlockCache& bc = caches[s]->blocks[static_cast<std::size_t>(k)];
      bc.h_in = block_in[s];
      bc.mod = nn::linear(fc.cond, bp.mod_w, bp.mod_b);
      using detail::chunk;
      bc.a1 = detail::modulate(nn::layer_norm(bc.h_in, bc.ln1), chunk(bc.mod, 0, d), chunk(bc.mod, 1, d));
      bc.z1 = nn::attention(bp.self_attn, bc.a1, bc.a1, c.heads, c.attention_window, bc.self_attn);
      Matrix h1 = bc.h_in + (chunk(bc.mod, 2, d).array() * bc.z1.array()).matrix();
      bc.a2 = detail::modulate(nn::layer_norm(h1, bc.ln2), chunk(bc.mod, 3, d), chunk(bc.mod, 4, d));
      const Matrix partner = nn::layer_norm(block_in[1 - s], bc.partner_ln);
      bc.z2 = nn::attention(bp.cross_attn, bc.a2, partner, c.heads, c.attention_window, bc.cross_attn);
      Matrix h2 = h1 + (chunk(bc.mod, 5, d).array() * bc.z2.array()).matrix();
      bc.a3 = detail::modulate(nn::layer_norm(h2, bc.ln3), chunk(bc.mod, 6, d), chunk(bc.mod, 7, d));
      bc.ff_pre = nn::linear(bc.a3, bp.ff_w1, bp.ff_b1);
      bc.ff_act = bc.ff_pre.unaryExpr([](double v) { return nn::gelu(v); });
      bc.z3 = nn::linear(bc.ff_act, bp.ff_w2, bp.ff_b2);
      h[s] = h2 + (chunk(bc.mod, 8, d).array() * bc.z3.array()).matrix();
      detail::check_finite(h[s], std::string(names[s]) + ".block" + std::to_string(k));
    }
  }

  DenoiserOutput out;
  fc.leader_output = c.mode == DenoiserMode::duet;
  for (int s = 0; s < 2; ++s) {
    if (s == 0 && !fc.leader_output) continue;
    StreamCache& sc = *caches[s];
    sc.h_final = h[s];
    sc.final_mod = nn::linear(fc.cond, params[s]->final_mod_w, params[s]->final_mod_b);
    sc.final_a = detail::modulate(nn::layer_norm(sc.h_final, sc.final_ln), detail::chunk(sc.final_mod, 0, d),
                                  detail::chunk(sc.final_mod, 1, d));
    Matrix y = nn::linear(sc.final_a, params[s]->out_w, params[s]->out_b);
    y = (y.array().rowwise() * p.norm.scale.row(s).array()).matrix();
    y.rowwise() += p.norm.mean.row(s);
    detail::check_finite(y, std::string(names[s]) + ".out");
    (s == 0 ? out.leader : out.follower) = std::move(y);
  }
  return out;
}

/// Gradients of a scalar loss given d loss / d outputs. `d_leader` is used
/// only in duet mode.
inline ParameterSet denoiser_backward(const ParameterSet& p, const DenoiserConfig& c, const ForwardCache& fc,
                                      const Matrix& d_follower, const Matrix& d_leader = Matrix()) {
  const int d = c.width;
  ParameterSet g = zeros_like(p);
  const StreamCache* caches[2] = {&fc.leader, &fc.follower};
  const StreamParams* params[2] = {&p.leader, &p.follower};
  StreamParams* grads[2] = {&g.leader, &g.follower};
  const char* names[2] = {"leader", "follower"};
  const Eigen::Index t_count = fc.cond.rows();

  Matrix d_cond = Matrix::Zero(t_count, d);
  Matrix dh[2] = {Matrix::Zero(t_count, d), Matrix::Zero(t_count, d)};

  for (int s = 0; s < 2; ++s) {
    if (s == 0 && !fc.leader_output) continue;
    const Matrix& dy = s == 0 ? d_leader : d_follower;
    if (dy.rows() != t_count || dy.cols() != c.channels) throw DataError("denoiser_backward: gradient shape mismatch");
    const StreamCache& sc = *caches[s];
    StreamParams& gs = *grads[s];
    const Matrix dy_raw = (dy.array().rowwise() * p.norm.scale.row(s).array()).matrix();
    gs.out_w += sc.final_a.transpose() * dy_raw;
    gs.out_b += dy_raw.colwise().sum();
    const Matrix d_a = dy_raw * params[s]->out_w.transpose();
    const Matrix scale = detail::chunk(sc.final_mod, 1, d);
    Matrix d_mod(t_count, 2 * d);
    d_mod.leftCols(d) = d_a;
    d_mod.rightCols(d) = (d_a.array() * sc.final_ln.y.array()).matrix();
    gs.final_mod_w += fc.cond.transpose() * d_mod;
    gs.final_mod_b += d_mod.colwise().sum();
    d_cond += d_mod * params[s]->final_mod_w.transpose();
    dh[s] = nn::layer_norm_backward(sc.final_ln, (d_a.array() * (1.0 + scale.array())).matrix());
  }

  for (int k = c.blocks - 1; k >= 0; --k) {
    Matrix d_in[2] = {Matrix::Zero(t_count, d), Matrix::Zero(t_count, d)};
    for (int s = 0; s < 2; ++s) {
      const BlockParams& bp = params[s]->blocks[static_cast<std::size_t>(k)];
      BlockParams& gb = grads[s]->blocks[static_cast<std::size_t>(k)];
      const BlockCache& bc = caches[s]->blocks[static_cast<std::size_t>(k)];
      using detail::chunk;
      Matrix d_mod(t_count, 9 * d);

      // feed-forward sublayer
      const Matrix& dh3 = dh[s];
      d_mod.middleCols(8 * d, d) = (dh3.array() * bc.z3.array()).matrix();
      const Matrix dz3 = (dh3.array() * chunk(bc.mod, 8, d).array()).matrix();
      gb.ff_w2 += bc.ff_act.transpose() * dz3;
      gb.ff_b2 += dz3.colwise().sum();
      const Matrix d_act = dz3 * bp.ff_w2.transpose();
      const Matrix d_pre = (d_act.array() * bc.ff_pre.unaryExpr([](double v) { return nn::gelu_grad(v); }).array()).matrix();
      gb.ff_w1 += bc.a3.transpose() * d_pre;
      gb.ff_b1 += d_pre.colwise().sum();
      const Matrix da3 = d_pre * bp.ff_w1.transpose();
      d_mod.middleCols(6 * d, d) = da3;
      d_mod.middleCols(7 * d, d) = (da3.array() * bc.ln3.y.array()).matrix();
      Matrix dh2 = dh3 + nn::layer_norm_backward(bc.ln3, (da3.array() * (1.0 + chunk(bc.mod, 7, d).array())).matrix());

      // cross-attention sublayer
      d_mod.middleCols(5 * d, d) = (dh2.array() * bc.z2.array()).matrix();
      const Matrix dz2 = (dh2.array() * chunk(bc.mod, 5, d).array()).matrix();
      Matrix da2, d_partner;
      nn::attention_backward(bp.cross_attn, gb.cross_attn, bc.cross_attn, dz2, c.heads, da2, d_partner);
      d_in[1 - s] += nn::layer_norm_backward(bc.partner_ln, d_partner);
      d_mod.middleCols(3 * d, d) = da2;
      d_mod.middleCols(4 * d, d) = (da2.array() * bc.ln2.y.array()).matrix();
      Matrix dh1 = dh2 + nn::layer_norm_backward(bc.ln2, (da2.array() * (1.0 + chunk(bc.mod, 4, d).array())).matrix());

      // self-attention sublayer
      d_mod.middleCols(2 * d, d) = (dh1.array() * bc.z1.array()).matrix();
      const Matrix dz1 = (dh1.array() * chunk(bc.mod, 2, d).array()).matrix();
      Matrix da1_q, da1_s;
      nn::attention_backward(bp.self_attn, gb.self_attn, bc.self_attn, dz1, c.heads, da1_q, da1_s);
      const Matrix da1 = da1_q + da1_s;
      d_mod.middleCols(0, d) = da1;
      d_mod.middleCols(d, d) = (da1.array() * bc.ln1.y.array()).matrix();
      d_in[s] += dh1 + nn::layer_norm_backward(bc.ln1, (da1.array() * (1.0 + chunk(bc.mod, 1, d).array())).matrix());

      gb.mod_w += fc.cond.transpose() * d_mod;
      gb.mod_b += d_mod.colwise().sum();
      d_cond += d_mod * bp.mod_w.transpose();
    }
    for (int s = 0; s < 2; ++s) {
      detail::check_finite(d_in[s], std::string("gradient of ") + names[s] + ".block" + std::to_string(k));
      dh[s] = std::move(d_in[s]);
    }
  }

  for (int s = 0; s < 2; ++s) {
    grads[s]->in_w += caches[s]->input.transpose() * dh[s];
    grads[s]->in_b += dh[s].colwise().sum();
  }
  const Matrix d_pre =
      (d_cond.array() * fc.cond_pre.unaryExpr([](double v) { return nn::silu_grad(v); }).array()).matrix();
  g.music_w += fc.music.transpose() * d_pre;
  g.music_b += d_pre.colwise().sum();
  const Matrix d_e = d_pre.colwise().sum();
  g.time_w += fc.step_embedding.transpose() * d_e;
  g.time_b += d_e;
  if (c.pooled_music) g.pool_w += fc.music_mean.transpose() * d_e;
  return g;
}

/// Loss on the denoiser outputs: returns the value and writes d loss / d output.
using OutputLoss = std::function<double(const DenoiserOutput&, Matrix& d_follower, Matrix& d_leader)>;

struct GradientResult {
  double loss = 0.0;
  ParameterSet gradient;
  DenoiserOutput output;
};

/// Exact reverse-mode gradient of `loss` with respect to every parameter.
inline GradientResult parameter_gradients(const ParameterSet& p, const DenoiserConfig& c, const Matrix& follower_in,
                                          const Matrix& leader_in, int step, const Matrix& music,
                                          const OutputLoss& loss) {
  ForwardCache cache;
  GradientResult r;
  r.output = denoiser_forward(p, c, follower_in, leader_in, step, music, &cache);
  Matrix d_follower = Matrix::Zero(r.output.follower.rows(), r.output.follower.cols());
  Matrix d_leader;
  if (c.mode == DenoiserMode::duet) d_leader = Matrix::Zero(r.output.leader.rows(), r.output.leader.cols());
  r.loss = loss(r.output, d_follower, d_leader);
  if (!std::isfinite(r.loss)) throw NumericalError("denoiser: non-finite loss");
  r.gradient = denoiser_backward(p, c, cache, d_follower, d_leader);
  return r;
}

struct DenoiserInput {
  Matrix follower;
  Matrix leader;
  int step = 1;
  Matrix music;
};

/// Independent sequences evaluated one after another.
inline std::vector<DenoiserOutput> denoiser_forward_batch(const ParameterSet& p, const DenoiserConfig& c,
                                                          const std::vector<DenoiserInput>& batch) {
  std::vector<DenoiserOutput> out;
  out.reserve(batch.size());
  for (const auto& in : batch) out.push_back(denoiser_forward(p, c, in.follower, in.leader, in.step, in.music));
  return out;
}

}  // namespace interdance
