#pragma once

// Evaluation: motion features, Frechet distance, diversity, contact and
// penetration rates, and beat alignment.
//
// Kinetic features (56): per-joint mean squared speed in (m/s)^2, then their sum.
// Geometric features (16): fraction of frames where each relation holds, with
// positions taken in the dancer's own heading frame:
//    0 left wrist above head          8 left ankle raised > 0.15 m
//    1 right wrist above head         9 right ankle raised > 0.15 m
//    2 left wrist above shoulder     10 both ankles raised > 0.15 m
//    3 right wrist above shoulder    11 left knee bent below 150 deg
//    4 wrists within 0.3 m           12 right knee bent below 150 deg
//    5 left wrist 0.2 m ahead        13 left elbow bent below 120 deg
//    6 right wrist 0.2 m ahead       14 right elbow bent below 120 deg
//    7 feet crossed                  15 torso tilted over 20 deg
// Cross-distance features (200): mean then standard deviation over frames of
// the 10 x 10 leader-follower distance matrix on pelvis, knees, feet, head,
// shoulders and wrists.

#include "interdance/music.hpp"

#include <Eigen/Eigenvalues>

#include <iostream>

namespace interdance {

enum class FeatureKind { kinetic, geometric, cross_distance };

inline const char* to_string(FeatureKind k) {
  switch (k) {
    case FeatureKind::kinetic:
      return "kinetic";
    case FeatureKind::geometric:
      return "geometric";
    case FeatureKind::cross_distance:
      return "cross_distance";
  }
  return "unknown";
}

struct FeatureVector {
  FeatureKind kind = FeatureKind::kinetic;
  Eigen::VectorXd values;
};

inline constexpr int kKineticDims = kJointCount + 1;
inline constexpr int kGeometricDims = 16;
inline constexpr std::array<int, 10> kCrossJoints = {joint::pelvis,         joint::left_knee,     joint::right_knee,
                                                     joint::left_foot,      joint::right_foot,    joint::head,
                                                     joint::left_shoulder,  joint::right_shoulder, joint::left_wrist,
                                                     joint::right_wrist};
inline constexpr int kCrossDims = 2 * 10 * 10;

using PointSequence = std::vector<PointCloudFrame>;

namespace metrics_detail {

inline void require_frames(const PointSequence& s, const char* what) {
  if (s.size() < 2) throw DataError(std::string(what) + ": sequence shorter than 2 frames");
}

inline const Vec3& J(const PointCloudFrame& f, int j) { return f.joints[static_cast<std::size_t>(j)]; }

inline double angle_at(const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 u = a - b;
  const Vec3 v = c - b;
  const double n = u.norm() * v.norm();
  if (n == 0.0) return std::numbers::pi;
  return std::acos(std::clamp(u.dot(v) / n, -1.0, 1.0));
}

/// Joint positions relative to the pelvis, with the heading (from the hip
/// line) rotated out.
inline std::vector<Vec3> heading_frame(const PointCloudFrame& f) {
  const Vec3 across = J(f, joint::left_hip) - J(f, joint::right_hip);
  const Vec3 forward = across.cross(Vec3::UnitY());
  const double yaw = std::atan2(forward.x(), forward.z());
  const Mat3 undo = rotation_y(-yaw);
  std::vector<Vec3> out;
  out.reserve(f.joints.size());
  for (const auto& p : f.joints) out.push_back(undo * (p - J(f, joint::pelvis)));
  return out;
}

}  // namespace metrics_detail

inline FeatureVector kinetic_features(const PointSequence& s, double fps) {
  metrics_detail::require_frames(s, "kinetic features");
  FeatureVector f{FeatureKind::kinetic, Eigen::VectorXd::Zero(kKineticDims)};
  const double steps = static_cast<double>(s.size() - 1);
  for (std::size_t t = 0; t + 1 < s.size(); ++t) {
    for (int j = 0; j < kJointCount; ++j) {
      const double v2 = ((metrics_detail::J(s[t + 1], j) - metrics_detail::J(s[t], j)) * fps).squaredNorm();
      f.values(j) += v2 / steps;
    }
  }
  f.values(kJointCount) = f.values.head(kJointCount).sum();
  return f;
}

inline std::array<bool, kGeometricDims> geometric_relations(const PointCloudFrame& frame) {
  using metrics_detail::angle_at;
  const auto p = metrics_detail::heading_frame(frame);
  auto at = [&p](int j) -> const Vec3& { return p[static_cast<std::size_t>(j)]; };
  const double deg = std::numbers::pi / 180.0;
  const bool left_up = metrics_detail::J(frame, joint::left_ankle).y() > 0.15;
  const bool right_up = metrics_detail::J(frame, joint::right_ankle).y() > 0.15;
  const Vec3 torso = at(joint::neck) - at(joint::pelvis);
  return {
      at(joint::left_wrist).y() > at(joint::head).y(),
      at(joint::right_wrist).y() > at(joint::head).y(),
      at(joint::left_wrist).y() > at(joint::left_shoulder).y(),
      at(joint::right_wrist).y() > at(joint::right_shoulder).y(),
      (at(joint::left_wrist) - at(joint::right_wrist)).norm() < 0.3,
      at(joint::left_wrist).z() > 0.2,
      at(joint::right_wrist).z() > 0.2,
      at(joint::left_ankle).x() < at(joint::right_ankle).x(),
      left_up,
      right_up,
      left_up && right_up,
      angle_at(at(joint::left_hip), at(joint::left_knee), at(joint::left_ankle)) < 150.0 * deg,
      angle_at(at(joint::right_hip), at(joint::right_knee), at(joint::right_ankle)) < 150.0 * deg,
      angle_at(at(joint::left_shoulder), at(joint::left_elbow), at(joint::left_wrist)) < 120.0 * deg,
      angle_at(at(joint::right_shoulder), at(joint::right_elbow), at(joint::right_wrist)) < 120.0 * deg,
      torso.norm() > 0.0 && std::acos(std::clamp(torso.normalized().y(), -1.0, 1.0)) > 20.0 * deg,
  };
}

inline FeatureVector geometric_features(const PointSequence& s) {
  metrics_detail::require_frames(s, "geometric features");
  FeatureVector f{FeatureKind::geometric, Eigen::VectorXd::Zero(kGeometricDims)};
  for (const auto& frame : s) {
    const auto rel = geometric_relations(frame);
    for (int k = 0; k < kGeometricDims; ++k) f.values(k) += rel[static_cast<std::size_t>(k)] ? 1.0 : 0.0;
  }
  f.values /= static_cast<double>(s.size());
  return f;
}

inline FeatureVector cross_distance_features(const PointSequence& leader, const PointSequence& follower) {
  metrics_detail::require_frames(leader, "cross-distance features");
  if (leader.size() != follower.size()) throw DataError("cross-distance features: frame count mismatch");
  const double n = static_cast<double>(leader.size());
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(100);
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(100);
  for (std::size_t t = 0; t < leader.size(); ++t) {
    for (int a = 0; a < 10; ++a) {
      for (int b = 0; b < 10; ++b) {
        const double d = (metrics_detail::J(leader[t], kCrossJoints[static_cast<std::size_t>(a)]) -
                          metrics_detail::J(follower[t], kCrossJoints[static_cast<std::size_t>(b)]))
                             .norm();
        mean(10 * a + b) += d / n;
        sq(10 * a + b) += d * d / n;
      }
    }
  }
  FeatureVector f{FeatureKind::cross_distance, Eigen::VectorXd(kCrossDims)};
  f.values.head(100) = mean;
  f.values.tail(100) = (sq - mean.cwiseAbs2()).cwiseMax(0.0).cwiseSqrt();
  return f;
}

// ---------------------------------------------------------------------------
// Set statistics

inline void check_set(const std::vector<FeatureVector>& set, const char* what) {
  if (set.size() < 2) throw DataError(std::string(what) + ": need at least 2 feature vectors");
  for (const auto& f : set) {
    if (f.kind != set.front().kind || f.values.size() != set.front().values.size()) {
      throw DataError(std::string(what) + ": feature kind or dimension mismatch");
    }
  }
}

inline Matrix stack(const std::vector<FeatureVector>& set) {
  Matrix m(static_cast<Eigen::Index>(set.size()), set.front().values.size());
  for (std::size_t i = 0; i < set.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = set[i].values.transpose();
  return m;
}

inline constexpr double kFidRegularization = 1e-6;

/// Frechet distance between Gaussians fitted to the two sets.
inline double fid(const std::vector<FeatureVector>& a, const std::vector<FeatureVector>& b) {
  check_set(a, "fid");
  check_set(b, "fid");
  if (a.front().kind != b.front().kind || a.front().values.size() != b.front().values.size()) {
    throw DataError("fid: sets differ in feature kind or dimension");
  }
  auto moments = [](const std::vector<FeatureVector>& set, Eigen::VectorXd& mu, Matrix& cov) {
    const Matrix x = stack(set);
    mu = x.colwise().mean().transpose();
    const Matrix centered = x.rowwise() - mu.transpose();
    cov = centered.transpose() * centered / static_cast<double>(x.rows() - 1);
    cov.diagonal().array() += kFidRegularization;
  };
  Eigen::VectorXd mu_a, mu_b;
  Matrix cov_a, cov_b;
  moments(a, mu_a, cov_a);
  moments(b, mu_b, cov_b);
  Eigen::SelfAdjointEigenSolver<Matrix> eig_a(cov_a);
  const Matrix sqrt_a = eig_a.eigenvectors() * eig_a.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                        eig_a.eigenvectors().transpose();
  Matrix inner = sqrt_a * cov_b * sqrt_a;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig_inner(inner, Eigen::EigenvaluesOnly);
  const double trace_sqrt = eig_inner.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double value = (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * trace_sqrt;
  return std::max(0.0, value);
}

/// Mean Euclidean distance over all unordered pairs.
inline double diversity(const std::vector<FeatureVector>& set) {
  check_set(set, "diversity");
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    for (std::size_t j = i + 1; j < set.size(); ++j) {
      sum += (set[i].values - set[j].values).norm();
      ++pairs;
    }
  }
  return sum / static_cast<double>(pairs);
}

// ---------------------------------------------------------------------------
// Contact

struct ContactMetrics {
  double cf = 0.0;   // frames with any vertex pair closer than 1 cm
  double pr = 0.0;   // follower vertices inside the leader's capsules
  double clr = 0.0;  // leader vertices within 1 cm of the follower
  double cfr = 0.0;  // follower vertices within 1 cm of the leader
  double cvr = 0.0;  // (clr + cfr) / 2
};

inline ContactMetrics contact_metrics(const PointSequence& leader, const PointSequence& follower,
                                      const BodyModel& model,
                                      double threshold = ContactThresholds{}.person_distance) {
  if (leader.size() != follower.size() || leader.empty()) throw DataError("contact metrics: frame count mismatch");
  ContactMetrics m;
  const double n = static_cast<double>(leader.size());
  for (std::size_t t = 0; t < leader.size(); ++t) {
    const ContactLabels lead = detect_person_contact(leader[t], follower[t], threshold);
    const ContactLabels follow = detect_person_contact(follower[t], leader[t], threshold);
    const int lead_count = static_cast<int>(std::count(lead.begin() + kJointCount, lead.end(), 1));
    const int follow_count = static_cast<int>(std::count(follow.begin() + kJointCount, follow.end(), 1));
    if (lead_count > 0) m.cf += 1.0 / n;
    m.clr += lead_count / (kSurfacePointCount * n);
    m.cfr += follow_count / (kSurfacePointCount * n);
    int inside = 0;
    for (const auto& v : follower[t].vertices) {
      if (capsule_sdf(model, std::span<const Vec3>(leader[t].joints), v).distance < 0.0) ++inside;
    }
    m.pr += inside / (kSurfacePointCount * n);
  }
  m.cvr = 0.5 * (m.clr + m.cfr);
  return m;
}

// ---------------------------------------------------------------------------
// Rhythm

struct RhythmConfig {
  double sigma = 0.1;  // seconds
  int smoothing = 5;   // frames, centred moving average
};

/// Mean joint speed per frame (central differences, one-sided at the ends),
/// smoothed.
inline std::vector<double> speed_curve(const PointSequence& s, int smoothing) {
  const int t_count = static_cast<int>(s.size());
  std::vector<double> raw(static_cast<std::size_t>(t_count), 0.0);
  for (int t = 0; t < t_count && t_count >= 2; ++t) {
    const int a = std::max(0, t - 1);
    const int b = std::min(t_count - 1, t + 1);
    double sum = 0.0;
    for (int j = 0; j < kJointCount; ++j) {
      sum += (metrics_detail::J(s[static_cast<std::size_t>(b)], j) - metrics_detail::J(s[static_cast<std::size_t>(a)], j)).norm() /
             (b - a);
    }
    raw[static_cast<std::size_t>(t)] = sum / kJointCount;
  }
  const int half = std::max(0, smoothing / 2);
  std::vector<double> out(raw.size());
  for (int t = 0; t < t_count; ++t) {
    const int a = std::max(0, t - half);
    const int b = std::min(t_count - 1, t + half);
    double sum = 0.0;
    for (int k = a; k <= b; ++k) sum += raw[static_cast<std::size_t>(k)];
    out[static_cast<std::size_t>(t)] = sum / (b - a + 1);
  }
  return out;
}

/// Frames where the smoothed speed has a strict local minimum; the first
/// and last frame count when lower than their single neighbour.
inline std::vector<int> motion_beats(const PointSequence& s, int smoothing = RhythmConfig{}.smoothing) {
  const std::vector<double> v = speed_curve(s, smoothing);
  const int n = static_cast<int>(v.size());
  std::vector<int> beats;
  if (n < 2) return beats;
  auto at = [&v](int t) { return v[static_cast<std::size_t>(t)]; };
  if (at(0) < at(1)) beats.push_back(0);
  for (int t = 1; t + 1 < n; ++t) {
    if (at(t) < at(t - 1) && at(t) <= at(t + 1)) beats.push_back(t);
  }
  if (at(n - 1) < at(n - 2)) beats.push_back(n - 1);
  return beats;
}

inline double beat_kernel(double delta_seconds, double sigma) {
  return std::exp(-delta_seconds * delta_seconds / (2.0 * sigma * sigma));
}

/// Mean over reference beats of the kernel at the nearest query beat.
/// Returns 0 when either list is empty.
inline double beat_alignment(const std::vector<int>& reference, const std::vector<int>& query, double fps,
                             double sigma) {
  if (reference.empty() || query.empty()) return 0.0;
  double sum = 0.0;
  for (int r : reference) {
    int best = std::numeric_limits<int>::max();
    for (int q : query) best = std::min(best, std::abs(q - r));
    sum += beat_kernel(best / fps, sigma);
  }
  return sum / static_cast<double>(reference.size());
}

struct RhythmMetrics {
  double bed = 0.0;
  double bas = 0.0;
  std::vector<std::string> warnings;
};

inline RhythmMetrics rhythm_metrics(const MusicFeatures& music, const PointSequence& leader,
                                    const PointSequence& follower, const RhythmConfig& config = {}) {
  RhythmMetrics m;
  const std::vector<int> music_b = music_beats(music);
  const std::vector<int> lead_b = motion_beats(leader, config.smoothing);
  const std::vector<int> follow_b = motion_beats(follower, config.smoothing);
  if (music_b.empty()) m.warnings.push_back("no music beats; BAS reported as 0");
  if (lead_b.empty()) m.warnings.push_back("no leader motion beats; BED reported as 0");
  if (follow_b.empty()) m.warnings.push_back("no follower motion beats; BED and BAS reported as 0");
  m.bas = beat_alignment(music_b, follow_b, music.fps, config.sigma);
  m.bed = beat_alignment(lead_b, follow_b, music.fps, config.sigma);
  return m;
}

// ---------------------------------------------------------------------------
// Report

struct MetricsReport {
  double fid_k = 0.0, fid_g = 0.0, div_k = 0.0, div_g = 0.0, fid_cd = 0.0, div_cd = 0.0;
  double cf = 0.0, pr = 0.0, clr = 0.0, cfr = 0.0, cvr = 0.0, bed = 0.0, bas = 0.0;
  std::vector<std::string> warnings;
};

/// One decoded duet ready for evaluation.
struct EvalDuet {
  PointSequence leader;
  PointSequence follower;
  MusicFeatures music;
};

/// Distribution metrics compare `generated` followers against `reference`;
/// contact and rhythm metrics are averaged over `generated`.
inline MetricsReport evaluate(const std::vector<EvalDuet>& reference, const std::vector<EvalDuet>& generated,
                              const BodyModel& model, const RhythmConfig& rhythm = {}) {
  if (generated.empty()) throw DataError("evaluate: no generated samples");
  std::vector<FeatureVector> ref_k, ref_g, ref_cd, gen_k, gen_g, gen_cd;
  for (const auto& d : reference) {
    ref_k.push_back(kinetic_features(d.follower, d.music.fps));
    ref_g.push_back(geometric_features(d.follower));
    ref_cd.push_back(cross_distance_features(d.leader, d.follower));
  }
  MetricsReport r;
  const double n = static_cast<double>(generated.size());
  for (const auto& d : generated) {
    gen_k.push_back(kinetic_features(d.follower, d.music.fps));
    gen_g.push_back(geometric_features(d.follower));
    gen_cd.push_back(cross_distance_features(d.leader, d.follower));
    const ContactMetrics c = contact_metrics(d.leader, d.follower, model);
    r.cf += c.cf / n;
    r.pr += c.pr / n;
    r.clr += c.clr / n;
    r.cfr += c.cfr / n;
    r.cvr += c.cvr / n;
    const RhythmMetrics b = rhythm_metrics(d.music, d.leader, d.follower, rhythm);
    r.bed += b.bed / n;
    r.bas += b.bas / n;
    r.warnings.insert(r.warnings.end(), b.warnings.begin(), b.warnings.end());
  }
  if (reference.size() >= 2 && generated.size() >= 2) {
    r.fid_k = fid(ref_k, gen_k);
    r.fid_g = fid(ref_g, gen_g);
    r.fid_cd = fid(ref_cd, gen_cd);
  } else {
    r.warnings.push_back("FID needs at least 2 reference and 2 generated samples; reported as 0");
  }
  if (generated.size() >= 2) {
    r.div_k = diversity(gen_k);
    r.div_g = diversity(gen_g);
    r.div_cd = diversity(gen_cd);
  } else {
    r.warnings.push_back("diversity needs at least 2 generated samples; reported as 0");
  }
  return r;
}

inline nlohmann::json to_json(const MetricsReport& r) {
  return {{"FID_k", r.fid_k}, {"FID_g", r.fid_g}, {"Div_k", r.div_k}, {"Div_g", r.div_g},
          {"FID_cd", r.fid_cd}, {"Div_cd", r.div_cd}, {"CF", r.cf},   {"PR", r.pr},
          {"CLR", r.clr},     {"CFR", r.cfr},     {"CVR", r.cvr},   {"BED", r.bed},
          {"BAS", r.bas},     {"warnings", r.warnings}};
}

/// key=value lines in report order.
inline void print_key_values(std::ostream& out, const MetricsReport& r) {
  const std::pair<const char*, double> rows[] = {
      {"FID_k", r.fid_k}, {"FID_g", r.fid_g}, {"Div_k", r.div_k}, {"Div_g", r.div_g}, {"FID_cd", r.fid_cd},
      {"Div_cd", r.div_cd}, {"CF", r.cf},     {"PR", r.pr},       {"CLR", r.clr},     {"CFR", r.cfr},
      {"CVR", r.cvr},     {"BED", r.bed},     {"BAS", r.bas}};
  for (const auto& [k, v] : rows) out << k << "=" << v << "\n";
}

}  // namespace interdance
