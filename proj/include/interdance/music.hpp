#pragma once

// Per-frame music features: 1 envelope, 20 MFCC, 12 chroma, 1 peak flag,
// 1 beat flag (35 channels). Features are consumed precomputed; the
// metronome generator stands in for real audio in tests and synthetic data.

#include "interdance/formats.hpp"

#include <random>
#include <sstream>

namespace interdance {

namespace music_channel {
inline constexpr int envelope = 0;
inline constexpr int mfcc = 1;
inline constexpr int chroma = 21;
inline constexpr int peak = 33;
inline constexpr int beat = 34;
}  // namespace music_channel

struct MusicFeatures {
  Matrix data;  // T x 35
  double fps = 30.0;

  int frame_count() const { return static_cast<int>(data.rows()); }
};

inline void validate(const MusicFeatures& m, const std::string& source = "music features") {
  if (m.data.cols() != kMusicChannels) {
    throw DataError(source + ": expected 35 channels, got " + std::to_string(m.data.cols()));
  }
  if (!m.data.allFinite()) throw DataError(source + ": non-finite values");
  for (int c : {music_channel::peak, music_channel::beat}) {
    for (Eigen::Index t = 0; t < m.data.rows(); ++t) {
      const double v = m.data(t, c);
      if (v != 0.0 && v != 1.0) {
        throw DataError(source + ": " + (c == music_channel::beat ? "beat" : "peak") + " channel must be 0 or 1 (frame " +
                        std::to_string(t) + ")");
      }
    }
  }
  if (!(m.fps > 0.0)) throw DataError(source + ": fps must be positive");
}

/// Frames carrying a beat flag.
inline std::vector<int> music_beats(const MusicFeatures& m) {
  std::vector<int> beats;
  for (int t = 0; t < m.frame_count(); ++t) {
    if (m.data(t, music_channel::beat) == 1.0) beats.push_back(t);
  }
  return beats;
}

inline int beat_period_frames(double bpm, double fps) {
  if (!(bpm > 0.0) || !(fps > 0.0)) throw ConfigError("metronome: bpm and fps must be positive");
  return std::max(1, static_cast<int>(std::lround(60.0 * fps / bpm)));
}

/// Synthetic metronome: beat and peak flags every round(60 * fps / bpm)
/// frames from frame 0, a decaying envelope, and seeded smooth timbre
/// channels. Values are rounded to binary32 so files round-trip exactly.
inline MusicFeatures metronome(int frames, double bpm, double fps, std::uint64_t seed = 0) {
  const int period = beat_period_frames(bpm, fps);
  MusicFeatures m;
  m.fps = fps;
  m.data = Matrix::Zero(frames, kMusicChannels);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::array<double, 32> phases{};
  for (auto& p : phases) p = phase(rng);
  for (int t = 0; t < frames; ++t) {
    const int since = t % period;
    m.data(t, music_channel::envelope) = std::exp(-3.0 * since / period);
    for (int k = 0; k < 20; ++k) {
      m.data(t, music_channel::mfcc + k) = 0.5 * std::sin(2.0 * std::numbers::pi * (k + 1) * t / (8.0 * period) +
                                                          phases[static_cast<std::size_t>(k)]);
    }
    const int pitch = (t / (4 * period)) % 12;
    for (int k = 0; k < 12; ++k) {
      m.data(t, music_channel::chroma + k) = k == pitch ? 1.0 : 0.1 * (1.0 + std::cos(phases[static_cast<std::size_t>(20 + k)] + t * 0.05));
    }
    if (since == 0) {
      m.data(t, music_channel::peak) = 1.0;
      m.data(t, music_channel::beat) = 1.0;
    }
  }
  round_to_storage(m.data);
  return m;
}

inline io::Bytes encode_music(const MusicFeatures& m) { return io::encode_matrix_file("IDF1", m.data, m.fps); }

inline MusicFeatures decode_music(const io::Bytes& bytes, const std::string& source) {
  MusicFeatures m;
  m.data = io::decode_matrix_file(bytes, source, "IDF1", kMusicChannels, m.fps);
  validate(m, source);
  return m;
}

inline void write_music(const std::string& path, const MusicFeatures& m) { io::write_file(path, encode_music(m)); }

/// Delimited-text alternative: first line "fps,<value>", then one
/// comma-separated row of 35 values per frame.
inline void write_music_csv(const std::string& path, const MusicFeatures& m) {
  std::ofstream out(path);
  if (!out) throw DataError(path + ": cannot open for writing");
  out.precision(9);
  out << "fps," << m.fps << "\n";
  for (int t = 0; t < m.frame_count(); ++t) {
    for (int c = 0; c < kMusicChannels; ++c) out << (c ? "," : "") << m.data(t, c);
    out << "\n";
  }
}

inline MusicFeatures read_music_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open for reading");
  MusicFeatures m;
  std::string line;
  if (!std::getline(in, line) || line.rfind("fps,", 0) != 0) throw DataError(path + ": first line must be 'fps,<value>'");
  m.fps = std::stod(line.substr(4));
  std::vector<std::vector<double>> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw DataError(path + ": line " + std::to_string(line_no) + ": not a number: '" + cell + "'");
      }
    }
    if (row.size() != static_cast<std::size_t>(kMusicChannels)) {
      throw DataError(path + ": line " + std::to_string(line_no) + ": expected 35 channels, got " +
                      std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  m.data.resize(static_cast<Eigen::Index>(rows.size()), kMusicChannels);
  for (std::size_t t = 0; t < rows.size(); ++t) {
    for (int c = 0; c < kMusicChannels; ++c) m.data(static_cast<Eigen::Index>(t), c) = rows[t][static_cast<std::size_t>(c)];
  }
  validate(m, path);
  return m;
}

/// Reads IDF1, or the text form when the path ends in ".csv".
inline MusicFeatures load_music_features(const std::string& path) {
  if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0) return read_music_csv(path);
  return decode_music(io::read_file(path), path);
}

}  // namespace interdance
