#pragma once

// Binary file formats. All integers and floats are little-endian; reals are
// stored as IEEE-754 binary32.
//
//   IDM1 motion          "IDM1" u16 version u32 T u32 joints(55) f32 fps
//                        then per frame: f32[3] root, f32[55*3] axis-angle
//   IDR1 representation  "IDR1" u32 T u32 C(4981) f32 fps, f32[T*C] row-major
//   IDF1 music features  "IDF1" u32 T u32 C(35)   f32 fps, f32[T*C] row-major
//   IDC1 checkpoint      "IDC1" u32 version u32 n config-json[n] u32 tensors
//                        then per tensor: u32 n name[n] u32 rows u32 cols f32[rows*cols]

#include "interdance/motion.hpp"
#include "interdance/representation.hpp"

#include "json.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace interdance {

enum class FormatErrorCode { bad_magic, bad_version, truncated, count_mismatch, io };

inline const char* to_string(FormatErrorCode code) {
  switch (code) {
    case FormatErrorCode::bad_magic:
      return "bad_magic";
    case FormatErrorCode::bad_version:
      return "bad_version";
    case FormatErrorCode::truncated:
      return "truncated";
    case FormatErrorCode::count_mismatch:
      return "count_mismatch";
    case FormatErrorCode::io:
      return "io";
  }
  return "unknown";
}

class FormatError : public DataError {
 public:
  FormatError(FormatErrorCode code, const std::string& source, std::size_t offset, const std::string& detail)
      : DataError(source + ": " + to_string(code) + ": " + detail + " (byte offset " + std::to_string(offset) + ")"),
        code_(code),
        offset_(offset) {}

  FormatErrorCode code() const noexcept { return code_; }
  std::size_t offset() const noexcept { return offset_; }

 private:
  FormatErrorCode code_;
  std::size_t offset_;
};

inline constexpr std::uint16_t kMotionFormatVersion = 1;
inline constexpr std::uint32_t kCheckpointFormatVersion = 1;
inline constexpr std::size_t kMotionHeaderBytes = 4 + 2 + 4 + 4 + 4;
inline constexpr std::size_t kMotionFrameBytes = 4 * (3 + 3 * kJointCount);
inline constexpr std::size_t kMatrixHeaderBytes = 4 + 4 + 4 + 4;

namespace io {

using Bytes = std::vector<unsigned char>;

class ByteWriter {
 public:
  void magic(const char* m) { bytes_.insert(bytes_.end(), m, m + 4); }
  void u16(std::uint16_t v) {
    for (int k = 0; k < 2; ++k) bytes_.push_back(static_cast<unsigned char>(v >> (8 * k)));
  }
  void u32(std::uint32_t v) {
    for (int k = 0; k < 4; ++k) bytes_.push_back(static_cast<unsigned char>(v >> (8 * k)));
  }
  void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
  void text(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }
  const Bytes& bytes() const { return bytes_; }

 private:
  Bytes bytes_;
};

class ByteReader {
 public:
  ByteReader(const Bytes& bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

  void expect_magic(const char* m) {
    need(4, "magic");
    if (std::memcmp(bytes_.data() + pos_, m, 4) != 0) {
      throw FormatError(FormatErrorCode::bad_magic, source_, pos_, std::string("expected magic ") + m);
    }
    pos_ += 4;
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    std::uint16_t v = 0;
    for (int k = 0; k < 2; ++k) v = static_cast<std::uint16_t>(v | (bytes_[pos_ + k] << (8 * k)));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(bytes_[pos_ + k]) << (8 * k);
    pos_ += 4;
    return v;
  }
  double f32(const char* what) { return static_cast<double>(std::bit_cast<float>(u32(what))); }
  std::string text(const char* what) {
    const std::uint32_t n = u32(what);
    need(n, what);
    std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  /// Fails with `truncated` unless `n` more bytes are available.
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(FormatErrorCode::truncated, source_, bytes_.size(),
                        std::string("file ends while reading ") + what + " (need " + std::to_string(n) +
                            " bytes at offset " + std::to_string(pos_) + ")");
    }
  }
  void expect_end() const {
    if (pos_ != bytes_.size()) {
      throw FormatError(FormatErrorCode::count_mismatch, source_, pos_,
                        std::to_string(bytes_.size() - pos_) + " trailing bytes after payload");
    }
  }
  std::size_t position() const { return pos_; }
  const std::string& source() const { return source_; }

 private:
  const Bytes& bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

inline Bytes read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatErrorCode::io, path, 0, "cannot open for reading");
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, const Bytes& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatErrorCode::io, path, 0, "cannot open for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatErrorCode::io, path, 0, "write failed");
}

inline void write_matrix(ByteWriter& w, const Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) w.f32(m(r, c));
  }
}

inline Matrix read_matrix(ByteReader& r, std::size_t rows, std::size_t cols, const char* what) {
  r.need(4 * rows * cols, what);
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = r.f32(what);
  }
  return m;
}

/// Shared layout of IDR1 and IDF1.
inline Bytes encode_matrix_file(const char* magic, const Matrix& data, double fps) {
  ByteWriter w;
  w.magic(magic);
  w.u32(static_cast<std::uint32_t>(data.rows()));
  w.u32(static_cast<std::uint32_t>(data.cols()));
  w.f32(fps);
  write_matrix(w, data);
  return w.bytes();
}

inline Matrix decode_matrix_file(const Bytes& bytes, const std::string& source, const char* magic,
                                 std::uint32_t expected_cols, double& fps) {
  ByteReader r(bytes, source);
  r.expect_magic(magic);
  const std::uint32_t rows = r.u32("frame count");
  const std::size_t cols_at = r.position();
  const std::uint32_t cols = r.u32("channel count");
  if (cols != expected_cols) {
    throw FormatError(FormatErrorCode::count_mismatch, source, cols_at,
                      "channel count " + std::to_string(cols) + ", expected " + std::to_string(expected_cols));
  }
  fps = r.f32("fps");
  Matrix m = read_matrix(r, rows, cols, "payload");
  r.expect_end();
  return m;
}

}  // namespace io

// ---------------------------------------------------------------------------
// IDM1

inline io::Bytes encode_motion(const MotionSequence& motion) {
  io::ByteWriter w;
  w.magic("IDM1");
  w.u16(kMotionFormatVersion);
  w.u32(static_cast<std::uint32_t>(motion.frames.size()));
  w.u32(static_cast<std::uint32_t>(kJointCount));
  w.f32(motion.fps);
  for (const auto& frame : motion.frames) {
    for (int k = 0; k < 3; ++k) w.f32(frame.root_translation(k));
    for (const auto& r : frame.joint_rotations) {
      for (int k = 0; k < 3; ++k) w.f32(r(k));
    }
  }
  return w.bytes();
}

inline MotionSequence decode_motion(const io::Bytes& bytes, const std::string& source) {
  io::ByteReader r(bytes, source);
  r.expect_magic("IDM1");
  const std::size_t version_at = r.position();
  const std::uint16_t version = r.u16("version");
  if (version != kMotionFormatVersion) {
    throw FormatError(FormatErrorCode::bad_version, source, version_at, "unsupported version " + std::to_string(version));
  }
  const std::uint32_t frames = r.u32("frame count");
  const std::size_t joints_at = r.position();
  const std::uint32_t joints = r.u32("joint count");
  if (joints != static_cast<std::uint32_t>(kJointCount)) {
    throw FormatError(FormatErrorCode::count_mismatch, source, joints_at,
                      "joint count " + std::to_string(joints) + ", expected 55");
  }
  MotionSequence motion;
  motion.fps = r.f32("fps");
  r.need(static_cast<std::size_t>(frames) * kMotionFrameBytes, "frames");
  motion.frames.resize(frames);
  for (auto& frame : motion.frames) {
    for (int k = 0; k < 3; ++k) frame.root_translation(k) = r.f32("root translation");
    for (auto& rot : frame.joint_rotations) {
      for (int k = 0; k < 3; ++k) rot(k) = r.f32("joint rotation");
    }
    for (auto& rot : frame.joint_rotations) rot = normalize_axis_angle(rot);
  }
  r.expect_end();
  return motion;
}

inline void write_motion(const std::string& path, const MotionSequence& motion) {
  io::write_file(path, encode_motion(motion));
}

inline MotionSequence read_motion(const std::string& path) { return decode_motion(io::read_file(path), path); }

// ---------------------------------------------------------------------------
// IDR1

inline io::Bytes encode_rep(const RepSequence& rep) { return io::encode_matrix_file("IDR1", rep.data, rep.fps); }

inline RepSequence decode_rep(const io::Bytes& bytes, const std::string& source) {
  RepSequence rep;
  rep.data = io::decode_matrix_file(bytes, source, "IDR1", layout::channels, rep.fps);
  return rep;
}

inline void write_rep(const std::string& path, const RepSequence& rep) { io::write_file(path, encode_rep(rep)); }

inline RepSequence read_rep(const std::string& path) { return decode_rep(io::read_file(path), path); }

/// Human-readable dump: one object per frame with named channel groups.
inline nlohmann::json rep_debug_json(const RepSequence& rep) {
  auto row = [&](int t, int begin, int end) {
    std::vector<double> v;
    for (int c = begin; c < end; ++c) v.push_back(rep.data(t, c));
    return v;
  };
  nlohmann::json frames = nlohmann::json::array();
  for (int t = 0; t < rep.frame_count(); ++t) {
    frames.push_back({{"frame", t},
                      {"root_position", row(t, layout::root_position, layout::yaw)},
                      {"yaw", rep.data(t, layout::yaw)},
                      {"yaw_velocity", rep.data(t, layout::yaw_velocity)},
                      {"root_velocity", row(t, layout::root_velocity, layout::joint_offsets)},
                      {"joint_offsets", row(t, layout::joint_offsets, layout::vertex_offsets)},
                      {"vertex_offsets", row(t, layout::vertex_offsets, layout::joint_velocities)},
                      {"joint_velocities", row(t, layout::joint_velocities, layout::vertex_velocities)},
                      {"vertex_velocities", row(t, layout::vertex_velocities, layout::foot_contact)},
                      {"foot_contact", row(t, layout::foot_contact, layout::person_contact)},
                      {"person_contact", row(t, layout::person_contact, layout::channels)}});
  }
  return {{"fps", rep.fps}, {"channels", layout::channels}, {"frames", frames}};
}

// ---------------------------------------------------------------------------
// IDC1

struct NamedTensor {
  std::string name;
  Matrix value;
};

struct CheckpointFile {
  std::string config_json;
  std::vector<NamedTensor> tensors;
};

inline io::Bytes encode_checkpoint(const CheckpointFile& ckpt) {
  io::ByteWriter w;
  w.magic("IDC1");
  w.u32(kCheckpointFormatVersion);
  w.text(ckpt.config_json);
  w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    w.text(t.name);
    w.u32(static_cast<std::uint32_t>(t.value.rows()));
    w.u32(static_cast<std::uint32_t>(t.value.cols()));
    io::write_matrix(w, t.value);
  }
  return w.bytes();
}

inline CheckpointFile decode_checkpoint(const io::Bytes& bytes, const std::string& source) {
  io::ByteReader r(bytes, source);
  r.expect_magic("IDC1");
  const std::size_t version_at = r.position();
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointFormatVersion) {
    throw FormatError(FormatErrorCode::bad_version, source, version_at, "unsupported version " + std::to_string(version));
  }
  CheckpointFile ckpt;
  ckpt.config_json = r.text("config block");
  const std::uint32_t count = r.u32("tensor count");
  for (std::uint32_t k = 0; k < count; ++k) {
    NamedTensor t;
    t.name = r.text("tensor name");
    const std::uint32_t rows = r.u32("tensor rows");
    const std::uint32_t cols = r.u32("tensor cols");
    t.value = io::read_matrix(r, rows, cols, "tensor data");
    ckpt.tensors.push_back(std::move(t));
  }
  r.expect_end();
  return ckpt;
}

inline void write_checkpoint(const std::string& path, const CheckpointFile& ckpt) {
  io::write_file(path, encode_checkpoint(ckpt));
}

inline CheckpointFile read_checkpoint(const std::string& path) {
  return decode_checkpoint(io::read_file(path), path);
}

/// Rounds every entry to the nearest binary32 value, the precision files keep.
inline void round_to_storage(Matrix& m) {
  m = m.unaryExpr([](double v) { return static_cast<double>(static_cast<float>(v)); });
}

}  // namespace interdance
