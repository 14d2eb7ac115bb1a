#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace interdance {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
// Row-per-frame matrices throughout: rows are frames, columns are channels.
using Matrix = Eigen::MatrixXd;

inline constexpr int kJointCount = 55;
inline constexpr int kSurfacePointCount = 655;
// Joints first, then surface points. Contact labels use the same ordering.
inline constexpr int kPointCount = kJointCount + kSurfacePointCount;
inline constexpr int kFingerJointCount = 30;
inline constexpr int kMusicChannels = 35;

/// Error categories. The CLI maps them onto exit codes 1, 2 and 3.
enum class ErrorKind { config, data, numerical };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& message) : Error(ErrorKind::config, message) {}
};

struct DataError : Error {
  explicit DataError(const std::string& message) : Error(ErrorKind::data, message) {}
};

struct NumericalError : Error {
  explicit NumericalError(const std::string& message)
      : Error(ErrorKind::numerical, message) {}
};

inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config:
      return 1;
    case ErrorKind::data:
      return 2;
    case ErrorKind::numerical:
      return 3;
  }
  return 1;
}

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double angle) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double wrapped = std::fmod(angle + std::numbers::pi, two_pi);
  if (wrapped < 0.0) wrapped += two_pi;
  wrapped -= std::numbers::pi;
  if (wrapped <= -std::numbers::pi) wrapped += two_pi;
  return wrapped;
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace interdance
