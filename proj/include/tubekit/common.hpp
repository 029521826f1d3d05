#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace tubekit {

// Axis order everywhere is (t, h, w).
using Triple = std::array<int, 3>;

// Continuous voxel coordinate (t, h, w) of a tube center in the raw input frame.
using Center = std::array<double, 3>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

enum class ErrorCode {
  EmptyBank,
  EmptyGrid,
  BadGrouping,
  StrideNotDivisible,
  GridNotDivisible,
  NoImageTube,
  ShapeMismatch,
  NonFinite,
  UnknownHead,
  MissingTrace,
  IncompatibleWidths,
  CorruptManifest,
  BadClipFile,
  InvalidConfig,
  Io,
};

const char* to_string(ErrorCode code);

class TubeError : public std::runtime_error {
 public:
  TubeError(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline std::int64_t volume(const Triple& v) {
  return static_cast<std::int64_t>(v[0]) * v[1] * v[2];
}

std::string format_triple(const Triple& v, char sep = 'x');

}  // namespace tubekit
