#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace nesti {

inline constexpr const char* kVersion = "0.1.0";

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Bad input files, malformed configs, out-of-range arguments. CLI exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Degenerate geometry or non-finite arithmetic. CLI exit code 3.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A neighborhood ball holds fewer than 3 points and cannot be encoded.
class DegeneratePatchError : public NumericError {
 public:
  explicit DegeneratePatchError(int raw_count_in, int scale_index_in = -1);

  int raw_count;
  int scale_index;  // offending scale when raised during multi-scale encoding, else -1
};

}  // namespace nesti
