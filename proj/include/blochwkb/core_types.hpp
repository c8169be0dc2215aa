#pragma once

#include <array>
#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace blochwkb {

using cplx = std::complex<double>;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;
using Mat3c = Eigen::Matrix3cd;
using Vec6c = Eigen::Matrix<cplx, 6, 1>;
using Mat6c = Eigen::Matrix<cplx, 6, 6>;
using VecX = Eigen::VectorXcd;
using MatX = Eigen::MatrixXcd;
using Mode = std::array<int, 3>;

inline constexpr cplx I_unit{0.0, 1.0};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// exit code 2
class ConfigError : public Error {
 public:
  using Error::Error;
};

// exit code 3
class HypothesisViolation : public Error {
 public:
  using Error::Error;
};

class GapViolation : public HypothesisViolation {
 public:
  GapViolation(const std::string& what, Vec3 theta)
      : HypothesisViolation(what), theta_(std::move(theta)) {}
  const Vec3& theta() const { return theta_; }

 private:
  Vec3 theta_;
};

class MultiplicityInconsistent : public HypothesisViolation {
 public:
  using HypothesisViolation::HypothesisViolation;
};

class SpeedLimitViolation : public HypothesisViolation {
 public:
  using HypothesisViolation::HypothesisViolation;
};

// exit code 4
class NumericalFailure : public Error {
 public:
  using Error::Error;
};

class StabilityAnomaly : public NumericalFailure {
 public:
  using NumericalFailure::NumericalFailure;
};

class GaugeError : public NumericalFailure {
 public:
  using NumericalFailure::NumericalFailure;
};

class BoxTooSmall : public NumericalFailure {
 public:
  using NumericalFailure::NumericalFailure;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

// Truncated lattice {n : max_i |n_i| <= N}; index = ((n1+N)*w + n2+N)*w + n3+N.
struct LatticeCutoff {
  int N = 0;

  int width() const { return 2 * N + 1; }
  int size() const { return width() * width() * width(); }
  int dim() const { return 6 * size(); }

  bool contains(const Mode& n) const {
    return std::abs(n[0]) <= N && std::abs(n[1]) <= N && std::abs(n[2]) <= N;
  }
  int index(const Mode& n) const {
    const int w = width();
    return ((n[0] + N) * w + (n[1] + N)) * w + (n[2] + N);
  }
  Mode mode(int idx) const {
    const int w = width();
    return {idx / (w * w) - N, (idx / w) % w - N, idx % w - N};
  }
  Vec3 wavevector(int idx, const Vec3& theta) const {
    const Mode n = mode(idx);
    return theta + Vec3(n[0], n[1], n[2]);
  }

  friend bool operator==(const LatticeCutoff&, const LatticeCutoff&) = default;
};

inline Mode operator+(const Mode& a, const Mode& b) {
  return {a[0] + b[0], a[1] + b[1], a[2] + b[2]};
}
inline Mode operator-(const Mode& a, const Mode& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}
inline Mode operator-(const Mode& a) { return {-a[0], -a[1], -a[2]}; }
inline Vec3 to_vec(const Mode& n) { return Vec3(n[0], n[1], n[2]); }

// cross_matrix(v) * w == v x w
inline Mat3 cross_matrix(const Vec3& v) {
  Mat3 m;
  m << 0, -v(2), v(1), v(2), 0, -v(0), -v(1), v(0), 0;
  return m;
}

// Real curl symbol [[0, xi x], [-xi x, 0]] acting on (e, b).
inline Eigen::Matrix<double, 6, 6> curl_symbol(const Vec3& xi) {
  Eigen::Matrix<double, 6, 6> m = Eigen::Matrix<double, 6, 6>::Zero();
  const Mat3 x = cross_matrix(xi);
  m.block<3, 3>(0, 3) = x;
  m.block<3, 3>(3, 0) = -x;
  return m;
}

}  // namespace blochwkb
