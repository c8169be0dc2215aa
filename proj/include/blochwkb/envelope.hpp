#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "blochwkb/dispersion.hpp"
#include "blochwkb/fft.hpp"
#include "blochwkb/jet.hpp"
#include "blochwkb/linalg.hpp"
#include "blochwkb/ray_coupling.hpp"

namespace blochwkb {

// Periodic box [-L/2, L/2) per axis with M points; row-major point order.
struct Grid3 {
  std::array<int, 3> M{1, 1, 1};
  Vec3 L = Vec3::Ones();

  static Grid3 cube(int m, double l) { return {{m, m, m}, Vec3::Constant(l)}; }

  int size() const { return M[0] * M[1] * M[2]; }
  double spacing(int a) const { return L(a) / M[a]; }
  double cell_volume() const { return spacing(0) * spacing(1) * spacing(2); }
  double coord(int a, int i) const { return -0.5 * L(a) + i * spacing(a); }
  double wavenumber(int a, int i) const { return 2.0 * M_PI * fft_frequency(i, M[a]) / L(a); }
  std::array<int, 3> unflatten(int p) const { return {p / (M[1] * M[2]), (p / M[2]) % M[1], p % M[2]}; }
  Vec3 point(int p) const {
    const auto i = unflatten(p);
    return Vec3(coord(0, i[0]), coord(1, i[1]), coord(2, i[2]));
  }
  Vec3 wavevector(int p) const {
    const auto i = unflatten(p);
    return Vec3(wavenumber(0, i[0]), wavenumber(1, i[1]), wavenumber(2, i[2]));
  }
  bool operator==(const Grid3& o) const { return M == o.M && L == o.L; }
};

struct EnvelopeState {
  double T = 0.0;
  Grid3 grid;
  MatX values;  // grid.size() x kappa

  int kappa() const { return static_cast<int>(values.cols()); }
};

// Isotropic Gaussian exp(-|x - center|^2 / (2 sigma^2)) times weights.
inline EnvelopeState gaussian_state(const Grid3& grid, double sigma, const VecX& weights,
                                    const Vec3& center = Vec3::Zero()) {
  EnvelopeState s{0.0, grid, MatX(grid.size(), weights.size())};
  for (int p = 0; p < grid.size(); ++p)
    s.values.row(p) = std::exp(-(grid.point(p) - center).squaredNorm() / (2 * sigma * sigma)) * weights.transpose();
  return s;
}

// Closed-form free solution of d_T w + (i/2) H(d,d) w = 0 from exp(-|x|^2/(2 sigma^2)).
inline cplx free_gaussian(const Vec3& x, const Mat3& H, double sigma, double T) {
  Eigen::SelfAdjointEigenSolver<Mat3> es(H);
  const Vec3 xr = es.eigenvectors().transpose() * x;
  cplx out = 1.0;
  for (int j = 0; j < 3; ++j) {
    const cplx s2 = sigma * sigma - I_unit * es.eigenvalues()(j) * T;
    out *= std::sqrt(sigma * sigma / s2) * std::exp(-xr(j) * xr(j) / (2.0 * s2));
  }
  return out;
}

namespace detail {

inline MatX coupling_on_grid(const CouplingField& f, const Grid3& grid, int p) { return f.value(0.0, grid.point(p)); }

inline void fft_columns(const Fft3& fft, MatX& v, bool forward) {
  for (int c = 0; c < v.cols(); ++c) {
    if (forward) fft.forward(v.col(c).data());
    else fft.backward(v.col(c).data());
  }
}

}  // namespace detail

inline double weighted_norm(const EnvelopeState& s, const MatX& pia0pi) {
  double sum = 0;
  for (int p = 0; p < s.grid.size(); ++p) {
    const VecX c = s.values.row(p).transpose();
    sum += std::real(c.dot(pia0pi * c));
  }
  return sum * s.grid.cell_volume();
}

struct MassFractions {
  double outside_inner_half = 0;  // some |x_i| >= L_i/4
  double outer_shell = 0;         // some |x_i| >= 3 L_i/8
};

inline MassFractions mass_fractions(const EnvelopeState& s) {
  double total = 0, outer = 0, shell = 0;
  for (int p = 0; p < s.grid.size(); ++p) {
    const double m = s.values.row(p).squaredNorm();
    const Vec3 x = s.grid.point(p);
    bool in_half = true, in_core = true;
    for (int a = 0; a < 3; ++a) {
      if (s.grid.M[a] == 1) continue;
      in_half = in_half && std::abs(x(a)) < s.grid.L(a) / 4;
      in_core = in_core && std::abs(x(a)) < 3 * s.grid.L(a) / 8;
    }
    total += m;
    if (!in_half) outer += m;
    if (!in_core) shell += m;
  }
  if (total == 0) return {};
  return {outer / total, shell / total};
}

inline void check_box(const EnvelopeState& s, double shell_tol = 1e-6) {
  const auto f = mass_fractions(s);
  if (f.outer_shell > shell_tol)
    throw BoxTooSmall("envelope mass " + std::to_string(f.outer_shell) + " reached the outer shell at T = " +
                      std::to_string(s.T));
}

inline void check_initial_box(const EnvelopeState& s, double inner_tol = 1e-8) {
  const auto f = mass_fractions(s);
  if (f.outside_inner_half > inner_tol)
    throw BoxTooSmall("initial envelope is not contained in the inner half of the box (outside mass " +
                      std::to_string(f.outside_inner_half) + ")");
}

// Strang splitting for d_T w + (i/2) H(d,d) w + gamma_tilde(x) w = 0:
// half potential step, exact Fourier dispersion step, half potential step.
class EnvelopeStepper {
 public:
  EnvelopeStepper(const Grid3& grid, const Mat3& hessian, const CouplingField& gamma_tilde, double dT)
      : grid_(grid), fft_(grid.M), dT_(dT), kappa_(gamma_tilde.kappa) {
    for (const auto& m : gamma_tilde.modes)
      require(m.eta(0) == 0.0, "envelope potential must be time independent in the moving frame");
    multiplier_.resize(grid.size());
    for (int p = 0; p < grid.size(); ++p) {
      const Vec3 k = grid.wavevector(p);
      multiplier_(p) = std::exp(I_unit * 0.5 * k.dot(hessian * k) * dT);
    }
    constant_ = gamma_tilde.spatially_constant();
    if (constant_) {
      half_.push_back(expm_pade6(-0.5 * dT * gamma_tilde.value(0.0, Vec3::Zero())));
    } else {
      half_.reserve(grid.size());
      for (int p = 0; p < grid.size(); ++p)
        half_.push_back(expm_pade6(-0.5 * dT * detail::coupling_on_grid(gamma_tilde, grid, p)));
    }
  }

  double dT() const { return dT_; }
  const VecX& multiplier() const { return multiplier_; }

  void step(EnvelopeState& s) const {
    potential(s.values);
    detail::fft_columns(fft_, s.values, true);
    for (int c = 0; c < s.values.cols(); ++c) s.values.col(c).array() *= multiplier_.array();
    detail::fft_columns(fft_, s.values, false);
    potential(s.values);
    s.T += dT_;
  }

 private:
  void potential(MatX& v) const {
    if (constant_) {
      v = v * half_[0].transpose();
      return;
    }
    for (int p = 0; p < grid_.size(); ++p) v.row(p) = (half_[p] * v.row(p).transpose()).transpose();
  }

  Grid3 grid_;
  Fft3 fft_;
  double dT_;
  int kappa_;
  VecX multiplier_;
  bool constant_ = true;
  std::vector<MatX> half_;
};

inline EnvelopeState evolve(const EnvelopeState& state, const DispersionData& dispersion,
                            const CouplingField& gamma_tilde, double dT, int steps) {
  require(dT > 0 && steps >= 0, "evolve: dT must be positive and steps nonnegative");
  require(gamma_tilde.kappa == state.kappa(), "evolve: potential and state have different kappa");
  check_initial_box(state);
  EnvelopeStepper stepper(state.grid, dispersion.hessian, gamma_tilde, dT);
  EnvelopeState s = state;
  for (int n = 0; n < steps; ++n) {
    stepper.step(s);
    if ((n + 1) % 100 == 0) check_box(s);
  }
  check_box(s);
  return s;
}

// Trigonometric interpolant of a grid state; evaluates Taylor jets at
// arbitrary points.  The Nyquist mode of an even axis is split as a cosine.
class SpectralEnvelope {
 public:
  explicit SpectralEnvelope(const EnvelopeState& s) : grid_(s.grid), T_(s.T), hat_(s.values) {
    Fft3 fft(grid_.M);
    detail::fft_columns(fft, hat_, true);
    hat_ /= double(grid_.size());
  }

  const Grid3& grid() const { return grid_; }
  double T() const { return T_; }
  int kappa() const { return static_cast<int>(hat_.cols()); }
  const MatX& coefficients() const { return hat_; }

  // kappa x layout(3, order) Taylor coefficients at x.
  Jet taylor(const Vec3& x, std::shared_ptr<const JetLayout> layout) const {
    require(layout->nvars() == 3, "taylor: expects a three-variable layout");
    const int P = layout->order() + 1;
    std::array<MatX, 3> f;
    for (int a = 0; a < 3; ++a) {
      const int m = grid_.M[a];
      f[a] = MatX::Zero(P, m);
      const double xr = x(a) + 0.5 * grid_.L(a);
      for (int j = 0; j < m; ++j) {
        const double k = grid_.wavenumber(a, j);
        const bool nyquist = m % 2 == 0 && j == m / 2;
        for (int p = 0; p < P; ++p) {
          const double fact = std::tgamma(p + 1.0);
          const cplx plus = std::pow(I_unit * k, p) * std::exp(I_unit * k * xr) / fact;
          f[a](p, j) = nyquist ? 0.5 * (plus + std::pow(-I_unit * k, p) * std::exp(-I_unit * k * xr) / fact) : plus;
        }
      }
    }
    Jet out = Jet::zero(layout, kappa());
    const int m0 = grid_.M[0], m1 = grid_.M[1], m2 = grid_.M[2];
    for (int c = 0; c < kappa(); ++c) {
      Eigen::Map<const MatX> C(hat_.col(c).data(), m2, m0 * m1);
      const MatX r3 = f[2] * C;  // P x (m0 m1)
      std::vector<MatX> r(P);
      for (int p3 = 0; p3 < P; ++p3) {
        MatX row = r3.row(p3);
        Eigen::Map<const MatX> R(row.data(), m1, m0);
        r[p3] = f[1] * R * f[0].transpose();  // [p2, p1]
      }
      for (int i = 0; i < layout->size(); ++i) {
        const auto& a = layout->monomial(i);
        out.c(c, i) = r[a[2]](a[1], a[0]);
      }
    }
    return out;
  }

  VecX value(const Vec3& x) const { return taylor(x, JetLayout::make(3, 0)).value(); }

  // d^alpha c on the grid (grid.size() x kappa).
  MatX derivative_field(const std::array<int, 3>& alpha) const {
    MatX d = hat_;
    for (int p = 0; p < grid_.size(); ++p) {
      const auto idx = grid_.unflatten(p);
      cplx fac = 1.0;
      for (int a = 0; a < 3; ++a) {
        if (alpha[a] == 0) continue;
        const int m = grid_.M[a];
        const double k = grid_.wavenumber(a, idx[a]);
        if (m % 2 == 0 && idx[a] == m / 2 && alpha[a] % 2 == 1) fac = 0;
        else fac *= std::pow(I_unit * k, alpha[a]);
      }
      d.row(p) *= fac;
    }
    Fft3 fft(grid_.M);
    d *= double(grid_.size());
    detail::fft_columns(fft, d, false);
    return d;
  }

 private:
  Grid3 grid_;
  double T_;
  MatX hat_;
};

// Envelope data over a horizon: exact spectral propagation when gamma_tilde is
// spatially constant, otherwise Strang snapshots at requested times.
class EnvelopeSolution {
 public:
  EnvelopeSolution(EnvelopeState initial, Mat3 hessian, CouplingField gamma_tilde, double dT = 1e-3,
                   std::vector<double> snapshot_times = {})
      : initial_(std::move(initial)), hessian_(hessian), gamma_tilde_(std::move(gamma_tilde)) {
    require(gamma_tilde_.kappa == initial_.kappa(), "EnvelopeSolution: kappa mismatch");
    check_initial_box(initial_);
    exact_ = gamma_tilde_.spatially_constant();
    if (exact_) {
      hat0_ = SpectralEnvelope(initial_).coefficients();
      gamma0_ = gamma_tilde_.value(0.0, Vec3::Zero());
      return;
    }
    std::sort(snapshot_times.begin(), snapshot_times.end());
    EnvelopeState s = initial_;
    snapshots_.push_back(s);
    for (double T : snapshot_times) {
      require(T >= s.T, "EnvelopeSolution: negative snapshot time");
      if (T - s.T <= 1e-14) continue;
      const int steps = std::max(1, static_cast<int>(std::ceil((T - s.T) / dT - 1e-9)));
      const double dt = (T - s.T) / steps;
      EnvelopeStepper stepper(s.grid, hessian_, gamma_tilde_, dt);
      for (int n = 0; n < steps; ++n) stepper.step(s);
      s.T = T;
      check_box(s);
      snapshots_.push_back(s);
    }
  }

  bool exact() const { return exact_; }
  const Mat3& hessian() const { return hessian_; }
  const CouplingField& gamma_tilde() const { return gamma_tilde_; }
  const Grid3& grid() const { return initial_.grid; }
  int kappa() const { return initial_.kappa(); }
  const EnvelopeState& initial() const { return initial_; }

  EnvelopeState state(double T) const {
    if (!exact_) {
      for (const auto& s : snapshots_)
        if (std::abs(s.T - T) <= 1e-12 * std::max(1.0, std::abs(T))) return s;
      throw std::invalid_argument("EnvelopeSolution: no snapshot at the requested time");
    }
    const Grid3& g = grid();
    MatX hat = hat0_ * expm_pade6(-T * gamma0_).transpose();
    for (int p = 0; p < g.size(); ++p) {
      const Vec3 k = g.wavevector(p);
      hat.row(p) *= std::exp(I_unit * 0.5 * k.dot(hessian_ * k) * T);
    }
    Fft3 fft(g.M);
    hat *= double(g.size());
    detail::fft_columns(fft, hat, false);
    EnvelopeState s{T, g, hat};
    check_box(s);
    return s;
  }

  SpectralEnvelope at(double T) const { return SpectralEnvelope(state(T)); }

 private:
  EnvelopeState initial_;
  Mat3 hessian_;
  CouplingField gamma_tilde_;
  bool exact_ = true;
  MatX hat0_;
  MatX gamma0_;
  std::vector<EnvelopeState> snapshots_;
};

}  // namespace blochwkb
