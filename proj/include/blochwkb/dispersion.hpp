#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "blochwkb/bloch_bands.hpp"

namespace blochwkb {

struct DispersionData {
  Vec3 theta = Vec3::Zero();
  double omega = 0.0;
  Vec3 V = Vec3::Zero();              // group velocity -grad omega
  Mat3 hessian = Mat3::Zero();        // d^2 omega / d theta^2
  MatX scalar_check;                  // worst kappa x kappa deviation F - s PiA0Pi, scaled
  double scalar_residual = 0.0;       // second order
  double first_order_residual = 0.0;  // first order
};

inline constexpr double scalar_tol = 1e-8;

namespace detail {

inline double scalar_part(const MatX& f, const MatX& s_inv) { return (s_inv * f).trace().real() / f.rows(); }

// Columns L'(e_j) Psi with L'(xi) = i (xi.grad omega) A0 - i G0(xi).
inline MatX l_prime_psi(const ProjectorPair& pp, const Vec3& grad, const Vec3& xi, const MatX& a0psi) {
  const auto& cut = pp.op().cutoff();
  return I_unit * grad.dot(xi) * a0psi - I_unit * apply_curl_symbol(xi, cut, pp.basis());
}

}  // namespace detail

// Kappa x kappa form Psi^H L'(xi) Psi; vanishes by first-order perturbation theory.
inline MatX first_order_form(const ProjectorPair& pp, const Vec3& grad_omega, const Vec3& xi) {
  const MatX a0psi = pp.op().apply_a0(pp.basis());
  return pp.basis().adjoint() * detail::l_prime_psi(pp, grad_omega, xi, a0psi);
}

// grad omega from Psi^H G0(e_j) Psi = (d_j omega) Psi^H A0 Psi.
inline Vec3 omega_gradient(const ProjectorPair& pp, double* residual = nullptr) {
  const MatX s = pp.pia0pi();
  const MatX s_inv = s.inverse();
  const auto& cut = pp.op().cutoff();
  Vec3 grad;
  std::array<MatX, 3> f;
  for (int j = 0; j < 3; ++j) {
    f[j] = pp.basis().adjoint() * apply_curl_symbol(Vec3::Unit(j), cut, pp.basis());
    grad(j) = detail::scalar_part(f[j], s_inv);
  }
  double worst = 0;
  const double scale = s.norm() * std::max(1.0, grad.norm());
  for (int j = 0; j < 3; ++j) worst = std::max(worst, (f[j] - grad(j) * s).norm() / scale);
  if (residual) *residual = worst;
  return grad;
}

inline Vec3 group_velocity(const BlochBand& band, const ProjectorPair& pp, const MaterialSpec& spec,
                           const LatticeCutoff& cutoff) {
  require(cutoff == band.cutoff() && spec.eps0 == band.op().spec().eps0 && spec.mu0 == band.op().spec().mu0,
          "group_velocity: inputs refer to different discretizations");
  double res = 0;
  const Vec3 grad = omega_gradient(pp, &res);
  if (res > scalar_tol)
    throw MultiplicityInconsistent("first-order form is not scalar on the kernel (deviation " + std::to_string(res) + ")");
  return -grad;
}

// H_ij PiA0Pi = -i (X_ij + X_ji), X_ij = Psi^H L'_i Q L'_j Psi, from
// Pi L'' Pi = 2 Pi L' Q L' Pi with L'' = i (d^2 omega) A0.
inline DispersionData hessian(const BlochBand& band, const ProjectorPair& pp, const MaterialSpec& spec,
                              const LatticeCutoff& cutoff) {
  DispersionData d;
  d.theta = band.theta;
  d.omega = band.omega;
  d.V = group_velocity(band, pp, spec, cutoff);
  omega_gradient(pp, &d.first_order_residual);
  const Vec3 grad = -d.V;
  const MatX s = pp.pia0pi();
  const MatX s_inv = s.inverse();
  const MatX a0psi = pp.op().apply_a0(pp.basis());
  std::array<MatX, 3> y, z;
  for (int j = 0; j < 3; ++j) {
    y[j] = detail::l_prime_psi(pp, grad, Vec3::Unit(j), a0psi);
    z[j] = pp.q(y[j]);
  }
  std::array<std::array<MatX, 3>, 3> f;
  for (int i = 0; i < 3; ++i)
    for (int j = i; j < 3; ++j) {
      // Psi^H L'_i = -(L'_i Psi)^H since L'_i is anti-Hermitian.
      f[i][j] = I_unit * (y[i].adjoint() * z[j] + y[j].adjoint() * z[i]);
      d.hessian(i, j) = d.hessian(j, i) = detail::scalar_part(f[i][j], s_inv);
    }
  const double scale = s.norm() * std::max(1.0, d.hessian.norm());
  d.scalar_check = MatX::Zero(s.rows(), s.cols());
  for (int i = 0; i < 3; ++i)
    for (int j = i; j < 3; ++j) {
      const MatX dev = (f[i][j] - d.hessian(i, j) * s) / scale;
      if (dev.norm() >= d.scalar_check.norm()) d.scalar_check = dev;
    }
  d.scalar_residual = d.scalar_check.norm();
  if (d.scalar_residual > scalar_tol)
    throw MultiplicityInconsistent("second-order form is not scalar on the kernel (deviation " +
                                   std::to_string(d.scalar_residual) + ")");
  return d;
}

// Finite-difference oracles on eigenvalues tracked from band.theta.
inline double tracked_omega(const MaterialSpec& spec, const LatticeCutoff& cutoff, const BlochBand& band,
                            const Vec3& theta) {
  const Vec3 d = theta - band.theta;
  const int steps = std::max(1, static_cast<int>(std::ceil(d.norm() / 2.5e-3)));
  std::vector<Vec3> path;
  for (int s = 1; s <= steps; ++s) path.push_back(band.theta + d * (double(s) / steps));
  return track_band(spec, cutoff, band, path).back().omega;
}

inline Vec3 fd_gradient(const MaterialSpec& spec, const LatticeCutoff& cutoff, const BlochBand& band,
                        double step = 1e-3) {
  Vec3 g;
  for (int j = 0; j < 3; ++j) {
    const Vec3 e = step * Vec3::Unit(j);
    g(j) = (tracked_omega(spec, cutoff, band, band.theta + e) - tracked_omega(spec, cutoff, band, band.theta - e)) /
           (2 * step);
  }
  return g;
}

// Second differences with one Richardson level (steps h and h/2).
inline Mat3 fd_hessian(const MaterialSpec& spec, const LatticeCutoff& cutoff, const BlochBand& band,
                       double step = 1e-2) {
  auto w = [&](const Vec3& d) { return tracked_omega(spec, cutoff, band, band.theta + d); };
  auto stencil = [&](double s) {
    Mat3 h;
    const double w0 = band.omega;
    for (int i = 0; i < 3; ++i) {
      const Vec3 ei = s * Vec3::Unit(i);
      h(i, i) = (w(ei) - 2 * w0 + w(-ei)) / (s * s);
      for (int j = i + 1; j < 3; ++j) {
        const Vec3 ej = s * Vec3::Unit(j);
        h(i, j) = h(j, i) = (w(ei + ej) - w(ei - ej) - w(-ei + ej) + w(-ei - ej)) / (4 * s * s);
      }
    }
    return h;
  };
  return (4.0 * stencil(step / 2) - stencil(step)) / 3.0;
}

// Largest generalized eigenvalue of G0(xi) against diag(eps0(y), mu0(y)),
// maximized over a uniform y-grid (17 points on each varying axis).
class SpeedBound {
 public:
  explicit SpeedBound(const MaterialSpec& spec, int grid = 17) {
    const auto vary = spec.varying_axes();
    std::array<int, 3> g;
    for (int a = 0; a < 3; ++a) g[a] = vary[a] ? grid : 1;
    for (int i = 0; i < g[0]; ++i)
      for (int j = 0; j < g[1]; ++j)
        for (int k = 0; k < g[2]; ++k) {
          const Vec3 y = 2.0 * M_PI * Vec3(double(i) / g[0], double(j) / g[1], double(k) / g[2]);
          Eigen::SelfAdjointEigenSolver<Mat3> es(spec.eps_at(y).real());
          eps_inv_sqrt_.push_back(es.operatorInverseSqrt());
          mu_inv_.push_back(spec.mu_at(y).real().inverse());
        }
  }

  // tau_max(xi) = max_y sigma_max(eps^{-1/2} [xi x] mu^{-1/2})
  double tau_max(const Vec3& xi) const {
    const Mat3 x = cross_matrix(xi);
    double best = 0;
    for (std::size_t p = 0; p < mu_inv_.size(); ++p) {
      const Mat3 k = eps_inv_sqrt_[p] * x * mu_inv_[p] * x.transpose() * eps_inv_sqrt_[p];
      Eigen::SelfAdjointEigenSolver<Mat3> es;
      es.computeDirect(k, Eigen::EigenvaluesOnly);
      best = std::max(best, es.eigenvalues()(2));
    }
    return std::sqrt(std::max(0.0, best));
  }

 private:
  std::vector<Mat3> eps_inv_sqrt_;
  std::vector<Mat3> mu_inv_;
};

struct SpeedLimitReport {
  double worst_margin = std::numeric_limits<double>::infinity();  // min of tau_max(-xi) - xi.V
  Vec3 worst_xi = Vec3::Zero();
  int samples = 0;
};

inline SpeedLimitReport speed_limit_check(const MaterialSpec& spec, const LatticeCutoff& cutoff, const Vec3& V,
                                          int num_samples, double tol = 1e-9, unsigned seed = 20240611u) {
  (void)cutoff;
  const SpeedBound bound(spec);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  SpeedLimitReport r;
  r.samples = num_samples;
  for (int s = 0; s < num_samples; ++s) {
    Vec3 xi(nd(rng), nd(rng), nd(rng));
    xi.normalize();
    const double margin = bound.tau_max(-xi) - xi.dot(V);
    if (margin < r.worst_margin) {
      r.worst_margin = margin;
      r.worst_xi = xi;
    }
  }
  if (r.worst_margin < -tol)
    throw SpeedLimitViolation("group velocity exceeds the maximal propagation speed (margin " +
                              std::to_string(r.worst_margin) + ")");
  return r;
}

}  // namespace blochwkb
