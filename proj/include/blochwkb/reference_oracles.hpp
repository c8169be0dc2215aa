#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "blochwkb/bloch_bands.hpp"
#include "blochwkb/envelope.hpp"
#include "blochwkb/fft.hpp"
#include "blochwkb/linalg.hpp"
#include "blochwkb/wkb_assembly.hpp"

namespace blochwkb {

// ---------------------------------------------------------------------------
// Closed-form bands of eps0 = mu0 = I.

struct ConstantBandData {
  double omega = 0;
  int kappa = 2;
  MatX eigvecs;  // 6 x 2, plain orthonormal
  MatX kernel;   // 6 x 2, longitudinal (omega = 0)
};

// sign = +1 or -1 selects omega = sign |k + theta|; b = -(k + theta) x e / omega.
inline ConstantBandData exact_constant_solution(const Vec3& theta, const Mode& k, int sign) {
  const Vec3 xi = theta + to_vec(k);
  require(xi.norm() > 0, "exact_constant_solution: k + theta = 0 is excluded");
  require(sign == 1 || sign == -1, "exact_constant_solution: sign must be +1 or -1");
  ConstantBandData d;
  d.omega = sign * xi.norm();
  const auto t = transverse_pair(xi);
  d.eigvecs = MatX::Zero(6, 2);
  for (int p = 0; p < 2; ++p) {
    const Vec3 e = t[p] / std::sqrt(2.0);
    const Vec3 b = -xi.cross(e) / d.omega;
    d.eigvecs.block<3, 1>(0, p) = e.cast<cplx>();
    d.eigvecs.block<3, 1>(3, p) = b.cast<cplx>();
  }
  d.kernel = MatX::Zero(6, 2);
  d.kernel.block<3, 1>(0, 0) = xi.normalized().cast<cplx>();
  d.kernel.block<3, 1>(3, 1) = xi.normalized().cast<cplx>();
  return d;
}

// ---------------------------------------------------------------------------
// Band data at a Bloch frequency for the synthesis of exact packets.

struct NodeBasis {
  double omega = 0;
  MatX basis;  // dim x kappa periodic coefficients, plain orthonormal
};

using BandTracker = std::function<NodeBasis(const Vec3& theta)>;

// Closed form for eps0 = mu0 = I on the n = 0 harmonic.
inline BandTracker identity_band_tracker(const LatticeCutoff& cutoff, int sign) {
  return [cutoff, sign](const Vec3& theta) {
    const auto d = exact_constant_solution(theta, {0, 0, 0}, sign);
    NodeBasis n{d.omega, MatX::Zero(cutoff.dim(), 2)};
    n.basis.middleRows<6>(6 * cutoff.index({0, 0, 0})) = d.eigvecs;
    return n;
  };
}

// Numerical eigen-solves, selecting the cluster by overlap with the reference band.
inline BandTracker numeric_band_tracker(const MaterialSpec& spec, const LatticeCutoff& cutoff, const BlochBand& band) {
  return [spec, cutoff, band](const Vec3& theta) {
    const BlochBand b = band_matching(compute_spectrum(spec, cutoff, theta), band.eigvecs, band.tol);
    return NodeBasis{b.omega, b.eigvecs};
  };
}

struct GaussianSpectrum {
  double sigma = 1.0;
  VecX weights;  // kappa
  // a(zeta) with int exp(i x.zeta) a(zeta) dzeta = exp(-|x|^2 / (2 sigma^2)) weights
  VecX operator()(const Vec3& zeta) const {
    const double c = std::pow(sigma * sigma / (2 * M_PI), 1.5);
    return c * std::exp(-0.5 * sigma * sigma * zeta.squaredNorm()) * weights;
  }
  double support_radius(double eps = 1e-16) const { return std::sqrt(2.0 * std::log(1.0 / eps)) / sigma; }
};

struct ExactPacketSpec {
  GaussianSpectrum a;
  Vec3 theta_center = Vec3::Zero();
  double h = 1.0;
  int nodes_per_axis = 41;
  int reference_nodes_per_axis = 31;
};

struct SynthesisResult {
  MatX samples;  // points x 6
  double quadrature_error = 0;
  double min_adjacent_overlap = 1;
};

namespace detail {

// Node bases aligned by Procrustes to the centre basis; adjacent overlaps certified.
struct AlignedNodes {
  std::vector<NodeBasis> nodes;  // (i*n + j)*n + k
  double min_overlap = 1;
};

inline AlignedNodes aligned_nodes(const BandTracker& tracker, const Vec3& theta, double h,
                                  const Eigen::VectorXd& z, double gauge_tol) {
  const int n = static_cast<int>(z.size());
  const NodeBasis centre = tracker(theta);
  AlignedNodes out;
  out.nodes.resize(n * n * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        NodeBasis b = tracker(theta + h * Vec3(z(i), z(j), z(k)));
        b.basis = procrustes_align(b.basis, centre.basis).aligned;
        out.nodes[(i * n + j) * n + k] = std::move(b);
      }
  auto overlap = [&](int p, int q) {
    return procrustes_align(out.nodes[p].basis, out.nodes[q].basis).min_overlap;
  };
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        const int p = (i * n + j) * n + k;
        if (i + 1 < n) out.min_overlap = std::min(out.min_overlap, overlap(p, p + n * n));
        if (j + 1 < n) out.min_overlap = std::min(out.min_overlap, overlap(p, p + n));
        if (k + 1 < n) out.min_overlap = std::min(out.min_overlap, overlap(p, p + 1));
      }
  if (out.min_overlap < gauge_tol)
    throw GaugeError("adjacent quadrature nodes have eigenspace overlap " + std::to_string(out.min_overlap));
  return out;
}

inline MatX synthesize_with(const ExactPacketSpec& spec, const BandTracker& tracker, double t,
                            const std::vector<Vec3>& points, int n, const LatticeCutoff& cutoff,
                            double* min_overlap) {
  const double R = spec.a.support_radius();
  const auto [z, w] = gauss_legendre(n, -R, R);
  const auto nodes = aligned_nodes(tracker, spec.theta_center, spec.h, z, 0.99);
  if (min_overlap) *min_overlap = nodes.min_overlap;
  struct Weighted {
    Vec3 zeta;
    double omega;
    VecX coeff;  // quadrature weight times basis * a(zeta)
  };
  std::vector<Weighted> q;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        const Vec3 zeta(z(i), z(j), z(k));
        const VecX a = spec.a(zeta);
        if (a.norm() == 0.0) continue;
        const NodeBasis& b = nodes.nodes[(i * n + j) * n + k];
        q.push_back({zeta, b.omega, (w(i) * w(j) * w(k)) * (b.basis * a)});
      }
  MatX out = MatX::Zero(points.size(), 6);
  for (std::size_t p = 0; p < points.size(); ++p) {
    const Vec3& x = points[p];
    const Vec3 y = x / spec.h;
    VecX acc = VecX::Zero(cutoff.dim());
    for (const auto& node : q) acc += std::exp(I_unit * (x.dot(node.zeta) + t * node.omega / spec.h)) * node.coeff;
    Vec6c v = Vec6c::Zero();
    for (int m = 0; m < cutoff.size(); ++m)
      v += std::exp(I_unit * to_vec(cutoff.mode(m)).dot(y)) * acc.segment<6>(6 * m);
    out.row(p) = std::exp(I_unit * spec.theta_center.dot(x) / spec.h) * v.transpose();
  }
  return out;
}

}  // namespace detail

// u(t, x) = exp(i theta.x/h) int psi(x/h, theta + h zeta) exp(i t omega(theta + h zeta)/h) exp(i x.zeta) a(zeta)
// by tensor Gauss-Legendre quadrature over the truncated support of a.
inline SynthesisResult synthesize_exact_packet(const ExactPacketSpec& spec, const BandTracker& tracker, double t,
                                               const std::vector<Vec3>& points, const LatticeCutoff& cutoff) {
  require(spec.h > 0, "synthesize_exact_packet: h must be positive");
  SynthesisResult r;
  r.samples = detail::synthesize_with(spec, tracker, t, points, spec.nodes_per_axis, cutoff, &r.min_adjacent_overlap);
  const MatX coarse =
      detail::synthesize_with(spec, tracker, t, points, spec.reference_nodes_per_axis, cutoff, nullptr);
  r.quadrature_error = (r.samples - coarse).cwiseAbs().maxCoeff();
  return r;
}

// ---------------------------------------------------------------------------
// Exact evolution in a constant medium on the moving envelope grid.  Each
// lattice harmonic n and grid frequency zeta is a plane wave with wavevector
// (theta + n)/h + zeta evolved by exp(t A0^{-1} G), summing all branches.
// Fields are returned with the phase exp(i(omega t + theta.x)/h) removed.

class ConstantMediumPropagator {
 public:
  ConstantMediumPropagator(const MaterialSpec& spec, const Vec3& theta, double omega, double h, const Vec3& V,
                           const Grid3& grid)
      : theta_(theta), omega_(omega), h_(h), V_(V), grid_(grid), fft_(grid.M) {
    if (!spec.purely_periodic() || spec.eps0.size() != 1 || spec.mu0.size() != 1 || !spec.eps0.count({0, 0, 0}) ||
        !spec.mu0.count({0, 0, 0}))
      throw ConfigError("exact propagation oracle needs a constant, unmodulated medium");
    const Mat3 eps = spec.eps0.at({0, 0, 0}).real(), mu = spec.mu0.at({0, 0, 0}).real();
    Eigen::SelfAdjointEigenSolver<Mat3> se(eps), sm(mu);
    s_ = Eigen::Matrix<double, 6, 6>::Zero();
    s_inv_ = Eigen::Matrix<double, 6, 6>::Zero();
    s_.block<3, 3>(0, 0) = se.operatorSqrt();
    s_.block<3, 3>(3, 3) = sm.operatorSqrt();
    s_inv_.block<3, 3>(0, 0) = se.operatorInverseSqrt();
    s_inv_.block<3, 3>(3, 3) = sm.operatorInverseSqrt();
  }

  // Fourier coefficients (grid.size() x 6) of harmonic n of a moving-frame field.
  MatX to_fourier(const MatX& field) const {
    MatX f = field;
    detail::fft_columns(fft_, f, true);
    return f / double(grid_.size());
  }
  MatX from_fourier(MatX f) const {
    f *= double(grid_.size());
    detail::fft_columns(fft_, f, false);
    return f;
  }

  // (h d_t)^m applied in Fourier space: (h A0^{-1} i G0(k))^m.
  MatX time_derivative(const Mode& n, const MatX& hat, int m) const {
    MatX out = hat;
    for (int p = 0; p < grid_.size(); ++p) {
      const Vec3 k = (theta_ + to_vec(n)) / h_ + grid_.wavevector(p);
      const Mat6c K = h_ * (s_inv_ * s_inv_ * curl_symbol(k)).cast<cplx>() * I_unit;
      Vec6c v = hat.row(p).transpose();
      for (int r = 0; r < m; ++r) v = K * v;
      out.row(p) = v.transpose();
    }
    return out;
  }

  // Fourier coefficients at time t from those at time 0, phase and frame removed.
  MatX propagate(const Mode& n, const MatX& hat0, double t) const {
    MatX out(hat0.rows(), 6);
    for (int p = 0; p < grid_.size(); ++p) {
      const Vec3 zeta = grid_.wavevector(p);
      const Vec3 k = (theta_ + to_vec(n)) / h_ + zeta;
      const Eigen::Matrix<double, 6, 6> sym = s_inv_ * curl_symbol(k) * s_inv_;
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> es(sym);
      Vec6c lam;
      for (int q = 0; q < 6; ++q)
        lam(q) = std::exp(I_unit * t * (es.eigenvalues()(q) - omega_ / h_ + zeta.dot(V_)));
      const Mat6c U = (s_inv_ * es.eigenvectors()).cast<cplx>() * lam.asDiagonal() *
                      (es.eigenvectors().transpose() * s_).cast<cplx>();
      out.row(p) = (U * hat0.row(p).transpose()).transpose();
    }
    return out;
  }

  const Grid3& grid() const { return grid_; }

 private:
  Vec3 theta_;
  double omega_, h_;
  Vec3 V_;
  Grid3 grid_;
  Fft3 fft_;
  Eigen::Matrix<double, 6, 6> s_, s_inv_;
};

// ---------------------------------------------------------------------------
// Pseudo-spectral RK4 solver for d_t(A0^h u) - G u + M^h u = 0 on a periodic box.

struct EnergyRecord {
  double t = 0;
  double energy = 0;
  double div_e = 0;  // L2 norm of div(eps^h E)
  double div_b = 0;  // L2 norm of div(mu^h B)
};

struct TimeDomainResult {
  MatX field;  // grid.size() x 6 at t_final
  std::vector<EnergyRecord> trace;
  double gronwall_rate = 0;
};

class TimeDomainSolver {
 public:
  TimeDomainSolver(MaterialSpec spec, double h, Grid3 grid)
      : spec_(std::move(spec)), h_(h), grid_(grid), fft_(grid.M) {
    require(h > 0, "time_domain_solve: h must be positive");
    const auto vary = spec_.varying_axes();
    for (int a = 0; a < 3; ++a) {
      if (!vary[a]) continue;
      const double periods = grid_.L(a) / (2 * M_PI * h_);
      if (std::abs(periods - std::round(periods)) > 1e-9)
        throw ConfigError("time-domain box must hold an integer number of material periods 2 pi h");
      if (grid_.M[a] < 8 * std::round(periods))
        throw ConfigError("time-domain grid must resolve each material period with at least 8 points");
    }
    time_dependent_ = !spec_.eps1.empty() || !spec_.mu1.empty() || !spec_.M.empty();
    a0_static_.resize(grid_.size());
    for (int p = 0; p < grid_.size(); ++p) {
      const Vec3 y = grid_.point(p) / h_;
      a0_static_[p].setZero();
      a0_static_[p].block<3, 3>(0, 0) = spec_.eps_at(y).real();
      a0_static_[p].block<3, 3>(3, 3) = spec_.mu_at(y).real();
    }
  }

  double min_spacing() const {
    double dx = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a)
      if (grid_.M[a] > 1) dx = std::min(dx, grid_.spacing(a));
    return dx;
  }

  // A0^h(t, x_p), (d_t A0^h)(t, x_p) and M^h(t, x_p).
  void coefficients(double t, int p, Mat6c& a0, Mat6c& da0, Mat6c& m) const {
    a0 = a0_static_[p].cast<cplx>();
    da0.setZero();
    m.setZero();
    if (!time_dependent_) return;
    const Vec3 x = grid_.point(p), y = x / h_;
    auto ph = [&](const Vec4& eta, const Mode& n) {
      return std::exp(I_unit * (eta(0) * t + eta.tail<3>().dot(x) + to_vec(n).dot(y)));
    };
    for (const auto& e : spec_.eps1) {
      const cplx f = h_ * h_ * ph(e.eta, e.n);
      a0.block<3, 3>(0, 0) += f * e.value;
      da0.block<3, 3>(0, 0) += I_unit * e.eta(0) * f * e.value;
    }
    for (const auto& e : spec_.mu1) {
      const cplx f = h_ * h_ * ph(e.eta, e.n);
      a0.block<3, 3>(3, 3) += f * e.value;
      da0.block<3, 3>(3, 3) += I_unit * e.eta(0) * f * e.value;
    }
    for (const auto& e : spec_.M) m += h_ * ph(e.eta, e.n) * e.value;
  }

  // Spectral curl G u = (curl B, -curl E).
  MatX curl(const MatX& u) const {
    MatX hat = u;
    detail::fft_columns(fft_, hat, true);
    MatX out(u.rows(), 6);
    for (int p = 0; p < grid_.size(); ++p) {
      const Mat3 x = cross_matrix(spectral_k(p));
      out.block<1, 3>(p, 0) = (I_unit * (x * hat.block<1, 3>(p, 3).transpose())).transpose();
      out.block<1, 3>(p, 3) = (-I_unit * (x * hat.block<1, 3>(p, 0).transpose())).transpose();
    }
    detail::fft_columns(fft_, out, false);
    return out;
  }

  // d_t u = A0^{-1} (G u - (M + d_t A0) u)
  MatX rhs(double t, const MatX& u) const {
    MatX g = curl(u);
    for (int p = 0; p < grid_.size(); ++p) {
      Mat6c a0, da0, m;
      coefficients(t, p, a0, da0, m);
      const Vec6c r = g.row(p).transpose() - (m + da0) * u.row(p).transpose();
      g.row(p) = a0.partialPivLu().solve(r).transpose();
    }
    return g;
  }

  EnergyRecord diagnostics(double t, const MatX& u) const {
    EnergyRecord rec{t, 0, 0, 0};
    MatX d(grid_.size(), 6);
    for (int p = 0; p < grid_.size(); ++p) {
      Mat6c a0, da0, m;
      coefficients(t, p, a0, da0, m);
      const Vec6c v = u.row(p).transpose();
      const Vec6c av = a0 * v;
      rec.energy += std::real(v.dot(av));
      d.row(p) = av.transpose();
    }
    rec.energy *= grid_.cell_volume();
    detail::fft_columns(fft_, d, true);
    VecX de(grid_.size()), db(grid_.size());
    for (int p = 0; p < grid_.size(); ++p) {
      const Eigen::RowVector3cd k = I_unit * spectral_k(p).transpose().cast<cplx>();
      de(p) = (k * d.block<1, 3>(p, 0).transpose())(0);
      db(p) = (k * d.block<1, 3>(p, 3).transpose())(0);
    }
    // Parseval: sum |f|^2 dV = |box| / n sum |f_hat|^2
    const double s = std::sqrt(grid_.cell_volume() / grid_.size());
    rec.div_e = de.norm() * s;
    rec.div_b = db.norm() * s;
    return rec;
  }

  // sup over the grid of |A0^{-1/2}(d_t A0 - M - M^*) A0^{-1/2}|
  double gronwall_rate(double t) const {
    if (!time_dependent_) return 0.0;
    double c = 0;
    for (int p = 0; p < grid_.size(); ++p) {
      Mat6c a0, da0, m;
      coefficients(t, p, a0, da0, m);
      Eigen::SelfAdjointEigenSolver<Mat6c> es(0.5 * (a0 + a0.adjoint()));
      const Mat6c w = es.operatorInverseSqrt();
      const Mat6c k = w * (da0 - m - m.adjoint()) * w;
      c = std::max(c, Eigen::JacobiSVD<Mat6c>(k).singularValues()(0));
    }
    return c;
  }

  TimeDomainResult solve(const MatX& initial, double t_final, double dt, int record_every = 0) const {
    require(initial.rows() == grid_.size() && initial.cols() == 6, "time_domain_solve: initial field shape");
    require(t_final >= 0 && dt > 0, "time_domain_solve: invalid time step");
    if (dt > 0.5 * min_spacing())
      throw ConfigError("time step " + std::to_string(dt) + " violates the CFL bound 0.5 dx = " +
                        std::to_string(0.5 * min_spacing()));
    const int steps = static_cast<int>(std::ceil(t_final / dt - 1e-9));
    const double k = steps > 0 ? t_final / steps : 0.0;
    if (record_every <= 0) record_every = std::max(1, steps / 100);
    TimeDomainResult res;
    res.field = initial;
    res.trace.push_back(diagnostics(0.0, initial));
    double rate = gronwall_rate(0.0);
    const double e0 = res.trace.front().energy;
    double t = 0;
    for (int n = 0; n < steps; ++n) {
      const MatX& u = res.field;
      const MatX k1 = rhs(t, u);
      const MatX k2 = rhs(t + 0.5 * k, u + 0.5 * k * k1);
      const MatX k3 = rhs(t + 0.5 * k, u + 0.5 * k * k2);
      const MatX k4 = rhs(t + k, u + k * k3);
      res.field = u + (k / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      t = (n + 1) * k;
      if ((n + 1) % record_every == 0 || n + 1 == steps) {
        const auto rec = diagnostics(t, res.field);
        res.trace.push_back(rec);
        rate = std::max(rate, gronwall_rate(t));
        if (!std::isfinite(rec.energy) || rec.energy > e0 * std::exp(rate * t) * (1 + 1e-6) + 1e-300)
          throw StabilityAnomaly("energy " + std::to_string(rec.energy) + " exceeds the stability bound at t = " +
                                 std::to_string(t));
      }
    }
    res.gronwall_rate = rate;
    return res;
  }

  const Grid3& grid() const { return grid_; }

 private:
  Vec3 spectral_k(int p) const {
    Vec3 k = grid_.wavevector(p);
    const auto idx = grid_.unflatten(p);
    for (int a = 0; a < 3; ++a)
      if (grid_.M[a] % 2 == 0 && idx[a] == grid_.M[a] / 2) k(a) = 0.0;
    return k;
  }

  MaterialSpec spec_;
  double h_;
  Grid3 grid_;
  Fft3 fft_;
  bool time_dependent_ = false;
  std::vector<Eigen::Matrix<double, 6, 6>> a0_static_;
};

inline TimeDomainResult time_domain_solve(const MaterialSpec& spec, double h, const MatX& initial, double t_final,
                                          const Grid3& grid, double dt, int record_every = 0) {
  return TimeDomainSolver(spec, h, grid).solve(initial, t_final, dt, record_every);
}

}  // namespace blochwkb
