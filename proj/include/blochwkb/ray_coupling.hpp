#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "blochwkb/bloch_bands.hpp"
#include "blochwkb/linalg.hpp"

namespace blochwkb {

// sum_eta a_eta exp(i eta.(t,x)), eta = (eta_t, eta_x), a_eta kappa x kappa.
struct CouplingField {
  struct Mode {
    Vec4 eta = Vec4::Zero();
    MatX a;
  };
  int kappa = 0;
  std::vector<Mode> modes;

  static CouplingField zero(int kappa) { return {kappa, {}}; }

  void add(const Vec4& eta, const MatX& a) {
    for (auto& m : modes)
      if (m.eta == eta) {
        m.a += a;
        return;
      }
    modes.push_back({eta, a});
  }

  MatX value(double t, const Vec3& x) const {
    MatX out = MatX::Zero(kappa, kappa);
    for (const auto& m : modes) out += m.a * std::exp(I_unit * (m.eta(0) * t + m.eta.tail<3>().dot(x)));
    return out;
  }

  // d/dt (var 0) or d/dx_j (var j) of the field.
  MatX derivative(double t, const Vec3& x, int var) const {
    MatX out = MatX::Zero(kappa, kappa);
    for (const auto& m : modes)
      out += (I_unit * m.eta(var)) * m.a * std::exp(I_unit * (m.eta(0) * t + m.eta.tail<3>().dot(x)));
    return out;
  }

  bool spatially_constant() const {
    for (const auto& m : modes)
      if (m.eta.tail<3>().norm() != 0.0 && m.a.norm() > 0) return false;
    return true;
  }

  double sup_bound() const {
    double s = 0;
    for (const auto& m : modes) s += m.a.operatorNorm();
    return s;
  }
};

// gamma = (Pi A0 Pi)^{-1} Pi (i omega A0^1 + M) Pi per (t,x)-frequency, in the eigenbasis.
inline CouplingField build_gamma(const BlochBand& band, const ProjectorPair& pp, const MaterialSpec& spec,
                                 const LatticeCutoff& cutoff) {
  require(cutoff == band.cutoff(), "build_gamma: cutoff differs from the band's cutoff");
  const MatX& psi = pp.basis();
  Eigen::PartialPivLU<MatX> s_lu(pp.pia0pi());
  CouplingField g = CouplingField::zero(band.kappa);
  for (const Vec4& eta : spec.modulation_frequencies()) {
    const MatX n = I_unit * band.omega * apply_convolution(spec.a1_coefficients(eta), cutoff, psi) +
                   apply_convolution(spec.m_coefficients(eta), cutoff, psi);
    g.add(eta, s_lu.solve(psi.adjoint() * n));
  }
  return g;
}

struct RayAverageData {
  CouplingField gamma_tilde;  // functions of x - V t: eta = (0, eta_x)
  CouplingField g;            // g(0, x) = 0
  double beta = 0.0;
  std::vector<Vec4> near_resonant;
  std::vector<std::string> warnings;
};

inline double divisor(const Vec4& eta, const Vec3& V) { return eta(0) + eta.tail<3>().dot(V); }

inline RayAverageData ray_average(const CouplingField& gamma, const Vec3& V, double divisor_tol = 1e-9) {
  require(divisor_tol > 0, "ray_average: divisor_tol must be positive");
  RayAverageData r;
  r.gamma_tilde = CouplingField::zero(gamma.kappa);
  r.g = CouplingField::zero(gamma.kappa);
  for (const auto& m : gamma.modes) {
    const double d = divisor(m.eta, V);
    Vec4 moving = Vec4::Zero();
    moving.tail<3>() = m.eta.tail<3>();
    if (std::abs(d) < divisor_tol) {
      // exp(i eta.(t,x)) = exp(i eta_x.(x - V t)) up to the divisor.
      r.gamma_tilde.add(moving, m.a);
      const double roundoff = 1e-14 * m.eta.norm() * (1.0 + V.norm());
      if (std::abs(d) > roundoff) {
        r.near_resonant.push_back(m.eta);
        r.warnings.push_back("small divisor " + std::to_string(d) + " treated as resonant; refine the frequencies");
      }
      continue;
    }
    const MatX c = m.a / (I_unit * d);
    r.g.add(m.eta, c);
    moving(0) = -m.eta.tail<3>().dot(V);
    r.g.add(moving, -c);
  }
  r.beta = 0.0;
  return r;
}

struct BetaFit {
  std::optional<double> beta;
  std::vector<double> horizons;
  std::vector<double> g_sup;  // sup_{t <= T} |g(t, x0 + V t)| over the ray set
  std::string diagnostic;
};

// Integrates gamma - gamma_tilde along rays x0 + V t with composite
// Gauss-Legendre panels and fits log sup|g| against log T.
inline BetaFit empirical_beta(const CouplingField& gamma, const Vec3& V, const std::vector<double>& T_list,
                              double divisor_tol = 1e-9, int panels_per_unit = 4) {
  BetaFit fit;
  fit.horizons = T_list;
  require(!T_list.empty(), "empirical_beta: empty horizon list");
  for (std::size_t i = 1; i < T_list.size(); ++i)
    require(T_list[i] > T_list[i - 1], "empirical_beta: horizons must increase");
  const CouplingField gt = ray_average(gamma, V, divisor_tol).gamma_tilde;
  const std::vector<Vec3> starts{Vec3::Zero(), Vec3(0.7, -0.3, 1.1), Vec3(-1.3, 0.4, 0.2)};
  const auto [nodes, weights] = gauss_legendre(8, 0.0, 1.0);
  const double t_max = T_list.back();
  const int panels = std::max(1, static_cast<int>(std::ceil(t_max * panels_per_unit)));
  const double width = t_max / panels;
  fit.g_sup.assign(T_list.size(), 0.0);
  for (const Vec3& x0 : starts) {
    const MatX avg = gt.value(0.0, x0);
    MatX acc = MatX::Zero(gamma.kappa, gamma.kappa);
    double sup = 0;
    std::size_t next = 0;
    for (int p = 0; p < panels && next < T_list.size(); ++p) {
      const double a = p * width;
      for (int q = 0; q < nodes.size(); ++q) {
        const double s = a + width * nodes(q);
        acc += width * weights(q) * (gamma.value(s, x0 + V * s) - avg);
      }
      sup = std::max(sup, acc.norm());
      const double end = a + width;
      while (next < T_list.size() && T_list[next] <= end + 1e-12 * t_max) {
        fit.g_sup[next] = std::max(fit.g_sup[next], sup);
        ++next;
      }
    }
  }
  bool degenerate = true;
  for (double v : fit.g_sup) degenerate = degenerate && v < 1e-12;
  if (degenerate) {
    fit.beta = 0.0;
    fit.diagnostic = "g vanishes along all rays";
    return fit;
  }
  if (T_list.size() < 2) {
    fit.diagnostic = "at least two horizons are needed for a fit";
    return fit;
  }
  std::vector<double> x, y;
  for (std::size_t i = 0; i < T_list.size(); ++i) {
    x.push_back(T_list[i]);
    y.push_back(std::max(fit.g_sup[i], 1e-300));
  }
  const double slope = loglog_slope(x, y);
  if (!std::isfinite(slope)) {
    fit.diagnostic = "log-log fit did not converge";
    return fit;
  }
  fit.beta = std::max(0.0, slope);
  return fit;
}

}  // namespace blochwkb
