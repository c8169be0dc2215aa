#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "blochwkb/dispersion.hpp"
#include "blochwkb/envelope.hpp"
#include "blochwkb/ray_coupling.hpp"
#include "blochwkb/reference_oracles.hpp"
#include "blochwkb/wkb_assembly.hpp"

namespace blochwkb {

struct ConvergenceCase {
  MaterialSpec spec = MaterialSpec::identity();
  LatticeCutoff cutoff{1};
  Vec3 theta = Vec3(0.3, 0.0, 0.0);
  double omega_target = 0.3;
  int kappa = 2;
  std::optional<int> band_index;  // overrides (omega_target, kappa)
  BandTolerances band_tol;
  double divisor_tol = 1e-9;
  double sigma = 4.0;
  VecX weights;  // defaults to (1, 0, ...)
  Grid3 grid = Grid3::cube(48, 70.0);
  double T_final = 1.0;
  std::vector<double> h_list{1.0 / 8, 1.0 / 16, 1.0 / 32};
  int t_samples = 9;
  int max_weight = 2;  // |alpha| <= max_weight in x^beta (h d_{t,x})^gamma
  double fd_step = 0.02;
  bool full_seeding = true;  // seed and compare with w0 + h w1 + h^2 w2, else w0 only
};

// Multi-index (beta, gamma) of the weight x^beta (h d_{t,x})^gamma; x is
// measured from the ray x0 + V t.
struct Weight {
  std::array<int, 3> beta{0, 0, 0};
  std::array<int, 4> gamma{0, 0, 0, 0};

  int order() const {
    int s = 0;
    for (int b : beta) s += b;
    for (int g : gamma) s += g;
    return s;
  }
  std::string label() const {
    std::string out = "x";
    for (int b : beta) out += std::to_string(b);
    out += "_hd";
    for (int g : gamma) out += std::to_string(g);
    return out;
  }
};

struct ConvergenceRow {
  double h = 0;
  std::vector<double> errors;   // per weight, sup over sampled t
  std::vector<double> ablated;  // same with the w0-only approximation
  double reference_norm = 0;    // |v(0)| in L2
  double error0() const { return errors.front(); }
  double ablated0() const { return ablated.front(); }
  double weighted() const {
    double s = 0;
    for (double e : errors) s += e;
    return s;
  }
};

struct ConvergenceReport {
  std::string oracle;
  std::vector<Weight> weights;  // weights.front() is alpha = 0
  std::vector<double> t_samples;
  std::vector<ConvergenceRow> rows;
  double slope = 0;           // log-log slope of the alpha = 0 error against h
  double weighted_slope = 0;  // same for the sum over all weights
  double min_ablation_ratio = 0;
  ResidualReport certificate;  // filled when no exact oracle applies
};

namespace detail {

inline std::vector<Weight> weights_up_to(int order) {
  std::vector<Weight> out;
  std::vector<int> a(7, 0);
  std::function<void(int, int)> rec = [&](int var, int left) {
    if (var == 7) {
      Weight w;
      for (int j = 0; j < 3; ++j) w.beta[j] = a[j];
      for (int j = 0; j < 4; ++j) w.gamma[j] = a[3 + j];
      out.push_back(w);
      return;
    }
    for (int e = 0; e <= left; ++e) {
      a[var] = e;
      rec(var + 1, left - e);
    }
    a[var] = 0;
  };
  rec(0, order);
  return out;
}

// Squared L2 norms, per weight, of the difference between the exact solution
// (exact[m] = (h d_t)^m U_hat) and the approximation (approx[m] = d_t^m W_hat
// in the moving frame) on harmonic n.
inline std::vector<double> weighted_difference(const ConstantMediumPropagator& prop, const std::vector<MatX>& exact,
                                               const std::vector<MatX>& approx, const Mode& n, const Vec3& theta,
                                               double omega, double h, const Vec3& V,
                                               const std::vector<Weight>& weights) {
  const Grid3& g = prop.grid();
  std::map<std::array<int, 4>, MatX> by_gamma;
  for (const Weight& w : weights) {
    if (by_gamma.count(w.gamma)) continue;
    const int gt = w.gamma[0];
    MatX d(g.size(), 6);
    for (int p = 0; p < g.size(); ++p) {
      const Vec3 zeta = g.wavevector(p);
      const cplx a = I_unit * (omega - h * V.dot(zeta));
      Eigen::RowVectorXcd approx_t;
      if (gt == 0) approx_t = approx[0].row(p);
      else if (gt == 1) approx_t = a * approx[0].row(p) + h * approx[1].row(p);
      else approx_t = a * a * approx[0].row(p) + 2.0 * a * h * approx[1].row(p) + h * h * approx[2].row(p);
      cplx s = 1.0;
      for (int j = 0; j < 3; ++j)
        for (int r = 0; r < w.gamma[1 + j]; ++r) s *= I_unit * ((theta(j) + n[j]) + h * zeta(j));
      d.row(p) = s * (exact[gt].row(p) - approx_t);
    }
    by_gamma.emplace(w.gamma, prop.from_fourier(d));
  }
  std::vector<double> out;
  for (const Weight& w : weights) {
    const MatX& d = by_gamma.at(w.gamma);
    double sum = 0;
    for (int p = 0; p < g.size(); ++p) {
      const Vec3 x = g.point(p);
      double m = 1.0;
      for (int j = 0; j < 3; ++j) m *= std::pow(x(j), w.beta[j]);
      sum += m * m * d.row(p).squaredNorm();
    }
    out.push_back(sum * g.cell_volume());
  }
  return out;
}

// Fourier coefficients of harmonic k of the assembled field and of its first two
// time derivatives in the moving frame, by a five-point stencil.
inline std::vector<MatX> approx_time_jet(const ConstantMediumPropagator& prop, const ProfileSet& P, double h,
                                         double t, const Mode& n, double delta, int max_order) {
  std::array<MatX, 5> f;
  for (int s = -2; s <= 2; ++s) {
    const HarmonicFields hf = harmonic_fields(P, h, t + s * delta, max_order);
    f[s + 2] = MatX::Zero(prop.grid().size(), 6);
    for (std::size_t k = 0; k < hf.modes.size(); ++k)
      if (hf.modes[k] == n) f[s + 2] = prop.to_fourier(hf.fields[k]);
  }
  std::vector<MatX> out(3);
  out[0] = f[2];
  out[1] = (f[0] - 8.0 * f[1] + 8.0 * f[3] - f[4]) / (12.0 * delta);
  out[2] = (-f[0] + 16.0 * f[1] - 30.0 * f[2] + 16.0 * f[3] - f[4]) / (12.0 * delta * delta);
  return out;
}

}  // namespace detail

// Compares the assembled field with an exact solution seeded with the
// assembled data at t = 0, for t in [0, T_final / h].  Only constant,
// unmodulated media have an exact oracle; other media get a residual
// certificate instead.
inline ConvergenceReport convergence_study(const ConvergenceCase& c) {
  require(!c.h_list.empty(), "convergence_study: empty h list");
  for (std::size_t i = 1; i < c.h_list.size(); ++i)
    require(c.h_list[i] < c.h_list[i - 1], "convergence_study: h list must be strictly decreasing");
  require(c.t_samples >= 1 && c.T_final >= 0, "convergence_study: invalid time sampling");
  const BlochBand band = c.band_index ? band_by_index(c.spec, c.cutoff, c.theta, *c.band_index, c.band_tol)
                                      : band_near(c.spec, c.cutoff, c.theta, c.omega_target, c.kappa, c.band_tol);
  const ProjectorPair pp = build_projectors(band, c.spec, c.cutoff);
  const DispersionData disp = hessian(band, pp, c.spec, c.cutoff);
  const RayAverageData ray = ray_average(build_gamma(band, pp, c.spec, c.cutoff), disp.V, c.divisor_tol);
  VecX weights = c.weights;
  if (weights.size() == 0) {
    weights = VecX::Zero(band.kappa);
    weights(0) = 1.0;
  }
  const auto env = std::make_shared<EnvelopeSolution>(gaussian_state(c.grid, c.sigma, weights), disp.hessian,
                                                      ray.gamma_tilde, 1e-2, std::vector<double>{c.T_final});
  const ProfileSet P = build_profiles(band, pp, disp, ray, env, {});
  ConvergenceReport rep;
  const bool exact_available = c.spec.purely_periodic() && c.spec.eps0.size() == 1 && c.spec.mu0.size() == 1;
  if (!exact_available || !env->exact()) {
    rep.oracle = "residual certificate";
    rep.certificate = residual(P, default_residual_samples(disp.V, c.T_final, 1.0, Vec3::Constant(c.sigma)));
    return rep;
  }
  rep.oracle = "exact constant-medium propagation";
  ProfileOptions w0_only;
  w0_only.drop_w1 = w0_only.drop_w2 = true;
  const ProfileSet P0 = build_profiles(band, pp, disp, ray, env, w0_only);
  const ProfileSet& A = c.full_seeding ? P : P0;
  rep.weights = detail::weights_up_to(c.max_weight);
  const std::size_t nw = rep.weights.size();
  for (int s = 0; s < c.t_samples; ++s) rep.t_samples.push_back(c.T_final * s / std::max(1, c.t_samples - 1));
  std::vector<double> hs, e0, ew;
  rep.min_ablation_ratio = std::numeric_limits<double>::infinity();
  for (double h : c.h_list) {
    ConvergenceRow row;
    row.h = h;
    row.errors.assign(nw, 0.0);
    row.ablated.assign(nw, 0.0);
    const ConstantMediumPropagator prop(c.spec, c.theta, band.omega, h, disp.V, c.grid);
    const HarmonicFields seed = harmonic_fields(A, h, 0.0);
    std::vector<MatX> hat0;
    for (const MatX& f : seed.fields) {
      hat0.push_back(prop.to_fourier(f));
      row.reference_norm += f.squaredNorm() * c.grid.cell_volume();
    }
    row.reference_norm = std::sqrt(row.reference_norm);
    for (double T : rep.t_samples) {
      const double t = T / h;
      std::vector<double> full(nw, 0.0), abl(nw, 0.0);
      for (std::size_t k = 0; k < seed.modes.size(); ++k) {
        const Mode& n = seed.modes[k];
        const MatX u = prop.propagate(n, hat0[k], t);
        const std::vector<MatX> exact{u, prop.time_derivative(n, u, 1), prop.time_derivative(n, u, 2)};
        const auto wa = detail::approx_time_jet(prop, A, h, t, n, c.fd_step, 2);
        const auto w0 = detail::approx_time_jet(prop, P0, h, t, n, c.fd_step, 2);
        const auto a = detail::weighted_difference(prop, exact, wa, n, c.theta, band.omega, h, disp.V, rep.weights);
        const auto b = detail::weighted_difference(prop, exact, w0, n, c.theta, band.omega, h, disp.V, rep.weights);
        for (std::size_t i = 0; i < nw; ++i) {
          full[i] += a[i];
          abl[i] += b[i];
        }
      }
      for (std::size_t i = 0; i < nw; ++i) {
        row.errors[i] = std::max(row.errors[i], std::sqrt(full[i]));
        row.ablated[i] = std::max(row.ablated[i], std::sqrt(abl[i]));
      }
    }
    rep.min_ablation_ratio = std::min(rep.min_ablation_ratio, row.ablated0() / std::max(row.error0(), 1e-300));
    hs.push_back(h);
    e0.push_back(row.error0());
    ew.push_back(row.weighted());
    rep.rows.push_back(row);
  }
  if (hs.size() >= 2) {
    rep.slope = loglog_slope(hs, e0);
    rep.weighted_slope = loglog_slope(hs, ew);
  }
  return rep;
}

}  // namespace blochwkb
