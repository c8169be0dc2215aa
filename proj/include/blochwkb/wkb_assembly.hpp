#pragma once

#include <array>
#include <cmath>
#include <map>
#include <memory>
#include <vector>

#include "blochwkb/bloch_bands.hpp"
#include "blochwkb/dispersion.hpp"
#include "blochwkb/envelope.hpp"
#include "blochwkb/jet.hpp"
#include "blochwkb/ray_coupling.hpp"

namespace blochwkb {

// Scalar trigonometric polynomial sum s_eta exp(i eta.(t,x)).
struct ScalarTrig {
  std::vector<std::pair<Vec4, cplx>> modes;

  static ScalarTrig one() { return {{{Vec4::Zero(), 1.0}}}; }
  // Entry (a, b) of a coupling field, optionally differentiated in t (var 0) or x_j (var j).
  static ScalarTrig entry(const CouplingField& f, int a, int b, int var = -1) {
    ScalarTrig s;
    for (const auto& m : f.modes) {
      const cplx c = var < 0 ? m.a(a, b) : I_unit * m.eta(var) * m.a(a, b);
      if (c != 0.0) s.modes.push_back({m.eta, c});
    }
    return s;
  }
  static ScalarTrig plane(const Vec4& eta) { return {{{eta, 1.0}}}; }

  bool empty() const { return modes.empty(); }
  cplx value(double t, const Vec3& x) const {
    cplx v = 0;
    for (const auto& [eta, s] : modes) v += s * std::exp(I_unit * (eta(0) * t + eta.tail<3>().dot(x)));
    return v;
  }
  // Jet in (T, t, x1, x2, x3).
  Jet jet(const std::shared_ptr<const JetLayout>& layout, double t, const Vec3& x) const {
    Jet out = Jet::zero(layout, 1);
    Eigen::VectorXd k = Eigen::VectorXd::Zero(5);
    for (const auto& [eta, s] : modes) {
      k.tail<4>() = eta;
      out += Jet::plane_wave(layout, k, s * std::exp(I_unit * (eta(0) * t + eta.tail<3>().dot(x))));
    }
    return out;
  }
};

// y-profile v (periodic coefficients) times factor(t,x) * d_T^dT d^alpha c_comp(T, x - V t).
struct ProfileTerm {
  VecX v;
  int comp = 0;
  std::array<int, 3> alpha{0, 0, 0};
  int dT = 0;
  ScalarTrig factor = ScalarTrig::one();
};

struct ProfileOptions {
  bool drop_w1 = false;
  bool drop_w2 = false;
};

struct ProfileSet {
  Vec3 theta = Vec3::Zero();
  double omega = 0;
  int kappa = 0;
  Vec3 V = Vec3::Zero();
  Mat3 H = Mat3::Zero();
  std::shared_ptr<const BlochOperator> op;
  MatX psi;
  MatX pia0pi;
  std::vector<Vec4> etas;
  std::vector<CoefficientMap6> a1;
  std::vector<CoefficientMap6> m;
  CouplingField g;
  std::shared_ptr<const EnvelopeSolution> envelope;
  std::array<std::vector<ProfileTerm>, 3> w;  // w0, w1, w2

  const LatticeCutoff& cutoff() const { return op->cutoff(); }
};

namespace detail {

// B_j = -V_j A0 - G0(e_j)
inline MatX apply_B(const BlochOperator& op, const Vec3& V, int j, const MatX& x) {
  return -V(j) * op.apply_a0(x) - apply_curl_symbol(Vec3::Unit(j), op.cutoff(), x);
}

}  // namespace detail

inline ProfileSet build_profiles(const BlochBand& band, const ProjectorPair& pp, const DispersionData& disp,
                                 const RayAverageData& ray, std::shared_ptr<const EnvelopeSolution> envelope,
                                 const ProfileOptions& options = {}) {
  require(envelope != nullptr, "build_profiles: missing envelope solution");
  require(disp.theta == band.theta && disp.omega == band.omega, "build_profiles: dispersion data of another band");
  require(std::abs(pp.omega() - band.omega) == 0.0 && pp.kappa() == band.kappa,
          "build_profiles: projectors of another band");
  require(ray.g.kappa == band.kappa && ray.gamma_tilde.kappa == band.kappa && envelope->kappa() == band.kappa,
          "build_profiles: coupling or envelope data have another multiplicity");
  require((envelope->hessian() - disp.hessian).norm() <= 1e-12 * std::max(1.0, disp.hessian.norm()),
          "build_profiles: envelope evolved with another dispersion");

  const MaterialSpec& spec = band.op().spec();
  ProfileSet P;
  P.theta = band.theta;
  P.omega = band.omega;
  P.kappa = band.kappa;
  P.V = disp.V;
  P.H = disp.hessian;
  P.op = band.spectrum->op;
  P.psi = pp.basis();
  P.pia0pi = pp.pia0pi();
  P.etas = spec.modulation_frequencies();
  for (const Vec4& eta : P.etas) {
    P.a1.push_back(spec.a1_coefficients(eta));
    P.m.push_back(spec.m_coefficients(eta));
  }
  P.g = ray.g;
  P.envelope = std::move(envelope);

  const BlochOperator& op = *P.op;
  const int kappa = P.kappa;
  const LatticeCutoff& cut = op.cutoff();
  for (int a = 0; a < kappa; ++a) P.w[0].push_back({P.psi.col(a), a});
  if (options.drop_w1) return P;

  // phi_{j,a} = -Q B_j psi_a
  std::array<MatX, 3> phi;
  for (int j = 0; j < 3; ++j) phi[j] = -pp.q(detail::apply_B(op, P.V, j, P.psi));
  for (int j = 0; j < 3; ++j)
    for (int a = 0; a < kappa; ++a) {
      ProfileTerm t{phi[j].col(a), a};
      t.alpha[j] = 1;
      P.w[1].push_back(t);
    }
  // Pi w1 = -sum_a psi_a (g c)_a
  for (int a = 0; a < kappa; ++a)
    for (int b = 0; b < kappa; ++b) {
      ScalarTrig f = ScalarTrig::entry(P.g, a, b);
      if (!f.empty()) P.w[1].push_back({-P.psi.col(a), b, {0, 0, 0}, 0, f});
    }
  if (options.drop_w2) return P;

  // (I - Pi) w2 = -Q (M w1 + N w0), Pi w2 = 0
  auto push = [&](const MatX& rhs, int comp, std::array<int, 3> alpha, int dT, ScalarTrig f) {
    if (f.empty()) return;
    P.w[2].push_back({-pp.q(rhs).col(0), comp, alpha, dT, std::move(f)});
  };
  const MatX a0psi = op.apply_a0(P.psi);
  for (int a = 0; a < kappa; ++a) {
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        std::array<int, 3> al{0, 0, 0};
        al[i] += 1;
        al[j] += 1;
        push(detail::apply_B(op, P.V, i, phi[j].col(a)), a, al, 0, ScalarTrig::one());
      }
    for (int b = 0; b < kappa; ++b) {
      push(-a0psi.col(a), b, {0, 0, 0}, 0, ScalarTrig::entry(P.g, a, b, 0));
      for (int i = 0; i < 3; ++i) {
        std::array<int, 3> al{0, 0, 0};
        al[i] = 1;
        push(-detail::apply_B(op, P.V, i, P.psi.col(a)), b, al, 0, ScalarTrig::entry(P.g, a, b));
        push(apply_curl_symbol(Vec3::Unit(i), cut, P.psi.col(a)), b, {0, 0, 0}, 0,
             ScalarTrig::entry(P.g, a, b, i + 1));
      }
    }
    push(a0psi.col(a), a, {0, 0, 0}, 1, ScalarTrig::one());
    for (std::size_t e = 0; e < P.etas.size(); ++e) {
      const MatX n = I_unit * P.omega * apply_convolution(P.a1[e], cut, P.psi.col(a)) +
                     apply_convolution(P.m[e], cut, P.psi.col(a));
      push(n, a, {0, 0, 0}, 0, ScalarTrig::plane(P.etas[e]));
    }
  }
  return P;
}

struct ResidualSample {
  double T = 0;
  double t = 0;
  Vec3 x = Vec3::Zero();
};

struct ResidualReport {
  std::array<double, 7> norms{};  // r_{-1} .. r_5, max over samples
  double scale = 0;               // max |w0|
  int samples = 0;
  double order(int k) const { return norms[k + 1]; }
};

// Tensor grid of 5 times in [0, t_max] and 5^3 moving-frame offsets within
// `half_width` of the packet centre, at slow time T.
inline std::vector<ResidualSample> default_residual_samples(const Vec3& V, double T, double t_max,
                                                            const Vec3& half_width, int n = 5) {
  std::vector<ResidualSample> out;
  auto lin = [n](double lo, double hi, int i) { return n == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * i / (n - 1); };
  for (int it = 0; it < n; ++it) {
    const double t = lin(0.0, t_max, it);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) {
          const Vec3 xt(lin(-half_width(0), half_width(0), i), lin(-half_width(1), half_width(1), j),
                        lin(-half_width(2), half_width(2), k));
          out.push_back({T, t, xt + V * t});
        }
  }
  return out;
}

// Evaluates the residual coefficients r_{-1} .. r_5 of the expansion of
// P^h applied to the ansatz.  Profiles are expanded as first-order jets in
// (T, t, x); envelope Taylor data come from the spectral interpolant, with
// T-derivatives from the envelope equation.
class ResidualEvaluator {
 public:
  explicit ResidualEvaluator(const ProfileSet& p)
      : P_(p),
        l5_(JetLayout::make(5, 3)),
        l1_(JetLayout::make(5, 1)),
        l3_(JetLayout::make(3, 6)) {
    // delta_T^m prod_j (delta_x_j - V_j delta_t)^beta_j
    std::array<Jet, 3> u;
    for (int j = 0; j < 3; ++j) {
      u[j] = Jet::zero(l5_, 1);
      u[j].c(0, l5_->find({0, 0, j == 0, j == 1, j == 2})) = 1.0;
      u[j].c(0, l5_->find({0, 1, 0, 0, 0})) = -P_.V(j);
    }
    Jet dT = Jet::zero(l5_, 1);
    dT.c(0, l5_->find({1, 0, 0, 0, 0})) = 1.0;
    for (int m = 0; m <= 3; ++m)
      for (int i = 0; i < l3_->size(); ++i) {
        const auto& b = l3_->monomial(i);
        if (m + b[0] + b[1] + b[2] > 3) continue;
        Jet j = Jet::zero(l5_, 1);
        j.c(0, 0) = 1.0;
        for (int p = 0; p < m; ++p) j = scalar_times(dT, j);
        for (int a = 0; a < 3; ++a)
          for (int p = 0; p < b[a]; ++p) j = scalar_times(u[a], j);
        compose_.push_back({m, i, j.c.row(0)});
      }
  }

  // Taylor jet (kappa rows) of c(T, x - V t) around the sample, order 3.
  Jet envelope_jet(const ResidualSample& s) const {
    const SpectralEnvelope& env = envelope_at(s.T);
    const Vec3 xt = s.x - P_.V * s.t;
    std::vector<Jet> X{env.taylor(xt, l3_)};
    std::vector<MatX> gam(l3_->size(), MatX::Zero(P_.kappa, P_.kappa));
    for (const auto& m : P_.envelope->gamma_tilde().modes) {
      Eigen::VectorXd k = m.eta.tail<3>();
      const Jet pw = Jet::plane_wave(l3_, k, std::exp(I_unit * k.dot(xt)));
      for (int i = 0; i < l3_->size(); ++i) gam[i] += pw.c(0, i) * m.a;
    }
    const Mat3& H = P_.H;
    for (int m = 0; m < 3; ++m) {
      const Jet& cur = X.back();
      Jet next = -1.0 * matrix_times(gam, cur);
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
          if (H(i, j) != 0) next -= (0.5 * I_unit * H(i, j)) * cur.derivative(i).derivative(j);
      next *= 1.0 / (m + 1);
      X.push_back(std::move(next));
    }
    Jet c5 = Jet::zero(l5_, P_.kappa);
    for (const auto& e : compose_) c5.c += X[e.m].c.col(e.beta) * e.poly;
    return c5;
  }

  // Order-1 jets of w0, w1, w2 (dim x 6) at the sample.
  std::array<Jet, 3> profile_jets(const ResidualSample& s) const {
    const Jet c5 = envelope_jet(s);
    std::array<Jet, 3> w;
    for (int o = 0; o < 3; ++o) {
      w[o] = Jet::zero(l1_, P_.op->dim());
      for (const auto& term : P_.w[o]) {
        Jet d{c5.layout, c5.c.row(term.comp)};
        for (int p = 0; p < term.dT; ++p) d = d.derivative(0);
        for (int a = 0; a < 3; ++a)
          for (int p = 0; p < term.alpha[a]; ++p) d = d.derivative(2 + a);
        const Jet s1 = scalar_times(term.factor.jet(l1_, s.t, s.x), reorder(d, l1_));
        w[o].c.noalias() += term.v * s1.c.row(0);
      }
    }
    return w;
  }

  // r_{-1} .. r_5 at one sample, as coefficient vectors.
  std::array<VecX, 7> residuals(const ResidualSample& s) const {
    const auto w = profile_jets(s);
    const BlochOperator& op = *P_.op;
    const LatticeCutoff& cut = op.cutoff();
    auto L = [&](const Jet& x) -> VecX { return op.apply_L(P_.omega, x.c.col(0)); };
    auto M = [&](const Jet& x) -> VecX {
      VecX r = op.apply_a0(x.c.col(2));
      for (int j = 0; j < 3; ++j) r -= apply_curl_symbol(Vec3::Unit(j), cut, x.c.col(3 + j));
      return r;
    };
    auto N = [&](const Jet& x) -> VecX {
      VecX r = op.apply_a0(x.c.col(1));
      for (std::size_t e = 0; e < P_.etas.size(); ++e) {
        const cplx ph = phase(e, s);
        r += ph * (I_unit * P_.omega * apply_convolution(P_.a1[e], cut, x.c.col(0)) +
                   apply_convolution(P_.m[e], cut, x.c.col(0)));
      }
      return r;
    };
    auto dt_a1 = [&](const Jet& x) -> VecX {
      VecX r = VecX::Zero(op.dim());
      for (std::size_t e = 0; e < P_.etas.size(); ++e) {
        if (P_.a1[e].empty()) continue;
        const VecX y = I_unit * P_.etas[e](0) * x.c.col(0) + x.c.col(2);
        r += phase(e, s) * apply_convolution(P_.a1[e], cut, y);
      }
      return r;
    };
    auto dT_a1 = [&](const Jet& x) -> VecX {
      VecX r = VecX::Zero(op.dim());
      for (std::size_t e = 0; e < P_.etas.size(); ++e) {
        if (P_.a1[e].empty()) continue;
        r += phase(e, s) * apply_convolution(P_.a1[e], cut, x.c.col(1));
      }
      return r;
    };
    std::array<VecX, 7> r;
    r[0] = L(w[0]);
    r[1] = L(w[1]) + M(w[0]);
    r[2] = L(w[2]) + M(w[1]) + N(w[0]);
    r[3] = M(w[2]) + N(w[1]) + dt_a1(w[0]);
    r[4] = N(w[2]) + dt_a1(w[1]) + dT_a1(w[0]);
    r[5] = dt_a1(w[2]) + dT_a1(w[1]);
    r[6] = dT_a1(w[2]);
    return r;
  }

  ResidualReport evaluate(const std::vector<ResidualSample>& samples) const {
    ResidualReport rep;
    rep.samples = static_cast<int>(samples.size());
    for (const auto& s : samples) {
      const auto r = residuals(s);
      for (int k = 0; k < 7; ++k) rep.norms[k] = std::max(rep.norms[k], r[k].norm());
      rep.scale = std::max(rep.scale, profile_value(s, 0).norm());
    }
    return rep;
  }

  VecX profile_value(const ResidualSample& s, int order) const { return profile_jets(s)[order].c.col(0); }

 private:
  struct Composition {
    int m;
    int beta;
    Eigen::RowVectorXcd poly;
  };

  cplx phase(std::size_t e, const ResidualSample& s) const {
    const Vec4& eta = P_.etas[e];
    return std::exp(I_unit * (eta(0) * s.t + eta.tail<3>().dot(s.x)));
  }

  const SpectralEnvelope& envelope_at(double T) const {
    auto it = cache_.find(T);
    if (it == cache_.end()) it = cache_.emplace(T, P_.envelope->at(T)).first;
    return it->second;
  }

  const ProfileSet& P_;
  std::shared_ptr<const JetLayout> l5_, l1_, l3_;
  std::vector<Composition> compose_;
  mutable std::map<double, SpectralEnvelope> cache_;
};

inline ResidualReport residual(const ProfileSet& profiles, const std::vector<ResidualSample>& samples) {
  return ResidualEvaluator(profiles).evaluate(samples);
}

struct WKBField {
  double h = 0;
  double t = 0;
  std::vector<Vec3> points;
  MatX samples;  // points x 6
};

namespace detail {

// Values of d_T^dT d^alpha c at the point from a second-order Taylor jet.
inline VecX envelope_derivative(const Jet& j2, const std::array<int, 3>& alpha, int dT, const Mat3& H,
                                const MatX& gamma) {
  auto d = [&](const std::array<int, 3>& a) {
    Jet x = j2;
    for (int v = 0; v < 3; ++v)
      for (int p = 0; p < a[v]; ++p) x = x.derivative(v);
    return VecX(x.value());
  };
  if (dT == 0) return d(alpha);
  require(alpha == std::array<int, 3>{0, 0, 0} && dT == 1, "envelope_derivative: unsupported derivative");
  VecX out = -gamma * d({0, 0, 0});
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      std::array<int, 3> a{0, 0, 0};
      a[i] += 1;
      a[j] += 1;
      if (H(i, j) != 0) out -= 0.5 * I_unit * H(i, j) * d(a);
    }
  return out;
}

inline cplx periodic_value(const VecX& coeffs, const LatticeCutoff& cut, int comp, const Vec3& y) {
  cplx v = 0;
  for (int m = 0; m < cut.size(); ++m) {
    const cplx c = coeffs(6 * m + comp);
    if (c != 0.0) v += c * std::exp(I_unit * to_vec(cut.mode(m)).dot(y));
  }
  return v;
}

}  // namespace detail

// u = exp(i(omega t + theta.x)/h) (w0 + h w1 + h^2 w2)(h t, t, x, x/h) at the points.
inline WKBField assemble(const ProfileSet& P, double h, double t, const std::vector<Vec3>& points,
                         int max_order = 2) {
  require(h > 0, "assemble: h must be positive");
  WKBField out{h, t, points, MatX::Zero(points.size(), 6)};
  const double T = h * t;
  const SpectralEnvelope env = P.envelope->at(T);
  const Grid3& g = env.grid();
  const auto l2 = JetLayout::make(3, 2);
  const LatticeCutoff& cut = P.cutoff();
  for (std::size_t p = 0; p < points.size(); ++p) {
    const Vec3& x = points[p];
    const Vec3 xt = x - P.V * t;
    for (int a = 0; a < 3; ++a)
      if (g.M[a] > 1 && std::abs(xt(a)) >= 0.5 * g.L(a))
        throw BoxTooSmall("evaluation point lies outside the envelope box in the moving frame");
    const Jet j2 = env.taylor(xt, l2);
    const MatX gam = P.envelope->gamma_tilde().value(0.0, xt);
    VecX coeffs = VecX::Zero(P.op->dim());
    double hp = 1.0;
    for (int o = 0; o <= max_order; ++o, hp *= h)
      for (const auto& term : P.w[o]) {
        const VecX d = detail::envelope_derivative(j2, term.alpha, term.dT, P.H, gam);
        coeffs += (hp * term.factor.value(t, x) * d(term.comp)) * term.v;
      }
    const Vec3 y = x / h;
    const cplx phase = std::exp(I_unit * (P.omega * t + P.theta.dot(x)) / h);
    for (int c = 0; c < 6; ++c) out.samples(p, c) = phase * detail::periodic_value(coeffs, cut, c, y);
  }
  return out;
}

// Lattice-harmonic decomposition on the moving envelope grid: the ansatz equals
// exp(i(omega t + theta.x)/h) sum_n exp(i n.x/h) fields[n](x - V t).
struct HarmonicFields {
  std::vector<Mode> modes;
  std::vector<MatX> fields;  // grid.size() x 6 each
  Grid3 grid;
};

inline std::vector<Mode> active_harmonics(const ProfileSet& P, double tol = 0.0) {
  const LatticeCutoff& cut = P.cutoff();
  std::vector<Mode> out;
  for (int m = 0; m < cut.size(); ++m) {
    bool active = false;
    for (const auto& w : P.w)
      for (const auto& term : w) active = active || term.v.segment<6>(6 * m).norm() > tol;
    if (active) out.push_back(cut.mode(m));
  }
  return out;
}

inline HarmonicFields harmonic_fields(const ProfileSet& P, double h, double t, int max_order = 2) {
  const double T = h * t;
  const SpectralEnvelope env = P.envelope->at(T);
  const Grid3& g = env.grid();
  HarmonicFields out{active_harmonics(P), {}, g};
  std::map<std::array<int, 4>, MatX> cache;  // (alpha, dT) -> grid.size() x kappa
  auto field = [&](const std::array<int, 3>& alpha, int dT) -> const MatX& {
    const std::array<int, 4> key{alpha[0], alpha[1], alpha[2], dT};
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    MatX f;
    if (dT == 0) {
      f = env.derivative_field(alpha);
    } else {
      f = MatX::Zero(g.size(), P.kappa);
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
          if (P.H(i, j) == 0) continue;
          std::array<int, 3> a{0, 0, 0};
          a[i] += 1;
          a[j] += 1;
          f -= 0.5 * I_unit * P.H(i, j) * env.derivative_field(a);
        }
      const MatX c = env.derivative_field({0, 0, 0});
      for (int p = 0; p < g.size(); ++p)
        f.row(p) -= (P.envelope->gamma_tilde().value(0.0, g.point(p)) * c.row(p).transpose()).transpose();
    }
    return cache.emplace(key, std::move(f)).first->second;
  };
  const LatticeCutoff& cut = P.cutoff();
  for (std::size_t k = 0; k < out.modes.size(); ++k) out.fields.push_back(MatX::Zero(g.size(), 6));
  double hp = 1.0;
  for (int o = 0; o <= max_order; ++o, hp *= h)
    for (const auto& term : P.w[o]) {
      const MatX& f = field(term.alpha, term.dT);
      VecX s(g.size());
      for (int p = 0; p < g.size(); ++p) s(p) = hp * term.factor.value(t, g.point(p) + P.V * t) * f(p, term.comp);
      for (std::size_t k = 0; k < out.modes.size(); ++k) {
        const Vec6c v = term.v.segment<6>(6 * cut.index(out.modes[k]));
        if (v.norm() == 0) continue;
        out.fields[k].noalias() += s * v.transpose();
      }
    }
  return out;
}

}  // namespace blochwkb
