#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <vector>

#include "blochwkb/core_types.hpp"
#include "blochwkb/fft.hpp"

namespace blochwkb {

// (t,x)-frequency eta times a periodic y-coefficient at lattice mode n.
struct ModulationTerm3 {
  Vec4 eta = Vec4::Zero();
  Mode n{0, 0, 0};
  Mat3c value = Mat3c::Zero();
};

struct ModulationTerm6 {
  Vec4 eta = Vec4::Zero();
  Mode n{0, 0, 0};
  Mat6c value = Mat6c::Zero();
};

using CoefficientMap3 = std::map<Mode, Mat3c>;
using CoefficientMap6 = std::map<Mode, Mat6c>;

// Fourier description of eps0(y), mu0(y) and of the modulations
// eps1, mu1, M as finite sums  sum value * exp(i eta.(t,x)) exp(i n.y).
struct MaterialSpec {
  CoefficientMap3 eps0;
  CoefficientMap3 mu0;
  std::vector<ModulationTerm3> eps1;
  std::vector<ModulationTerm3> mu1;
  std::vector<ModulationTerm6> M;

  static MaterialSpec constant(double eps, double mu) {
    MaterialSpec s;
    s.eps0[{0, 0, 0}] = eps * Mat3c::Identity();
    s.mu0[{0, 0, 0}] = mu * Mat3c::Identity();
    return s;
  }
  static MaterialSpec identity() { return constant(1.0, 1.0); }
  // eps0(y) = (mean + amplitude cos y_axis) I, mu0 = I.
  static MaterialSpec layered(int axis, double mean, double amplitude) {
    MaterialSpec s = identity();
    s.eps0[{0, 0, 0}] = mean * Mat3c::Identity();
    Mode e{0, 0, 0};
    e[axis] = 1;
    s.eps0[e] = 0.5 * amplitude * Mat3c::Identity();
    s.eps0[-e] = 0.5 * amplitude * Mat3c::Identity();
    return s;
  }

  bool purely_periodic() const { return eps1.empty() && mu1.empty() && M.empty(); }

  // blockdiag(eps0, mu0) coefficients
  CoefficientMap6 a0_coefficients() const {
    CoefficientMap6 out;
    for (const auto& [n, c] : eps0) {
      auto& m = out.try_emplace(n, Mat6c::Zero()).first->second;
      m.block<3, 3>(0, 0) += c;
    }
    for (const auto& [n, c] : mu0) {
      auto& m = out.try_emplace(n, Mat6c::Zero()).first->second;
      m.block<3, 3>(3, 3) += c;
    }
    return out;
  }

  // Distinct (t,x)-frequencies of the modulation terms.
  std::vector<Vec4> modulation_frequencies() const {
    std::vector<Vec4> out;
    auto add = [&](const Vec4& e) {
      for (const auto& f : out)
        if (f == e) return;
      out.push_back(e);
    };
    for (const auto& t : eps1) add(t.eta);
    for (const auto& t : mu1) add(t.eta);
    for (const auto& t : M) add(t.eta);
    return out;
  }

  // y-coefficients of blockdiag(eps1, mu1) at frequency eta.
  CoefficientMap6 a1_coefficients(const Vec4& eta) const {
    CoefficientMap6 out;
    for (const auto& t : eps1)
      if (t.eta == eta) out.try_emplace(t.n, Mat6c::Zero()).first->second.block<3, 3>(0, 0) += t.value;
    for (const auto& t : mu1)
      if (t.eta == eta) out.try_emplace(t.n, Mat6c::Zero()).first->second.block<3, 3>(3, 3) += t.value;
    return out;
  }
  CoefficientMap6 m_coefficients(const Vec4& eta) const {
    CoefficientMap6 out;
    for (const auto& t : M)
      if (t.eta == eta) out.try_emplace(t.n, Mat6c::Zero()).first->second += t.value;
    return out;
  }

  Mat3c eps_at(const Vec3& y) const { return evaluate(eps0, y); }
  Mat3c mu_at(const Vec3& y) const { return evaluate(mu0, y); }

  static Mat3c evaluate(const CoefficientMap3& c, const Vec3& y) {
    Mat3c out = Mat3c::Zero();
    for (const auto& [n, v] : c) out += v * std::exp(I_unit * to_vec(n).dot(y));
    return out;
  }

  // Axes along which eps0 or mu0 vary.
  std::array<bool, 3> varying_axes() const {
    std::array<bool, 3> out{false, false, false};
    for (const auto* m : {&eps0, &mu0})
      for (const auto& [n, v] : *m)
        for (int a = 0; a < 3; ++a)
          if (n[a] != 0) out[a] = true;
    return out;
  }

  // Hermitian coefficient symmetry and pointwise positivity on a 9^3 grid.
  void validate(int grid = 9, double min_eig = 1e-10) const {
    if (eps0.empty() || mu0.empty()) throw ConfigError("material: eps0 and mu0 must be given");
    for (const auto* m : {&eps0, &mu0}) {
      for (const auto& [n, v] : *m) {
        auto it = m->find(-n);
        const double scale = std::max(1.0, v.norm());
        if (it == m->end() ? v.norm() > 1e-12 * scale
                           : (it->second - v.adjoint()).norm() > 1e-12 * scale)
          throw ConfigError("material: coefficient at -n must be the adjoint of the coefficient at n");
      }
    }
    const auto vary = varying_axes();
    std::array<int, 3> g;
    for (int a = 0; a < 3; ++a) g[a] = vary[a] ? grid : 1;
    for (int i = 0; i < g[0]; ++i)
      for (int j = 0; j < g[1]; ++j)
        for (int k = 0; k < g[2]; ++k) {
          const Vec3 y = 2.0 * M_PI * Vec3(double(i) / g[0], double(j) / g[1], double(k) / g[2]);
          for (const Mat3c& m : {eps_at(y), mu_at(y)}) {
            if (m.imag().norm() > 1e-10 * std::max(1.0, m.norm()))
              throw ConfigError("material: eps0/mu0 must be real symmetric pointwise");
            Eigen::SelfAdjointEigenSolver<Mat3> es(m.real());
            if (es.eigenvalues()(0) <= min_eig)
              throw ConfigError("material: eps0/mu0 not positive definite on the sampling grid");
          }
        }
  }
};

// (E, B) = exp(i theta.y) sum_n coeffs(n) exp(i n.y); coefficient block of mode
// index m occupies coeffs[6m .. 6m+5] in the order E1 E2 E3 B1 B2 B3.
// Coefficient norms equal L2 norms for the normalized measure dy/(2 pi)^3.
struct FourierField6 {
  Vec3 theta = Vec3::Zero();
  LatticeCutoff cutoff;
  VecX coeffs;

  static FourierField6 zero(const Vec3& theta, const LatticeCutoff& cutoff) {
    return {theta, cutoff, VecX::Zero(cutoff.dim())};
  }

  Vec6c mode(const Mode& n) const { return coeffs.segment<6>(6 * cutoff.index(n)); }
  void set_mode(const Mode& n, const Vec6c& v) { coeffs.segment<6>(6 * cutoff.index(n)) = v; }

  Vec6c value_at(const Vec3& y) const {
    Vec6c out = Vec6c::Zero();
    for (int m = 0; m < cutoff.size(); ++m)
      out += coeffs.segment<6>(6 * m) * std::exp(I_unit * cutoff.wavevector(m, theta).dot(y));
    return out;
  }

  double norm() const { return coeffs.norm(); }
  cplx dot(const FourierField6& other) const { return coeffs.dot(other.coeffs); }
};

inline void require_compatible(const FourierField6& a, const FourierField6& b) {
  require(a.cutoff == b.cutoff, "fields have different cutoffs");
  require(a.theta == b.theta, "fields have different Bloch frequencies");
}

// Columns of `in` are coefficient vectors; applies G(theta): per mode
// (E, B) -> (i(theta+n) x B, -i(theta+n) x E).
inline MatX apply_curl(const Vec3& theta, const LatticeCutoff& cutoff, const MatX& in) {
  require(in.rows() == cutoff.dim(), "apply_curl: coefficient length does not match cutoff");
  MatX out(in.rows(), in.cols());
  for (int m = 0; m < cutoff.size(); ++m) {
    const Mat3 x = cross_matrix(cutoff.wavevector(m, theta));
    out.middleRows<3>(6 * m) = I_unit * (x * in.middleRows<3>(6 * m + 3));
    out.middleRows<3>(6 * m + 3) = -I_unit * (x * in.middleRows<3>(6 * m));
  }
  return out;
}

inline FourierField6 apply_curl_block(const FourierField6& f) {
  require(f.coeffs.size() == f.cutoff.dim(), "apply_curl_block: invalid cutoff");
  return {f.theta, f.cutoff, apply_curl(f.theta, f.cutoff, f.coeffs)};
}

// Constant-symbol block G0(xi) applied to every mode.
inline MatX apply_curl_symbol(const Vec3& xi, const LatticeCutoff& cutoff, const MatX& in) {
  const Eigen::Matrix<double, 6, 6> s = curl_symbol(xi);
  MatX out(in.rows(), in.cols());
  for (int m = 0; m < cutoff.size(); ++m) out.middleRows<6>(6 * m) = s * in.middleRows<6>(6 * m);
  return out;
}

// Galerkin convolution: out(m) = sum_s c(s) in(m - s), both m and m - s in the cutoff set.
inline MatX apply_convolution(const CoefficientMap6& c, const LatticeCutoff& cutoff, const MatX& in) {
  require(in.rows() == cutoff.dim(), "apply_convolution: coefficient length does not match cutoff");
  MatX out = MatX::Zero(in.rows(), in.cols());
  for (const auto& [s, v] : c) {
    for (int m = 0; m < cutoff.size(); ++m) {
      const Mode src = cutoff.mode(m) - s;
      if (!cutoff.contains(src)) continue;
      out.middleRows<6>(6 * m).noalias() += v * in.middleRows<6>(6 * cutoff.index(src));
    }
  }
  return out;
}

enum class MaterialPart { eps0, mu0, A0 };

inline FourierField6 apply_material(const MaterialSpec& spec, MaterialPart which, const FourierField6& f) {
  CoefficientMap6 c;
  if (which == MaterialPart::A0) {
    c = spec.a0_coefficients();
  } else {
    MaterialSpec part;
    part.eps0 = which == MaterialPart::eps0 ? spec.eps0 : CoefficientMap3{};
    part.mu0 = which == MaterialPart::mu0 ? spec.mu0 : CoefficientMap3{};
    c = part.a0_coefficients();
  }
  return {f.theta, f.cutoff, apply_convolution(c, f.cutoff, f.coeffs)};
}

// Two orthonormal real vectors spanning v^perp.  Tie-break: start from the
// coordinate axis least parallel to v (lowest index on ties).
inline std::array<Vec3, 2> transverse_pair(const Vec3& v) {
  require(v.norm() > 0, "transverse_pair: zero wavevector");
  const Vec3 u = v.normalized();
  int axis = 0;
  for (int a = 1; a < 3; ++a)
    if (std::abs(u(a)) < std::abs(u(axis))) axis = a;
  Vec3 t1 = Vec3::Unit(axis) - u(axis) * u;
  t1.normalize();
  return {t1, u.cross(t1)};
}

inline std::vector<std::array<Vec3, 2>> transverse_basis(const LatticeCutoff& cutoff, const Vec3& theta) {
  if (theta.norm() == 0.0)
    throw HypothesisViolation("theta = 0 is excluded: the selected eigenvalue must be nonzero at a nonzero Bloch frequency");
  std::vector<std::array<Vec3, 2>> out;
  out.reserve(cutoff.size());
  for (int m = 0; m < cutoff.size(); ++m) out.push_back(transverse_pair(cutoff.wavevector(m, theta)));
  return out;
}

// Coefficient matrix (dim x 4 size) whose columns span the transverse subspace:
// per mode (t1,0), (t2,0), (0,t1), (0,t2).
inline MatX transverse_matrix(const LatticeCutoff& cutoff, const Vec3& theta) {
  const auto basis = transverse_basis(cutoff, theta);
  MatX t = MatX::Zero(cutoff.dim(), 4 * cutoff.size());
  for (int m = 0; m < cutoff.size(); ++m)
    for (int p = 0; p < 2; ++p) {
      t.block<3, 1>(6 * m, 4 * m + p) = basis[m][p].cast<cplx>();
      t.block<3, 1>(6 * m + 3, 4 * m + 2 + p) = basis[m][p].cast<cplx>();
    }
  return t;
}

// Per mode: (i(theta+n).E, i(theta+n).B), i.e. the E and B divergences.
inline Eigen::MatrixXcd divergence(const FourierField6& f) {
  Eigen::MatrixXcd out(f.cutoff.size(), 2);
  for (int m = 0; m < f.cutoff.size(); ++m) {
    const Vec3 k = f.cutoff.wavevector(m, f.theta);
    out(m, 0) = I_unit * k.cast<cplx>().dot(f.coeffs.segment<3>(6 * m));
    out(m, 1) = I_unit * k.cast<cplx>().dot(f.coeffs.segment<3>(6 * m + 3));
  }
  return out;
}

// Samples of the field on the uniform grid y = 2 pi j / m, rows in row-major order.
inline MatX sample_field(const FourierField6& f, int m) {
  require(m >= 1, "sample_field: empty grid");
  MatX out(m * m * m, 6);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      for (int k = 0; k < m; ++k) {
        const Vec3 y = 2.0 * M_PI * Vec3(i, j, k) / m;
        out.row((i * m + j) * m + k) = f.value_at(y).transpose();
      }
  return out;
}

// Bloch decomposition of fields sampled on a supercell of p periods per axis
// with m samples per period.  Frequencies q/p split as theta + n with
// theta = (q mod p)/p in [0,1)^3.  With mean |F|^2 over the supercell as the
// norm, the map to the list of per-theta fields is unitary.
struct BlochDecomposition {
  int periods = 1;
  int samples_per_period = 1;
  LatticeCutoff cutoff;
  std::vector<FourierField6> fields;  // theta index (a*p + b)*p + c
};

inline BlochDecomposition bloch_decompose(const MatX& samples, int periods, int samples_per_period,
                                          const LatticeCutoff& cutoff) {
  const int p = periods, g = periods * samples_per_period;
  require(samples.rows() == g * g * g && samples.cols() == 6, "bloch_decompose: sample shape");
  require(2 * cutoff.N + 1 <= samples_per_period, "bloch_decompose: cutoff exceeds sampling");
  BlochDecomposition out{p, samples_per_period, cutoff, {}};
  for (int a = 0; a < p; ++a)
    for (int b = 0; b < p; ++b)
      for (int c = 0; c < p; ++c)
        out.fields.push_back(FourierField6::zero(Vec3(a, b, c) / p, cutoff));
  Fft3 fft({g, g, g});
  for (int comp = 0; comp < 6; ++comp) {
    VecX data = samples.col(comp);
    fft.forward(data);
    for (int i = 0; i < g; ++i)
      for (int j = 0; j < g; ++j)
        for (int k = 0; k < g; ++k) {
          const std::array<int, 3> q{fft_frequency(i, g), fft_frequency(j, g), fft_frequency(k, g)};
          std::array<int, 3> r, n;
          bool inside = true;
          for (int d = 0; d < 3 && inside; ++d) {
            inside = false;
            for (int shift : {0, -g, g}) {
              const int qq = q[d] + shift;
              r[d] = ((qq % p) + p) % p;
              n[d] = (qq - r[d]) / p;
              if (std::abs(n[d]) <= cutoff.N) {
                inside = true;
                break;
              }
            }
          }
          if (!inside) continue;
          const cplx v = data((i * g + j) * g + k) / double(g * g * g);
          auto& f = out.fields[(r[0] * p + r[1]) * p + r[2]];
          f.coeffs(6 * cutoff.index(n) + comp) = v;
        }
  }
  return out;
}

inline MatX bloch_synthesize(const BlochDecomposition& d) {
  const int p = d.periods, g = d.periods * d.samples_per_period;
  MatX out(g * g * g, 6);
  Fft3 fft({g, g, g});
  for (int comp = 0; comp < 6; ++comp) {
    VecX data = VecX::Zero(g * g * g);
    for (std::size_t ti = 0; ti < d.fields.size(); ++ti) {
      const auto& f = d.fields[ti];
      const std::array<int, 3> r{int(ti) / (p * p), (int(ti) / p) % p, int(ti) % p};
      for (int m = 0; m < d.cutoff.size(); ++m) {
        const Mode n = d.cutoff.mode(m);
        std::array<int, 3> idx;
        for (int a = 0; a < 3; ++a) idx[a] = ((n[a] * p + r[a]) % g + g) % g;
        data((idx[0] * g + idx[1]) * g + idx[2]) += f.coeffs(6 * m + comp);
      }
    }
    fft.backward(data);
    out.col(comp) = data * double(g * g * g);
  }
  return out;
}

}  // namespace blochwkb
