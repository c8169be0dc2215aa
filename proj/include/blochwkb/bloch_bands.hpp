#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "blochwkb/core_types.hpp"
#include "blochwkb/fourier_core.hpp"
#include "blochwkb/linalg.hpp"

namespace blochwkb {

struct BandTolerances {
  double cluster_tol = 1e-8;  // relative, times max(1, |omega|)
  double gap_tol = 1e-6;
  double untrusted_fraction = 0.2;
};

// Connected components of the mode graph n ~ n + s, s in supp(eps0) U supp(mu0).
inline std::vector<std::vector<int>> coupling_blocks(const MaterialSpec& spec, const LatticeCutoff& cutoff) {
  std::vector<int> parent(cutoff.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  std::vector<Mode> shifts;
  for (const auto* m : {&spec.eps0, &spec.mu0})
    for (const auto& [n, v] : *m)
      if (n != Mode{0, 0, 0} && v.norm() > 0) shifts.push_back(n);
  for (int i = 0; i < cutoff.size(); ++i)
    for (const Mode& s : shifts) {
      const Mode n = cutoff.mode(i) + s;
      if (!cutoff.contains(n)) continue;
      const int a = find(i), b = find(cutoff.index(n));
      if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
  std::vector<std::vector<int>> blocks;
  std::vector<int> slot(cutoff.size(), -1);
  for (int i = 0; i < cutoff.size(); ++i) {
    const int r = find(i);
    if (slot[r] < 0) {
      slot[r] = static_cast<int>(blocks.size());
      blocks.emplace_back();
    }
    blocks[slot[r]].push_back(i);
  }
  return blocks;
}

// Discrete operators A0 and G(theta) at one Bloch frequency, stored per
// coupling block.  Immutable after construction.
class BlochOperator {
 public:
  struct Block {
    std::vector<int> modes;
    std::vector<int> rows;
    MatX a0;
    MatX curl;
    MatX transverse;
  };

  BlochOperator(MaterialSpec spec, LatticeCutoff cutoff, Vec3 theta)
      : spec_(std::move(spec)), cutoff_(cutoff), theta_(std::move(theta)) {
    const auto tb = transverse_basis(cutoff_, theta_);
    a0c_ = spec_.a0_coefficients();
    block_of_mode_.assign(cutoff_.size(), -1);
    for (auto& modes : coupling_blocks(spec_, cutoff_)) {
      Block b;
      b.modes = std::move(modes);
      const int m = static_cast<int>(b.modes.size());
      for (int p = 0; p < m; ++p) {
        block_of_mode_[b.modes[p]] = static_cast<int>(blocks_.size());
        for (int c = 0; c < 6; ++c) b.rows.push_back(6 * b.modes[p] + c);
      }
      b.a0 = MatX::Zero(6 * m, 6 * m);
      b.curl = MatX::Zero(6 * m, 6 * m);
      b.transverse = MatX::Zero(6 * m, 4 * m);
      for (int p = 0; p < m; ++p) {
        const Mode np = cutoff_.mode(b.modes[p]);
        for (int q = 0; q < m; ++q) {
          auto it = a0c_.find(np - cutoff_.mode(b.modes[q]));
          if (it != a0c_.end()) b.a0.block<6, 6>(6 * p, 6 * q) = it->second;
        }
        const Vec3 k = cutoff_.wavevector(b.modes[p], theta_);
        b.curl.block<6, 6>(6 * p, 6 * p) = I_unit * curl_symbol(k).cast<cplx>();
        for (int s = 0; s < 2; ++s) {
          b.transverse.block<3, 1>(6 * p, 4 * p + s) = tb[b.modes[p]][s].cast<cplx>();
          b.transverse.block<3, 1>(6 * p + 3, 4 * p + 2 + s) = tb[b.modes[p]][s].cast<cplx>();
        }
      }
      blocks_.push_back(std::move(b));
    }
  }

  const MaterialSpec& spec() const { return spec_; }
  const LatticeCutoff& cutoff() const { return cutoff_; }
  const Vec3& theta() const { return theta_; }
  int dim() const { return cutoff_.dim(); }
  int num_blocks() const { return static_cast<int>(blocks_.size()); }
  const Block& block(int b) const { return blocks_[b]; }
  int block_of_mode(int m) const { return block_of_mode_[m]; }

  MatX gather(int b, const MatX& full) const {
    const auto& rows = blocks_[b].rows;
    MatX out(rows.size(), full.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) out.row(r) = full.row(rows[r]);
    return out;
  }
  void scatter(int b, const MatX& part, MatX& full) const {
    const auto& rows = blocks_[b].rows;
    for (std::size_t r = 0; r < rows.size(); ++r) full.row(rows[r]) = part.row(r);
  }

  MatX apply_a0(const MatX& x) const { return apply_convolution(a0c_, cutoff_, x); }
  MatX apply_curl(const MatX& x) const { return blochwkb::apply_curl(theta_, cutoff_, x); }
  // L = i omega A0 - G(theta)
  MatX apply_L(double omega, const MatX& x) const { return I_unit * omega * apply_a0(x) - apply_curl(x); }

  MatX dense_a0() const { return apply_a0(MatX::Identity(dim(), dim())); }
  MatX dense_curl() const { return apply_curl(MatX::Identity(dim(), dim())); }

 private:
  MaterialSpec spec_;
  LatticeCutoff cutoff_;
  Vec3 theta_;
  CoefficientMap6 a0c_;
  std::vector<Block> blocks_;
  std::vector<int> block_of_mode_;
};

// Dynamic-subspace spectrum, solved block by block: with Y = A0^{-1} T the
// pencil C = Y^H (G/i) Y, P = T^H Y is Hermitian-definite and v = Y c.
struct BlochSpectrum {
  struct Eig {
    double omega;
    int block;
    int column;
  };
  std::shared_ptr<const BlochOperator> op;
  std::vector<Eigen::VectorXd> block_omega;
  std::vector<MatX> block_vectors;  // A0-orthonormal eigenvectors per block
  std::vector<Eig> sorted;          // ascending signed omega

  VecX full_vector(const Eig& e) const {
    VecX v = VecX::Zero(op->dim());
    const auto& rows = op->block(e.block).rows;
    for (std::size_t r = 0; r < rows.size(); ++r) v(rows[r]) = block_vectors[e.block](r, e.column);
    return v;
  }
};

inline std::shared_ptr<const BlochSpectrum> compute_spectrum(std::shared_ptr<const BlochOperator> op) {
  auto s = std::make_shared<BlochSpectrum>();
  s->op = op;
  for (int b = 0; b < op->num_blocks(); ++b) {
    const auto& blk = op->block(b);
    Eigen::LLT<MatX> llt(blk.a0);
    if (llt.info() != Eigen::Success) throw ConfigError("material: A0 Galerkin matrix is not positive definite");
    const MatX y = llt.solve(blk.transverse);
    MatX p = blk.transverse.adjoint() * y;
    MatX c = y.adjoint() * (-I_unit * blk.curl) * y;
    p = 0.5 * (p + p.adjoint()).eval();
    c = 0.5 * (c + c.adjoint()).eval();
    Eigen::GeneralizedSelfAdjointEigenSolver<MatX> ges(c, p);
    if (ges.info() != Eigen::Success) throw ConfigError("material: dynamic-subspace pencil is not definite");
    s->block_omega.push_back(ges.eigenvalues());
    s->block_vectors.push_back(y * ges.eigenvectors());
    for (int j = 0; j < ges.eigenvalues().size(); ++j) s->sorted.push_back({ges.eigenvalues()(j), b, j});
  }
  std::stable_sort(s->sorted.begin(), s->sorted.end(),
                   [](const auto& a, const auto& b) { return a.omega < b.omega; });
  return s;
}

inline std::shared_ptr<const BlochSpectrum> compute_spectrum(const MaterialSpec& spec, const LatticeCutoff& cutoff,
                                                             const Vec3& theta) {
  return compute_spectrum(std::make_shared<const BlochOperator>(spec, cutoff, theta));
}

struct BlochBand {
  Vec3 theta = Vec3::Zero();
  double omega = 0.0;
  int kappa = 0;
  MatX eigvecs;  // dim x kappa, plain orthonormal
  int band_index = 0;
  bool trusted = true;
  std::shared_ptr<const BlochSpectrum> spectrum;
  BandTolerances tol;

  const BlochOperator& op() const { return *spectrum->op; }
  const LatticeCutoff& cutoff() const { return op().cutoff(); }
  FourierField6 eigvec(int a) const { return {theta, cutoff(), eigvecs.col(a)}; }

  // max_a ||i omega A0 psi_a - G psi_a|| / (|omega| ||A0 psi_a||)
  double residual() const {
    const MatX a0v = op().apply_a0(eigvecs);
    const MatX r = I_unit * omega * a0v - op().apply_curl(eigvecs);
    double worst = 0;
    for (int a = 0; a < kappa; ++a) worst = std::max(worst, r.col(a).norm() / (std::abs(omega) * a0v.col(a).norm()));
    return worst;
  }
};

namespace detail {

struct Cluster {
  std::vector<int> members;  // positions in BlochSpectrum::sorted
  double omega = 0;
  int band_index = 0;
};

inline std::vector<Cluster> cluster_spectrum(const BlochSpectrum& s, double cluster_tol) {
  std::vector<Cluster> out;
  for (int i = 0; i < static_cast<int>(s.sorted.size()); ++i) {
    const double w = s.sorted[i].omega;
    if (!out.empty()) {
      const double prev = s.sorted[out.back().members.back()].omega;
      if (std::abs(w - prev) < cluster_tol * std::max(1.0, std::abs(w))) {
        out.back().members.push_back(i);
        continue;
      }
    }
    out.push_back({{i}, 0.0, 0});
  }
  for (auto& c : out) {
    double sum = 0;
    for (int i : c.members) sum += s.sorted[i].omega;
    c.omega = sum / c.members.size();
  }
  // Band numbering: positive bands 1, 2, ... upward; negative bands -1, -2, ...
  // downward; a cluster carries the smallest index it occupies.
  int above = 0;
  for (auto& c : out)
    if (c.omega > 0) {
      c.band_index = above + 1;
      above += static_cast<int>(c.members.size());
    }
  int below = 0;
  for (auto it = out.rbegin(); it != out.rend(); ++it)
    if (it->omega < 0) {
      below += static_cast<int>(it->members.size());
      it->band_index = -below;
    }
  return out;
}

inline double trust_threshold(const BlochSpectrum& s, double untrusted_fraction) {
  std::vector<double> a;
  for (const auto& e : s.sorted) a.push_back(std::abs(e.omega));
  std::sort(a.begin(), a.end());
  const auto k = static_cast<std::size_t>(std::floor((1.0 - untrusted_fraction) * a.size()));
  return k < a.size() ? a[k] : std::numeric_limits<double>::infinity();
}

inline void fix_gauge(MatX& v) {
  if (v.cols() != 1) return;
  Eigen::Index i;
  v.col(0).cwiseAbs().maxCoeff(&i);
  v.col(0) *= std::conj(v(i, 0)) / std::abs(v(i, 0));
}

inline BlochBand make_band(std::shared_ptr<const BlochSpectrum> s, const std::vector<int>& members, double omega,
                           int band_index, const BandTolerances& tol) {
  BlochBand band;
  band.theta = s->op->theta();
  band.omega = omega;
  band.kappa = static_cast<int>(members.size());
  band.band_index = band_index;
  band.tol = tol;
  band.eigvecs = MatX::Zero(s->op->dim(), band.kappa);
  std::vector<int> blocks;
  for (int i : members) blocks.push_back(s->sorted[i].block);
  std::sort(blocks.begin(), blocks.end());
  blocks.erase(std::unique(blocks.begin(), blocks.end()), blocks.end());
  int col = 0;
  for (int b : blocks) {
    std::vector<VecX> cols;
    for (int i : members)
      if (s->sorted[i].block == b) cols.push_back(s->full_vector(s->sorted[i]));
    MatX v(s->op->dim(), cols.size());
    for (std::size_t j = 0; j < cols.size(); ++j) v.col(j) = cols[j];
    band.eigvecs.middleCols(col, v.cols()) = lowdin_orthonormalize(v);
    col += static_cast<int>(v.cols());
  }
  fix_gauge(band.eigvecs);
  band.trusted = std::abs(omega) < trust_threshold(*s, tol.untrusted_fraction) * (1 - tol.cluster_tol);
  band.spectrum = std::move(s);
  return band;
}

}  // namespace detail

// Bands sorted by |omega| then sign (negative first).  The first num_bands
// eigenvalues (with multiplicity) are covered; a cluster straddling the limit
// is returned whole and a note is appended.
inline std::vector<BlochBand> solve_bands(const MaterialSpec& spec, const LatticeCutoff& cutoff, const Vec3& theta,
                                          int num_bands, const BandTolerances& tol = {},
                                          std::vector<std::string>* notes = nullptr) {
  const auto s = compute_spectrum(spec, cutoff, theta);
  require(num_bands >= 0 && num_bands <= static_cast<int>(s->sorted.size()),
          "solve_bands: num_bands exceeds the transverse subspace dimension");
  auto clusters = detail::cluster_spectrum(*s, tol.cluster_tol);
  std::stable_sort(clusters.begin(), clusters.end(), [](const auto& a, const auto& b) {
    if (std::abs(a.omega) != std::abs(b.omega)) return std::abs(a.omega) < std::abs(b.omega);
    return a.omega < b.omega;
  });
  std::vector<BlochBand> out;
  int covered = 0;
  for (const auto& c : clusters) {
    if (covered >= num_bands) break;
    if (std::abs(c.omega) <= 1e-12) continue;
    covered += static_cast<int>(c.members.size());
    if (covered > num_bands && notes)
      notes->push_back("band list extended to " + std::to_string(covered) + " to complete a multiplicity cluster");
    out.push_back(detail::make_band(s, c.members, c.omega, c.band_index, tol));
  }
  return out;
}

namespace detail {

// Checks that `members` (sorted positions) form an isolated cluster.
inline BlochBand certified_band(std::shared_ptr<const BlochSpectrum> s, std::vector<int> members,
                                const BandTolerances& tol) {
  const int n = static_cast<int>(s->sorted.size());
  std::sort(members.begin(), members.end());
  for (std::size_t i = 1; i < members.size(); ++i)
    if (members[i] != members[i - 1] + 1)
      throw GapViolation("tracked cluster is interleaved with other eigenvalues", s->op->theta());
  const double lo = s->sorted[members.front()].omega, hi = s->sorted[members.back()].omega;
  const double omega = 0.5 * (lo + hi);
  const Vec3& theta = s->op->theta();
  if (hi - lo >= tol.cluster_tol * std::max(1.0, std::abs(omega)))
    throw GapViolation("multiplicity of the tracked eigenvalue changed", theta);
  double gap = std::numeric_limits<double>::infinity();
  if (members.front() > 0) gap = std::min(gap, lo - s->sorted[members.front() - 1].omega);
  if (members.back() + 1 < n) gap = std::min(gap, s->sorted[members.back() + 1].omega - hi);
  if (gap < tol.gap_tol) throw GapViolation("spectral gap of the tracked cluster fell below gap_tol", theta);
  int index = 0;
  for (const auto& c : cluster_spectrum(*s, tol.cluster_tol))
    if (c.members.front() == members.front()) index = c.band_index;
  return make_band(std::move(s), members, omega, index, tol);
}

}  // namespace detail

// The kappa eigenvalues nearest omega_target form the band; they must agree to
// cluster_tol and stay gap_tol away from the rest of the spectrum.
inline BlochBand band_near(std::shared_ptr<const BlochSpectrum> s, double omega_target, int kappa,
                           const BandTolerances& tol = {}) {
  const int n = static_cast<int>(s->sorted.size());
  require(kappa >= 1 && kappa <= n, "band_near: invalid multiplicity");
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return std::abs(s->sorted[a].omega - omega_target) < std::abs(s->sorted[b].omega - omega_target);
  });
  return detail::certified_band(std::move(s), std::vector<int>(order.begin(), order.begin() + kappa), tol);
}

// The kappa eigenvectors with the largest overlap with `reference` (plain
// inner product) form the band.
inline BlochBand band_matching(std::shared_ptr<const BlochSpectrum> s, const MatX& reference,
                               const BandTolerances& tol = {}) {
  const int n = static_cast<int>(s->sorted.size());
  const int kappa = static_cast<int>(reference.cols());
  require(kappa >= 1 && kappa <= n, "band_matching: invalid multiplicity");
  std::vector<double> overlap(n);
  for (int i = 0; i < n; ++i) {
    const VecX v = s->full_vector(s->sorted[i]);
    overlap[i] = (reference.adjoint() * v).norm() / v.norm();
  }
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return overlap[a] > overlap[b]; });
  return detail::certified_band(std::move(s), std::vector<int>(order.begin(), order.begin() + kappa), tol);
}

inline BlochBand band_near(const MaterialSpec& spec, const LatticeCutoff& cutoff, const Vec3& theta,
                           double omega_target, int kappa, const BandTolerances& tol = {}) {
  return band_near(compute_spectrum(spec, cutoff, theta), omega_target, kappa, tol);
}

// Band whose index range [n, n + kappa - 1] contains `index`.
inline BlochBand band_by_index(const MaterialSpec& spec, const LatticeCutoff& cutoff, const Vec3& theta, int index,
                               const BandTolerances& tol = {}) {
  require(index != 0, "band index 0 is not a dynamic band");
  const auto s = compute_spectrum(spec, cutoff, theta);
  for (const auto& c : detail::cluster_spectrum(*s, tol.cluster_tol)) {
    const int k = static_cast<int>(c.members.size());
    if (index >= c.band_index && index < c.band_index + k && (c.omega > 0) == (index > 0))
      return detail::make_band(s, c.members, c.omega, c.band_index, tol);
  }
  throw std::invalid_argument("band index outside the computed spectrum");
}

// Pi (plain orthogonal projector onto ker L) and the partial inverse Q of
// L = i omega A0 - G.  Per coupling block, Q = (L + Pi)^{-1} - Pi, which is the
// Moore-Penrose inverse because L is anti-Hermitian.
class ProjectorPair {
 public:
  explicit ProjectorPair(const BlochBand& band)
      : op_(band.spectrum->op), omega_(band.omega), psi_(band.eigvecs) {
    for (int b = 0; b < op_->num_blocks(); ++b) {
      const auto& blk = op_->block(b);
      const MatX pb = op_->gather(b, psi_);
      MatX l = I_unit * omega_ * blk.a0 - blk.curl + pb * pb.adjoint();
      lu_.emplace_back(l);
      psi_block_.push_back(pb);
    }
  }

  const BlochOperator& op() const { return *op_; }
  double omega() const { return omega_; }
  int kappa() const { return static_cast<int>(psi_.cols()); }
  const MatX& basis() const { return psi_; }

  MatX pi(const MatX& x) const { return psi_ * (psi_.adjoint() * x); }
  MatX L(const MatX& x) const { return op_->apply_L(omega_, x); }
  MatX q(const MatX& x) const {
    MatX out(x.rows(), x.cols());
    for (int b = 0; b < op_->num_blocks(); ++b) {
      const MatX xb = op_->gather(b, x);
      const MatX& pb = psi_block_[b];
      op_->scatter(b, lu_[b].solve(xb) - pb * (pb.adjoint() * xb), out);
    }
    return out;
  }
  // Pi A0 Pi in the eigenbasis.
  MatX pia0pi() const { return psi_.adjoint() * op_->apply_a0(psi_); }

  MatX dense_pi() const { return psi_ * psi_.adjoint(); }
  MatX dense_q() const { return q(MatX::Identity(op_->dim(), op_->dim())); }

 private:
  std::shared_ptr<const BlochOperator> op_;
  double omega_;
  MatX psi_;
  std::vector<Eigen::PartialPivLU<MatX>> lu_;
  std::vector<MatX> psi_block_;
};

inline ProjectorPair build_projectors(const BlochBand& band, const MaterialSpec& spec, const LatticeCutoff& cutoff) {
  require(band.spectrum != nullptr, "build_projectors: band carries no operator data");
  require(band.cutoff() == cutoff, "build_projectors: cutoff differs from the band's cutoff");
  require(band.op().spec().eps0 == spec.eps0 && band.op().spec().mu0 == spec.mu0,
          "build_projectors: material differs from the band's material");
  const double res = band.residual();
  if (res > 1e-8) throw NumericalFailure("band residual " + std::to_string(res) + " exceeds tolerance");
  const double window = 1e3 * band.tol.cluster_tol * std::max(1.0, std::abs(band.omega));
  int kernel = 0;
  for (const auto& e : band.spectrum->sorted)
    if (std::abs(e.omega - band.omega) <= window) ++kernel;
  if (kernel != band.kappa)
    throw MultiplicityInconsistent("discrete kernel dimension " + std::to_string(kernel) + " differs from kappa " +
                                   std::to_string(band.kappa) + "; cluster tolerance misconfigured");
  return ProjectorPair(band);
}

// Follows the cluster along theta_path by eigenvector overlap, aligning bases
// by subspace Procrustes.
inline std::vector<BlochBand> track_band(const MaterialSpec& spec, const LatticeCutoff& cutoff, const BlochBand& band,
                                         const std::vector<Vec3>& theta_path, double max_step = 0.05) {
  std::vector<BlochBand> out;
  out.reserve(theta_path.size());
  const BlochBand* prev = &band;
  for (std::size_t i = 0; i < theta_path.size(); ++i) {
    const Vec3& th = theta_path[i];
    require((th - prev->theta).norm() <= max_step, "track_band: path step exceeds the step bound");
    if (i == 0 && th == band.theta) {
      out.push_back(band);
      prev = &out.back();
      continue;
    }
    BlochBand next = band_matching(compute_spectrum(spec, cutoff, th), prev->eigvecs, prev->tol);
    if (next.kappa > 1) next.eigvecs = procrustes_align(next.eigvecs, prev->eigvecs).aligned;
    else next.eigvecs *= std::polar(1.0, -std::arg(prev->eigvecs.col(0).dot(next.eigvecs.col(0))));
    out.push_back(std::move(next));
    prev = &out.back();
  }
  return out;
}

}  // namespace blochwkb
