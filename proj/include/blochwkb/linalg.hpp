#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "blochwkb/core_types.hpp"

namespace blochwkb {

// Symmetric (Loewdin) orthonormalization: V (V^H V)^{-1/2}.
inline MatX lowdin_orthonormalize(const MatX& v) {
  Eigen::SelfAdjointEigenSolver<MatX> es(v.adjoint() * v);
  const Eigen::VectorXd inv_sqrt = es.eigenvalues().array().rsqrt();
  return v * (es.eigenvectors() * inv_sqrt.asDiagonal() * es.eigenvectors().adjoint());
}

struct ProcrustesResult {
  MatX aligned;
  double min_overlap = 0.0;  // smallest singular value of basis^H reference
};

// Unitary U maximizing Re tr(reference^H basis U); returns basis U.
inline ProcrustesResult procrustes_align(const MatX& basis, const MatX& reference) {
  const MatX m = basis.adjoint() * reference;
  Eigen::JacobiSVD<MatX> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return {basis * (svd.matrixU() * svd.matrixV().adjoint()), svd.singularValues().minCoeff()};
}

// exp(A) by scaling and squaring with the diagonal [6/6] Pade approximant.
inline MatX expm_pade6(const MatX& a) {
  static constexpr double c[7] = {1.0,
                                  1.0 / 2.0,
                                  5.0 / 44.0,
                                  1.0 / 66.0,
                                  1.0 / 792.0,
                                  1.0 / 15840.0,
                                  1.0 / 665280.0};
  const Eigen::Index n = a.rows();
  const double norm = a.cwiseAbs().rowwise().sum().maxCoeff();
  int s = 0;
  if (norm > 0.5) s = std::max(0, static_cast<int>(std::ceil(std::log2(norm / 0.5))));
  const MatX x = a / std::ldexp(1.0, s);
  const MatX id = MatX::Identity(n, n);
  MatX even = c[0] * id;
  MatX odd = c[1] * x;
  MatX p = x;
  for (int k = 2; k <= 6; ++k) {
    p = p * x;
    if (k % 2 == 0) even += c[k] * p;
    else odd += c[k] * p;
  }
  MatX r = (even - odd).partialPivLu().solve(even + odd);
  for (int k = 0; k < s; ++k) r = r * r;
  return r;
}

// Gauss-Legendre nodes and weights on [a, b] (Golub-Welsch).
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> gauss_legendre(int n, double a, double b) {
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const double beta = k / std::sqrt(4.0 * k * k - 1.0);
    j(k, k - 1) = j(k - 1, k) = beta;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(j);
  Eigen::VectorXd x = es.eigenvalues();
  Eigen::VectorXd w = 2.0 * es.eigenvectors().row(0).transpose().array().square();
  x = 0.5 * (b - a) * x.array() + 0.5 * (b + a);
  w *= 0.5 * (b - a);
  return {x, w};
}

// Least-squares slope of y against x.
inline double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
  }
  return fit_slope(lx, ly);
}

}  // namespace blochwkb
