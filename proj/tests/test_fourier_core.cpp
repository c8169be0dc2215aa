#include <gtest/gtest.h>

#include "test_helpers.hpp"

using namespace blochwkb;
using blochwkb::testing::random_field;

TEST(LatticeCutoff, IndexIsABijection) {
  const LatticeCutoff cut{2};
  EXPECT_EQ(cut.size(), 125);
  for (int m = 0; m < cut.size(); ++m) EXPECT_EQ(cut.index(cut.mode(m)), m);
  EXPECT_EQ(cut.index({-2, -2, -2}), 0);
  EXPECT_EQ(cut.index({0, 0, 0}), 62);
}

TEST(CurlBlock, SingleModeCrossProduct) {
  const LatticeCutoff cut{0};
  FourierField6 f = FourierField6::zero(Vec3(0.3, 0, 0), cut);
  Vec6c v = Vec6c::Zero();
  v(4) = 1.0;  // B = e2
  f.set_mode({0, 0, 0}, v);
  const Vec6c out = apply_curl_block(f).mode({0, 0, 0});
  EXPECT_NEAR(std::abs(out(2) - cplx(0, 0.3)), 0.0, 1e-15);
  EXPECT_NEAR(out.head<2>().norm() + out.tail<3>().norm(), 0.0, 1e-15);
}

TEST(CurlBlock, AnnihilatesLongitudinalFields) {
  const LatticeCutoff cut{1};
  const Vec3 theta(0.3, 0.1, -0.2);
  FourierField6 f = FourierField6::zero(theta, cut);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> d;
  for (int m = 0; m < cut.size(); ++m) {
    const Vec3 k = cut.wavevector(m, theta);
    Vec6c v;
    v.head<3>() = cplx(d(rng), d(rng)) * k.cast<cplx>();
    v.tail<3>() = cplx(d(rng), d(rng)) * k.cast<cplx>();
    f.set_mode(cut.mode(m), v);
  }
  EXPECT_LT(apply_curl_block(f).norm(), 1e-14 * f.norm());
}

TEST(CurlBlock, AntiHermitianOnRandomPairs) {
  std::mt19937_64 rng(2);
  const LatticeCutoff cut{1};
  const Vec3 theta(0.25, 0.4, 0.1);
  for (int trial = 0; trial < 10; ++trial) {
    const auto f = random_field(rng, theta, cut), g = random_field(rng, theta, cut);
    const cplx lhs = apply_curl_block(f).dot(g);
    const cplx rhs = -f.dot(apply_curl_block(g));
    EXPECT_LT(std::abs(lhs - rhs), 1e-12 * f.norm() * g.norm());
  }
}

TEST(Material, IdentityLeavesFieldUnchanged) {
  std::mt19937_64 rng(3);
  const LatticeCutoff cut{1};
  const auto f = random_field(rng, Vec3(0.3, 0, 0), cut);
  const auto out = apply_material(MaterialSpec::identity(), MaterialPart::A0, f);
  EXPECT_LT((out.coeffs - f.coeffs).norm(), 1e-15);
}

TEST(Material, TwoCoefficientConvolution) {
  std::mt19937_64 rng(4);
  const LatticeCutoff cut{2};
  const double c = 0.4;
  MaterialSpec s = MaterialSpec::identity();
  s.eps0.clear();
  s.eps0[{1, 0, 0}] = 0.5 * c * Mat3c::Identity();
  s.eps0[{-1, 0, 0}] = 0.5 * c * Mat3c::Identity();
  const auto f = random_field(rng, Vec3(0.3, 0, 0), cut);
  const auto out = apply_material(s, MaterialPart::eps0, f);
  for (int m = 0; m < cut.size(); ++m) {
    const Mode n = cut.mode(m);
    Eigen::Vector3cd expect = Eigen::Vector3cd::Zero();
    for (const Mode s1 : {Mode{1, 0, 0}, Mode{-1, 0, 0}})
      if (cut.contains(n - s1)) expect += 0.5 * c * f.mode(n - s1).head<3>();
    EXPECT_LT((out.mode(n).head<3>() - expect).norm(), 1e-14);
    EXPECT_LT(out.mode(n).tail<3>().norm(), 1e-15);
  }
}

TEST(Material, SelfAdjointAndPositive) {
  std::mt19937_64 rng(5);
  const LatticeCutoff cut{1};
  const MaterialSpec s = blochwkb::testing::anisotropic_layered();
  s.validate();
  const Vec3 theta(0.2, 0.3, 0.1);
  for (int trial = 0; trial < 10; ++trial) {
    const auto f = random_field(rng, theta, cut), g = random_field(rng, theta, cut);
    const cplx lhs = apply_material(s, MaterialPart::A0, f).dot(g);
    const cplx rhs = f.dot(apply_material(s, MaterialPart::A0, g));
    EXPECT_LT(std::abs(lhs - rhs), 1e-12 * f.norm() * g.norm());
    EXPECT_GT(std::real(f.dot(apply_material(s, MaterialPart::A0, f))), 0.0);
  }
}

TEST(Material, ValidationRejectsBadSpecs) {
  MaterialSpec s = MaterialSpec::identity();
  s.eps0[{1, 0, 0}] = 0.3 * Mat3c::Identity();  // missing conjugate partner
  EXPECT_THROW(s.validate(), ConfigError);
  MaterialSpec neg = MaterialSpec::layered(0, 1.0, 2.5);  // 1 + 2.5 cos y < 0 somewhere
  EXPECT_THROW(neg.validate(), ConfigError);
}

TEST(TransverseBasis, TieBreakAndOrthonormality) {
  const auto p = transverse_pair(Vec3(0, 0, 1));
  EXPECT_LT((p[0] - Vec3(1, 0, 0)).norm(), 1e-15);
  EXPECT_LT((p[1] - Vec3(0, 1, 0)).norm(), 1e-15);
  EXPECT_THROW(transverse_basis(LatticeCutoff{1}, Vec3::Zero()), HypothesisViolation);
}

TEST(TransverseBasis, ComplementsTheCurlKernel) {
  const LatticeCutoff cut{1};
  const Vec3 theta(0.3, 0.2, 0.1);
  const MatX G = apply_curl(theta, cut, MatX::Identity(cut.dim(), cut.dim()));
  Eigen::SelfAdjointEigenSolver<MatX> es(G.adjoint() * G);
  int kernel = 0;
  for (int i = 0; i < es.eigenvalues().size(); ++i) kernel += es.eigenvalues()(i) < 1e-12;
  EXPECT_EQ(kernel, 2 * cut.size());
  // G restricted to the transverse span is injective
  const MatX T = transverse_matrix(cut, theta);
  EXPECT_LT((T.adjoint() * T - MatX::Identity(T.cols(), T.cols())).norm(), 1e-13);
  const Eigen::JacobiSVD<MatX> svd(G * T);
  EXPECT_GT(svd.singularValues().minCoeff(), 0.05);
  // and orthogonal to the kernel
  const MatX K = es.eigenvectors().leftCols(kernel);
  EXPECT_LT((K.adjoint() * T).norm(), 1e-10);
}

TEST(Parseval, GridQuadratureMatchesCoefficientNorm) {
  std::mt19937_64 rng(6);
  const LatticeCutoff cut{2};
  const auto f = random_field(rng, Vec3(0.3, 0.1, 0.2), cut);
  const int m = 6;  // > 2N + 1 samples per axis
  const MatX s = sample_field(f, m);
  const double quad = s.squaredNorm() / (m * m * m);
  EXPECT_NEAR(quad, f.coeffs.squaredNorm(), 1e-10 * f.coeffs.squaredNorm());
}

TEST(BlochTransform, UnitaryOnRandomBandLimitedFields) {
  std::mt19937_64 rng(7);
  const int periods = 3, per = 5;
  const LatticeCutoff cut{2};
  BlochDecomposition d{periods, per, cut, {}};
  for (int a = 0; a < periods; ++a)
    for (int b = 0; b < periods; ++b)
      for (int c = 0; c < periods; ++c)
        d.fields.push_back(random_field(rng, Vec3(a, b, c) / periods, cut));
  const MatX u = bloch_synthesize(d);
  const auto back = bloch_decompose(u, periods, per, cut);
  double coeff_norm = 0, err = 0;
  for (std::size_t i = 0; i < d.fields.size(); ++i) {
    coeff_norm += d.fields[i].coeffs.squaredNorm();
    err += (back.fields[i].coeffs - d.fields[i].coeffs).squaredNorm();
  }
  const double mean_sq = u.squaredNorm() / u.rows();
  EXPECT_NEAR(mean_sq, coeff_norm, 1e-10 * coeff_norm);
  EXPECT_LT(std::sqrt(err / coeff_norm), 1e-12);
}

TEST(Coercivity, AlgebraicInequalityOnRandomSamples) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> d;
  std::uniform_real_distribution<double> u(0, 2 * M_PI);
  const MaterialSpec s = blochwkb::testing::anisotropic_layered();
  double c = 1.0;
  for (int i = 0; i < 9; ++i) {
    const Vec3 y(2 * M_PI * i / 9, 0, 0);
    c = std::min(c, Eigen::SelfAdjointEigenSolver<Mat3>(s.eps_at(y).real()).eigenvalues()(0));
  }
  for (int n = 0; n < 10000; ++n) {
    const Vec3 y(u(rng), u(rng), u(rng));
    const Mat3 eps = s.eps_at(y).real();
    const Vec3 xi(d(rng), d(rng), d(rng));
    const Eigen::Vector3cd e(cplx(d(rng), d(rng)), cplx(d(rng), d(rng)), cplx(d(rng), d(rng)));
    const double lhs = std::norm(xi.cast<cplx>().dot(eps.cast<cplx>() * e)) +
                       (xi.cast<cplx>().cross(e)).squaredNorm();
    ASSERT_GE(lhs, c * xi.squaredNorm() * e.squaredNorm() / 2 - 1e-12);
  }
}
