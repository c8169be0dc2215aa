#include <gtest/gtest.h>

#include "test_helpers.hpp"

using namespace blochwkb;

namespace {

bool has_omega(const std::vector<BlochBand>& bands, double w, int kappa, double tol) {
  for (const auto& b : bands)
    if (std::abs(b.omega - w) < tol && b.kappa == kappa) return true;
  return false;
}

}  // namespace

TEST(SolveBands, IdentityMediumClosedForm) {
  const Vec3 theta(0.3, 0, 0);
  const auto bands = solve_bands(MaterialSpec::identity(), LatticeCutoff{2}, theta, 16);
  ASSERT_GE(bands.size(), 4u);
  EXPECT_NEAR(bands[0].omega, -0.3, 1e-12);
  EXPECT_NEAR(bands[1].omega, 0.3, 1e-12);
  EXPECT_EQ(bands[0].kappa, 2);
  EXPECT_EQ(bands[1].kappa, 2);
  EXPECT_TRUE(has_omega(bands, 0.7, 2, 1e-12));
  EXPECT_TRUE(has_omega(bands, -0.7, 2, 1e-12));
}

TEST(SolveBands, ScalingWithPermittivity) {
  const Vec3 theta(0.3, 0.1, 0);
  const auto a = solve_bands(MaterialSpec::identity(), LatticeCutoff{1}, theta, 12);
  const auto b = solve_bands(MaterialSpec::constant(4.0, 1.0), LatticeCutoff{1}, theta, 12);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(b[i].omega, 0.5 * a[i].omega, 1e-12);
}

TEST(SolveBands, LayeredConvergesInCutoff) {
  const auto spec = MaterialSpec::layered(0, 1.0, 0.2);
  const Vec3 theta(0.3, 0.15, 0);
  const auto lo = solve_bands(spec, LatticeCutoff{4}, theta, 4);
  const auto hi = solve_bands(spec, LatticeCutoff{8}, theta, 4);
  ASSERT_GE(lo.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(lo[i].omega, hi[i].omega, 1e-8 * std::abs(hi[i].omega));
}

TEST(SolveBands, ResidualOrthonormalityDivergenceAndPairs) {
  const auto spec = blochwkb::testing::anisotropic_layered();
  const LatticeCutoff cut{2};
  const Vec3 theta(0.3, 0.15, 0.05);
  const auto bands = solve_bands(spec, cut, theta, 12);
  for (const auto& b : bands) {
    EXPECT_LE(b.residual(), 1e-9);
    EXPECT_LT((b.eigvecs.adjoint() * b.eigvecs - MatX::Identity(b.kappa, b.kappa)).norm(), 1e-10);
    for (int a = 0; a < b.kappa; ++a) {
      const FourierField6 f = b.eigvec(a);
      const auto de = divergence(apply_material(spec, MaterialPart::eps0, f));
      const auto db = divergence(apply_material(spec, MaterialPart::mu0, f));
      EXPECT_LE(de.col(0).norm(), 1e-9 * f.norm());
      EXPECT_LE(db.col(1).norm(), 1e-9 * f.norm());
    }
    EXPECT_TRUE(has_omega(bands, -b.omega, b.kappa, 1e-9 * std::max(1.0, std::abs(b.omega))))
        << "no partner for " << b.omega;
  }
}

TEST(SolveBands, TopOfSpectrumIsFlaggedUntrusted) {
  const LatticeCutoff cut{1};
  const int all = 4 * cut.size();
  const auto bands = solve_bands(MaterialSpec::identity(), cut, Vec3(0.3, 0, 0), all);
  EXPECT_TRUE(bands.front().trusted);
  EXPECT_FALSE(bands.back().trusted);
}

TEST(SolveBands, ClusterStraddlingTheLimitIsCompleted) {
  std::vector<std::string> notes;
  const auto bands = solve_bands(MaterialSpec::identity(), LatticeCutoff{1}, Vec3(0.3, 0, 0), 3, {}, &notes);
  ASSERT_EQ(bands.size(), 2u);
  EXPECT_FALSE(notes.empty());
}

TEST(Projectors, IdentityBandPolarization) {
  const LatticeCutoff cut{1};
  const Vec3 theta(0.3, 0, 0);
  const auto band = band_near(MaterialSpec::identity(), cut, theta, 0.3, 2);
  const ProjectorPair pp = build_projectors(band, MaterialSpec::identity(), cut);
  const MatX pi = pp.dense_pi();
  EXPECT_NEAR(pi.trace().real(), 2.0, 1e-12);
  EXPECT_LT((pi * pi - pi).norm(), 1e-12);
  EXPECT_LT((pi - pi.adjoint()).norm(), 1e-14);
  const int n0 = cut.index({0, 0, 0});
  for (int a = 0; a < 2; ++a) {
    const VecX& v = band.eigvecs.col(a);
    EXPECT_NEAR(v.segment<6>(6 * n0).norm(), 1.0, 1e-12);
    const Eigen::Vector3cd e = v.segment<3>(6 * n0), b = v.segment<3>(6 * n0 + 3);
    EXPECT_LT(std::abs(e(0)), 1e-12);
    const Eigen::Vector3cd expect = -(theta.cast<cplx>().cross(e)) / 0.3;
    EXPECT_LT((b - expect).norm(), 1e-12);
  }
}

TEST(Projectors, DefiningIdentitiesOnRandomProbes) {
  const auto spec = MaterialSpec::layered(0, 1.0, 0.2);
  const LatticeCutoff cut{2};
  const auto band = band_near(spec, cut, Vec3(0.3, 0.15, 0), 0.3348, 1);
  const ProjectorPair pp = build_projectors(band, spec, cut);
  std::mt19937_64 rng(11);
  for (int k = 0; k < 20; ++k) {
    const VecX x = blochwkb::testing::random_vector(rng, cut.dim());
    const VecX qx = pp.q(x);
    EXPECT_LT(pp.pi(qx).norm(), 1e-10 * x.norm());
    EXPECT_LT(pp.q(pp.pi(x)).norm(), 1e-10 * x.norm());
    EXPECT_LT((pp.L(qx) + pp.pi(x) - x).norm(), 1e-10 * x.norm());
    EXPECT_LT((pp.q(pp.L(x)) + pp.pi(x) - x).norm(), 1e-10 * x.norm());
  }
}

TEST(Projectors, PartialInverseMatchesDensePseudoInverse) {
  const auto spec = MaterialSpec::layered(0, 1.0, 0.2);
  const LatticeCutoff cut{1};
  const auto band = band_near(spec, cut, Vec3(0.3, 0.15, 0), 0.33, 1);
  const ProjectorPair pp = build_projectors(band, spec, cut);
  const MatX L = pp.L(MatX::Identity(cut.dim(), cut.dim()));
  const Eigen::JacobiSVD<MatX> svd(L, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  VecX inv = VecX::Zero(s.size());
  for (int i = 0; i < s.size(); ++i) inv(i) = s(i) > 1e-10 * s(0) ? 1.0 / s(i) : 0.0;
  const MatX pinv = svd.matrixV() * inv.asDiagonal() * svd.matrixU().adjoint();
  EXPECT_LT((pinv - pp.dense_q()).norm(), 1e-9 * pinv.norm());
}

TEST(Projectors, PlainButNotA0Orthogonal) {
  const auto spec = MaterialSpec::layered(0, 1.0, 0.4);
  const LatticeCutoff cut{2};
  const auto band = band_near(spec, cut, Vec3(0.3, 0.15, 0), 0.33, 1);
  const ProjectorPair pp = build_projectors(band, spec, cut);
  const MatX pi = pp.dense_pi();
  const MatX a0 = band.op().dense_a0();
  EXPECT_GT((pi * a0 - a0 * pi).norm(), 1e-3);
}

TEST(Projectors, MultiplicityMismatchIsReported) {
  const LatticeCutoff cut{1};
  BandTolerances tol;
  tol.cluster_tol = 1e-14;
  auto band = band_near(MaterialSpec::identity(), cut, Vec3(0.3, 0, 0), 0.3, 2, tol);
  band.kappa = 1;
  band.eigvecs = band.eigvecs.leftCols(1).eval();
  EXPECT_THROW(build_projectors(band, MaterialSpec::identity(), cut), MultiplicityInconsistent);
}

TEST(TrackBand, IdentityPathFollowsModulus) {
  const LatticeCutoff cut{1};
  const auto spec = MaterialSpec::identity();
  const auto band = band_near(spec, cut, Vec3(0.3, 0, 0), 0.3, 2);
  std::vector<Vec3> path;
  for (int s = 0; s <= 20; ++s) path.push_back(Vec3(0.3 + 0.1 * s / 20.0, 0, 0));
  const auto tracked = track_band(spec, cut, band, path);
  for (std::size_t i = 0; i < path.size(); ++i) EXPECT_NEAR(tracked[i].omega, path[i](0), 1e-12);
  const auto single = track_band(spec, cut, band, {band.theta});
  ASSERT_EQ(single.size(), 1u);
  EXPECT_EQ(single[0].omega, band.omega);
}

TEST(TrackBand, LayeredAgreesWithPerPointSolves) {
  const auto spec = MaterialSpec::layered(0, 1.0, 0.2);
  const LatticeCutoff cut{2};
  const auto band = band_near(spec, cut, Vec3(0.3, 0.15, 0), 0.3348, 1);
  std::vector<Vec3> path;
  for (int s = 1; s <= 10; ++s) path.push_back(band.theta + Vec3(0.002, 0.001, 0) * s);
  const auto tracked = track_band(spec, cut, band, path);
  double prev = band.omega;
  for (std::size_t i = 0; i < path.size(); ++i) {
    const auto s = compute_spectrum(spec, cut, path[i]);
    double best = 1e9;
    for (const auto& e : s->sorted)
      if (std::abs(e.omega - prev) < std::abs(best - prev)) best = e.omega;
    EXPECT_NEAR(tracked[i].omega, best, 1e-3);  // nearest eigenvalue, distinct polarizations are ~1e-3 apart
    EXPECT_LE(tracked[i].residual(), 1e-9);
    prev = tracked[i].omega;
  }
}

TEST(TrackBand, GapCollapseRaisesGapViolation) {
  // The two polarizations of the identity medium split under layering; at the
  // degenerate point theta on the axis with a tiny gap tolerance the kappa = 1
  // cluster merges with its partner.
  const auto spec = MaterialSpec::identity();
  const LatticeCutoff cut{1};
  try {
    (void)band_near(spec, cut, Vec3(0.3, 0, 0), 0.3, 1);
    FAIL() << "expected GapViolation";
  } catch (const GapViolation& e) {
    EXPECT_NEAR(e.theta()(0), 0.3, 1e-15);
  }
}
