#include <gtest/gtest.h>

#include "test_helpers.hpp"

using namespace blochwkb;

namespace {

struct Setup {
  MaterialSpec spec;
  LatticeCutoff cut;
  BlochBand band;
  ProjectorPair pp;
};

Setup identity_band(double omega) {
  const auto spec = MaterialSpec::identity();
  const LatticeCutoff cut{1};
  auto band = band_near(spec, cut, Vec3(0.3, 0, 0), omega, 2);
  auto pp = build_projectors(band, spec, cut);
  return {spec, cut, band, pp};
}

Setup layered_band(int N) {
  const auto spec = MaterialSpec::layered(0, 1.0, 0.2);
  const LatticeCutoff cut{N};
  auto band = band_near(spec, cut, Vec3(0.3, 0.15, 0), 0.3348, 1);
  auto pp = build_projectors(band, spec, cut);
  return {spec, cut, band, pp};
}

}  // namespace

TEST(GroupVelocity, IdentityMediumBothSigns) {
  auto up = identity_band(0.3);
  EXPECT_LT((group_velocity(up.band, up.pp, up.spec, up.cut) - Vec3(-1, 0, 0)).norm(), 1e-12);
  auto down = identity_band(-0.3);
  EXPECT_LT((group_velocity(down.band, down.pp, down.spec, down.cut) - Vec3(1, 0, 0)).norm(), 1e-12);
}

TEST(GroupVelocity, MatchesFiniteDifferences) {
  auto s = identity_band(0.3);
  const Vec3 V = group_velocity(s.band, s.pp, s.spec, s.cut);
  EXPECT_LT((V + fd_gradient(s.spec, s.cut, s.band)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(GroupVelocity, LayeredMatchesExtrapolatedFiniteDifferences) {
  // step 1e-3 alone carries ~1.6e-6 of O(step^2) truncation on this band
  auto s = layered_band(2);
  const Vec3 V = group_velocity(s.band, s.pp, s.spec, s.cut);
  const Vec3 coarse = fd_gradient(s.spec, s.cut, s.band, 1e-3);
  const Vec3 fine = fd_gradient(s.spec, s.cut, s.band, 5e-4);
  const Vec3 fd = (4.0 * fine - coarse) / 3.0;
  EXPECT_LT((V + fd).cwiseAbs().maxCoeff(), 1e-6) << "V " << V.transpose() << " fd " << fd.transpose();
  // the raw differences converge at second order toward V
  EXPECT_NEAR((V + coarse).norm() / (V + fine).norm(), 4.0, 0.05);
}

TEST(Hessian, IdentityMediumClosedForm) {
  auto s = identity_band(0.3);
  const auto d = hessian(s.band, s.pp, s.spec, s.cut);
  Mat3 expect = Mat3::Zero();
  expect(1, 1) = expect(2, 2) = 1 / 0.3;
  EXPECT_LT((d.hessian - expect).norm(), 1e-10);
  EXPECT_LT((d.hessian - d.hessian.transpose()).norm(), 1e-10);
  EXPECT_LE(d.scalar_residual, scalar_tol);
}

TEST(Hessian, MatchesRichardsonFiniteDifferences) {
  for (const auto& s : {identity_band(0.3), layered_band(1)}) {
    const auto d = hessian(s.band, s.pp, s.spec, s.cut);
    const Mat3 fd = fd_hessian(s.spec, s.cut, s.band);
    EXPECT_LT((d.hessian - fd).cwiseAbs().maxCoeff(), 1e-5) << d.hessian << "\nvs\n" << fd;
  }
}

TEST(Hessian, ScalarOnDegenerateKernel) {
  const auto spec = blochwkb::testing::anisotropic_layered();
  const LatticeCutoff cut{1};
  const auto bands = solve_bands(spec, cut, Vec3(0.3, 0.15, 0.05), 8);
  for (const auto& b : bands) {
    if (!b.trusted) continue;
    const auto pp = build_projectors(b, spec, cut);
    const auto d = hessian(b, pp, spec, cut);
    EXPECT_LE(d.scalar_residual, scalar_tol);
    EXPECT_LE(d.first_order_residual, scalar_tol);
  }
}

TEST(FirstOrderForm, VanishesForRandomDirections) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> nd;
  for (const auto& s : {identity_band(0.3), layered_band(2)}) {
    const Vec3 grad = -group_velocity(s.band, s.pp, s.spec, s.cut);
    for (int k = 0; k < 10; ++k) {
      const Vec3 xi(nd(rng), nd(rng), nd(rng));
      EXPECT_LT(first_order_form(s.pp, grad, xi).norm(), 1e-10 * xi.norm());
    }
  }
}

TEST(SpeedLimit, IdentityMediumIsSharp) {
  const SpeedBound b(MaterialSpec::identity());
  EXPECT_NEAR(b.tau_max(Vec3(0.3, -0.4, 1.2)), Vec3(0.3, -0.4, 1.2).norm(), 1e-14);
  const auto r = speed_limit_check(MaterialSpec::identity(), LatticeCutoff{1}, Vec3(-1, 0, 0), 1000);
  EXPECT_GE(r.worst_margin, -1e-12);
  EXPECT_LT(r.worst_margin, 0.01);
  EXPECT_THROW(speed_limit_check(MaterialSpec::identity(), LatticeCutoff{1}, Vec3(1.05, 0, 0), 1000),
               SpeedLimitViolation);
}

TEST(SpeedLimit, PermittivityFourHalvesTheSpeed) {
  const auto spec = MaterialSpec::constant(4.0, 1.0);
  const SpeedBound b(spec);
  EXPECT_NEAR(b.tau_max(Vec3(0, 2, 0)), 1.0, 1e-14);
  const LatticeCutoff cut{1};
  for (const auto& band : solve_bands(spec, cut, Vec3(0.2, 0.1, 0), 8)) {
    const auto pp = build_projectors(band, spec, cut);
    const Vec3 V = group_velocity(band, pp, spec, cut);
    EXPECT_LE(V.norm(), 0.5 + 1e-10);
    (void)speed_limit_check(spec, cut, V, 200);
  }
}

TEST(SpeedLimit, LayeredBandsRespectTheBound) {
  const auto spec = MaterialSpec::layered(0, 1.0, 0.2);
  const LatticeCutoff cut{2};
  for (const auto& band : solve_bands(spec, cut, Vec3(0.3, 0.15, 0), 6)) {
    const auto pp = build_projectors(band, spec, cut);
    const Vec3 V = group_velocity(band, pp, spec, cut);
    const auto r = speed_limit_check(spec, cut, V, 1000);
    EXPECT_GE(r.worst_margin, -1e-9);
  }
}
