#include <cmath>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "test_support.hpp"
#include "tubemav/errors.hpp"
#include "tubemav/lin_model.hpp"
#include "tubemav/riccati.hpp"

namespace {

using namespace tubemav;

Eigen::MatrixXd scalar(double v) {
  Eigen::MatrixXd m(1, 1);
  m << v;
  return m;
}

double dare_residual(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                     const Eigen::MatrixXd& q, const Eigen::MatrixXd& r,
                     const Eigen::MatrixXd& p) {
  const Eigen::MatrixXd btpa = b.transpose() * p * a;
  const Eigen::MatrixXd rhs =
      q + a.transpose() * p * a -
      btpa.transpose() * (r + b.transpose() * p * b).ldlt().solve(btpa);
  return (p - rhs).cwiseAbs().maxCoeff();
}

TEST(Dare, ScalarUnitSystemGivesGoldenRatio) {
  // a = b = q = r = 1: p solves p = 1 + p - p^2/(1+p), i.e. p^2 - p - 1 = 0.
  const Eigen::MatrixXd p = solve_dare(scalar(1.0), scalar(1.0), scalar(1.0),
                                       scalar(1.0));
  EXPECT_NEAR(p(0, 0), test_support::golden_ratio_p(), 1e-9);
  const Eigen::MatrixXd k =
      dare_gain(scalar(1.0), scalar(1.0), scalar(1.0), p);
  EXPECT_NEAR(k(0, 0), test_support::golden_ratio_gain(), 1e-4);
  EXPECT_NEAR(k(0, 0), -0.6180, 1e-4);
}

TEST(Dare, VanishingStateCostOnStablePlant) {
  // |a| < 1 and q -> 0: no state penalty and no need to act, so p -> 0
  // and the gain goes to zero with it.
  const Eigen::MatrixXd p =
      solve_dare(scalar(0.9), scalar(1.0), scalar(1e-12), scalar(1.0));
  EXPECT_LE(p(0, 0), 1e-11);
  EXPECT_GE(p(0, 0), 0.0);
  const Eigen::MatrixXd k =
      dare_gain(scalar(0.9), scalar(1.0), scalar(1.0), p);
  EXPECT_LE(std::abs(k(0, 0)), 1e-11);
}

TEST(Dare, ScalarClosedFormAcrossParameters) {
  // For a = b = 1 the fixed point is p = (q + sqrt(q^2 + 4 q r)) / 2.
  for (const auto& [q, r] :
       {std::pair{2.0, 0.5}, std::pair{1e-3, 10.0}, std::pair{25.0, 1e-2}}) {
    const Eigen::MatrixXd p =
        solve_dare(scalar(1.0), scalar(1.0), scalar(q), scalar(r));
    EXPECT_NEAR(p(0, 0), test_support::scalar_prior_covariance(q, r),
                1e-8 * std::max(1.0, q + r));
  }
}

TEST(Dare, HoverModelDesignIsStabilizingAndConsistent) {
  PhysicalParams params;
  AttitudeLoopParams att;
  att.k_phi = 0.998;
  att.k_theta = 0.998;
  att.tau_phi = 0.0148;
  att.tau_theta = 0.0148;
  const DiscreteLtiModel model =
      make_hover_model(params, att, 0.02, 0.15 * params.m * params.g);

  Eigen::VectorXd qx(kLinStateDim);
  qx << 4000, 4000, 10000, 40, 40, 80, 1, 1, 1, 1;
  Eigen::VectorXd ru(kLinInputDim);
  ru << 2, 2, 5;
  const Eigen::MatrixXd q = qx.asDiagonal();
  const Eigen::MatrixXd r = ru.asDiagonal();

  const Eigen::MatrixXd p = solve_dare(model.a, model.b, q, r);
  EXPECT_LE(dare_residual(model.a, model.b, q, r, p),
            1e-8 * std::max(1.0, p.cwiseAbs().maxCoeff()));
  EXPECT_LE((p - p.transpose()).cwiseAbs().maxCoeff(),
            1e-9 * p.cwiseAbs().maxCoeff());

  const Eigen::MatrixXd k = dare_gain(model.a, model.b, r, p);
  ASSERT_EQ(k.rows(), kLinInputDim);
  ASSERT_EQ(k.cols(), kLinStateDim);
  EXPECT_LT(spectral_radius(model.a + model.b * k), 1.0);

  // Closed-loop Lyapunov identity: P = Q + K'RK + (A+BK)' P (A+BK).
  const Eigen::MatrixXd acl = model.a + model.b * k;
  const Eigen::MatrixXd lyap =
      q + k.transpose() * r * k + acl.transpose() * p * acl;
  EXPECT_LE((p - lyap).cwiseAbs().maxCoeff(),
            1e-8 * p.cwiseAbs().maxCoeff());
}

TEST(Dare, InitialConditionDoesNotChangeFixedPoint) {
  Eigen::MatrixXd a(2, 2), b(2, 1), q(2, 2), r(1, 1);
  a << 1.0, 0.1, 0.0, 1.0;
  b << 0.005, 0.1;
  q = Eigen::Vector2d(10.0, 1.0).asDiagonal();
  r << 0.5;
  DareOptions from_q;
  DareOptions from_identity;
  from_identity.init = DareOptions::Init::kIdentity;
  const Eigen::MatrixXd p1 = solve_dare(a, b, q, r, from_q);
  const Eigen::MatrixXd p2 = solve_dare(a, b, q, r, from_identity);
  EXPECT_LE((p1 - p2).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Dare, UncontrollableUnstableModeThrows) {
  DareOptions opts;
  opts.max_iter = 10000;
  EXPECT_ANY_THROW(
      solve_dare(scalar(2.0), scalar(0.0), scalar(1.0), scalar(1.0), opts));
}

TEST(Dare, DimensionMismatchThrows) {
  EXPECT_THROW(solve_dare(Eigen::MatrixXd::Identity(2, 2), scalar(1.0),
                          Eigen::MatrixXd::Identity(2, 2), scalar(1.0)),
               DimensionMismatch);
}

TEST(SpectralRadius, KnownMatrices) {
  Eigen::MatrixXd m(2, 2);
  m << 0.5, 1.0, 0.0, -0.25;
  EXPECT_NEAR(spectral_radius(m), 0.5, 1e-12);

  Eigen::MatrixXd rot(2, 2);
  const double c = std::cos(0.3), s = std::sin(0.3);
  rot << c, -s, s, c;  // complex pair on the unit circle
  EXPECT_NEAR(spectral_radius(0.8 * rot), 0.8, 1e-12);
}

}  // namespace
