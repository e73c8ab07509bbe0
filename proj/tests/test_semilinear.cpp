#include <gtest/gtest.h>

#include <numbers>

#include "nlinv/semilinear.hpp"
#include "oracles.hpp"

using namespace nlinv;

namespace {

struct Model {
  DomainPtr d;
  DiscretizationPtr disc;
  NonlinearCoefficients c;
};

Model preset(int n = 32, double q = 1.0, double v3 = 1.0) {
  Model s;
  s.d = oracle::disk(n);
  s.disc = make_discretization(s.d);
  s.c = NonlinearCoefficients::zero(*s.d, 5);
  s.c.q.setConstant(q);
  s.c.V[0].setConstant(v3);
  return s;
}

BoundaryTrace cos_data(const DomainPtr& d, double amp, int k = 1) {
  BoundaryTrace f{d, full_mask(*d), CVec(d->n_outer)};
  for (int b = 0; b < d->n_outer; ++b) f.values[b] = amp * std::cos(k * d->boundary_param[b]);
  return f;
}

double nonlinear_part(const Model& s, double amp) {
  const BoundaryTrace f = cos_data(s.d, amp);
  const Field u = SemilinearSolver(s.disc, s.c).solve(f).u;
  return (u.values - harmonic_lift(*s.disc->solver, f).values).cwiseAbs().maxCoeff();
}

}  // namespace

TEST(Semilinear, ResidualOfZeroIsZero) {
  const Model s = preset();
  const CVec r = semilinear_residual(Field{s.d, CVec::Zero(s.d->n_nodes())}, s.c);
  EXPECT_EQ(r.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Semilinear, ResidualOfHarmonicPolynomialWithoutCoefficients) {
  const Model s = preset(32, 0.0, 0.0);
  const Field u = sample(s.d, [](double x, double y) { return cplx(x * x - y * y); });
  EXPECT_LT(semilinear_residual(u, s.c).cwiseAbs().maxCoeff(), 1e-9);
  const Field u3 = sample(s.d, [](double x, double y) { return cplx(x * x * x - 3 * x * y * y); });
  const Model s64 = preset(64, 0.0, 0.0);
  const Field u3f = sample(s64.d, [](double x, double y) { return cplx(x * x * x - 3 * x * y * y); });
  const double r32 = semilinear_residual(u3, s.c).cwiseAbs().maxCoeff();
  const double r64 = semilinear_residual(u3f, s64.c).cwiseAbs().maxCoeff();
  EXPECT_LT(r64, r32);
}

TEST(Semilinear, ResidualOfXWithUnitQIsOne) {
  const Model s = preset(32, 1.0, 0.0);
  const Field u = sample(s.d, [](double x, double) { return cplx(x); });
  EXPECT_LT((semilinear_residual(u, s.c).array() - 1.0).abs().maxCoeff(), 1e-10);
}

TEST(Semilinear, ResidualUsesTheNonHermitianSquare) {
  const Model s = preset(32, 1.0, 0.0);
  const cplx I(0.0, 1.0);
  const Field u = sample(s.d, [&](double x, double) { return I * x; });
  EXPECT_LT((semilinear_residual(u, s.c).array() + 1.0).abs().maxCoeff(), 1e-10);
}

TEST(Semilinear, ResidualPotentialMatchesTaylorSum) {
  Model s = preset(32, 0.0, 0.0);
  s.c.V[0].setConstant(2.0);
  s.c.V[2].setConstant(-3.0);
  const cplx z(0.3, 0.1);
  const Field u{s.d, CVec::Constant(s.d->n_nodes(), z)};
  const CVec r = semilinear_residual(u, s.c) - s.disc->laplacian.apply(u.values);
  const cplx expect = 2.0 * std::pow(z, 3) / 6.0 - 3.0 * std::pow(z, 5) / 120.0;
  EXPECT_LT(std::abs(r[0] - expect), 1e-14);
  EXPECT_LT(std::abs(r[0] - oracle::potential(s.c, 0, z)), 1e-15);
}

TEST(Semilinear, ZeroDataGivesZeroSolution) {
  const Model s = preset();
  const auto sol = SemilinearSolver(s.disc, s.c).solve(cos_data(s.d, 0.0));
  EXPECT_LE(sol.report.iterations, 1);
  EXPECT_EQ(sol.u.sup_norm(), 0.0);
}

TEST(Semilinear, LinearProblemTakesOneNewtonStep) {
  const Model s = preset(32, 0.0, 0.0);
  NewtonOptions o;
  o.initial = InitialGuess::zero_interior;
  const BoundaryTrace f = cos_data(s.d, 0.3, 2);
  const auto sol = SemilinearSolver(s.disc, s.c, o).solve(f);
  const Field lift = harmonic_lift(*s.disc->solver, f);
  EXPECT_LT((sol.u.values - lift.values).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE(sol.report.residuals.size() > 1 ? sol.report.residuals[1] : 0.0, sol.report.tolerance);
}

TEST(Semilinear, NewtonMatchesPicardOracle) {
  const Model s = preset();
  const BoundaryTrace f = cos_data(s.d, 1e-2);
  const auto sol = SemilinearSolver(s.disc, s.c).solve(f);
  const Field p = oracle::picard(*s.disc, s.c, f);
  EXPECT_LE((sol.u.values - p.values).cwiseAbs().maxCoeff(), 1e-8);
  const double gap = (sol.u.values - harmonic_lift(*s.disc->solver, f).values).cwiseAbs().maxCoeff();
  EXPECT_GT(gap, 1e-6);
  EXPECT_LT(gap, 1e-3);
  EXPECT_LE(sol.report.final_residual, 1e-10 * f.sup_norm());
}

TEST(Semilinear, NewtonConvergesQuadratically) {
  const Model s = preset();
  NewtonOptions o;
  o.initial = InitialGuess::zero_interior;
  const auto sol = SemilinearSolver(s.disc, s.c, o).solve(cos_data(s.d, 4e-2));
  const auto& r = sol.report.residuals;
  ASSERT_GE(r.size(), 3u);
  int checked = 0;
  for (size_t m = 0; m + 1 < r.size(); ++m) {
    const double rho = r[m] / r[0], next = r[m + 1] / r[0];
    if (rho >= 1e-3 || r[m + 1] <= 1e2 * sol.report.tolerance) continue;
    EXPECT_LE(next, 10.0 * rho * rho) << m;
    ++checked;
  }
  EXPECT_GE(checked, 1);
  EXPECT_LE(sol.report.iterations, 6);
}

TEST(Semilinear, SmallDataContraction) {
  const Model s = preset();
  for (double amp : {4e-2, 2e-2, 1e-2}) EXPECT_GE(nonlinear_part(s, amp) / nonlinear_part(s, amp / 2), 3.5) << amp;
}

TEST(Semilinear, TwoInitialGuessesGiveTheSameSolution) {
  const Model s = preset();
  const BoundaryTrace f = cos_data(s.d, 3e-2, 2);
  NewtonOptions a, b;
  b.initial = InitialGuess::zero_interior;
  const auto ua = SemilinearSolver(s.disc, s.c, a).solve(f);
  const auto ub = SemilinearSolver(s.disc, s.c, b).solve(f);
  EXPECT_LE((ua.u.values - ub.u.values).cwiseAbs().maxCoeff(), 10 * ua.report.tolerance);
}

TEST(Semilinear, WellPosednessConstantIsRecorded) {
  const Model s = preset();
  const auto sol = SemilinearSolver(s.disc, s.c).solve(cos_data(s.d, 1e-2));
  EXPECT_NEAR(sol.report.c_wp, sol.u.sup_norm() / 1e-2, 1e-12);
  EXPECT_TRUE(sol.report.within_small_data);
  EXPECT_FALSE(SemilinearSolver(s.disc, s.c).solve(cos_data(s.d, 0.1)).report.within_small_data);
}

TEST(Semilinear, LargeDataDiverges) {
  const Model s = preset(32, 1.0, 1.0);
  NewtonOptions o;
  o.max_newton_iters = 15;
  EXPECT_THROW(SemilinearSolver(s.disc, s.c, o).solve(cos_data(s.d, 50.0, 3)), NewtonDiverged);
}

TEST(Semilinear, ObstacleProblemSolves) {
  DomainConfig cfg;
  cfg.n_cells_per_side = 32;
  cfg.obstacle = CircleParams{{0.1, 0.0}, 0.3};
  const auto d = build_domain(cfg);
  const auto disc = make_discretization(d);
  auto c = NonlinearCoefficients::zero(*d, 4);
  c.q.setConstant(1.0);
  c.V[0].setConstant(1.0);
  const auto sol = SemilinearSolver(disc, c).solve(cos_data(d, 1e-2));
  EXPECT_LE(sol.report.final_residual, sol.report.tolerance);
  EXPECT_EQ(sol.u.values.tail(d->n_obstacle).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_LE((sol.u.values - oracle::picard(*disc, c, cos_data(d, 1e-2)).values).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Semilinear, HolomorphyLinearWithoutCoefficients) {
  const Model s = preset(32, 0.0, 0.0);
  const std::vector<cplx> eps{-2e-2, -1e-2, 1e-2, 2e-2, cplx(0, 1e-2)};
  const auto rep = holomorphy_probe(SemilinearSolver(s.disc, s.c), cos_data(s.d, 1.0), eps, 1);
  EXPECT_LT(rep.relative_residual, 1e-12);
}

TEST(Semilinear, HolomorphyHigherDegreeFitsBetter) {
  Model s = preset(32, 1.0, 0.0);
  std::vector<cplx> eps;
  for (int j = 0; j < 9; ++j) eps.push_back(2e-2 * std::polar(1.0, 2 * std::numbers::pi * j / 9));
  const SemilinearSolver solver(s.disc, s.c);
  const auto d1 = holomorphy_probe(solver, cos_data(s.d, 1.0), eps, 1);
  const auto d4 = holomorphy_probe(solver, cos_data(s.d, 1.0), eps, 4);
  EXPECT_GT(d1.relative_residual, 1e-6);
  EXPECT_LT(d4.relative_residual, 1e-8);
  EXPECT_LT(d4.relative_residual, 1e-3 * d1.relative_residual);
}

TEST(Semilinear, HolomorphyRealAndImaginarySamplesAgree) {
  const Model s = preset();
  const SemilinearSolver solver(s.disc, s.c);
  const std::vector<cplx> re{-2e-2, -1e-2, -5e-3, 5e-3, 1e-2, 2e-2, 1.5e-2};
  std::vector<cplx> im;
  for (cplx e : re) im.push_back(cplx(0, 1) * e);
  const BoundaryTrace f = cos_data(s.d, 1.0, 2);
  const auto a = holomorphy_probe(solver, f, re, 4), b = holomorphy_probe(solver, f, im, 4);
  for (int k = 1; k <= 2; ++k) {
    const double scale = std::abs(a.coefficients[k]);
    EXPECT_LT(std::abs(a.coefficients[k] - b.coefficients[k]), 1e-5 * scale + 1e-10) << k;
  }
}
