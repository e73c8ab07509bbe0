#include <gtest/gtest.h>

#include <numbers>
#include <random>
#include <thread>

#include "nlinv/elliptic.hpp"
#include "oracles.hpp"

using namespace nlinv;
constexpr double pi = std::numbers::pi;

namespace {

int interior_index(const Domain& d, int i, int j) { return d.grid_to_interior[j * d.grid_points_per_side() + i]; }

/// Max error of the solve for u* with -Lap u* = g.
double manufactured_error(DomainPtr d, const std::function<double(double, double)>& u,
                          const std::function<double(double, double)>& g, LinearMethod m = LinearMethod::automatic) {
  const SparseOperator A = assemble_laplacian(d);
  CVec rhs(d->n_interior);
  for (int i = 0; i < d->n_interior; ++i) rhs[i] = g(d->points[i][0], d->points[i][1]);
  CVec bc(d->n_boundary());
  for (int b = 0; b < d->n_boundary(); ++b) bc[b] = u(d->points[d->n_interior + b][0], d->points[d->n_interior + b][1]);
  LinearSolveOptions o;
  o.method = m;
  const Field sol = solve_dirichlet(A, rhs, bc, o);
  double err = 0;
  for (int i = 0; i < d->n_nodes(); ++i) err = std::max(err, std::abs(sol.values[i] - u(d->points[i][0], d->points[i][1])));
  return err;
}

}  // namespace

TEST(Elliptic, SquareStencilIsTheFivePointLaplacian) {
  const auto d = oracle::square(32);
  const SparseOperator A = assemble_laplacian(d);
  const double h = d->h;
  const int k = interior_index(*d, 10, 12);
  ASSERT_GE(k, 0);
  EXPECT_NEAR(A.full.coeff(k, k), 4 / (h * h), 1e-9);
  EXPECT_NEAR(A.full.coeff(k, interior_index(*d, 11, 12)), -1 / (h * h), 1e-9);
  EXPECT_NEAR(A.full.coeff(k, interior_index(*d, 10, 13)), -1 / (h * h), 1e-9);
  EXPECT_TRUE(A.symmetric);
  EXPECT_EQ(A.size(), d->n_interior);
}

TEST(Elliptic, MinusLaplacianOfXSquaredIsMinusTwo) {
  for (const auto& d : {oracle::square(32), oracle::disk(32)}) {
    const SparseOperator A = assemble_laplacian(d);
    const Field u = sample(d, [](double x, double) { return cplx(x * x); });
    const CVec r = A.apply(u.values);
    EXPECT_LT((r.array() + 2.0).abs().maxCoeff(), 1e-9);
  }
}

TEST(Elliptic, SmallestSquareEigenvalueIsTwoPiSquared) {
  const DirichletSolver s(assemble_laplacian(oracle::square(64)));
  EXPECT_NEAR(oracle::smallest_eigenvalue(s), 2 * pi * pi, 0.02 * 2 * pi * pi);
}

TEST(Elliptic, HarmonicQuadraticIsReproducedOnTheDisk) {
  const auto u = [](double x, double y) { return x * x - y * y + 2 * x * y; };
  EXPECT_LT(manufactured_error(oracle::disk(64), u, [](double, double) { return 0.0; }), 1e-11);
}

TEST(Elliptic, HarmonicCubicOnTheDisk) {
  const auto u = [](double x, double y) { return x * x * x - 3 * x * y * y; };
  const auto zero = [](double, double) { return 0.0; };
  const double e32 = manufactured_error(oracle::disk(32), u, zero), e64 = manufactured_error(oracle::disk(64), u, zero);
  EXPECT_LT(e64, 1e-3);
  EXPECT_GE(std::log2(e32 / e64), 1.9);
}

TEST(Elliptic, ManufacturedSineOnTheSquareConvergesAtSecondOrder) {
  const auto u = [](double x, double y) { return std::sin(pi * x) * std::sin(pi * y); };
  const auto g = [](double x, double y) { return 2 * pi * pi * std::sin(pi * x) * std::sin(pi * y); };
  std::vector<double> e;
  for (int n : {32, 64, 128}) e.push_back(manufactured_error(oracle::square(n), u, g));
  EXPECT_LT(e[1], 5e-4);
  EXPECT_GE(std::log2(e[0] / e[1]), 1.9);
  EXPECT_GE(std::log2(e[1] / e[2]), 1.9);
}

TEST(Elliptic, ManufacturedSolutionOnTheDiskConvergesAtSecondOrder) {
  const auto u = [](double x, double y) { return std::exp(x) * std::cos(2 * y) + x * x * y; };
  const auto g = [](double x, double y) { return 3 * std::exp(x) * std::cos(2 * y) - 2 * y; };
  std::vector<double> e;
  for (int n : {32, 64, 128}) e.push_back(manufactured_error(oracle::disk(n), u, g));
  EXPECT_GE(std::log2(e[0] / e[1]), 1.9);
  EXPECT_GE(std::log2(e[1] / e[2]), 1.9);
}

TEST(Elliptic, IterativeSolverMatchesDirect) {
  const auto d = oracle::disk(48);
  const auto u = [](double x, double y) { return std::sin(x + 2 * y); };
  const auto g = [](double x, double y) { return 5 * std::sin(x + 2 * y); };
  EXPECT_NEAR(manufactured_error(d, u, g, LinearMethod::bicgstab), manufactured_error(d, u, g, LinearMethod::direct_factorization),
              1e-8);
}

TEST(Elliptic, IterativeSolverReportsNoConvergence) {
  LinearSolveOptions o;
  o.method = LinearMethod::bicgstab;
  o.max_iter = 1;
  const DirichletSolver s(assemble_laplacian(oracle::disk(32)), o);
  EXPECT_THROW(s.solve_interior(CVec::Ones(s.op().size())), NoConvergence);
}

TEST(Elliptic, TransposedSolve) {
  for (LinearMethod m : {LinearMethod::direct_factorization, LinearMethod::bicgstab}) {
    LinearSolveOptions o;
    o.method = m;
    const DirichletSolver s(assemble_laplacian(oracle::disk(32)), o);
    std::mt19937 rng(3);
    std::normal_distribution<double> N;
    CVec b(s.op().size());
    for (auto& v : b) v = cplx(N(rng), N(rng));
    const CVec x = s.solve_interior_transpose(b);
    const Eigen::SparseMatrix<double> At = s.op().interior.transpose();
    EXPECT_LT((At.cast<cplx>() * x - b).norm() / b.norm(), 1e-9);
  }
}

TEST(Elliptic, MaximumPrincipleWithAnObstacle) {
  DomainConfig c;
  c.n_cells_per_side = 64;
  c.obstacle = CircleParams{{0.0, 0.0}, 0.3};
  const auto d = build_domain(c);
  const DirichletSolver s(assemble_laplacian(d));
  const BoundaryTrace one{d, full_mask(*d), CVec::Ones(d->n_outer)};
  const Field u = s.solve(CVec::Zero(d->n_interior), dirichlet_values(one, 0.0));
  for (int i = 0; i < d->n_interior; ++i) {
    EXPECT_GE(u.values[i].real(), -1e-12);
    EXPECT_LE(u.values[i].real(), 1.0 + 1e-12);
  }
  // concentric annulus: u = log(r / 0.3) / log(1 / 0.3)
  double err = 0;
  for (int i = 0; i < d->n_interior; ++i) {
    const double r = std::hypot(d->points[i][0], d->points[i][1]);
    err = std::max(err, std::abs(u.values[i].real() - std::log(r / 0.3) / std::log(1 / 0.3)));
  }
  EXPECT_LT(err, 2e-3);
}

TEST(Elliptic, DiscreteMaximumPrincipleForRandomData) {
  const auto d = oracle::disk(32);
  const DirichletSolver s(assemble_laplacian(d));
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> U(-1, 1);
  CVec bc(d->n_boundary());
  for (auto& v : bc) v = U(rng);
  const Field u = s.solve(CVec::Zero(d->n_interior), bc);
  const double lo = bc.real().minCoeff(), hi = bc.real().maxCoeff();
  for (int i = 0; i < d->n_interior; ++i) {
    EXPECT_GE(u.values[i].real(), lo - 1e-12);
    EXPECT_LE(u.values[i].real(), hi + 1e-12);
  }
}

TEST(Elliptic, SelfAdjointOnTheSquare) {
  const SparseOperator A = assemble_laplacian(oracle::square(32));
  std::mt19937 rng(7);
  std::normal_distribution<double> N;
  Eigen::VectorXd u(A.size()), v(A.size());
  for (int i = 0; i < A.size(); ++i) {
    u[i] = N(rng);
    v[i] = N(rng);
  }
  const double a = (A.interior * u).dot(v), b = u.dot(A.interior * v);
  EXPECT_LT(std::abs(a - b), 1e-12 * std::abs(a));
}

TEST(Elliptic, DiskCutCellOperatorIsNonsymmetricButInvertible) {
  const SparseOperator A = assemble_laplacian(oracle::disk(32));
  EXPECT_FALSE(A.symmetric);
  const DirichletSolver s(A);
  const CVec b = CVec::Ones(A.size());
  EXPECT_LT((A.interior.cast<cplx>() * s.solve_interior(b) - b).norm(), 1e-9 * b.norm() * A.interior.norm());
}

TEST(Elliptic, GradientOperatorsAreExactOnQuadratics) {
  const auto d = oracle::disk(32);
  const GradientOperators g = gradient_operators(*d);
  const Field u = sample(d, [](double x, double y) { return cplx(x * x + 3 * x * y - y * y); });
  const CVec gx = g.dx.cast<cplx>() * u.values, gy = g.dy.cast<cplx>() * u.values;
  for (int i = 0; i < d->n_interior; ++i) {
    const double x = d->points[i][0], y = d->points[i][1];
    EXPECT_NEAR(gx[i].real(), 2 * x + 3 * y, 1e-9);
    EXPECT_NEAR(gy[i].real(), 3 * x - 2 * y, 1e-9);
  }
}

TEST(Elliptic, ConcurrentSolvesAgainstOneFactorization) {
  const auto d = oracle::disk(32);
  const DirichletSolver s(assemble_laplacian(d));
  std::vector<CVec> out(4);
  std::vector<std::thread> ts;
  for (int t = 0; t < 4; ++t)
    ts.emplace_back([&, t] { out[t] = s.solve_interior(CVec::Constant(d->n_interior, cplx(t + 1.0))); });
  for (auto& t : ts) t.join();
  for (int t = 1; t < 4; ++t) EXPECT_LT((out[t] - (t + 1.0) * out[0]).cwiseAbs().maxCoeff(), 1e-12);
}
