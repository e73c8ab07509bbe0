#pragma once

// Reference computations that avoid the production code paths they check.

#include <cmath>
#include <functional>
#include <numbers>

#include "nlinv/semilinear.hpp"

namespace oracle {

using namespace nlinv;

inline DomainPtr disk(int n, Arc g1 = {}, Arc g2 = {}) {
  DomainConfig c;
  c.n_cells_per_side = n;
  c.gamma1 = g1;
  c.gamma2 = g2;
  return build_domain(c);
}

inline DomainPtr square(int n) {
  DomainConfig c;
  c.shape = Shape::unit_square;
  c.n_cells_per_side = n;
  c.gamma1 = c.gamma2 = {0.0, 4.0};
  return build_domain(c);
}

inline RVec on_nodes(const Domain& d, const std::function<double(double, double)>& fn) {
  RVec v(d.n_nodes());
  for (int i = 0; i < d.n_nodes(); ++i) v[i] = fn(d.points[i][0], d.points[i][1]);
  return v;
}

inline RVec gaussian(const Domain& d, double width = 0.4) {
  return on_nodes(d, [&](double x, double y) { return std::exp(-(x * x + y * y) / (2 * width * width)); });
}

/// V(x, z) = sum_k V_k z^k / k! evaluated term by term.
inline cplx potential(const NonlinearCoefficients& c, int i, cplx z) {
  cplx s = 0.0;
  double fact = 2.0;
  for (int k = 3; k <= c.k_trunc(); ++k) {
    fact *= k;
    s += c.V[k - 3][i] * std::pow(z, k) / fact;
  }
  return s;
}

/// Fixed point u_{m+1} = lift(f) - (-Lap)^{-1} (q grad u_m . grad u_m + V(u_m)).
inline Field picard(const Discretization& disc, const NonlinearCoefficients& c, const BoundaryTrace& f, double tol = 1e-15,
                    int max_iter = 200, int* iterations = nullptr) {
  const Domain& d = disc.dom();
  const int ni = d.n_interior;
  const Field lift = harmonic_lift(*disc.solver, f);
  Field u = lift;
  for (int it = 0; it < max_iter; ++it) {
    const CVec gx = disc.gradient.dx.cast<cplx>() * u.values;
    const CVec gy = disc.gradient.dy.cast<cplx>() * u.values;
    CVec src(ni);
    for (int i = 0; i < ni; ++i) src[i] = c.q[i] * (gx[i] * gx[i] + gy[i] * gy[i]) + potential(c, i, u.values[i]);
    Field next = disc.solver->solve(-src, CVec::Zero(d.n_boundary()));
    next.values += lift.values;
    const double change = (next.values - u.values).cwiseAbs().maxCoeff();
    u = next;
    if (iterations) *iterations = it + 1;
    if (change <= tol * std::max(1.0, f.sup_norm())) break;
  }
  return u;
}

/// Smallest eigenvalue of the interior -Laplacian block by inverse iteration.
inline double smallest_eigenvalue(const DirichletSolver& s, int iters = 200) {
  const int n = s.op().size();
  CVec x = CVec::Ones(n);
  double lambda = 0.0;
  for (int k = 0; k < iters; ++k) {
    const CVec y = s.solve_interior(x);
    lambda = x.norm() / y.norm();
    x = y / y.norm();
  }
  return lambda;
}

/// Midpoint rule in polar coordinates over the unit disk.
inline double polar_integral(const std::function<double(double, double)>& fn, int nr = 400, int nt = 400) {
  double s = 0.0;
  const double dr = 1.0 / nr, dt = 2 * std::numbers::pi / nt;
  for (int i = 0; i < nr; ++i)
    for (int j = 0; j < nt; ++j) {
      const double r = (i + 0.5) * dr, t = (j + 0.5) * dt;
      s += fn(r * std::cos(t), r * std::sin(t)) * r * dr * dt;
    }
  return s;
}

inline CVec grad_dot(const Discretization& disc, const Field& a, const Field& b) {
  const CVec ax = disc.gradient.dx.cast<cplx>() * a.values, ay = disc.gradient.dy.cast<cplx>() * a.values;
  const CVec bx = disc.gradient.dx.cast<cplx>() * b.values, by = disc.gradient.dy.cast<cplx>() * b.values;
  return ax.cwiseProduct(bx) + ay.cwiseProduct(by);
}

/// w with -Lap w + 2 q grad v1 . grad v2 = 0, w = 0 on the boundary; v_l harmonic lifts.
inline Field second_order_w(const Discretization& disc, const RVec& q, const BoundaryTrace& f1, const BoundaryTrace& f2) {
  const Domain& d = disc.dom();
  const Field v1 = harmonic_lift(*disc.solver, f1), v2 = harmonic_lift(*disc.solver, f2);
  const CVec g = grad_dot(disc, v1, v2);
  CVec src(d.n_interior);
  for (int i = 0; i < d.n_interior; ++i) src[i] = -2.0 * q[i] * g[i];
  return disc.solver->solve(src, CVec::Zero(d.n_boundary()));
}

/// w with -Lap w + V_m v1 ... vm = 0, w = 0 on the boundary (q = 0, only V_m present).
inline Field pure_power_w(const Discretization& disc, const RVec& Vm, const std::vector<BoundaryTrace>& fs) {
  const Domain& d = disc.dom();
  CVec prod = CVec::Ones(d.n_interior);
  for (const auto& f : fs) prod = prod.cwiseProduct(harmonic_lift(*disc.solver, f).values.head(d.n_interior));
  CVec src(d.n_interior);
  for (int i = 0; i < d.n_interior; ++i) src[i] = -Vm[i] * prod[i];
  return disc.solver->solve(src, CVec::Zero(d.n_boundary()));
}

inline double rel(const CVec& a, const CVec& b) {
  const double s = b.cwiseAbs().maxCoeff();
  return (a - b).cwiseAbs().maxCoeff() / (s > 0 ? s : 1.0);
}

}  // namespace oracle
