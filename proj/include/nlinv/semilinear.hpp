#pragma once

/**
 * @file semilinear.hpp
 * @brief Forward solver for -Lap u + q (grad u . grad u) + sum_k V_k u^k / k! = 0 with
 * Dirichlet data (and u = 0 on an obstacle boundary when the domain has one).
 */

#include <Eigen/SparseLU>

#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <vector>

#include "nlinv/elliptic.hpp"

namespace nlinv {

/// Shared, immutable discretization bundle: domain, -Laplacian, gradients and the
/// factorized linear Dirichlet solver.
struct Discretization {
  DomainPtr domain;
  SparseOperator laplacian;
  GradientOperators gradient;
  std::shared_ptr<const DirichletSolver> solver;

  const Domain& dom() const { return *domain; }
};

using DiscretizationPtr = std::shared_ptr<const Discretization>;

inline DiscretizationPtr make_discretization(DomainPtr d, const LinearSolveOptions& opts = {}) {
  auto disc = std::make_shared<Discretization>();
  disc->domain = d;
  disc->laplacian = assemble_laplacian(d);
  disc->gradient = gradient_operators(*d);
  disc->solver = std::make_shared<const DirichletSolver>(disc->laplacian, opts);
  return disc;
}

/// q and the Taylor coefficients V_3..V_K of V(x, z) = sum_k V_k(x) z^k / k!.
/// All fields are sampled on every node; only interior values enter the equation.
struct NonlinearCoefficients {
  RVec q;
  std::vector<RVec> V;  // V[0] is V_3

  int k_trunc() const { return 2 + static_cast<int>(V.size()); }

  static NonlinearCoefficients zero(const Domain& d, int k_trunc = 5) {
    NonlinearCoefficients c;
    c.q = RVec::Zero(d.n_nodes());
    c.V.assign(std::max(0, k_trunc - 2), RVec::Zero(d.n_nodes()));
    return c;
  }

  /// V_k, or nullptr when k is outside [3, K].
  const RVec* coefficient(int k) const {
    if (k < 3 || k > k_trunc()) return nullptr;
    return &V[k - 3];
  }

  bool finite() const {
    if (!q.allFinite()) return false;
    for (const auto& v : V)
      if (!v.allFinite()) return false;
    return true;
  }

  double q_sup() const { return q.size() ? q.cwiseAbs().maxCoeff() : 0.0; }
};

enum class Damping { none, line_search };
enum class InitialGuess { harmonic_lift, zero_interior };

struct NewtonOptions {
  double tol_residual = 1e-10;  // relative to max(||f||_inf, tiny)
  int max_newton_iters = 30;
  Damping damping = Damping::line_search;
  InitialGuess initial = InitialGuess::harmonic_lift;
  double step_tol = 1e-13;     // relative step size regarded as converged to roundoff
  double delta_data = 5e-2;    // small-data radius in the sup norm
};

struct NewtonReport {
  int iterations = 0;
  std::vector<double> residuals;  // sup norm of the interior residual per iterate
  double final_residual = 0.0;
  double tolerance = 0.0;
  double data_norm = 0.0;
  double solution_norm = 0.0;
  double c_wp = 0.0;  // ||u||_inf / ||f||_inf
  bool within_small_data = true;
};

struct SemilinearSolution {
  Field u;
  NewtonReport report;
};

namespace detail {

inline double factorial(int k) {
  double f = 1.0;
  for (int i = 2; i <= k; ++i) f *= i;
  return f;
}

}  // namespace detail

class SemilinearSolver {
 public:
  SemilinearSolver(DiscretizationPtr disc, NonlinearCoefficients coeffs, NewtonOptions opts = {})
      : disc_(std::move(disc)), c_(std::move(coeffs)), opts_(opts) {
    if (!c_.finite()) throw Error("nonlinear coefficients contain non-finite values");
    if (c_.q.size() != disc_->dom().n_nodes()) throw Error("q has wrong length");
    for (const auto& v : c_.V)
      if (v.size() != disc_->dom().n_nodes()) throw Error("V_k has wrong length");
  }

  const Discretization& disc() const { return *disc_; }
  const DiscretizationPtr& disc_ptr() const { return disc_; }
  const NonlinearCoefficients& coefficients() const { return c_; }
  const NewtonOptions& options() const { return opts_; }

  /// Interior residual -Lap u + q (grad u)^2 + V(x, u).
  CVec residual(const CVec& u) const {
    const Domain& d = disc_->dom();
    const int ni = d.n_interior;
    const CVec gx = disc_->gradient.dx.cast<cplx>() * u;
    const CVec gy = disc_->gradient.dy.cast<cplx>() * u;
    CVec r = disc_->laplacian.apply(u);
    for (int i = 0; i < ni; ++i) {
      r[i] += c_.q[i] * (gx[i] * gx[i] + gy[i] * gy[i]);
      r[i] += potential(i, u[i]);
    }
    return r;
  }

  /// Newton iteration from the configured initial iterate.
  SemilinearSolution solve(const BoundaryTrace& f) const { return solve(f, std::nullopt); }

  SemilinearSolution solve(const BoundaryTrace& f, const std::optional<CVec>& initial_interior) const {
    const Domain& d = disc_->dom();
    const int ni = d.n_interior;
    NewtonReport rep;
    rep.data_norm = f.sup_norm();
    rep.within_small_data = rep.data_norm <= opts_.delta_data;
    const double scale = rep.data_norm > 0 ? rep.data_norm : std::numeric_limits<double>::min();
    rep.tolerance = opts_.tol_residual * scale;

    const CVec bc = dirichlet_values(f);
    CVec u(d.n_nodes());
    u.tail(d.n_boundary()) = bc;
    if (initial_interior) {
      u.head(ni) = *initial_interior;
    } else if (opts_.initial == InitialGuess::harmonic_lift) {
      u = disc_->solver->solve(CVec::Zero(ni), bc).values;
    } else {
      u.head(ni).setZero();
    }

    CVec r = residual(u);
    double rn = sup(r);
    rep.residuals.push_back(rn);
    bool last_step_small = false;
    int failures = 0;
    Eigen::SparseLU<Eigen::SparseMatrix<cplx>> lu;
    bool analyzed = false;
    while (true) {
      if (!std::isfinite(rn)) throw NewtonDiverged("non-finite residual in Newton iteration");
      if (rn == 0.0 || (rn <= rep.tolerance && last_step_small)) break;
      if (rep.iterations >= opts_.max_newton_iters)
        throw NewtonDiverged("Newton did not converge within max_newton_iters (residual " + std::to_string(rn) + ")");

      const Eigen::SparseMatrix<cplx> J = jacobian(u);
      if (!analyzed) {
        lu.analyzePattern(J);
        analyzed = true;
      }
      lu.factorize(J);
      if (lu.info() != Eigen::Success) throw NewtonDiverged("singular Newton Jacobian");
      const CVec step = lu.solve(CVec(-r.head(ni)));
      ++rep.iterations;

      double alpha = 1.0;
      CVec trial = u;
      CVec trial_r;
      double trial_rn = 0.0;
      bool decreased = false;
      const int tries = opts_.damping == Damping::line_search ? 4 : 1;
      for (int t = 0; t < tries; ++t) {
        trial.head(ni) = u.head(ni) + alpha * step;
        trial_r = residual(trial);
        trial_rn = sup(trial_r);
        if (trial_rn < rn) {
          decreased = true;
          break;
        }
        if (t + 1 < tries) alpha *= 0.5;
      }
      const double unorm = std::max(sup(u), scale);
      last_step_small = alpha * sup(step) <= opts_.step_tol * unorm;
      if (!decreased && !last_step_small) {
        if (++failures >= 3) throw NewtonDiverged("residual did not decrease over 3 damped Newton steps");
      } else {
        failures = 0;
      }
      u = trial;
      r = trial_r;
      rn = trial_rn;
      rep.residuals.push_back(rn);
    }
    rep.final_residual = rn;
    Field out{disc_->domain, u};
    rep.solution_norm = out.sup_norm();
    rep.c_wp = rep.data_norm > 0 ? rep.solution_norm / rep.data_norm : 0.0;
    return {std::move(out), std::move(rep)};
  }

  /// Newton Jacobian on the interior unknowns.
  Eigen::SparseMatrix<cplx> jacobian(const CVec& u) const {
    const Domain& d = disc_->dom();
    const int ni = d.n_interior;
    const CVec gx = disc_->gradient.dx.cast<cplx>() * u;
    const CVec gy = disc_->gradient.dy.cast<cplx>() * u;
    std::vector<Eigen::Triplet<cplx>> t;
    t.reserve(static_cast<size_t>(ni) * 15);
    const auto& L = disc_->laplacian.full;
    const auto& Dx = disc_->gradient.dx;
    const auto& Dy = disc_->gradient.dy;
    for (int i = 0; i < ni; ++i) {
      for (RowSparse::InnerIterator it(L, i); it; ++it)
        if (it.col() < ni) t.emplace_back(i, static_cast<int>(it.col()), it.value());
      const cplx ax = 2.0 * c_.q[i] * gx[i];
      const cplx ay = 2.0 * c_.q[i] * gy[i];
      if (ax != 0.0)
        for (RowSparse::InnerIterator it(Dx, i); it; ++it)
          if (it.col() < ni) t.emplace_back(i, static_cast<int>(it.col()), ax * it.value());
      if (ay != 0.0)
        for (RowSparse::InnerIterator it(Dy, i); it; ++it)
          if (it.col() < ni) t.emplace_back(i, static_cast<int>(it.col()), ay * it.value());
      const cplx dv = potential_derivative(i, u[i]);
      t.emplace_back(i, i, dv);
    }
    Eigen::SparseMatrix<cplx> J(ni, ni);
    J.setFromTriplets(t.begin(), t.end());
    J.makeCompressed();
    return J;
  }

  /// V(x_i, z) truncated at K.
  cplx potential(int i, cplx z) const {
    cplx s = 0.0;
    for (int k = c_.k_trunc(); k >= 3; --k) s = (s + c_.V[k - 3][i] / detail::factorial(k)) * z;
    return s * z * z;
  }

  /// d/dz V(x_i, z).
  cplx potential_derivative(int i, cplx z) const {
    cplx s = 0.0;
    for (int k = c_.k_trunc(); k >= 3; --k) s = (s + c_.V[k - 3][i] / detail::factorial(k - 1)) * z;
    return s * z;
  }

 private:
  static double sup(const CVec& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

  DiscretizationPtr disc_;
  NonlinearCoefficients c_;
  NewtonOptions opts_;
};

/// Residual of the semilinear equation for a field on its own domain.
inline CVec semilinear_residual(const Field& u, const NonlinearCoefficients& c) {
  SemilinearSolver s(make_discretization(u.domain), c);
  return s.residual(u.values);
}

inline SemilinearSolution solve_semilinear(DiscretizationPtr disc, const NonlinearCoefficients& c, const BoundaryTrace& f,
                                           const NewtonOptions& opts = {}) {
  return SemilinearSolver(std::move(disc), c, opts).solve(f);
}

// ---------------------------------------------------------------------------
// Holomorphy in the boundary data

struct HolomorphyReport {
  int degree = 0;
  int probe_node = -1;
  std::vector<cplx> samples;
  std::vector<cplx> values;        // u(eps * f_dir) at the probe node
  std::vector<cplx> coefficients;  // c_0..c_P of the fitted polynomial in eps
  double max_fit_residual = 0.0;
  double solution_scale = 0.0;     // max over samples of ||u||_inf
  double relative_residual = 0.0;
};

/// Solves u(eps f_dir) at every sample and fits a degree-`degree` complex polynomial in eps
/// at `probe_node` (an interior node; defaults to the node nearest the domain centre).
inline HolomorphyReport holomorphy_probe(const SemilinearSolver& s, const BoundaryTrace& f_dir,
                                         const std::vector<cplx>& eps_samples, int degree, int probe_node = -1) {
  const Domain& d = s.disc().dom();
  if (static_cast<int>(eps_samples.size()) <= degree) throw Error("holomorphy probe needs more samples than degree");
  if (probe_node < 0) {
    const Point c = d.config.shape == Shape::unit_disk ? Point{0.0, 0.0} : Point{0.5, 0.5};
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < d.n_interior; ++i) {
      const double r = std::hypot(d.points[i][0] - c[0], d.points[i][1] - c[1]);
      if (r < best) {
        best = r;
        probe_node = i;
      }
    }
  }
  HolomorphyReport rep;
  rep.degree = degree;
  rep.probe_node = probe_node;
  rep.samples = eps_samples;
  double rho = 0.0;
  for (cplx e : eps_samples) rho = std::max(rho, std::abs(e));
  const int m = static_cast<int>(eps_samples.size());
  Eigen::MatrixXcd V(m, degree + 1);
  CVec y(m);
  for (int j = 0; j < m; ++j) {
    BoundaryTrace f = f_dir;
    f.values *= eps_samples[j];
    const auto sol = s.solve(f);
    y[j] = sol.u.values[probe_node];
    rep.values.push_back(y[j]);
    rep.solution_scale = std::max(rep.solution_scale, sol.u.sup_norm());
    const cplx t = eps_samples[j] / rho;
    cplx p = 1.0;
    for (int k = 0; k <= degree; ++k) {
      V(j, k) = p;
      p *= t;
    }
  }
  const CVec coef = V.colPivHouseholderQr().solve(y);
  rep.max_fit_residual = (V * coef - y).cwiseAbs().maxCoeff();
  for (int k = 0; k <= degree; ++k) rep.coefficients.push_back(coef[k] / std::pow(rho, k));
  rep.relative_residual = rep.solution_scale > 0 ? rep.max_fit_residual / rep.solution_scale : 0.0;
  return rep;
}

}  // namespace nlinv
