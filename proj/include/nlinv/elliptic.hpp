#pragma once

/**
 * @file elliptic.hpp
 * @brief Discrete -Laplacian (5-point stencil, Shortley-Weller at cut nodes),
 * centred gradient operators, and the linear Dirichlet solver built on them.
 */

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseLU>

#include <memory>
#include <mutex>
#include <vector>

#include "nlinv/domain.hpp"

namespace nlinv {

/// Discrete -Laplacian. Rows are interior nodes, columns all nodes.
struct SparseOperator {
  DomainPtr domain;
  RowSparse full;
  Eigen::SparseMatrix<double> interior;  // interior x interior block
  RowSparse boundary;                    // interior x boundary block
  bool symmetric = false;

  int size() const { return static_cast<int>(interior.rows()); }

  /// (-Laplacian u) at interior nodes.
  CVec apply(const CVec& all_values) const { return full.cast<cplx>() * all_values; }
};

/// Second-order first derivatives at interior nodes (three-point, non-uniform near the boundary).
struct GradientOperators {
  RowSparse dx;
  RowSparse dy;
};

enum class LinearMethod { automatic, direct_factorization, bicgstab };

struct LinearSolveOptions {
  LinearMethod method = LinearMethod::automatic;
  double tol = 1e-12;
  int max_iter = 5000;
};

namespace detail {

inline void add_second_difference(std::vector<Eigen::Triplet<double>>& t, int row, const Link& lo, const Link& hi) {
  const double a = lo.dist, b = hi.dist;
  t.emplace_back(row, lo.node, -2.0 / (a * (a + b)));
  t.emplace_back(row, hi.node, -2.0 / (b * (a + b)));
  t.emplace_back(row, row, 2.0 / (a * b));
}

inline void add_first_difference(std::vector<Eigen::Triplet<double>>& t, int row, const Link& lo, const Link& hi) {
  const double a = lo.dist, b = hi.dist;
  t.emplace_back(row, lo.node, -b / (a * (a + b)));
  t.emplace_back(row, hi.node, a / (b * (a + b)));
  t.emplace_back(row, row, (b - a) / (a * b));
}

}  // namespace detail

inline SparseOperator assemble_laplacian(DomainPtr d) {
  const int ni = d->n_interior;
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<size_t>(ni) * 5 + 8);
  bool regular = true;
  for (int k = 0; k < ni; ++k) {
    const auto& l = d->links[k];
    detail::add_second_difference(t, k, l[west], l[east]);
    detail::add_second_difference(t, k, l[south], l[north]);
    for (const auto& link : l)
      if (link.dist != d->h) regular = false;
  }
  SparseOperator op;
  op.domain = d;
  op.full.resize(ni, d->n_nodes());
  op.full.setFromTriplets(t.begin(), t.end());
  op.full.makeCompressed();
  op.interior = op.full.leftCols(ni);
  op.interior.makeCompressed();
  op.boundary = op.full.rightCols(d->n_boundary());
  op.symmetric = regular;
  return op;
}

inline GradientOperators gradient_operators(const Domain& d) {
  std::vector<Eigen::Triplet<double>> tx, ty;
  for (int k = 0; k < d.n_interior; ++k) {
    detail::add_first_difference(tx, k, d.links[k][west], d.links[k][east]);
    detail::add_first_difference(ty, k, d.links[k][south], d.links[k][north]);
  }
  GradientOperators g;
  g.dx.resize(d.n_interior, d.n_nodes());
  g.dx.setFromTriplets(tx.begin(), tx.end());
  g.dy.resize(d.n_interior, d.n_nodes());
  g.dy.setFromTriplets(ty.begin(), ty.end());
  return g;
}

/// Dirichlet values on every boundary node: `outer` on the outer boundary and
/// `obstacle_value` on the obstacle boundary.
inline CVec dirichlet_values(const BoundaryTrace& outer, cplx obstacle_value = 0.0) {
  const Domain& d = *outer.domain;
  CVec bc(d.n_boundary());
  bc.head(d.n_outer) = outer.values;
  bc.tail(d.n_obstacle).setConstant(obstacle_value);
  return bc;
}

/// Factorizes (or prepares an iterative solver for) the interior block once; solves are
/// const and may run concurrently.
class DirichletSolver {
 public:
  explicit DirichletSolver(SparseOperator op, LinearSolveOptions opts = {}) : op_(std::move(op)), opts_(opts) {
    method_ = opts_.method;
    if (method_ == LinearMethod::automatic)
      method_ = op_.domain->config.n_cells_per_side <= 128 ? LinearMethod::direct_factorization : LinearMethod::bicgstab;
    if (method_ == LinearMethod::direct_factorization) {
      lu_ = std::make_shared<Eigen::SparseLU<Eigen::SparseMatrix<double>>>();
      lu_->analyzePattern(op_.interior);
      lu_->factorize(op_.interior);
      if (lu_->info() != Eigen::Success) throw SingularSystem("sparse LU factorization failed: " + lu_->lastErrorMessage());
    } else {
      it_ = std::make_shared<Eigen::BiCGSTAB<Eigen::SparseMatrix<double>, Eigen::DiagonalPreconditioner<double>>>();
      it_->setTolerance(opts_.tol);
      it_->setMaxIterations(opts_.max_iter);
      it_->compute(op_.interior);
    }
  }

  const SparseOperator& op() const { return op_; }
  const DomainPtr& domain() const { return op_.domain; }
  LinearMethod method() const { return method_; }

  /// Solves -Laplacian u = rhs (interior) with u = bc on all boundary nodes.
  Field solve(const CVec& rhs_interior, const CVec& bc) const {
    const Domain& d = *op_.domain;
    const CVec b = rhs_interior - op_.boundary.cast<cplx>() * bc;
    Field u = Field::zeros(op_.domain);
    u.values.head(d.n_interior) = solve_interior(b);
    u.values.tail(d.n_boundary()) = bc;
    return u;
  }

  /// Solves the interior block system A_II x = b.
  CVec solve_interior(const CVec& b) const {
    const Eigen::VectorXd re = b.real(), im = b.imag();
    Eigen::VectorXd xr, xi;
    if (method_ == LinearMethod::direct_factorization) {
      xr = lu_->solve(re);
      xi = im.isZero(0.0) ? Eigen::VectorXd::Zero(im.size()) : Eigen::VectorXd(lu_->solve(im));
    } else {
      xr = iterate(re);
      xi = im.isZero(0.0) ? Eigen::VectorXd::Zero(im.size()) : iterate(im);
    }
    CVec x(b.size());
    x.real() = xr;
    x.imag() = xi;
    return x;
  }

  /// Solves the transposed system A_II^T x = b (discrete adjoint).
  CVec solve_interior_transpose(const CVec& b) const {
    const Eigen::VectorXd re = b.real(), im = b.imag();
    CVec x(b.size());
    if (method_ == LinearMethod::direct_factorization) {
      std::call_once(*lut_once_, [this] {
        lut_ = std::make_shared<Eigen::SparseLU<Eigen::SparseMatrix<double>>>();
        const Eigen::SparseMatrix<double> At = op_.interior.transpose();
        lut_->compute(At);
        if (lut_->info() != Eigen::Success) throw SingularSystem("sparse LU of the transposed operator failed");
      });
      const Eigen::VectorXd xr = lut_->solve(re);
      const Eigen::VectorXd xi = im.isZero(0.0) ? Eigen::VectorXd::Zero(im.size()) : Eigen::VectorXd(lut_->solve(im));
      x.real() = xr;
      x.imag() = xi;
      return x;
    }
    const Eigen::SparseMatrix<double> At = op_.interior.transpose();
    Eigen::BiCGSTAB<Eigen::SparseMatrix<double>, Eigen::DiagonalPreconditioner<double>> it;
    it.setTolerance(opts_.tol);
    it.setMaxIterations(opts_.max_iter);
    it.compute(At);
    for (int part = 0; part < 2; ++part) {
      const Eigen::VectorXd& rhs = part == 0 ? re : im;
      Eigen::VectorXd sol = Eigen::VectorXd::Zero(rhs.size());
      if (!rhs.isZero(0.0)) {
        sol = it.solve(rhs);
        if (it.info() != Eigen::Success || !((At * sol - rhs).norm() <= opts_.tol * 10 * rhs.norm()))
          throw NoConvergence("BiCGSTAB did not reach tolerance within max_iter");
      }
      if (part == 0)
        x.real() = sol;
      else
        x.imag() = sol;
    }
    return x;
  }

 private:
  Eigen::VectorXd iterate(const Eigen::VectorXd& b) const {
    if (b.isZero(0.0)) return Eigen::VectorXd::Zero(b.size());
    Eigen::VectorXd x = it_->solve(b);
    const double rel = (op_.interior * x - b).norm() / b.norm();
    if (it_->info() != Eigen::Success || !(rel <= opts_.tol * 10))
      throw NoConvergence("BiCGSTAB did not reach tolerance within max_iter");
    return x;
  }

  SparseOperator op_;
  LinearSolveOptions opts_;
  LinearMethod method_ = LinearMethod::direct_factorization;
  std::shared_ptr<Eigen::SparseLU<Eigen::SparseMatrix<double>>> lu_;
  mutable std::shared_ptr<Eigen::SparseLU<Eigen::SparseMatrix<double>>> lut_;
  std::shared_ptr<std::once_flag> lut_once_ = std::make_shared<std::once_flag>();
  std::shared_ptr<Eigen::BiCGSTAB<Eigen::SparseMatrix<double>, Eigen::DiagonalPreconditioner<double>>> it_;
};

/// One-shot solve; prefer a long-lived DirichletSolver when solving repeatedly.
inline Field solve_dirichlet(const SparseOperator& A, const CVec& rhs_interior, const CVec& bc,
                             const LinearSolveOptions& opts = {}) {
  DirichletSolver s(A, opts);
  return s.solve(rhs_interior, bc);
}

/// Discrete harmonic function with outer trace `f` and zero on the obstacle.
inline Field harmonic_lift(const DirichletSolver& s, const BoundaryTrace& f) {
  return s.solve(CVec::Zero(s.domain()->n_interior), dirichlet_values(f));
}

}  // namespace nlinv
