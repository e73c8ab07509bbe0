#pragma once

/**
 * @file inverse.hpp
 * @brief Moment functionals from linearized boundary data, Tikhonov least-squares
 * recovery of q and V_m, circular obstacle search, and span-residual density checks
 * for products of gradients of harmonic functions.
 */

#include <Eigen/SVD>

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "nlinv/harmonic.hpp"
#include "nlinv/linearize.hpp"

namespace nlinv {

enum class MomentSource { boundary_data, interior_oracle };

/// One evaluated integral identity. `order` 2 means int q (grad v_a . grad v_b) v_c with
/// ids = {a, b, c}; order m >= 3 means int V_m v_1 ... v_{m+1} with m+1 ids.
struct MomentRecord {
  std::vector<std::string> ids;
  int order = 2;
  cplx value = 0.0;
  MomentSource source = MomentSource::boundary_data;
  double error = 0.0;          // against the continuum identity
  double stencil_error = 0.0;  // polarization part only (boundary data)
};

enum class BasisKind { grid_nodal, fourier_modes };

/// How a boundary-data moment is modelled in the least-squares rows. `quadrature` uses the
/// interior integrand with v_last; `discrete_adjoint` replaces w * v_last by the adjoint field of
/// the discrete map coefficient -> normal derivative -> boundary functional, so the rows reproduce
/// the discretized data exactly. Interior-oracle moments always use quadrature rows.
enum class RowModel { quadrature, discrete_adjoint };

struct ReconstructionOptions {
  BasisKind basis = BasisKind::fourier_modes;
  int fourier_modes = 9;             // per direction
  double tikhonov_lambda = 1e-10;    // relative to sigma_max^2
  RowModel boundary_rows = RowModel::discrete_adjoint;
  int n_test_triplets = 400;
  std::uint64_t rng_seed = 1;
  double rank_condition_threshold = 1e10;
  double row_drop_tol = 1e-8;        // relative to the largest row norm
};

/// Harmonic test functions by id. Fields are discrete harmonic on the shared discretization.
using FieldBank = std::map<std::string, Field>;

// ---------------------------------------------------------------------------
// Moments

namespace detail {

inline const Field& bank_field(const FieldBank& bank, const std::string& id) {
  auto it = bank.find(id);
  if (it == bank.end()) throw Error("unknown test function id '" + id + "'");
  return it->second;
}

}  // namespace detail

/// Coefficient kernel of a moment without its last test function: grad v_a . grad v_b for
/// order 2, v_1 ... v_m for order m.
inline CVec moment_kernel(const Discretization& disc, const std::vector<std::string>& ids, int order, const FieldBank& bank) {
  const int ni = disc.dom().n_interior;
  if (order == 2) {
    if (ids.size() != 3) throw Error("order-2 moments need three ids");
    const CVec& a = detail::bank_field(bank, ids[0]).values;
    const CVec& b = detail::bank_field(bank, ids[1]).values;
    const CVec ax = disc.gradient.dx.cast<cplx>() * a, ay = disc.gradient.dy.cast<cplx>() * a;
    const CVec bx = disc.gradient.dx.cast<cplx>() * b, by = disc.gradient.dy.cast<cplx>() * b;
    return ax.cwiseProduct(bx) + ay.cwiseProduct(by);
  }
  if (order < 3 || static_cast<int>(ids.size()) != order + 1) throw Error("order-m moments need m+1 ids");
  CVec g = CVec::Ones(ni);
  for (int l = 0; l < order; ++l) g = g.cwiseProduct(detail::bank_field(bank, ids[l]).values.head(ni));
  return g;
}

/// Interior integrand g with moment = int coefficient * g.
inline CVec moment_integrand(const Discretization& disc, const std::vector<std::string>& ids, int order, const FieldBank& bank) {
  const CVec k = moment_kernel(disc, ids, order, bank);
  return k.cwiseProduct(detail::bank_field(bank, ids.back()).values.head(disc.dom().n_interior));
}

/// psi with boundary moment = sum_i psi_i coefficient_i kernel_i for the discrete data map.
inline CVec adjoint_weights(const Discretization& disc, const Field& v_last) {
  const Domain& d = disc.dom();
  CVec c = CVec::Zero(d.n_interior);
  for (int b = 0; b < d.n_outer; ++b) {
    if (!d.gamma2[b]) continue;
    const cplx wv = d.boundary_weights[b] * v_last.values[d.outer_node(b)];
    for (RowSparse::InnerIterator it(d.dn_second, b); it; ++it)
      if (it.col() < d.n_interior) c[it.col()] += wv * it.value();
  }
  return -disc.solver->solve_interior_transpose(c);
}

/// Interior-quadrature value of the moment for a known coefficient field. The error is the
/// gap between cut-cell weights and plain h^2 weights.
inline MomentRecord interior_moment(const Discretization& disc, const RVec& coefficient, const std::vector<std::string>& ids,
                                    int order, const FieldBank& bank) {
  const Domain& d = disc.dom();
  const CVec g = moment_integrand(disc, ids, order, bank);
  MomentRecord r;
  r.ids = ids;
  r.order = order;
  r.source = MomentSource::interior_oracle;
  cplx plain = 0.0;
  for (int i = 0; i < d.n_interior; ++i) {
    const cplx v = coefficient[i] * g[i];
    r.value += d.quad_weights[i] * v;
    plain += d.h * d.h * v;
  }
  r.error = std::abs(r.value - plain);
  return r;
}

/// Moment from linearized boundary data: (1/2) int_{Gamma2} d_nu w v3 for a second
/// linearization, int_{Gamma2} d_nu d v_{m+1} for an m-th one (`rec` already H-subtracted).
inline MomentRecord moment_from_boundary(const LinearizedDtNRecord& rec, const Field& v_last, const std::vector<std::string>& ids,
                                         double leak_tol = 1e-8) {
  const Domain& d = *rec.output.domain;
  const int m = static_cast<int>(rec.inputs.size());
  if (m < 2) throw Error("moments need a linearization of order at least 2");
  if (static_cast<int>(ids.size()) != m + 1) throw Error("moment ids must list the inputs and the last test function");
  CVec trace(d.n_outer);
  double sup = 0.0, leak = 0.0;
  for (int b = 0; b < d.n_outer; ++b) {
    trace[b] = v_last.values[d.outer_node(b)];
    sup = std::max(sup, std::abs(trace[b]));
    if (!d.gamma2[b]) leak = std::max(leak, std::abs(trace[b]));
  }
  if (leak > leak_tol * std::max(sup, 1e-300)) throw SupportViolation("test function trace leaks outside Gamma2");
  const double factor = m == 2 ? 0.5 : 1.0;
  MomentRecord r;
  r.ids = ids;
  r.order = m;
  r.source = MomentSource::boundary_data;
  r.value = factor * integrate_boundary(d, rec.output.values.cwiseProduct(trace), d.gamma2);
  double disc_err = 0.0, stencil_err = 0.0;
  for (int b = 0; b < d.n_outer; ++b) {
    if (!d.gamma2[b]) continue;
    disc_err += d.boundary_weights[b] * std::abs(rec.output.values[b] - rec.output_low.values[b]) * std::abs(trace[b]);
    stencil_err += d.boundary_weights[b] * rec.error_estimate * std::abs(trace[b]);
  }
  r.error = factor * (disc_err + stencil_err);
  r.stencil_error = factor * stencil_err;
  return r;
}

// ---------------------------------------------------------------------------
// Regularized least squares

struct ReconstructionReport {
  int n_moments = 0;
  int n_dropped = 0;             // rows with a vanishing integrand
  int n_unknowns = 0;
  double residual = 0.0;         // weighted relative residual
  double condition = 0.0;        // sigma_max / sigma_min of the weighted system
  int effective_rank = 0;
  bool rank_deficient = false;
  double lambda = 0.0;
  double noise_floor = 0.0;      // L2 norm of the response to the moment error estimates
  std::optional<double> relative_l2_error;
  bool propagation_warning = false;
  std::vector<std::string> warnings;
};

struct Reconstruction {
  Field field;
  RVec coefficients;  // basis coefficients
  ReconstructionReport report;
};

/// Basis functions sampled on every node, one column each.
inline Eigen::MatrixXd basis_matrix(const Domain& d, const ReconstructionOptions& opts) {
  const int n = d.n_nodes();
  if (opts.basis == BasisKind::grid_nodal) {
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(n, d.n_interior);
    for (int i = 0; i < d.n_interior; ++i) B(i, i) = 1.0;
    return B;
  }
  const int M = opts.fourier_modes;
  if (M < 1) throw ConfigError("fourier_modes must be positive");
  const double x0 = d.config.shape == Shape::unit_disk ? -1.0 : 0.0;
  const double len = d.config.shape == Shape::unit_disk ? 2.0 : 1.0;
  Eigen::MatrixXd B(n, M * M);
  for (int i = 0; i < n; ++i) {
    const double tx = (d.points[i][0] - x0) / len, ty = (d.points[i][1] - x0) / len;
    for (int a = 0; a < M; ++a)
      for (int b = 0; b < M; ++b) B(i, a * M + b) = std::cos(a * std::numbers::pi * tx) * std::cos(b * std::numbers::pi * ty);
  }
  return B;
}

inline double relative_l2(const Domain& d, const CVec& approx, const RVec& truth) {
  double num = 0.0, den = 0.0;
  for (int i = 0; i < d.n_interior; ++i) {
    num += d.quad_weights[i] * std::norm(approx[i] - truth[i]);
    den += d.quad_weights[i] * truth[i] * truth[i];
  }
  return den > 0 ? std::sqrt(num / den) : std::sqrt(num);
}

inline double l2_norm(const Domain& d, const CVec& v) {
  double s = 0.0;
  for (int i = 0; i < d.n_interior; ++i) s += d.quad_weights[i] * std::norm(v[i]);
  return std::sqrt(s);
}

/// Row-normalized Tikhonov least squares for a real coefficient field from complex moments.
inline Reconstruction solve_moment_system(const Discretization& disc, const std::vector<MomentRecord>& moments, const FieldBank& bank,
                                          const ReconstructionOptions& opts, const std::optional<RVec>& truth = std::nullopt) {
  const Domain& d = disc.dom();
  if (moments.empty()) throw Error("no moments supplied");
  const Eigen::MatrixXd B = basis_matrix(d, opts);
  const int nb = static_cast<int>(B.cols());
  const int nm = static_cast<int>(moments.size());
  const Eigen::MatrixXd Bi = B.topRows(d.n_interior);
  const Eigen::Map<const Eigen::VectorXd> w(d.quad_weights.data(), d.n_interior);
  Eigen::MatrixXd Araw(2 * nm, nb);
  std::vector<double> scale(nm);
  double max_scale = 0.0;
  std::map<std::string, CVec> adjoint;
  std::vector<double> model_error(nm);
  for (int k = 0; k < nm; ++k) {
    const MomentRecord& mr = moments[k];
    CVec gw;
    if (mr.source == MomentSource::boundary_data && opts.boundary_rows == RowModel::discrete_adjoint) {
      auto it = adjoint.find(mr.ids.back());
      if (it == adjoint.end()) it = adjoint.emplace(mr.ids.back(), adjoint_weights(disc, detail::bank_field(bank, mr.ids.back()))).first;
      gw = moment_kernel(disc, mr.ids, mr.order, bank).cwiseProduct(it->second);
      model_error[k] = mr.stencil_error;
    } else {
      gw = moment_integrand(disc, mr.ids, mr.order, bank).cwiseProduct(w.cast<cplx>());
      model_error[k] = mr.error;
    }
    const Eigen::VectorXd gw_re = gw.real(), gw_im = gw.imag();
    Araw.row(2 * k) = gw_re.transpose() * Bi;
    Araw.row(2 * k + 1) = gw_im.transpose() * Bi;
    scale[k] = std::sqrt(Araw.row(2 * k).squaredNorm() + Araw.row(2 * k + 1).squaredNorm());
    max_scale = std::max(max_scale, scale[k]);
  }
  // rows whose integrand vanishes to roundoff carry no information about the coefficient
  std::vector<int> keep;
  for (int k = 0; k < nm; ++k)
    if (scale[k] > opts.row_drop_tol * max_scale) keep.push_back(k);
  if (keep.empty()) throw SingularSystem("all moment rows vanish");
  const int nk = static_cast<int>(keep.size());
  Eigen::MatrixXd A(2 * nk, nb);
  Eigen::VectorXd rhs(2 * nk), err(2 * nk);
  for (int r = 0; r < nk; ++r) {
    const int k = keep[r];
    const double s = 1.0 / scale[k];
    A.row(2 * r) = s * Araw.row(2 * k);
    A.row(2 * r + 1) = s * Araw.row(2 * k + 1);
    rhs[2 * r] = s * moments[k].value.real();
    rhs[2 * r + 1] = s * moments[k].value.imag();
    err[2 * r] = err[2 * r + 1] = s * model_error[k] / std::sqrt(2.0);
  }
  Eigen::BDCSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  Reconstruction out;
  ReconstructionReport& rep = out.report;
  rep.n_moments = nk;
  rep.n_dropped = nm - nk;
  rep.n_unknowns = nb;
  const double smax = sv.size() ? sv[0] : 0.0;
  if (!(smax > 0)) throw SingularSystem("moment matrix is zero");
  rep.lambda = opts.tikhonov_lambda * smax * smax;

  for (int i = 0; i < sv.size(); ++i)
    if (sv[i] > 1e-14 * smax) ++rep.effective_rank;
  rep.condition = sv.size() < nb ? std::numeric_limits<double>::infinity() : smax / std::max(sv[sv.size() - 1], 1e-300);
  rep.rank_deficient = rep.condition > opts.rank_condition_threshold;
  if (rep.rank_deficient) rep.warnings.push_back("RankDeficient: condition estimate above threshold");
  const Eigen::VectorXd filt = sv.array() / (sv.array().square() + rep.lambda);
  auto apply = [&](const Eigen::VectorXd& b) -> Eigen::VectorXd {
    return svd.matrixV() * filt.cwiseProduct(svd.matrixU().transpose() * b);
  };
  out.coefficients = apply(rhs);
  rep.residual = (A * out.coefficients - rhs).norm() / std::max(rhs.norm(), 1e-300);
  const Eigen::VectorXd noise = B * apply(err);
  rep.noise_floor = l2_norm(d, noise.cast<cplx>());
  out.field = Field{disc.domain, (B * out.coefficients).cast<cplx>()};
  if (truth) rep.relative_l2_error = relative_l2(d, out.field.values, *truth);
  return out;
}

inline Reconstruction recover_q(const Discretization& disc, const std::vector<MomentRecord>& moments, const FieldBank& bank,
                                const ReconstructionOptions& opts, const std::optional<RVec>& truth = std::nullopt) {
  for (const auto& m : moments)
    if (m.order != 2) throw Error("recover_q needs order-2 moments");
  return solve_moment_system(disc, moments, bank, opts, truth);
}

/// `lower_error` is the relative error of the previously recovered coefficients; when it
/// exceeds the relative data signal of the m-th order moments a propagation warning is raised.
inline Reconstruction recover_Vm(const Discretization& disc, int m, const std::vector<MomentRecord>& moments, const FieldBank& bank,
                                 const ReconstructionOptions& opts, const std::optional<RVec>& truth = std::nullopt,
                                 double lower_error = 0.0, double lower_signal = 0.0) {
  if (m < 3 || m > 5) throw Error("recover_Vm supports m in {3, 4, 5}");
  for (const auto& r : moments)
    if (r.order != m) throw Error("recover_Vm moments must all have order m");
  Reconstruction out = solve_moment_system(disc, moments, bank, opts, truth);
  double signal = 0.0;
  for (const auto& r : moments) signal = std::max(signal, std::abs(r.value));
  if (lower_error * lower_signal > signal) {
    out.report.propagation_warning = true;
    out.report.warnings.push_back("PropagationWarning: lower-order recovery error dominates the order-" + std::to_string(m) +
                                  " signal");
  }
  return out;
}

/// H-subtracted m-th order record: data minus the chain prediction with V_m = 0 and the
/// known lower-order coefficients.
inline LinearizedDtNRecord subtract_known_part(const LinearizedDtNRecord& rec, const SemilinearSolver& known_without_Vm) {
  LinearizedDtNRecord out = rec;
  const LinearizedChain chain = linearized_chain(known_without_Vm, rec.inputs);
  const Domain& d = *rec.output.domain;
  const BoundaryTrace hi = normal_derivative(chain.full(), d.gamma2, 2);
  const BoundaryTrace lo = normal_derivative(chain.full(), d.gamma2, 1);
  out.output.values -= hi.values;
  out.output_low.values -= lo.values;
  return out;
}

// ---------------------------------------------------------------------------
// Test-function banks

/// Boundary trace of a harmonic test function restricted to `patch`, scaled to sup 1.
inline BoundaryTrace input_trace(const Domain& d, DomainPtr dp, const Field& v, const Mask& patch, double leak_tol = 1e-8) {
  BoundaryTrace f{std::move(dp), patch, CVec::Zero(d.n_outer)};
  double sup = 0.0, leak = 0.0;
  for (int b = 0; b < d.n_outer; ++b) {
    const cplx x = v.values[d.outer_node(b)];
    sup = std::max(sup, std::abs(x));
    if (patch[b])
      f.values[b] = x;
    else
      leak = std::max(leak, std::abs(x));
  }
  if (!(sup > 0)) throw Error("test function has zero trace");
  if (leak > leak_tol * sup) throw SupportViolation("test function trace leaks outside the patch");
  f.values /= sup;
  return f;
}

/// Harmonic test functions with traces supported in `patch`: corrected polynomials of degree
/// 0..max_degree (re and im) and `n_cgo` corrected exponentials, each scaled to unit trace.
struct TestFamily {
  std::vector<std::string> ids;
  std::vector<BoundaryTrace> traces;  // sup 1, supported in the patch
  FieldBank bank;                     // discrete harmonic lifts of the traces
};

inline TestFamily make_test_family(const Discretization& disc, const Mask& patch, int max_degree, int n_cgo, double cgo_freq = 3.0,
                                   double taper = -1.0, bool include_constant = true) {
  const Domain& d = disc.dom();
  const Mask vanish = complement(patch);
  const bool full = count(vanish) == 0;
  if (taper < 0) taper = default_taper(d, patch);
  std::vector<HarmonicTestFn> fns;
  for (int k = include_constant ? 0 : 1; k <= max_degree; ++k) {
    for (Parity p : {Parity::re, Parity::im}) {
      if (k == 0 && p == Parity::im) continue;
      fns.push_back(full ? harmonic_polynomial(disc.domain, k, p) : corrected_polynomial(disc, k, p, vanish, taper));
    }
  }
  for (int j = 0; j < n_cgo; ++j) {
    const double ang = two_pi * j / std::max(n_cgo, 1);
    const IsotropicDirection dir = make_isotropic({cgo_freq * std::cos(ang), cgo_freq * std::sin(ang)}, j % 2 ? -1 : 1);
    fns.push_back(full ? cgo_raw(disc.domain, dir) : cgo_corrected(disc, dir, vanish, taper));
  }
  TestFamily fam;
  for (auto& fn : fns) {
    BoundaryTrace f = input_trace(d, disc.domain, fn.field, patch);
    std::string id = fn.id;
    if (!full && fn.kind != TestFnKind::corrected_polynomial) id = "corr_" + id;
    fam.ids.push_back(id);
    fam.bank.emplace(id, harmonic_lift(*disc.solver, f));
    fam.traces.push_back(std::move(f));
  }
  return fam;
}

/// Deterministic sample of `count` distinct sorted k-multisets from [0, n).
inline std::vector<std::vector<int>> sample_multisets(int n, int k, int count, std::uint64_t seed) {
  std::vector<std::vector<int>> all;
  std::vector<int> cur(k, 0);
  std::function<void(int, int)> rec = [&](int pos, int start) {
    if (pos == k) {
      all.push_back(cur);
      return;
    }
    for (int i = start; i < n; ++i) {
      cur[pos] = i;
      rec(pos + 1, i);
    }
  };
  rec(0, 0);
  std::mt19937_64 rng(seed);
  for (size_t i = all.size(); i > 1; --i) std::swap(all[i - 1], all[rng() % i]);
  if (static_cast<int>(all.size()) > count) all.resize(count);
  std::sort(all.begin(), all.end());
  return all;
}

/// Deterministic sample of `count` distinct index tuples: `head` unordered indices (with
/// repetition) from [0, n_head) and one index from [0, n_tail).
inline std::vector<std::vector<int>> sample_tuples(int n_head, int head, int n_tail, int count, std::uint64_t seed) {
  std::vector<std::vector<int>> all;
  std::vector<int> cur(head, 0);
  std::function<void(int, int)> rec = [&](int pos, int start) {
    if (pos == head) {
      for (int t = 0; t < n_tail; ++t) {
        auto v = cur;
        v.push_back(t);
        all.push_back(std::move(v));
      }
      return;
    }
    for (int i = start; i < n_head; ++i) {
      cur[pos] = i;
      rec(pos + 1, i);
    }
  };
  rec(0, 0);
  std::mt19937_64 rng(seed);
  for (size_t i = all.size(); i > 1; --i) std::swap(all[i - 1], all[rng() % i]);
  if (static_cast<int>(all.size()) > count) all.resize(count);
  std::sort(all.begin(), all.end());
  return all;
}

// ---------------------------------------------------------------------------
// CGO Fourier route (experimental, full boundary only)

/// hat q(k) = int q e^{-i x.k} from second linearizations of two exponentials with zeta + eta = k
/// and v3 = 1: the moment equals -(|k|^2 / 2) hat q(k).
inline cplx cgo_fourier_coefficient(const DtnSimulator& sim, const Point& k, const EpsStencil& st) {
  const Domain& d = sim.dom();
  if (count(d.gamma1) != d.n_outer || count(d.gamma2) != d.n_outer) throw Error("CGO Fourier route needs full-boundary access");
  const double kk = k[0] * k[0] + k[1] * k[1];
  if (!(kk > 0)) throw ZeroFrequency("CGO Fourier route needs k != 0");
  const IsotropicDirection zeta = make_isotropic(k, 1), eta = make_isotropic(k, -1);
  const HarmonicTestFn a = cgo_raw(sim.disc().domain, zeta), b = cgo_raw(sim.disc().domain, eta);
  const Mask all = full_mask(d);
  const BoundaryTrace fa = trace_of(a.field, all), fb = trace_of(b.field, all);
  const double sa = fa.sup_norm(), sb = fb.sup_norm();
  BoundaryTrace na = fa, nb = fb;
  na.values /= sa;
  nb.values /= sb;
  const LinearizedDtNRecord rec = sim.second_linearization(na, nb, st);
  const cplx moment = 0.5 * integrate_boundary(d, rec.output.values, all) * sa * sb;
  return -2.0 * moment / kk;
}

// ---------------------------------------------------------------------------
// Obstacle

struct ObstacleSearch {
  Point center_min{-0.5, -0.5};
  Point center_max{0.5, 0.5};
  double r_min = 0.05;
  double r_max = 0.4;
  int grid_center = 7;
  int grid_radius = 6;
  int max_iterations = 200;
  double tol = 1e-10;
};

struct ObstacleReport {
  CircleParams best;
  double misfit = 0.0;
  double data_scale = 0.0;
  double noise_level = 0.0;
  int evaluations = 0;
  bool non_identifiable = false;
  std::string reason;
  std::vector<std::array<double, 4>> landscape;  // cx, cy, r, misfit (grid phase then refinement)
};

/// First-linearization model for a candidate obstacle: d_nu of the obstacle-harmonic lift.
class ObstacleModel {
 public:
  ObstacleModel(DomainConfig base, std::vector<BoundaryTrace> inputs) : base_(std::move(base)), inputs_(std::move(inputs)) {
    base_.obstacle.reset();
  }

  /// Model outputs on Gamma2 for each input, or nullopt when the candidate is not admissible.
  std::optional<std::vector<CVec>> predict(const CircleParams& c) const {
    DomainConfig cfg = base_;
    if (c.radius > 0) cfg.obstacle = c;
    DomainPtr d;
    try {
      d = build_domain(cfg);
    } catch (const ObstacleTooClose&) {
      return std::nullopt;
    } catch (const ConfigError&) {
      return std::nullopt;
    }
    const Domain& ref = *inputs_.front().domain;
    if (d->n_outer != ref.n_outer) return std::nullopt;
    const DirichletSolver solver(assemble_laplacian(d));
    std::vector<CVec> out;
    for (const auto& f : inputs_) {
      BoundaryTrace g{d, d->gamma1, f.values};
      const Field v = harmonic_lift(solver, g);
      out.push_back(normal_derivative(v, d->gamma2).values);
    }
    return out;
  }

 private:
  DomainConfig base_;
  std::vector<BoundaryTrace> inputs_;
};

namespace detail {

/// Derivative-free simplex minimization of a 3-parameter function.
inline std::array<double, 3> nelder_mead(const std::function<double(const std::array<double, 3>&)>& f, std::array<double, 3> x0,
                                         std::array<double, 3> step, int max_iter, double tol) {
  using P = std::array<double, 3>;
  std::array<P, 4> s;
  std::array<double, 4> v;
  s[0] = x0;
  for (int i = 0; i < 3; ++i) {
    s[i + 1] = x0;
    s[i + 1][i] += step[i];
  }
  for (int i = 0; i < 4; ++i) v[i] = f(s[i]);
  auto comb = [](const P& a, const P& b, double t) {
    P r;
    for (int i = 0; i < 3; ++i) r[i] = a[i] + t * (b[i] - a[i]);
    return r;
  };
  for (int it = 0; it < max_iter; ++it) {
    std::array<int, 4> idx{0, 1, 2, 3};
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return v[a] < v[b]; });
    std::array<P, 4> s2;
    std::array<double, 4> v2;
    for (int i = 0; i < 4; ++i) {
      s2[i] = s[idx[i]];
      v2[i] = v[idx[i]];
    }
    s = s2;
    v = v2;
    double size = 0.0;
    for (int i = 1; i < 4; ++i)
      for (int k = 0; k < 3; ++k) size = std::max(size, std::abs(s[i][k] - s[0][k]));
    if (size < 1e-6 || std::abs(v[3] - v[0]) <= tol * std::max(1e-300, std::abs(v[0]))) break;
    P c{0, 0, 0};
    for (int i = 0; i < 3; ++i)
      for (int k = 0; k < 3; ++k) c[k] += s[i][k] / 3.0;
    const P xr = comb(c, s[3], -1.0);
    const double fr = f(xr);
    if (fr < v[0]) {
      const P xe = comb(c, s[3], -2.0);
      const double fe = f(xe);
      if (fe < fr) {
        s[3] = xe;
        v[3] = fe;
      } else {
        s[3] = xr;
        v[3] = fr;
      }
    } else if (fr < v[2]) {
      s[3] = xr;
      v[3] = fr;
    } else {
      const P xc = fr < v[3] ? comb(c, xr, 0.5) : comb(c, s[3], 0.5);
      const double fc = f(xc);
      if (fc < std::min(fr, v[3])) {
        s[3] = xc;
        v[3] = fc;
      } else {
        for (int i = 1; i < 4; ++i) {
          s[i] = comb(s[0], s[i], 0.5);
          v[i] = f(s[i]);
        }
      }
    }
  }
  int best = 0;
  for (int i = 1; i < 4; ++i)
    if (v[i] < v[best]) best = i;
  return s[best];
}

}  // namespace detail

/// Fits a circle to first-linearization records by grid search and simplex refinement of
/// the boundary-weighted L2 misfit over Gamma2.
inline ObstacleReport recover_obstacle(const std::vector<LinearizedDtNRecord>& records, const ObstacleSearch& search) {
  if (records.empty()) throw Error("recover_obstacle needs records");
  std::vector<BoundaryTrace> inputs;
  for (const auto& r : records) {
    if (r.inputs.size() != 1) throw Error("recover_obstacle needs first linearizations");
    inputs.push_back(r.inputs[0]);
  }
  const Domain& d = *records[0].output.domain;
  const ObstacleModel model(d.config, inputs);
  ObstacleReport rep;
  double noise = 0.0;
  for (const auto& r : records) {
    double s = 0.0;
    for (int b = 0; b < d.n_outer; ++b)
      if (d.gamma2[b]) {
        s += d.boundary_weights[b] * std::norm(r.output.values[b]);
        noise += d.boundary_weights[b] * r.error_estimate * r.error_estimate;
      }
    rep.data_scale += s;
  }
  rep.noise_level = noise;

  const double inf = std::numeric_limits<double>::infinity();
  auto misfit = [&](const CircleParams& c) -> double {
    ++rep.evaluations;
    if (c.radius < search.r_min - 1e-12 || c.radius > search.r_max + 1e-12) return inf;
    const auto pred = model.predict(c);
    if (!pred) return inf;
    double s = 0.0;
    for (size_t k = 0; k < records.size(); ++k)
      for (int b = 0; b < d.n_outer; ++b)
        if (d.gamma2[b]) s += d.boundary_weights[b] * std::norm((*pred)[k][b] - records[k].output.values[b]);
    return s;
  };

  double best = inf;
  CircleParams best_c{{0, 0}, search.r_min};
  double worst = 0.0;
  const int gc = std::max(search.grid_center, 1), gr = std::max(search.grid_radius, 1);
  auto lerp = [](double a, double b, int i, int n) { return n == 1 ? 0.5 * (a + b) : a + (b - a) * i / (n - 1); };
  for (int ix = 0; ix < gc; ++ix)
    for (int iy = 0; iy < gc; ++iy)
      for (int ir = 0; ir < gr; ++ir) {
        const CircleParams c{{lerp(search.center_min[0], search.center_max[0], ix, gc), lerp(search.center_min[1], search.center_max[1], iy, gc)},
                             lerp(search.r_min, search.r_max, ir, gr)};
        const double v = misfit(c);
        rep.landscape.push_back({c.center[0], c.center[1], c.radius, v});
        if (std::isfinite(v)) worst = std::max(worst, v);
        if (v < best) {
          best = v;
          best_c = c;
        }
      }
  if (!std::isfinite(best)) throw Error("no admissible obstacle candidate in the search box");

  const std::array<double, 3> step{0.5 * (search.center_max[0] - search.center_min[0]) / std::max(gc - 1, 1),
                                   0.5 * (search.center_max[1] - search.center_min[1]) / std::max(gc - 1, 1),
                                   0.5 * (search.r_max - search.r_min) / std::max(gr - 1, 1)};
  const auto x = detail::nelder_mead(
      [&](const std::array<double, 3>& p) {
        const double v = misfit({{p[0], p[1]}, p[2]});
        rep.landscape.push_back({p[0], p[1], p[2], v});
        return v;
      },
      {best_c.center[0], best_c.center[1], best_c.radius}, step, search.max_iterations, search.tol);
  const CircleParams refined{{x[0], x[1]}, x[2]};
  const double rv = misfit(refined);
  if (rv < best) {
    best = rv;
    best_c = refined;
  }
  rep.best = best_c;
  rep.misfit = best;

  const double rspan = search.r_max - search.r_min;
  if (best_c.radius <= search.r_min + 1e-3 * rspan) {
    rep.non_identifiable = true;
    rep.reason = "radius at the lower search bound";
  } else if (worst - best <= std::max(rep.noise_level, 1e-14 * rep.data_scale)) {
    rep.non_identifiable = true;
    rep.reason = "misfit landscape flat below the noise level";
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Density certification

struct DensityReport {
  std::vector<int> N;
  std::vector<int> n_columns;
  std::vector<int> rank;
  std::vector<double> residual;        // relative weighted L2 projection residual
  std::vector<double> gram_condition;  // of the columns kept up to N
  bool monotone = true;
  bool gram_ill_conditioned = false;
  double ill_threshold = 1e12;
};

/// Projection residual of `target` onto span{grad u_i . grad u_j : i <= j <= N} for each N,
/// in the interior-quadrature-weighted L2 inner product. `basis` holds real harmonic fields.
inline DensityReport density_check(const Discretization& disc, const std::vector<Field>& basis, const Field& target,
                                   const std::vector<int>& N_list, double ill_threshold = 1e12) {
  const Domain& d = disc.dom();
  const int ni = d.n_interior;
  for (size_t k = 1; k < N_list.size(); ++k)
    if (N_list[k] < N_list[k - 1]) throw Error("N_list must be non-decreasing");
  if (!N_list.empty() && N_list.back() > static_cast<int>(basis.size())) throw Error("N_list exceeds the basis size");
  Eigen::VectorXd sw(ni);
  for (int i = 0; i < ni; ++i) sw[i] = std::sqrt(d.quad_weights[i]);
  std::vector<Eigen::VectorXd> gx, gy;
  for (const auto& f : basis) {
    if (f.values.imag().cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, f.sup_norm())) throw Error("density basis must be real");
    gx.push_back(disc.gradient.dx * f.values.real());
    gy.push_back(disc.gradient.dy * f.values.real());
  }
  Eigen::VectorXd t = target.values.real().head(ni).cwiseProduct(sw);
  const double tnorm = t.norm();
  if (!(tnorm > 0)) throw Error("density target is zero");

  DensityReport rep;
  rep.ill_threshold = ill_threshold;
  std::vector<Eigen::VectorXd> Q;
  std::vector<Eigen::VectorXd> raw;  // scaled columns kept so far, for condition numbers
  Eigen::VectorXd r = t;
  int done = 0;
  for (int N : N_list) {
    for (int j = done; j < N; ++j) {
      for (int i = 0; i <= j; ++i) {
        Eigen::VectorXd c = (gx[i].cwiseProduct(gx[j]) + gy[i].cwiseProduct(gy[j])).cwiseProduct(sw);
        const double cn = c.norm();
        if (!(cn > 0)) continue;
        raw.push_back(c / cn);
        for (int pass = 0; pass < 2; ++pass)
          for (const auto& q : Q) c -= q.dot(c) * q;
        const double rn = c.norm();
        if (rn <= 1e-10 * cn) continue;
        Q.push_back(c / rn);
        const Eigen::VectorXd& q = Q.back();
        r -= q.dot(r) * q;
      }
    }
    done = std::max(done, N);
    // reorthogonalize the residual against the whole basis
    for (const auto& q : Q) r -= q.dot(r) * q;
    const double res = r.norm() / tnorm;
    rep.N.push_back(N);
    rep.n_columns.push_back(static_cast<int>(raw.size()));
    rep.rank.push_back(static_cast<int>(Q.size()));
    if (!rep.residual.empty() && res > rep.residual.back() * (1.0 + 1e-12) + 1e-15) rep.monotone = false;
    rep.residual.push_back(res);
    double cond = 1.0;
    if (!raw.empty()) {
      Eigen::MatrixXd M(ni, raw.size());
      for (size_t k = 0; k < raw.size(); ++k) M.col(k) = raw[k];
      Eigen::BDCSVD<Eigen::MatrixXd> svd(M);
      const auto& s = svd.singularValues();
      const double smin = s[s.size() - 1];
      cond = smin > 0 ? (s[0] / smin) * (s[0] / smin) : std::numeric_limits<double>::infinity();
    }
    rep.gram_condition.push_back(cond);
    if (cond > ill_threshold) rep.gram_ill_conditioned = true;
  }
  return rep;
}

/// Real Gamma~-vanishing harmonic basis: corrected polynomials of degree 1..max_degree (and the
/// corrected constant when Gamma~ is non-empty) followed by real and imaginary parts of corrected
/// exponentials.
inline std::vector<Field> density_basis(const Discretization& disc, const Mask& gamma_tilde, int max_degree, int n_cgo,
                                        double cgo_freq = 3.0) {
  const Domain& d = disc.dom();
  const bool full = count(gamma_tilde) == 0;
  const Mask patch = complement(gamma_tilde);
  const double taper = full ? 0.0 : default_taper(d, patch);
  std::vector<Field> out;
  for (int k = full ? 1 : 0; k <= max_degree; ++k)
    for (Parity p : {Parity::re, Parity::im}) {
      if (k == 0 && p == Parity::im) continue;
      out.push_back(full ? harmonic_polynomial(disc.domain, k, p).field : corrected_polynomial(disc, k, p, gamma_tilde, taper).field);
    }
  for (int j = 0; j < n_cgo; ++j) {
    const double ang = two_pi * j / std::max(n_cgo, 1);
    const IsotropicDirection dir = make_isotropic({cgo_freq * std::cos(ang), cgo_freq * std::sin(ang)}, 1);
    const Field f = full ? cgo_raw(disc.domain, dir).field : cgo_corrected(disc, dir, gamma_tilde, taper).field;
    const double s = f.sup_norm();
    out.push_back(Field{disc.domain, CVec(f.values.real().cast<cplx>() / s)});
    out.push_back(Field{disc.domain, CVec(f.values.imag().cast<cplx>() / s)});
  }
  return out;
}

}  // namespace nlinv
