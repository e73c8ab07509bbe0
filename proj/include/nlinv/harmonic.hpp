#pragma once

/**
 * @file harmonic.hpp
 * @brief Harmonic test functions: harmonic polynomials, complex exponentials
 * exp(-i x.zeta / h) with zeta on the isotropic cone zeta.zeta = 0, and their
 * correction to vanish on the inaccessible boundary part.
 */

#include <array>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>

#include "nlinv/semilinear.hpp"

namespace nlinv {

using CVec2 = std::array<cplx, 2>;

/// Direction on the isotropic cone p(zeta) = zeta_1^2 + zeta_2^2 = 0, with the scale h.
struct IsotropicDirection {
  CVec2 zeta{cplx(0.0), cplx(0.0)};
  double h_param = 1.0;

  double norm() const { return std::sqrt(std::norm(zeta[0]) + std::norm(zeta[1])); }
  double cone_residual() const { return std::abs(zeta[0] * zeta[0] + zeta[1] * zeta[1]); }
};

enum class TestFnKind { polynomial, cgo_raw, cgo_corrected, corrected_polynomial, lift };
enum class Parity { re, im };

struct HarmonicTestFn {
  Field field;
  TestFnKind kind = TestFnKind::polynomial;
  int degree = -1;
  Parity parity = Parity::re;
  std::optional<IsotropicDirection> direction;
  Mask trace_support;
  std::string id;
};

// ---------------------------------------------------------------------------
// Polynomials

inline cplx z_power(double x, double y, int k) { return std::pow(cplx(x, y), k); }

/// Re (x+iy)^k or Im (x+iy)^k, centred at the domain centre for the square.
inline HarmonicTestFn harmonic_polynomial(DomainPtr d, int degree, Parity parity) {
  if (degree < 0) throw Error("harmonic polynomial degree must be non-negative");
  const Point c = d->config.shape == Shape::unit_disk ? Point{0.0, 0.0} : Point{0.5, 0.5};
  HarmonicTestFn fn;
  fn.field = sample(d, [&](double x, double y) {
    const cplx z = z_power(x - c[0], y - c[1], degree);
    return cplx(parity == Parity::re ? z.real() : z.imag());
  });
  fn.kind = TestFnKind::polynomial;
  fn.degree = degree;
  fn.parity = parity;
  fn.trace_support = full_mask(*d);
  fn.id = std::string(parity == Parity::re ? "re" : "im") + "_z" + std::to_string(degree);
  return fn;
}

// ---------------------------------------------------------------------------
// Isotropic cone

/// zeta = (|xi|/2)(e + i sign e_perp) with e = xi/|xi| and e_perp its rotation by +90 degrees.
inline IsotropicDirection make_isotropic(const Point& xi, int sign, double h_param = 1.0) {
  const double len = std::hypot(xi[0], xi[1]);
  if (!(len > 0)) throw ZeroFrequency("make_isotropic needs a nonzero frequency");
  if (sign != 1 && sign != -1) throw Error("sign must be +1 or -1");
  const double ex = xi[0] / len, ey = xi[1] / len;
  const double px = -ey, py = ex;
  const double s = static_cast<double>(sign);
  IsotropicDirection dir;
  dir.zeta = {0.5 * len * cplx(ex, s * px), 0.5 * len * cplx(ey, s * py)};
  dir.h_param = h_param;
  return dir;
}

struct FrequencySplit {
  IsotropicDirection zeta;
  IsotropicDirection eta;
  double c1 = 0.0;  // max(|zeta - a gamma|, |eta + a conj(gamma)|) / (a eps_split)
  bool imaginary_parts_ok = false;  // Im zeta_1 > a/2 and Im eta_1 > a/2
};

/// gamma = (i, 1).
inline CVec2 gamma_vector() { return {cplx(0.0, 1.0), cplx(1.0, 0.0)}; }

/// Writes z = zeta + eta with zeta, eta on the cone, zeta near a*gamma and eta near -a*conj(gamma).
/// In two dimensions the cone is the union of the lines t(1, -i) and t(1, i), so the split is
/// closed form: zeta = s(1, -i), eta = t(1, i) with s = (z1 + i z2)/2, t = (z1 - i z2)/2.
inline FrequencySplit split_frequency(const CVec2& z, double a, double eps_split = 0.1, double h_param = 1.0) {
  if (!(a > 0)) throw Error("split_frequency needs a > 0");
  const cplx I(0.0, 1.0);
  const double dist = std::sqrt(std::norm(z[0] - 2.0 * I * a) + std::norm(z[1]));
  if (!(dist < 2.0 * eps_split * a)) {
    std::ostringstream os;
    os << "|z - 2ia e1| = " << dist << " is not below 2 eps a = " << 2.0 * eps_split * a;
    throw OutsideNeighborhood(os.str());
  }
  const cplx s = 0.5 * (z[0] + I * z[1]);
  const cplx t = 0.5 * (z[0] - I * z[1]);
  FrequencySplit out;
  out.zeta.zeta = {s, -I * s};
  out.eta.zeta = {t, I * t};
  out.zeta.h_param = out.eta.h_param = h_param;
  const CVec2 g = gamma_vector();
  const double dz = std::sqrt(std::norm(out.zeta.zeta[0] - a * g[0]) + std::norm(out.zeta.zeta[1] - a * g[1]));
  const double de = std::sqrt(std::norm(out.eta.zeta[0] + a * std::conj(g[0])) +
                              std::norm(out.eta.zeta[1] + a * std::conj(g[1])));
  out.c1 = std::max(dz, de) / (a * eps_split);
  out.imaginary_parts_ok = out.zeta.zeta[0].imag() > a / 2 && out.eta.zeta[0].imag() > a / 2;
  return out;
}

// ---------------------------------------------------------------------------
// Boundary cutoffs

namespace detail {

inline double smooth_step(double t) {
  if (t <= 0) return 0.0;
  if (t >= 1) return 1.0;
  const double a = std::exp(-1.0 / t), b = std::exp(-1.0 / (1.0 - t));
  return a / (a + b);
}

}  // namespace detail

/// Cutoff chi on the outer boundary: 1 on `gamma_tilde`, decaying smoothly to 0 over an arc
/// parameter distance `taper` inside the complement. taper = 0 gives the sharp indicator.
inline RVec boundary_cutoff(const Domain& d, const Mask& gamma_tilde, double taper) {
  RVec chi = RVec::Zero(d.n_outer);
  if (count(gamma_tilde) == 0) return chi;
  const double period = boundary_period(d.config.shape);
  for (int b = 0; b < d.n_outer; ++b) {
    if (gamma_tilde[b]) {
      chi[b] = 1.0;
      continue;
    }
    if (taper <= 0) continue;
    double dist = std::numeric_limits<double>::infinity();
    for (int c = 0; c < d.n_outer; ++c) {
      if (!gamma_tilde[c]) continue;
      double g = std::abs(d.boundary_param[b] - d.boundary_param[c]);
      g = std::min(g, period - g);
      dist = std::min(dist, g);
    }
    chi[b] = 1.0 - detail::smooth_step(dist / taper);
  }
  return chi;
}

/// Smooth window supported in `patch`: 1 - cutoff of its complement.
inline RVec boundary_window(const Domain& d, const Mask& patch, double taper) {
  return RVec::Ones(d.n_outer) - boundary_cutoff(d, complement(patch), taper);
}

/// Default taper: a quarter of the shortest accessible arc.
inline double default_taper(const Domain& d, const Mask& patch) {
  const int total = count(patch);
  if (total == d.n_outer) return 0.0;
  double len = 0;
  for (int b = 0; b < d.n_outer; ++b)
    if (patch[b]) len += d.boundary_weights[b];
  return 0.25 * len;
}

// ---------------------------------------------------------------------------
// Complex geometric optics

inline double max_exponential_modulus(const Domain& d, const IsotropicDirection& dir) {
  double m = 0.0;
  for (const auto& p : d.points) {
    const double e = (p[0] * dir.zeta[0].imag() + p[1] * dir.zeta[1].imag()) / dir.h_param;
    m = std::max(m, e);
  }
  return std::exp(m);
}

/// exp(-i x.zeta / h) sampled on every node.
inline HarmonicTestFn cgo_raw(DomainPtr d, const IsotropicDirection& dir, double overflow_guard = 1e12) {
  if (dir.cone_residual() > 1e-12 * std::max(1.0, dir.norm() * dir.norm()))
    throw Error("direction is not on the isotropic cone");
  if (max_exponential_modulus(*d, dir) > overflow_guard) throw OverflowGuard("exp(-i x.zeta/h) exceeds the overflow guard");
  const cplx I(0.0, 1.0);
  HarmonicTestFn fn;
  fn.field = sample(d, [&](double x, double y) { return std::exp(-I * (x * dir.zeta[0] + y * dir.zeta[1]) / dir.h_param); });
  fn.kind = TestFnKind::cgo_raw;
  fn.direction = dir;
  fn.trace_support = full_mask(*d);
  std::ostringstream os;
  os.precision(6);
  os << "cgo(" << dir.zeta[0] << "," << dir.zeta[1] << ";h=" << dir.h_param << ")";
  fn.id = os.str();
  return fn;
}

/// raw + w, w discrete harmonic with trace -raw * chi, so the result vanishes on gamma_tilde.
inline HarmonicTestFn correct_to_vanish(const Discretization& disc, HarmonicTestFn raw, const Mask& gamma_tilde, double taper) {
  const Domain& d = disc.dom();
  const RVec chi = boundary_cutoff(d, gamma_tilde, taper);
  if (chi.isZero(0.0)) {
    raw.trace_support = complement(gamma_tilde);
    return raw;
  }
  BoundaryTrace wtrace{disc.domain, full_mask(d), CVec::Zero(d.n_outer)};
  for (int b = 0; b < d.n_outer; ++b) wtrace.values[b] = -raw.field.values[d.outer_node(b)] * chi[b];
  const Field w = harmonic_lift(*disc.solver, wtrace);
  raw.field.values.head(d.n_interior + d.n_outer) += w.values.head(d.n_interior + d.n_outer);
  raw.trace_support = complement(gamma_tilde);
  return raw;
}

inline HarmonicTestFn cgo_corrected(const Discretization& disc, const IsotropicDirection& dir, const Mask& gamma_tilde,
                                    double taper = 0.0, double overflow_guard = 1e12) {
  HarmonicTestFn fn = correct_to_vanish(disc, cgo_raw(disc.domain, dir, overflow_guard), gamma_tilde, taper);
  fn.kind = TestFnKind::cgo_corrected;
  return fn;
}

inline HarmonicTestFn corrected_polynomial(const Discretization& disc, int degree, Parity parity, const Mask& gamma_tilde,
                                           double taper) {
  HarmonicTestFn fn = correct_to_vanish(disc, harmonic_polynomial(disc.domain, degree, parity), gamma_tilde, taper);
  fn.kind = TestFnKind::corrected_polynomial;
  fn.id = "corr_" + fn.id;
  return fn;
}

/// Replaces a test function by the discrete harmonic lift of its trace on the outer boundary.
inline HarmonicTestFn discrete_lift(const Discretization& disc, HarmonicTestFn fn) {
  const Field lifted = harmonic_lift(*disc.solver, trace_of(fn.field, full_mask(disc.dom())));
  fn.field = lifted;
  return fn;
}

/// max |(-Lap_h) u| at interior nodes.
inline double discrete_laplacian_sup(const Discretization& disc, const Field& u) {
  return disc.laplacian.apply(u.values).cwiseAbs().maxCoeff();
}

}  // namespace nlinv
