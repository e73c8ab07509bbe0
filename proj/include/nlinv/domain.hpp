#pragma once

/**
 * @file domain.hpp
 * @brief Discretized 2-D domains: the unit disk or the unit square on a uniform
 * Cartesian grid, with boundary nodes placed where grid lines cut the boundary.
 *
 * Node numbering is global and fixed per domain:
 *   [0, n_interior)                          interior unknowns
 *   [n_interior, n_interior + n_outer)       nodes on the outer boundary, sorted by arc parameter
 *   [n_interior + n_outer, n_nodes)          nodes on the obstacle boundary (if any)
 */

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "nlinv/errors.hpp"

namespace nlinv {

using cplx = std::complex<double>;
using CVec = Eigen::VectorXcd;
using RVec = Eigen::VectorXd;
using Point = std::array<double, 2>;
using RowSparse = Eigen::SparseMatrix<double, Eigen::RowMajor>;

constexpr double two_pi = 2.0 * std::numbers::pi;

enum class Shape { unit_disk, unit_square };

/// Half-open interval [start, end) of the boundary parameter. On the disk the
/// parameter is the polar angle; on the square it is counter-clockwise arclength
/// starting at the origin (bottom edge is [0,1), right [1,2), top [2,3), left [3,4)).
struct Arc {
  double start = 0.0;
  double end = two_pi;
};

struct CircleParams {
  Point center{0.0, 0.0};
  double radius = 0.0;
};

struct DomainConfig {
  Shape shape = Shape::unit_disk;
  int n_cells_per_side = 64;
  Arc gamma1{};
  Arc gamma2{};
  std::optional<CircleParams> obstacle;
};

inline double boundary_period(Shape s) { return s == Shape::unit_disk ? two_pi : 4.0; }

/// Neighbour of an interior node along one grid direction. `node` is a global
/// node id (interior or boundary); `dist` is the distance to it.
struct Link {
  int node = -1;
  double dist = 0.0;
};

enum Direction : int { east = 0, west = 1, north = 2, south = 3 };

/// Per-node flags over the outer boundary nodes (indexed by local boundary index).
using Mask = std::vector<char>;

class Domain {
 public:
  DomainConfig config;
  double h = 0.0;
  Point origin{0.0, 0.0};

  std::vector<Point> points;
  int n_interior = 0;
  int n_outer = 0;
  int n_obstacle = 0;

  std::vector<std::array<int, 2>> grid_index;  // interior nodes only
  std::vector<int> grid_to_interior;           // (n+1)^2, -1 when not interior
  std::vector<std::array<Link, 4>> links;      // interior nodes only

  std::vector<double> boundary_param;  // outer boundary
  std::vector<Point> normals;          // outer boundary, outward unit
  std::vector<double> boundary_weights;

  Mask gamma1;
  Mask gamma2;

  std::vector<double> quad_weights;  // interior nodes

  RowSparse dn_second;  // outer boundary x all nodes, quadratic fit
  RowSparse dn_first;   // outer boundary x all nodes, linear fit

  int n_nodes() const { return n_interior + n_outer + n_obstacle; }
  int n_boundary() const { return n_outer + n_obstacle; }
  int outer_node(int b) const { return n_interior + b; }
  int obstacle_node(int k) const { return n_interior + n_outer + k; }
  bool has_obstacle() const { return config.obstacle.has_value(); }
  int grid_points_per_side() const { return config.n_cells_per_side + 1; }

  /// Complement of the accessible patch Gamma1 u Gamma2.
  Mask gamma_tilde() const;

  /// Canonical text form used for hashing and manifests.
  std::string signature() const;
};

using DomainPtr = std::shared_ptr<const Domain>;

/// Complex grid function on all nodes of a domain.
struct Field {
  DomainPtr domain;
  CVec values;

  static Field zeros(DomainPtr d) {
    Field f{d, CVec::Zero(d->n_nodes())};
    return f;
  }
  double sup_norm() const { return values.size() ? values.cwiseAbs().maxCoeff() : 0.0; }
  bool finite() const { return values.allFinite(); }
};

/// Boundary data over the outer boundary nodes. Entries outside `mask` are zero.
struct BoundaryTrace {
  DomainPtr domain;
  Mask mask;
  CVec values;

  double sup_norm() const { return values.size() ? values.cwiseAbs().maxCoeff() : 0.0; }
};

// ---------------------------------------------------------------------------
// Mask helpers

inline int count(const Mask& m) { return static_cast<int>(std::count(m.begin(), m.end(), 1)); }

inline Mask complement(const Mask& m) {
  Mask out(m.size());
  for (size_t i = 0; i < m.size(); ++i) out[i] = m[i] ? 0 : 1;
  return out;
}

inline Mask mask_union(const Mask& a, const Mask& b) {
  Mask out(a.size());
  for (size_t i = 0; i < a.size(); ++i) out[i] = (a[i] || b[i]) ? 1 : 0;
  return out;
}

inline Mask full_mask(const Domain& d) { return Mask(d.n_outer, 1); }

inline bool arc_is_full(const Arc& a, Shape s) {
  return a.end - a.start >= boundary_period(s) * (1.0 - 1e-14);
}

inline bool arc_contains(const Arc& a, Shape s, double param) {
  const double period = boundary_period(s);
  const double len = a.end - a.start;
  if (len >= period * (1.0 - 1e-14)) return true;
  double t = std::fmod(param - a.start, period);
  if (t < 0) t += period;
  if (t >= period) t -= period;
  return t < len;
}

inline Mask arc_mask(const Domain& d, const Arc& a) {
  Mask m(d.n_outer, 0);
  for (int b = 0; b < d.n_outer; ++b) m[b] = arc_contains(a, d.config.shape, d.boundary_param[b]) ? 1 : 0;
  return m;
}

inline Mask Domain::gamma_tilde() const { return complement(mask_union(gamma1, gamma2)); }

inline std::string Domain::signature() const {
  std::ostringstream os;
  os.precision(17);
  os << (config.shape == Shape::unit_disk ? "unit_disk" : "unit_square") << '|' << config.n_cells_per_side << '|'
     << config.gamma1.start << ',' << config.gamma1.end << '|' << config.gamma2.start << ',' << config.gamma2.end;
  if (config.obstacle) {
    os << "|obstacle:" << config.obstacle->center[0] << ',' << config.obstacle->center[1] << ','
       << config.obstacle->radius;
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Construction

namespace detail {

inline double outer_distance(Shape s, const Point& p) {
  if (s == Shape::unit_disk) return 1.0 - std::hypot(p[0], p[1]);
  return std::min({p[0], 1.0 - p[0], p[1], 1.0 - p[1]});
}

inline double obstacle_distance(const std::optional<CircleParams>& ob, const Point& p) {
  if (!ob) return std::numeric_limits<double>::infinity();
  return std::hypot(p[0] - ob->center[0], p[1] - ob->center[1]) - ob->radius;
}

inline bool inside_open(const DomainConfig& cfg, const Point& p, double tol) {
  return outer_distance(cfg.shape, p) > tol && obstacle_distance(cfg.obstacle, p) > tol;
}

inline double square_param(const Point& p) {
  constexpr double eps = 1e-12;
  const double x = p[0], y = p[1];
  if (std::abs(y) < eps && x < 1.0 - eps) return std::max(0.0, x);
  if (std::abs(x - 1.0) < eps && y < 1.0 - eps) return 1.0 + std::max(0.0, y);
  if (std::abs(y - 1.0) < eps && x > eps) return 2.0 + (1.0 - x);
  return 3.0 + (1.0 - y);
}

inline Point square_normal(const Point& p) {
  constexpr double eps = 1e-12;
  double nx = 0, ny = 0;
  if (std::abs(p[0]) < eps) nx -= 1;
  if (std::abs(p[0] - 1.0) < eps) nx += 1;
  if (std::abs(p[1]) < eps) ny -= 1;
  if (std::abs(p[1] - 1.0) < eps) ny += 1;
  const double len = std::hypot(nx, ny);
  return {nx / len, ny / len};
}

inline std::tuple<long long, long long> quantize(const Point& p) {
  return {std::llround(p[0] * 1e9), std::llround(p[1] * 1e9)};
}

/// Distance t in (0, h] from p along unit axis direction (dx,dy) to the first boundary
/// crossing, or +inf when the segment of length h stays inside. `kind` = 0 outer, 1 obstacle.
inline double first_crossing(const DomainConfig& cfg, const Point& p, double dx, double dy, double h, int& kind) {
  double best = std::numeric_limits<double>::infinity();
  kind = -1;
  if (cfg.shape == Shape::unit_disk) {
    const double b = p[0] * dx + p[1] * dy;
    const double c = p[0] * p[0] + p[1] * p[1] - 1.0;
    double disc = b * b - c;
    if (disc < 0 && disc > -1e-12) disc = 0.0;  // tangent up to rounding
    if (disc >= 0) {
      const double t = -b + std::sqrt(disc);
      if (t > 0 && t <= h * (1.0 + 1e-10)) {
        best = std::min(t, h);
        kind = 0;
      }
    }
  } else {
    double t = std::numeric_limits<double>::infinity();
    if (dx > 0) t = 1.0 - p[0];
    if (dx < 0) t = p[0];
    if (dy > 0) t = 1.0 - p[1];
    if (dy < 0) t = p[1];
    if (t > 0 && t <= h * (1.0 + 1e-10)) {
      best = std::min(t, h);
      kind = 0;
    }
  }
  if (cfg.obstacle) {
    const auto& ob = *cfg.obstacle;
    const double px = p[0] - ob.center[0], py = p[1] - ob.center[1];
    const double b = px * dx + py * dy;
    const double c = px * px + py * py - ob.radius * ob.radius;
    double disc = b * b - c;
    if (disc < 0 && disc > -1e-12) disc = 0.0;
    if (disc >= 0) {
      const double t = -b - std::sqrt(disc);
      if (t > 0 && t <= h * (1.0 + 1e-10) && t < best) {
        best = std::min(t, h);
        kind = 1;
      }
    }
  }
  return best;
}

/// Least-squares polynomial fit of u - u(p) around boundary point p; returns the
/// coefficients mapping neighbour values to the outward normal derivative.
inline std::vector<std::pair<int, double>> normal_fit_row(const Domain& d, int self, const Point& p,
                                                          const Point& nu, int order,
                                                          const std::vector<int>& candidates) {
  const double radius = (order >= 2 ? 2.6 : 1.6) * d.h;
  std::vector<int> nodes;
  for (int k : candidates) {
    if (k == self) continue;
    const Point& q = d.points[k];
    const double r = std::hypot(q[0] - p[0], q[1] - p[1]);
    if (r <= radius && r > 1e-9 * d.h) nodes.push_back(k);
  }
  const int cols = order >= 2 ? 5 : 2;
  if (static_cast<int>(nodes.size()) < cols + 1) throw Error("normal derivative stencil has too few nodes");
  Eigen::MatrixXd M(nodes.size(), cols);
  for (size_t r = 0; r < nodes.size(); ++r) {
    const double x = (d.points[nodes[r]][0] - p[0]) / d.h;
    const double y = (d.points[nodes[r]][1] - p[1]) / d.h;
    M(r, 0) = x;
    M(r, 1) = y;
    if (order >= 2) {
      M(r, 2) = x * x;
      M(r, 3) = x * y;
      M(r, 4) = y * y;
    }
  }
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(M);
  const Eigen::MatrixXd pinv = cod.pseudoInverse();
  std::vector<std::pair<int, double>> row;
  double sum = 0.0;
  for (size_t r = 0; r < nodes.size(); ++r) {
    const double a = (nu[0] * pinv(0, r) + nu[1] * pinv(1, r)) / d.h;
    row.emplace_back(nodes[r], a);
    sum += a;
  }
  row.emplace_back(self, -sum);
  return row;
}

}  // namespace detail

inline void validate(const DomainConfig& cfg) {
  if (cfg.n_cells_per_side < 8) throw ConfigError("n_cells_per_side must be at least 8");
  const double period = boundary_period(cfg.shape);
  for (const Arc* a : {&cfg.gamma1, &cfg.gamma2}) {
    if (!(a->end - a->start > 0.0)) throw EmptyPatch("boundary arc must have positive length");
    if (a->end - a->start > period * (1.0 + 1e-12)) throw ConfigError("boundary arc longer than the boundary");
  }
  if (cfg.obstacle) {
    const auto& ob = *cfg.obstacle;
    if (!(ob.radius > 0)) throw ConfigError("obstacle radius must be positive");
    const double h = (cfg.shape == Shape::unit_disk ? 2.0 : 1.0) / cfg.n_cells_per_side;
    const double clearance = detail::outer_distance(cfg.shape, ob.center) - ob.radius;
    if (clearance < 4.0 * h) {
      std::ostringstream os;
      os << "obstacle clearance " << clearance << " is below 4 grid cells (" << 4.0 * h << ")";
      throw ObstacleTooClose(os.str());
    }
  }
}

/// Builds the discretization described by `cfg`.
inline DomainPtr build_domain(const DomainConfig& cfg) {
  validate(cfg);
  auto dom = std::make_shared<Domain>();
  Domain& d = *dom;
  d.config = cfg;
  const int n = cfg.n_cells_per_side;
  const int np = n + 1;
  if (cfg.shape == Shape::unit_disk) {
    d.h = 2.0 / n;
    d.origin = {-1.0, -1.0};
  } else {
    d.h = 1.0 / n;
    d.origin = {0.0, 0.0};
  }
  const double h = d.h;
  auto grid_point = [&](int i, int j) { return Point{d.origin[0] + i * h, d.origin[1] + j * h}; };
  const double tol = 1e-12;

  // interior nodes
  d.grid_to_interior.assign(static_cast<size_t>(np) * np, -1);
  for (int j = 0; j < np; ++j) {
    for (int i = 0; i < np; ++i) {
      const Point p = grid_point(i, j);
      if (detail::inside_open(cfg, p, tol)) {
        d.grid_to_interior[static_cast<size_t>(j) * np + i] = static_cast<int>(d.points.size());
        d.points.push_back(p);
        d.grid_index.push_back({i, j});
      }
    }
  }
  d.n_interior = static_cast<int>(d.points.size());
  if (d.n_interior == 0) throw Error("domain has no interior nodes");

  // boundary nodes, keyed by quantized position
  struct Pending {
    Point p;
    int kind;
  };
  std::map<std::tuple<long long, long long, int>, int> key_to_pending;
  std::vector<Pending> pending;
  auto intern = [&](const Point& p, int kind) {
    auto [qx, qy] = detail::quantize(p);
    auto key = std::make_tuple(qx, qy, kind);
    auto it = key_to_pending.find(key);
    if (it != key_to_pending.end()) return it->second;
    const int id = static_cast<int>(pending.size());
    pending.push_back({p, kind});
    key_to_pending.emplace(key, id);
    return id;
  };
  if (cfg.shape == Shape::unit_square) {
    for (int k = 0; k < n; ++k) {
      intern(grid_point(k, 0), 0);
      intern(grid_point(n, k), 0);
      intern(grid_point(n - k, n), 0);
      intern(grid_point(0, n - k), 0);
    }
  }

  static constexpr int di[4] = {1, -1, 0, 0};
  static constexpr int dj[4] = {0, 0, 1, -1};
  // links to pending boundary ids are stored as -(id+1) until ids are final
  d.links.resize(d.n_interior);
  for (int k = 0; k < d.n_interior; ++k) {
    const auto [i, j] = d.grid_index[k];
    const Point p = d.points[k];
    for (int dir = 0; dir < 4; ++dir) {
      const int ni = i + di[dir], nj = j + dj[dir];
      int nb_interior = -1;
      if (ni >= 0 && nj >= 0 && ni < np && nj < np) nb_interior = d.grid_to_interior[static_cast<size_t>(nj) * np + ni];
      int kind = -1;
      const double t = detail::first_crossing(cfg, p, di[dir], dj[dir], h, kind);
      if (nb_interior >= 0 && !(t < h * (1.0 - 1e-10))) {
        d.links[k][dir] = Link{nb_interior, h};
        continue;
      }
      if (kind < 0) throw Error("interior node with non-interior neighbour but no boundary crossing");
      const Point q{p[0] + t * di[dir], p[1] + t * dj[dir]};
      const int id = intern(q, kind);
      d.links[k][dir] = Link{-(id + 1), t};
    }
  }

  // order boundary nodes
  std::vector<int> outer_ids, obstacle_ids;
  for (int id = 0; id < static_cast<int>(pending.size()); ++id) (pending[id].kind == 0 ? outer_ids : obstacle_ids).push_back(id);
  auto outer_param = [&](const Point& p) {
    if (cfg.shape == Shape::unit_disk) {
      double a = std::atan2(p[1], p[0]);
      if (a < 0) a += two_pi;
      if (a >= two_pi) a -= two_pi;
      return a;
    }
    return detail::square_param(p);
  };
  std::sort(outer_ids.begin(), outer_ids.end(),
            [&](int a, int b) { return outer_param(pending[a].p) < outer_param(pending[b].p); });
  if (cfg.obstacle) {
    const auto c = cfg.obstacle->center;
    auto ang = [&](const Point& p) { return std::atan2(p[1] - c[1], p[0] - c[0]); };
    std::sort(obstacle_ids.begin(), obstacle_ids.end(), [&](int a, int b) { return ang(pending[a].p) < ang(pending[b].p); });
  }
  d.n_outer = static_cast<int>(outer_ids.size());
  d.n_obstacle = static_cast<int>(obstacle_ids.size());
  std::vector<int> final_id(pending.size());
  for (int b = 0; b < d.n_outer; ++b) {
    final_id[outer_ids[b]] = d.n_interior + b;
    const Point p = pending[outer_ids[b]].p;
    d.points.push_back(p);
    d.boundary_param.push_back(outer_param(p));
    if (cfg.shape == Shape::unit_disk) {
      const double r = std::hypot(p[0], p[1]);
      d.normals.push_back({p[0] / r, p[1] / r});
    } else {
      d.normals.push_back(detail::square_normal(p));
    }
  }
  for (int k = 0; k < d.n_obstacle; ++k) {
    final_id[obstacle_ids[k]] = d.n_interior + d.n_outer + k;
    d.points.push_back(pending[obstacle_ids[k]].p);
  }
  for (auto& row : d.links)
    for (auto& l : row)
      if (l.node < 0) l.node = final_id[-l.node - 1];

  // boundary quadrature: periodic trapezoid in the arc parameter
  const double period = boundary_period(cfg.shape);
  d.boundary_weights.assign(d.n_outer, 0.0);
  for (int b = 0; b < d.n_outer; ++b) {
    const int prev = (b + d.n_outer - 1) % d.n_outer;
    const int next = (b + 1) % d.n_outer;
    double gp = d.boundary_param[b] - d.boundary_param[prev];
    double gn = d.boundary_param[next] - d.boundary_param[b];
    if (gp <= 0) gp += period;
    if (gn <= 0) gn += period;
    if (d.n_outer == 1) gp = gn = period;
    d.boundary_weights[b] = 0.5 * (gp + gn);
  }

  d.gamma1 = arc_mask(d, cfg.gamma1);
  d.gamma2 = arc_mask(d, cfg.gamma2);
  if (count(d.gamma1) == 0) throw EmptyPatch("gamma1 contains no boundary nodes");
  if (count(d.gamma2) == 0) throw EmptyPatch("gamma2 contains no boundary nodes");

  // interior quadrature: dual cells, cut cells subsampled and assigned to the nearest interior node
  d.quad_weights.assign(d.n_interior, 0.0);
  constexpr int sub = 16;
  const double sub_area = (h / sub) * (h / sub);
  const double deep = h * 0.7072;
  for (int j = 0; j < np; ++j) {
    for (int i = 0; i < np; ++i) {
      const Point c = grid_point(i, j);
      const int self = d.grid_to_interior[static_cast<size_t>(j) * np + i];
      if (self >= 0 && detail::outer_distance(cfg.shape, c) > deep && detail::obstacle_distance(cfg.obstacle, c) > deep) {
        d.quad_weights[self] += h * h;
        continue;
      }
      if (detail::outer_distance(cfg.shape, c) < -deep) continue;
      for (int a = 0; a < sub; ++a) {
        for (int b = 0; b < sub; ++b) {
          const Point s{c[0] + ((a + 0.5) / sub - 0.5) * h, c[1] + ((b + 0.5) / sub - 0.5) * h};
          if (!detail::inside_open(cfg, s, 0.0)) continue;
          int best = -1;
          double best_r = std::numeric_limits<double>::infinity();
          for (int reach = 3; best < 0 && reach <= 12; reach *= 2) {
            for (int dj2 = -reach; dj2 <= reach; ++dj2) {
              for (int di2 = -reach; di2 <= reach; ++di2) {
                const int gi = i + di2, gj = j + dj2;
                if (gi < 0 || gj < 0 || gi >= np || gj >= np) continue;
                const int k = d.grid_to_interior[static_cast<size_t>(gj) * np + gi];
                if (k < 0) continue;
                const double r = std::hypot(d.points[k][0] - s[0], d.points[k][1] - s[1]);
                if (r < best_r) {
                  best_r = r;
                  best = k;
                }
              }
            }
          }
          if (best < 0) throw Error("quadrature sample without nearby interior node");
          d.quad_weights[best] += sub_area;
        }
      }
    }
  }

  // normal-derivative stencils on the outer boundary
  std::vector<Eigen::Triplet<double>> t2, t1;
  for (int b = 0; b < d.n_outer; ++b) {
    const int self = d.outer_node(b);
    const Point p = d.points[self];
    std::vector<int> cand;
    const int ci = static_cast<int>(std::lround((p[0] - d.origin[0]) / h));
    const int cj = static_cast<int>(std::lround((p[1] - d.origin[1]) / h));
    for (int dj2 = -4; dj2 <= 4; ++dj2)
      for (int di2 = -4; di2 <= 4; ++di2) {
        const int gi = ci + di2, gj = cj + dj2;
        if (gi < 0 || gj < 0 || gi >= np || gj >= np) continue;
        const int k = d.grid_to_interior[static_cast<size_t>(gj) * np + gi];
        if (k >= 0) cand.push_back(k);
      }
    for (int k = d.n_interior; k < d.n_nodes(); ++k) {
      if (std::abs(d.points[k][0] - p[0]) < 3 * h && std::abs(d.points[k][1] - p[1]) < 3 * h) cand.push_back(k);
    }
    for (auto [k, a] : detail::normal_fit_row(d, self, p, d.normals[b], 2, cand)) t2.emplace_back(b, k, a);
    for (auto [k, a] : detail::normal_fit_row(d, self, p, d.normals[b], 1, cand)) t1.emplace_back(b, k, a);
  }
  d.dn_second.resize(d.n_outer, d.n_nodes());
  d.dn_second.setFromTriplets(t2.begin(), t2.end());
  d.dn_first.resize(d.n_outer, d.n_nodes());
  d.dn_first.setFromTriplets(t1.begin(), t1.end());
  return dom;
}

// ---------------------------------------------------------------------------
// Operations on fields

/// Outward normal derivative on the nodes of `patch`; zero elsewhere. `order` 2 is the
/// production one-sided quadratic fit, order 1 the linear companion used for error estimates.
inline BoundaryTrace normal_derivative(const Field& u, const Mask& patch, int order = 2) {
  const Domain& d = *u.domain;
  const CVec all = (order >= 2 ? d.dn_second : d.dn_first).cast<cplx>() * u.values;
  BoundaryTrace out{u.domain, patch, CVec::Zero(d.n_outer)};
  for (int b = 0; b < d.n_outer; ++b)
    if (patch[b]) out.values[b] = all[b];
  if (!out.values.allFinite()) throw Error("normal derivative produced non-finite values");
  return out;
}

/// Quadrature of interior-node values.
inline cplx integrate_interior(const Domain& d, const CVec& values) {
  cplx s = 0.0;
  for (int i = 0; i < d.n_interior; ++i) s += d.quad_weights[i] * values[i];
  return s;
}

inline cplx integrate_interior(const Field& f) { return integrate_interior(*f.domain, f.values); }

/// Boundary quadrature of per-boundary-node values restricted to `patch`.
inline cplx integrate_boundary(const Domain& d, const CVec& boundary_values, const Mask& patch) {
  cplx s = 0.0;
  for (int b = 0; b < d.n_outer; ++b)
    if (patch[b]) s += d.boundary_weights[b] * boundary_values[b];
  return s;
}

/// Samples an analytic function on every node.
template <class F>
Field sample(DomainPtr d, F&& fn) {
  Field f = Field::zeros(d);
  for (int k = 0; k < d->n_nodes(); ++k) f.values[k] = fn(d->points[k][0], d->points[k][1]);
  return f;
}

/// Samples an analytic function on the outer boundary nodes of `patch`.
template <class F>
BoundaryTrace sample_trace(DomainPtr d, const Mask& patch, F&& fn) {
  BoundaryTrace t{d, patch, CVec::Zero(d->n_outer)};
  for (int b = 0; b < d->n_outer; ++b)
    if (patch[b]) t.values[b] = fn(d->points[d->outer_node(b)][0], d->points[d->outer_node(b)][1]);
  return t;
}

/// Restriction of a field to the outer boundary.
inline BoundaryTrace trace_of(const Field& u, const Mask& patch) {
  const Domain& d = *u.domain;
  BoundaryTrace t{u.domain, patch, CVec::Zero(d.n_outer)};
  for (int b = 0; b < d.n_outer; ++b)
    if (patch[b]) t.values[b] = u.values[d.outer_node(b)];
  return t;
}

}  // namespace nlinv
