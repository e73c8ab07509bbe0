#pragma once

/**
 * @file linearize.hpp
 * @brief Partial Dirichlet-to-Neumann simulation f -> d_nu u_f on Gamma2, its mixed
 * eps-derivatives by polarization with Richardson extrapolation, and the directly
 * solved chain of linearized equations used as the reference for those derivatives.
 */

#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "nlinv/semilinear.hpp"

namespace nlinv {

enum class StencilMode { forward_poly_fit, central };

struct EpsStencil {
  double base_eps = 1e-2;
  int richardson_levels = 2;
  StencilMode mode = StencilMode::central;
  double consistency_tol = 1e-2;  // relative disagreement of Richardson levels that is rejected
};

struct LinearizedDtNRecord {
  std::vector<int> multi_index;
  std::vector<std::string> input_ids;
  std::vector<BoundaryTrace> inputs;
  BoundaryTrace output;      // on Gamma2
  BoundaryTrace output_low;  // same derivative with the first-order normal stencil
  EpsStencil stencil;
  double error_estimate = 0.0;     // sup norm over Gamma2
  double roundoff_estimate = 0.0;  // part of error_estimate attributed to cancellation
  double signal_scale = 0.0;       // sup ||Lambda(corner)|| / (eps)
  bool cancellation_warning = false;
  int forward_solves = 0;
};

// ---------------------------------------------------------------------------
// Hashing and the flat-file solve cache

class Fnv1a {
 public:
  void bytes(const void* p, size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    for (size_t i = 0; i < n; ++i) {
      h_ ^= c[i];
      h_ *= 1099511628211ull;
    }
  }
  void str(const std::string& s) {
    bytes(s.data(), s.size());
    bytes("\0", 1);
  }
  void real(double v) { bytes(&v, sizeof v); }
  void vec(const RVec& v) { bytes(v.data(), sizeof(double) * v.size()); }
  void vec(const CVec& v) { bytes(v.data(), sizeof(cplx) * v.size()); }
  std::uint64_t value() const { return h_; }

 private:
  std::uint64_t h_ = 14695981039346656037ull;
};

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Normal derivatives of one forward solve on the whole outer boundary.
struct DtnSample {
  CVec hi;  // second-order stencil
  CVec lo;  // first-order stencil
  double newton_residual = 0.0;
};

class DtnCache {
 public:
  virtual ~DtnCache() = default;
  virtual std::optional<DtnSample> load(std::uint64_t key, int n) const = 0;
  virtual void store(std::uint64_t key, const DtnSample& s) = 0;
};

/// One CSV file per cached solve (`<key>.csv`): a `residual,<value>` line, then one line per
/// outer boundary node holding re,im of the second-order and the first-order normal derivative.
class FlatFileCache : public DtnCache {
 public:
  explicit FlatFileCache(std::filesystem::path dir) : dir_(std::move(dir)) { std::filesystem::create_directories(dir_); }

  std::optional<DtnSample> load(std::uint64_t key, int n) const override {
    std::ifstream in(dir_ / (hex64(key) + ".csv"));
    if (!in) return std::nullopt;
    DtnSample s{CVec(n), CVec(n), 0.0};
    std::string line;
    if (!std::getline(in, line) || std::sscanf(line.c_str(), "residual,%lf", &s.newton_residual) != 1) return std::nullopt;
    int i = 0;
    while (i < n && std::getline(in, line)) {
      double a, b, c, e;
      if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf", &a, &b, &c, &e) != 4) return std::nullopt;
      s.hi[i] = cplx(a, b);
      s.lo[i] = cplx(c, e);
      ++i;
    }
    if (i != n) return std::nullopt;
    return s;
  }

  void store(std::uint64_t key, const DtnSample& s) override {
    std::lock_guard<std::mutex> lock(mu_);
    const auto final_path = dir_ / (hex64(key) + ".csv");
    const auto tmp = dir_ / (hex64(key) + ".tmp");
    {
      std::ofstream out(tmp);
      char buf[128];
      std::snprintf(buf, sizeof buf, "residual,%.17g\n", s.newton_residual);
      out << buf;
      for (int i = 0; i < s.hi.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", s.hi[i].real(), s.hi[i].imag(), s.lo[i].real(),
                      s.lo[i].imag());
        out << buf;
      }
    }
    std::filesystem::rename(tmp, final_path);
  }

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  std::mutex mu_;
};

// ---------------------------------------------------------------------------

/// Set partitions of the bits of `set` into exactly `blocks` non-empty blocks.
inline void set_partitions(unsigned set, int blocks, std::vector<unsigned>& current,
                           const std::function<void(const std::vector<unsigned>&)>& visit) {
  if (set == 0) {
    if (static_cast<int>(current.size()) == blocks) visit(current);
    return;
  }
  if (static_cast<int>(current.size()) >= blocks) return;
  const unsigned lowest = set & (~set + 1);
  const unsigned rest = set & ~lowest;
  // the block containing the lowest element: lowest | (any subset of rest)
  for (unsigned sub = rest;; sub = (sub - 1) & rest) {
    current.push_back(lowest | sub);
    set_partitions(rest & ~sub, blocks, current, visit);
    current.pop_back();
    if (sub == 0) break;
  }
}

/// Solution of the linearized chain: u_S = d^{|S|} u / prod_{l in S} d eps_l at eps = 0 for
/// every non-empty subset S of the inputs, obtained by direct linear solves.
struct LinearizedChain {
  std::map<unsigned, Field> u;  // keyed by subset bitmask
  const Field& full() const { return u.rbegin()->second; }
};

inline LinearizedChain linearized_chain(const SemilinearSolver& s, const std::vector<BoundaryTrace>& inputs) {
  const Discretization& disc = s.disc();
  const Domain& d = disc.dom();
  const auto& c = s.coefficients();
  const int m = static_cast<int>(inputs.size());
  if (m < 1 || m > 8) throw Error("linearized chain supports 1..8 inputs");
  const int ni = d.n_interior;
  LinearizedChain chain;
  std::map<unsigned, CVec> gx, gy;
  auto grads = [&](unsigned S) {
    gx[S] = disc.gradient.dx.cast<cplx>() * chain.u.at(S).values;
    gy[S] = disc.gradient.dy.cast<cplx>() * chain.u.at(S).values;
  };
  for (int l = 0; l < m; ++l) {
    chain.u.emplace(1u << l, harmonic_lift(*disc.solver, inputs[l]));
    grads(1u << l);
  }
  const unsigned all = (1u << m) - 1;
  for (int size = 2; size <= m; ++size) {
    for (unsigned S = 1; S <= all; ++S) {
      if (std::popcount(S) != size) continue;
      CVec source = CVec::Zero(ni);
      for (unsigned T = (S - 1) & S; T != 0; T = (T - 1) & S) {
        const unsigned R = S & ~T;
        for (int i = 0; i < ni; ++i) source[i] += c.q[i] * (gx[T][i] * gx[R][i] + gy[T][i] * gy[R][i]);
      }
      for (int k = 3; k <= std::min(size, c.k_trunc()); ++k) {
        const RVec& Vk = c.V[k - 3];
        if (Vk.isZero(0.0)) continue;
        std::vector<unsigned> cur;
        set_partitions(S, k, cur, [&](const std::vector<unsigned>& blocks) {
          for (int i = 0; i < ni; ++i) {
            cplx p = Vk[i];
            for (unsigned B : blocks) p *= chain.u.at(B).values[i];
            source[i] += p;
          }
        });
      }
      chain.u.emplace(S, disc.solver->solve(-source, CVec::Zero(d.n_boundary())));
      grads(S);
    }
  }
  return chain;
}

// ---------------------------------------------------------------------------

/// Partial DtN map of the semilinear problem on the solver's domain (obstacle included).
class DtnSimulator {
 public:
  explicit DtnSimulator(SemilinearSolver solver, DtnCache* cache = nullptr)
      : solver_(std::move(solver)), cache_(cache) {
    Fnv1a h;
    h.str(solver_.disc().dom().signature());
    h.vec(solver_.coefficients().q);
    for (const auto& v : solver_.coefficients().V) h.vec(v);
    h.real(solver_.options().tol_residual);
    h.real(solver_.options().step_tol);
    model_hash_ = h.value();
  }

  const SemilinearSolver& solver() const { return solver_; }
  const Discretization& disc() const { return solver_.disc(); }
  const Domain& dom() const { return solver_.disc().dom(); }
  std::uint64_t model_hash() const { return model_hash_; }
  int solves() const { return solves_; }
  int cache_hits() const { return hits_; }

  std::uint64_t key(const BoundaryTrace& f) const {
    Fnv1a h;
    h.bytes(&model_hash_, sizeof model_hash_);
    h.vec(f.values);
    return h.value();
  }

  /// d_nu u_f on Gamma2 (zero elsewhere). f must vanish outside Gamma1.
  BoundaryTrace dtn(const BoundaryTrace& f) const { return restrict(dtn_outer(f).hi); }

  /// Second- and first-order normal derivatives of u_f on the whole outer boundary.
  DtnSample dtn_outer(const BoundaryTrace& f) const {
    check_support(f);
    const Domain& d = dom();
    const std::uint64_t k = key(f);
    if (cache_) {
      if (auto cached = cache_->load(k, d.n_outer)) {
        ++hits_;
        return *cached;
      }
    }
    if (f.values.isZero(0.0)) return {CVec::Zero(d.n_outer), CVec::Zero(d.n_outer), 0.0};
    const auto sol = solver_.solve(f);
    const Mask all = full_mask(d);
    DtnSample out{normal_derivative(sol.u, all, 2).values, normal_derivative(sol.u, all, 1).values, sol.report.final_residual};
    ++solves_;
    if (cache_) cache_->store(k, out);
    return out;
  }

  /// Mixed derivative d^m Lambda(sum eps_l f_l) / d eps_1 ... d eps_m at eps = 0.
  LinearizedDtNRecord linearization(const std::vector<BoundaryTrace>& f_list, const EpsStencil& st) const {
    const int m = static_cast<int>(f_list.size());
    if (m < 1) throw Error("linearization needs at least one input");
    if (m > 5) throw Error("linearization order above 5 is rejected (cancellation budget)");
    if (st.richardson_levels < 1 || st.richardson_levels > 3) throw Error("richardson_levels must be 1..3");
    if (!(st.base_eps > 0) || st.base_eps > solver_.options().delta_data / 4)
      throw Error("base_eps must lie in (0, delta_data/4]");
    const Domain& d = dom();
    LinearizedDtNRecord rec;
    rec.stencil = st;
    rec.inputs = f_list;
    for (int l = 0; l < m; ++l) rec.multi_index.push_back(l);
    const bool central = st.mode == StencilMode::central;

    const int start_solves = solves_;
    std::vector<CVec> hi_levels, lo_levels;
    std::vector<double> level_roundoff;
    double signal = 0.0;
    for (int lev = 0; lev < st.richardson_levels; ++lev) {
      const double eps = st.base_eps / std::pow(2.0, lev);
      CVec hi = CVec::Zero(d.n_outer), lo = CVec::Zero(d.n_outer);
      double round = 0.0;
      const double denom = std::pow(eps, m) * (central ? std::pow(2.0, m) : 1.0);
      for (unsigned mask = central ? 0u : 1u; mask < (1u << m); ++mask) {
        BoundaryTrace f{f_list[0].domain, d.gamma1, CVec::Zero(d.n_outer)};
        double sign = 1.0;
        for (int l = 0; l < m; ++l) {
          const bool bit = (mask >> l) & 1u;
          if (central) {
            const double s = bit ? -1.0 : 1.0;
            sign *= s;
            f.values += (s * eps) * f_list[l].values;
          } else if (bit) {
            f.values += eps * f_list[l].values;
          }
        }
        if (!central) sign = ((m - std::popcount(mask)) % 2 == 0) ? 1.0 : -1.0;
        const auto v = dtn_outer(f);
        hi += (sign / denom) * v.hi;
        lo += (sign / denom) * v.lo;
        const double vn = v.hi.cwiseAbs().maxCoeff();
        round += vn * roundoff_factor() / denom;
        signal = std::max(signal, vn / eps);
      }
      hi_levels.push_back(hi);
      lo_levels.push_back(lo);
      level_roundoff.push_back(round);
    }

    const int L = st.richardson_levels;
    const CVec best = romberg(hi_levels, central);
    double trunc = 0.0;
    if (L >= 2) {
      std::vector<CVec> finer(hi_levels.begin() + 1, hi_levels.end());
      trunc = (best - romberg(finer, central)).cwiseAbs().maxCoeff();
    } else {
      trunc = best.cwiseAbs().maxCoeff() * std::pow(st.base_eps, central ? 2 : 1);
    }
    // Richardson weights amplify the finest-level roundoff by at most this factor
    double amplification = 1.0;
    if (L == 2) amplification = central ? 5.0 / 3.0 : 3.0;
    if (L == 3) amplification = central ? 1.9 : 6.0;
    rec.roundoff_estimate = amplification * level_roundoff.back();
    rec.error_estimate = trunc + rec.roundoff_estimate;
    rec.signal_scale = signal;
    rec.output = restrict(best);
    rec.output_low = restrict(romberg(lo_levels, central));
    const double out_norm = rec.output.sup_norm();
    rec.cancellation_warning = rec.roundoff_estimate > 0.1 * out_norm;
    double input_scale = 1.0;
    for (const auto& f : f_list) input_scale *= f.sup_norm();
    if (trunc > st.consistency_tol * std::max({out_norm, 1e-3 * signal, input_scale}) + 10.0 * rec.roundoff_estimate) {
      std::ostringstream os;
      os << "Richardson levels disagree beyond the consistency tolerance (gap " << trunc << ", output " << out_norm
         << ", roundoff " << rec.roundoff_estimate << ")";
      throw StencilInconsistent(os.str());
    }
    rec.forward_solves = solves_ - start_solves;
    return rec;
  }

  LinearizedDtNRecord first_linearization(const BoundaryTrace& f, const EpsStencil& st) const {
    return linearization({f}, st);
  }
  LinearizedDtNRecord second_linearization(const BoundaryTrace& f1, const BoundaryTrace& f2, const EpsStencil& st) const {
    return linearization({f1, f2}, st);
  }
  LinearizedDtNRecord third_linearization(const BoundaryTrace& f1, const BoundaryTrace& f2, const BoundaryTrace& f3,
                                          const EpsStencil& st) const {
    return linearization({f1, f2, f3}, st);
  }
  LinearizedDtNRecord mth_linearization(const std::vector<BoundaryTrace>& f_list, const EpsStencil& st) const {
    return linearization(f_list, st);
  }

  /// The same derivative from the directly solved linearized chain.
  BoundaryTrace chain_oracle(const std::vector<BoundaryTrace>& f_list) const {
    const LinearizedChain chain = linearized_chain(solver_, f_list);
    return normal_derivative(chain.full(), dom().gamma2);
  }

  /// Relative precision assumed for one DtN evaluation.
  double roundoff_factor() const { return 2.0 * std::numeric_limits<double>::epsilon() / dom().h; }

 private:
  static CVec romberg(const std::vector<CVec>& levels, bool central) {
    std::vector<CVec> row = levels;
    for (size_t j = 1; j < levels.size(); ++j) {
      const double f = std::pow(2.0, central ? 2.0 * j : 1.0 * j) - 1.0;
      for (size_t i = levels.size() - 1; i >= j; --i) row[i] = row[i] + (row[i] - row[i - 1]) / f;
    }
    return row.back();
  }

  BoundaryTrace restrict(const CVec& all) const {
    const Domain& d = dom();
    BoundaryTrace out{solver_.disc().domain, d.gamma2, CVec::Zero(d.n_outer)};
    for (int b = 0; b < d.n_outer; ++b)
      if (d.gamma2[b]) out.values[b] = all[b];
    return out;
  }

  void check_support(const BoundaryTrace& f) const {
    const Domain& d = dom();
    const double scale = f.sup_norm();
    for (int b = 0; b < d.n_outer; ++b)
      if (!d.gamma1[b] && std::abs(f.values[b]) > 1e-14 * scale)
        throw SupportViolation("DtN input is not supported in Gamma1");
  }

  SemilinearSolver solver_;
  DtnCache* cache_ = nullptr;
  std::uint64_t model_hash_ = 0;
  mutable int solves_ = 0;
  mutable int hits_ = 0;
};

// ---------------------------------------------------------------------------
// CSV

inline std::string join_ints(const std::vector<int>& v, char sep = ':') {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) s += sep;
    s += std::to_string(v[i]);
  }
  return s;
}

inline std::string join_strings(const std::vector<std::string>& v, char sep = ':') {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) s += sep;
    s += v[i];
  }
  return s;
}

/// multi_index,input_ids,node,param,re,im,error_estimate; one line per Gamma2 node.
inline void write_record_csv(std::ostream& os, const LinearizedDtNRecord& rec, bool header = true) {
  const Domain& d = *rec.output.domain;
  if (header) os << "multi_index,input_ids,node,param,re,im,error_estimate\n";
  char buf[160];
  for (int b = 0; b < d.n_outer; ++b) {
    if (!rec.output.mask[b]) continue;
    std::snprintf(buf, sizeof buf, ",%d,%.17g,%.17g,%.17g,%.17g\n", b, d.boundary_param[b], rec.output.values[b].real(),
                  rec.output.values[b].imag(), rec.error_estimate);
    os << join_ints(rec.multi_index) << ',' << join_strings(rec.input_ids) << buf;
  }
}

}  // namespace nlinv
