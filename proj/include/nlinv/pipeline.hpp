#pragma once

/**
 * @file pipeline.hpp
 * @brief Coefficient and boundary-data presets and the end-to-end experiment drivers
 * (moment assembly plus reconstruction) shared by the command-line tool and the tests.
 */

#include <fstream>
#include <sstream>

#include "nlinv/inverse.hpp"

namespace nlinv {

// ---------------------------------------------------------------------------
// Presets

/// Real coefficient field presets. `gaussian_bump` is amplitude * exp(-|x - c|^2 / (2 width^2)).
struct FieldPreset {
  std::string kind = "constant";  // constant | gaussian_bump | plane_wave | linear | csv
  double value = 0.0;
  double amplitude = 1.0;
  double width = 0.4;
  Point center{0.0, 0.0};
  Point wavevector{1.0, 0.0};
  double phase = 0.0;
  Point gradient{0.0, 0.0};
  std::string path;
};

/// Node-indexed CSV with a header naming at least `node` and `value` columns.
inline RVec read_field_csv(const Domain& d, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open field file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("field file '" + path + "' is empty");
  std::vector<std::string> cols;
  {
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
  }
  const auto node_col = std::find(cols.begin(), cols.end(), "node") - cols.begin();
  const auto value_col = std::find(cols.begin(), cols.end(), "value") - cols.begin();
  if (node_col == static_cast<long>(cols.size()) || value_col == static_cast<long>(cols.size()))
    throw ConfigError("field file '" + path + "' needs node and value columns");
  RVec v = RVec::Constant(d.n_nodes(), std::numeric_limits<double>::quiet_NaN());
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) f.push_back(c);
    if (static_cast<long>(f.size()) <= std::max(node_col, value_col))
      throw ConfigError(path + ":" + std::to_string(lineno) + ": too few columns");
    const int node = std::stoi(f[node_col]);
    if (node < 0 || node >= d.n_nodes()) throw ConfigError(path + ":" + std::to_string(lineno) + ": node index out of range");
    v[node] = std::stod(f[value_col]);
  }
  if (!v.allFinite()) throw ConfigError("field file '" + path + "' does not cover every node");
  return v;
}

inline RVec sample_preset(const Domain& d, const FieldPreset& p) {
  if (p.kind == "csv") return read_field_csv(d, p.path);
  RVec v(d.n_nodes());
  for (int i = 0; i < d.n_nodes(); ++i) {
    const double x = d.points[i][0], y = d.points[i][1];
    if (p.kind == "constant") {
      v[i] = p.value;
    } else if (p.kind == "gaussian_bump") {
      const double r2 = (x - p.center[0]) * (x - p.center[0]) + (y - p.center[1]) * (y - p.center[1]);
      v[i] = p.amplitude * std::exp(-r2 / (2.0 * p.width * p.width));
    } else if (p.kind == "plane_wave") {
      v[i] = p.amplitude * std::cos(p.wavevector[0] * x + p.wavevector[1] * y + p.phase);
    } else if (p.kind == "linear") {
      v[i] = p.value + p.gradient[0] * x + p.gradient[1] * y;
    } else {
      throw ConfigError("unknown coefficient preset '" + p.kind + "'");
    }
  }
  return v;
}

/// Boundary data presets, multiplied by the Gamma1 indicator. The boundary parameter t is the
/// polar angle on the disk and (pi/2) * arclength on the square.
struct TracePreset {
  std::string kind = "zero";  // zero | constant | fourier | bump | harmonic
  double amplitude = 1e-2;
  int mode = 1;
  std::string parity = "cos";  // cos | sin
  double center = 0.0;
  double width = 0.5;
};

inline BoundaryTrace boundary_preset(DomainPtr dp, const TracePreset& p) {
  const Domain& d = *dp;
  BoundaryTrace f{dp, d.gamma1, CVec::Zero(d.n_outer)};
  const double to_angle = d.config.shape == Shape::unit_disk ? 1.0 : std::numbers::pi / 2;
  const bool sine = p.parity == "sin";
  if (p.parity != "cos" && !sine) throw ConfigError("parity must be cos or sin");
  for (int b = 0; b < d.n_outer; ++b) {
    if (!d.gamma1[b]) continue;
    const double t = d.boundary_param[b] * to_angle;
    double v = 0.0;
    if (p.kind == "zero") {
      v = 0.0;
    } else if (p.kind == "constant") {
      v = p.amplitude;
    } else if (p.kind == "fourier") {
      v = p.amplitude * (sine ? std::sin(p.mode * t) : std::cos(p.mode * t));
    } else if (p.kind == "bump") {
      double g = std::abs(t - p.center);
      g = std::min(g, two_pi - g);
      v = p.amplitude * std::exp(-g * g / (2.0 * p.width * p.width));
    } else if (p.kind == "harmonic") {
      const Point c = d.config.shape == Shape::unit_disk ? Point{0.0, 0.0} : Point{0.5, 0.5};
      const cplx z = std::pow(cplx(d.points[d.outer_node(b)][0] - c[0], d.points[d.outer_node(b)][1] - c[1]), p.mode);
      v = p.amplitude * (sine ? z.imag() : z.real());
    } else {
      throw ConfigError("unknown boundary preset '" + p.kind + "'");
    }
    f.values[b] = v;
  }
  return f;
}

/// Non-negative inputs 1 + cos(j t)/2 (or sin) scaled to sup 1, j = 1, 1, 2, 2, ...; the first is
/// the constant. Supported in Gamma1.
inline std::vector<BoundaryTrace> positive_inputs(DomainPtr dp, int count) {
  const Domain& d = *dp;
  const double to_angle = d.config.shape == Shape::unit_disk ? 1.0 : std::numbers::pi / 2;
  std::vector<BoundaryTrace> out;
  for (int k = 0; k < count; ++k) {
    BoundaryTrace f{dp, d.gamma1, CVec::Zero(d.n_outer)};
    const int j = (k + 1) / 2;
    for (int b = 0; b < d.n_outer; ++b) {
      if (!d.gamma1[b]) continue;
      const double t = d.boundary_param[b] * to_angle;
      const double wave = k == 0 ? 0.0 : (k % 2 ? std::cos(j * t) : std::sin(j * t));
      f.values[b] = (1.0 + 0.5 * wave) / 1.5;
    }
    out.push_back(std::move(f));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Test families for the two boundary patches

struct TestFunctionOptions {
  int max_degree = 6;
  int n_cgo = 0;
  double cgo_freq = 3.0;
  double taper = -1.0;  // negative selects default_taper
};

/// Input functions (traces in Gamma1) and last functions (traces in Gamma2) with one shared
/// bank. When the patches differ the ids carry a g1_/g2_ prefix.
struct MomentFamilies {
  TestFamily inputs;
  TestFamily lasts;
  FieldBank bank;
};

inline MomentFamilies make_moment_families(const Discretization& disc, const TestFunctionOptions& o) {
  const Domain& d = disc.dom();
  MomentFamilies mf;
  mf.inputs = make_test_family(disc, d.gamma1, o.max_degree, o.n_cgo, o.cgo_freq, o.taper);
  if (d.gamma1 == d.gamma2) {
    mf.lasts = mf.inputs;
    mf.bank = mf.inputs.bank;
    return mf;
  }
  mf.lasts = make_test_family(disc, d.gamma2, o.max_degree, o.n_cgo, o.cgo_freq, o.taper);
  auto prefix = [&](TestFamily& fam, const std::string& p) {
    FieldBank renamed;
    for (auto& id : fam.ids) {
      renamed.emplace(p + id, fam.bank.at(id));
      id = p + id;
    }
    fam.bank = renamed;
    mf.bank.insert(renamed.begin(), renamed.end());
  };
  prefix(mf.inputs, "g1_");
  prefix(mf.lasts, "g2_");
  return mf;
}

// ---------------------------------------------------------------------------
// q recovery

struct QExperimentOptions {
  TestFunctionOptions functions{};
  int n_triplets = 400;
  MomentSource source = MomentSource::boundary_data;
  EpsStencil stencil{};
  ReconstructionOptions recon{};
};

struct MomentComparison {
  int compared = 0;
  int consistent = 0;  // |boundary - interior| <= combined error
};

struct QExperimentResult {
  MomentFamilies families;
  std::vector<MomentRecord> moments;           // the ones inverted
  std::vector<MomentRecord> interior_moments;  // empty without ground truth
  MomentComparison comparison;
  int linearizations = 0;
  int forward_solves = 0;
  bool cancellation_warning = false;
  Reconstruction recon;
};

/// Second-linearization moments for sampled (a, b, c) triplets, then Tikhonov recovery of q.
/// With a ground truth the interior-oracle moments are evaluated alongside for comparison.
inline QExperimentResult run_q_experiment(const DtnSimulator& sim, const QExperimentOptions& o,
                                          const std::optional<RVec>& truth = std::nullopt) {
  const Discretization& disc = sim.disc();
  QExperimentResult res;
  res.families = make_moment_families(disc, o.functions);
  const auto& in = res.families.inputs;
  const auto& out = res.families.lasts;
  const int n_in = static_cast<int>(in.ids.size()), n_out = static_cast<int>(out.ids.size());
  const auto tuples = sample_tuples(n_in, 2, n_out, o.n_triplets, o.recon.rng_seed);
  if (o.source == MomentSource::interior_oracle && !truth) throw Error("interior-oracle moments need the true coefficient");
  std::map<std::pair<int, int>, LinearizedDtNRecord> recs;
  const int solves0 = sim.solves();
  for (const auto& t : tuples) {
    const std::vector<std::string> ids{in.ids[t[0]], in.ids[t[1]], out.ids[t[2]]};
    std::optional<MomentRecord> interior;
    if (truth) interior = interior_moment(disc, *truth, ids, 2, res.families.bank);
    if (o.source == MomentSource::boundary_data) {
      const auto key = std::make_pair(t[0], t[1]);
      auto it = recs.find(key);
      if (it == recs.end()) {
        auto rec = sim.second_linearization(in.traces[t[0]], in.traces[t[1]], o.stencil);
        rec.input_ids = {in.ids[t[0]], in.ids[t[1]]};
        res.cancellation_warning = res.cancellation_warning || rec.cancellation_warning;
        it = recs.emplace(key, std::move(rec)).first;
      }
      const MomentRecord b = moment_from_boundary(it->second, res.families.bank.at(ids[2]), ids);
      if (interior) {
        ++res.comparison.compared;
        if (std::abs(b.value - interior->value) <= b.error + interior->error) ++res.comparison.consistent;
      }
      res.moments.push_back(b);
    } else {
      res.moments.push_back(*interior);
    }
    if (interior) res.interior_moments.push_back(*interior);
  }
  res.linearizations = static_cast<int>(recs.size());
  res.forward_solves = sim.solves() - solves0;
  res.recon = recover_q(disc, res.moments, res.families.bank, o.recon, truth);
  return res;
}

// ---------------------------------------------------------------------------
// V_m recovery

struct VExperimentOptions {
  int order = 3;
  TestFunctionOptions functions{4, 0, 3.0, -1.0};
  int n_tuples = 40;
  MomentSource source = MomentSource::boundary_data;
  EpsStencil stencil{};
  ReconstructionOptions recon{};
};

struct VExperimentResult {
  MomentFamilies families;
  std::vector<MomentRecord> moments;
  MomentComparison comparison;
  int linearizations = 0;
  int forward_solves = 0;
  bool cancellation_warning = false;
  Reconstruction recon;
};

/// m-th linearizations for sampled m-multisets of inputs, H-subtracted with `known` (the model
/// with V_m = 0 and the already known q, V_3..V_{m-1}), paired with every last function.
/// `truth_Vm` enables the interior-oracle comparison and the error report; `lower_error` is the
/// relative error of the known coefficients used for the propagation check.
inline VExperimentResult run_v_experiment(const DtnSimulator& sim, const SemilinearSolver& known, const VExperimentOptions& o,
                                          const std::optional<RVec>& truth_Vm = std::nullopt, double lower_error = 0.0) {
  const Discretization& disc = sim.disc();
  const int m = o.order;
  if (m < 3 || m > 5) throw Error("V recovery order must be 3, 4 or 5");
  if (known.coefficients().coefficient(m) && !known.coefficients().coefficient(m)->isZero(0.0))
    throw Error("the known model must have V_m = 0");
  if (o.source == MomentSource::interior_oracle && !truth_Vm) throw Error("interior-oracle moments need the true coefficient");
  VExperimentResult res;
  res.families = make_moment_families(disc, o.functions);
  const auto& in = res.families.inputs;
  const auto& out = res.families.lasts;
  const int n_in = static_cast<int>(in.ids.size()), n_out = static_cast<int>(out.ids.size());
  const auto heads = sample_multisets(n_in, m, o.n_tuples, o.recon.rng_seed);
  const int solves0 = sim.solves();
  double lower_signal = 0.0;
  for (const auto& h : heads) {
    std::vector<BoundaryTrace> fl;
    std::vector<std::string> head_ids;
    for (int i : h) {
      fl.push_back(in.traces[i]);
      head_ids.push_back(in.ids[i]);
    }
    std::optional<LinearizedDtNRecord> rec;
    if (o.source == MomentSource::boundary_data) {
      const LinearizedDtNRecord raw = sim.mth_linearization(fl, o.stencil);
      res.cancellation_warning = res.cancellation_warning || raw.cancellation_warning;
      rec = subtract_known_part(raw, known);
      rec->input_ids = head_ids;
      lower_signal = std::max(lower_signal, raw.output.sup_norm());
      ++res.linearizations;
    }
    for (int t = 0; t < n_out; ++t) {
      std::vector<std::string> ids = head_ids;
      ids.push_back(out.ids[t]);
      std::optional<MomentRecord> interior;
      if (truth_Vm) interior = interior_moment(disc, *truth_Vm, ids, m, res.families.bank);
      if (rec) {
        const MomentRecord b = moment_from_boundary(*rec, res.families.bank.at(ids.back()), ids);
        if (interior) {
          ++res.comparison.compared;
          if (std::abs(b.value - interior->value) <= b.error + interior->error) ++res.comparison.consistent;
        }
        res.moments.push_back(b);
      } else {
        res.moments.push_back(*interior);
      }
    }
  }
  res.forward_solves = sim.solves() - solves0;
  // moment scale of the full data relative to the H-subtracted one
  double total = 0.0;
  for (int b = 0; b < sim.dom().n_outer; ++b) total += sim.dom().boundary_weights[b];
  res.recon = recover_Vm(disc, m, res.moments, res.families.bank, o.recon, truth_Vm, lower_error, lower_signal * total);
  return res;
}

// ---------------------------------------------------------------------------
// Obstacle

struct ObstacleExperimentOptions {
  int n_inputs = 5;
  EpsStencil stencil{};
  ObstacleSearch search{};
};

struct ObstacleExperimentResult {
  std::vector<LinearizedDtNRecord> records;
  ObstacleReport report;
};

inline ObstacleExperimentResult run_obstacle_experiment(const DtnSimulator& sim, const ObstacleExperimentOptions& o) {
  ObstacleExperimentResult res;
  int k = 0;
  for (auto& f : positive_inputs(sim.disc().domain, o.n_inputs)) {
    auto rec = sim.first_linearization(f, o.stencil);
    rec.input_ids = {"pos" + std::to_string(k++)};
    res.records.push_back(std::move(rec));
  }
  res.report = recover_obstacle(res.records, o.search);
  return res;
}

// ---------------------------------------------------------------------------
// CGO Fourier route

struct FourierEstimate {
  Point k{0.0, 0.0};
  cplx estimate = 0.0;
  std::optional<cplx> truth;  // int q e^{-i x.k} by interior quadrature
};

inline std::vector<FourierEstimate> run_cgo_fourier(const DtnSimulator& sim, const std::vector<Point>& ks, const EpsStencil& st,
                                                    const std::optional<RVec>& truth = std::nullopt) {
  const Domain& d = sim.dom();
  std::vector<FourierEstimate> out;
  for (const Point& k : ks) {
    FourierEstimate e;
    e.k = k;
    e.estimate = cgo_fourier_coefficient(sim, k, st);
    if (truth) {
      cplx s = 0.0;
      for (int i = 0; i < d.n_interior; ++i)
        s += d.quad_weights[i] * (*truth)[i] * std::exp(cplx(0.0, -(k[0] * d.points[i][0] + k[1] * d.points[i][1])));
      e.truth = s;
    }
    out.push_back(e);
  }
  return out;
}

}  // namespace nlinv
