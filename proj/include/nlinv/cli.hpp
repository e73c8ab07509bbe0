#pragma once

/**
 * @file cli.hpp
 * @brief Experiment configuration (YAML, unknown keys rejected), the experiment runner and
 * its CSV / report / manifest output.
 */

#include <yaml-cpp/yaml.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "nlinv/pipeline.hpp"

namespace nlinv::cli {

inline constexpr const char* kVersion = "1.0.0";

enum class Experiment { forward, dtn_bank, linearize, recover_q, recover_v, recover_obstacle, density_check, full_pipeline };

inline const std::vector<std::pair<Experiment, std::string>>& experiment_names() {
  static const std::vector<std::pair<Experiment, std::string>> names{
      {Experiment::forward, "forward"},
      {Experiment::dtn_bank, "dtn_bank"},
      {Experiment::linearize, "linearize"},
      {Experiment::recover_q, "recover_q"},
      {Experiment::recover_v, "recover_v"},
      {Experiment::recover_obstacle, "recover_obstacle"},
      {Experiment::density_check, "density_check"},
      {Experiment::full_pipeline, "full_pipeline"}};
  return names;
}

inline std::string to_string(Experiment e) {
  for (const auto& [k, v] : experiment_names())
    if (k == e) return v;
  return "?";
}

inline std::optional<Experiment> parse_experiment(std::string s) {
  std::replace(s.begin(), s.end(), '-', '_');
  for (const auto& [k, v] : experiment_names())
    if (v == s) return k;
  return std::nullopt;
}

struct DensityOptions {
  std::string target = "in_span";  // in_span or a coefficient preset in target_preset
  FieldPreset target_preset{};
  int max_degree = 6;
  int n_cgo = 0;
  double cgo_freq = 3.0;
  std::vector<int> N{2, 4, 6, 8, 10, 12};
  double ill_threshold = 1e12;
};

struct DtnBankOptions {
  std::vector<int> orders{1, 2};
  int n_tuples = 20;  // sampled multisets per order >= 3
};

struct CacheOptions {
  bool enabled = true;
  std::string dir;  // empty: <output>/cache
};

struct ExperimentConfig {
  Experiment experiment = Experiment::forward;
  std::uint64_t seed = 1;
  std::string output = "out";
  DomainConfig domain{};
  int k_trunc = 5;
  FieldPreset q{};
  std::map<int, FieldPreset> V;  // k -> preset, missing entries are zero
  NewtonOptions newton{};
  EpsStencil stencil{};
  TracePreset forward_f{};
  std::vector<TracePreset> linearize_inputs;
  bool linearize_oracle = true;
  QExperimentOptions q_opts{};
  std::vector<int> v_orders{3};
  VExperimentOptions v_opts{};
  ObstacleExperimentOptions obstacle{};
  DensityOptions density{};
  DtnBankOptions bank{};
  bool cgo_fourier = false;
  std::vector<Point> cgo_k{{1.0, 0.0}, {0.0, 1.0}, {1.0, 1.0}, {2.0, 0.0}};
  CacheOptions cache{};
};

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

/// Mapping node with a dotted path, rejecting keys outside the allowed set.
class Section {
 public:
  Section(YAML::Node node, std::string path, std::string source) : n_(std::move(node)), path_(std::move(path)), src_(std::move(source)) {
    if (n_ && !n_.IsNull() && !n_.IsMap()) fail(n_, "section '" + display() + "' must be a mapping");
  }

  void allow(std::initializer_list<const char*> keys) const {
    if (!n_ || n_.IsNull()) return;
    std::set<std::string> ok(keys.begin(), keys.end());
    for (const auto& kv : n_) {
      const std::string k = kv.first.as<std::string>();
      if (!ok.count(k)) fail(kv.first, "unknown key '" + qualified(k) + "'");
    }
  }

  bool has(const char* key) const { return n_ && n_.IsMap() && n_[key]; }
  YAML::Node node(const char* key) const { return has(key) ? n_[key] : YAML::Node(); }
  Section sub(const char* key) const { return Section(node(key), qualified(key), src_); }

  template <class T>
  T get(const char* key, const T& def) const {
    if (!has(key)) return def;
    const YAML::Node v = n_[key];
    try {
      return v.as<T>();
    } catch (const YAML::Exception&) {
      fail(v, "key '" + qualified(key) + "' has the wrong type");
    }
  }

  Point point(const char* key, const Point& def) const {
    if (!has(key)) return def;
    const auto v = get<std::vector<double>>(key, {});
    if (v.size() != 2) fail(n_[key], "key '" + qualified(key) + "' must be a pair [x, y]");
    return {v[0], v[1]};
  }

  [[noreturn]] void fail(const YAML::Node& at, const std::string& msg) const {
    std::ostringstream os;
    os << src_;
    if (at.Mark().line >= 0) os << ":" << at.Mark().line + 1;
    os << ": " << msg;
    throw ConfigError(os.str());
  }

  std::string qualified(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }
  std::string display() const { return path_.empty() ? "<root>" : path_; }
  const std::string& source() const { return src_; }

 private:
  YAML::Node n_;
  std::string path_;
  std::string src_;
};

inline Arc parse_arc(const Section& s, const char* key, Shape shape) {
  const Arc full{0.0, boundary_period(shape)};
  if (!s.has(key)) return full;
  const YAML::Node v = s.node(key);
  if (v.IsScalar()) {
    const std::string name = v.as<std::string>();
    if (name == "full") return full;
    if (shape == Shape::unit_square) {
      if (name == "bottom") return {0.0, 1.0};
      if (name == "right") return {1.0, 2.0};
      if (name == "top") return {2.0, 3.0};
      if (name == "left") return {3.0, 4.0};
    }
    s.fail(v, "key '" + s.qualified(key) + "' must be 'full', an edge name or [start, end]");
  }
  const auto p = s.point(key, {0.0, 0.0});
  return {p[0], p[1]};
}

inline FieldPreset parse_field_preset(const Section& s, const FieldPreset& def = {}) {
  s.allow({"preset", "value", "amplitude", "width", "center", "wavevector", "phase", "gradient", "path"});
  FieldPreset p = def;
  p.kind = s.get<std::string>("preset", p.kind);
  p.value = s.get<double>("value", p.value);
  p.amplitude = s.get<double>("amplitude", p.amplitude);
  p.width = s.get<double>("width", p.width);
  p.center = s.point("center", p.center);
  p.wavevector = s.point("wavevector", p.wavevector);
  p.phase = s.get<double>("phase", p.phase);
  p.gradient = s.point("gradient", p.gradient);
  p.path = s.get<std::string>("path", p.path);
  static const std::set<std::string> kinds{"constant", "gaussian_bump", "plane_wave", "linear", "csv"};
  if (!kinds.count(p.kind)) s.fail(s.node("preset"), "unknown coefficient preset '" + p.kind + "'");
  if (p.kind == "gaussian_bump" && !(p.width > 0)) s.fail(s.node("width"), "gaussian_bump width must be positive");
  if (p.kind == "csv" && p.path.empty()) s.fail(s.node("preset"), "csv preset needs a path");
  return p;
}

inline TracePreset parse_trace_preset(const Section& s, double default_amplitude) {
  s.allow({"preset", "amplitude", "mode", "parity", "center", "width"});
  TracePreset p;
  p.amplitude = default_amplitude;
  p.kind = s.get<std::string>("preset", p.kind);
  p.amplitude = s.get<double>("amplitude", p.amplitude);
  p.mode = s.get<int>("mode", p.mode);
  p.parity = s.get<std::string>("parity", p.parity);
  p.center = s.get<double>("center", p.center);
  p.width = s.get<double>("width", p.width);
  static const std::set<std::string> kinds{"zero", "constant", "fourier", "bump", "harmonic"};
  if (!kinds.count(p.kind)) s.fail(s.node("preset"), "unknown boundary preset '" + p.kind + "'");
  if (p.parity != "cos" && p.parity != "sin") s.fail(s.node("parity"), "parity must be cos or sin");
  if (p.mode < 0) s.fail(s.node("mode"), "mode must be non-negative");
  return p;
}

inline TestFunctionOptions parse_functions(const Section& s, TestFunctionOptions o) {
  o.max_degree = s.get<int>("max_degree", o.max_degree);
  o.n_cgo = s.get<int>("n_cgo", o.n_cgo);
  o.cgo_freq = s.get<double>("cgo_freq", o.cgo_freq);
  o.taper = s.get<double>("taper", o.taper);
  if (o.max_degree < 0) s.fail(s.node("max_degree"), "max_degree must be non-negative");
  if (o.n_cgo < 0) s.fail(s.node("n_cgo"), "n_cgo must be non-negative");
  return o;
}

inline MomentSource parse_source(const Section& s, const char* key, MomentSource def) {
  const std::string v = s.get<std::string>(key, def == MomentSource::boundary_data ? "boundary_data" : "interior_oracle");
  if (v == "boundary_data") return MomentSource::boundary_data;
  if (v == "interior_oracle") return MomentSource::interior_oracle;
  s.fail(s.node(key), "key '" + s.qualified(key) + "' must be boundary_data or interior_oracle");
}

inline DomainConfig parse_domain(const Section& s) {
  s.allow({"shape", "n", "gamma1", "gamma2", "obstacle"});
  DomainConfig d;
  const std::string shape = s.get<std::string>("shape", "unit_disk");
  if (shape == "unit_disk")
    d.shape = Shape::unit_disk;
  else if (shape == "unit_square")
    d.shape = Shape::unit_square;
  else
    s.fail(s.node("shape"), "shape must be unit_disk or unit_square");
  d.n_cells_per_side = s.get<int>("n", d.n_cells_per_side);
  if (d.n_cells_per_side < 8) s.fail(s.node("n"), "n must be at least 8");
  d.gamma1 = parse_arc(s, "gamma1", d.shape);
  d.gamma2 = parse_arc(s, "gamma2", d.shape);
  if (s.has("obstacle")) {
    const Section o = s.sub("obstacle");
    o.allow({"center", "radius"});
    CircleParams c;
    c.center = o.point("center", c.center);
    c.radius = o.get<double>("radius", 0.0);
    d.obstacle = c;
  }
  return d;
}

}  // namespace detail

/// Parses a configuration document. `domain_override`, when given, replaces the domain table.
inline ExperimentConfig parse_config(const YAML::Node& root, const std::string& source,
                                     const std::optional<std::pair<YAML::Node, std::string>>& domain_override = std::nullopt) {
  using detail::Section;
  const Section r(root, "", source);
  r.allow({"experiment", "seed", "output", "domain", "coefficients", "newton", "stencil", "forward", "linearize", "recover_q",
           "recover_v", "reconstruction", "obstacle_search", "density", "dtn_bank", "cgo_fourier", "cache"});
  ExperimentConfig c;
  if (r.has("experiment")) {
    const auto e = parse_experiment(r.get<std::string>("experiment", ""));
    if (!e) r.fail(r.node("experiment"), "unknown experiment '" + r.get<std::string>("experiment", "") + "'");
    c.experiment = *e;
  }
  c.seed = r.get<std::uint64_t>("seed", c.seed);
  c.output = r.get<std::string>("output", c.output);
  if (domain_override)
    c.domain = detail::parse_domain(Section(domain_override->first, "", domain_override->second));
  else
    c.domain = detail::parse_domain(r.sub("domain"));

  {
    const Section s = r.sub("coefficients");
    s.allow({"k_trunc", "q", "V3", "V4", "V5", "V6", "V7"});
    c.k_trunc = s.get<int>("k_trunc", c.k_trunc);
    if (c.k_trunc < 3 || c.k_trunc > 7) s.fail(s.node("k_trunc"), "k_trunc must lie in 3..7");
    FieldPreset zero;
    c.q = s.has("q") ? detail::parse_field_preset(s.sub("q")) : zero;
    for (int k = 3; k <= 7; ++k) {
      const std::string key = "V" + std::to_string(k);
      if (!s.has(key.c_str())) continue;
      if (k > c.k_trunc) s.fail(s.node(key.c_str()), "key '" + s.qualified(key) + "' exceeds k_trunc");
      c.V[k] = detail::parse_field_preset(s.sub(key.c_str()));
    }
  }
  {
    const Section s = r.sub("newton");
    s.allow({"tol_residual", "max_iters", "damping", "delta_data", "step_tol"});
    c.newton.tol_residual = s.get<double>("tol_residual", c.newton.tol_residual);
    c.newton.max_newton_iters = s.get<int>("max_iters", c.newton.max_newton_iters);
    c.newton.delta_data = s.get<double>("delta_data", c.newton.delta_data);
    c.newton.step_tol = s.get<double>("step_tol", c.newton.step_tol);
    const std::string damping = s.get<std::string>("damping", "line_search");
    if (damping == "none")
      c.newton.damping = Damping::none;
    else if (damping == "line_search")
      c.newton.damping = Damping::line_search;
    else
      s.fail(s.node("damping"), "damping must be none or line_search");
    if (!(c.newton.tol_residual > 0)) s.fail(s.node("tol_residual"), "tol_residual must be positive");
    if (c.newton.max_newton_iters < 1) s.fail(s.node("max_iters"), "max_iters must be at least 1");
  }
  {
    const Section s = r.sub("stencil");
    s.allow({"base_eps", "levels", "mode", "consistency_tol"});
    c.stencil.base_eps = s.get<double>("base_eps", c.stencil.base_eps);
    c.stencil.richardson_levels = s.get<int>("levels", c.stencil.richardson_levels);
    c.stencil.consistency_tol = s.get<double>("consistency_tol", c.stencil.consistency_tol);
    const std::string mode = s.get<std::string>("mode", "central");
    if (mode == "central")
      c.stencil.mode = StencilMode::central;
    else if (mode == "forward_poly_fit")
      c.stencil.mode = StencilMode::forward_poly_fit;
    else
      s.fail(s.node("mode"), "mode must be central or forward_poly_fit");
    if (c.stencil.richardson_levels < 1 || c.stencil.richardson_levels > 3) s.fail(s.node("levels"), "levels must lie in 1..3");
    if (!(c.stencil.base_eps > 0) || c.stencil.base_eps > c.newton.delta_data / 4)
      s.fail(s.node("base_eps"), "base_eps must lie in (0, delta_data/4]");
  }
  {
    const Section s = r.sub("forward");
    s.allow({"f"});
    if (s.has("f")) c.forward_f = detail::parse_trace_preset(s.sub("f"), 1e-2);
  }
  {
    const Section s = r.sub("linearize");
    s.allow({"inputs", "oracle"});
    c.linearize_oracle = s.get<bool>("oracle", c.linearize_oracle);
    if (s.has("inputs")) {
      const YAML::Node in = s.node("inputs");
      if (!in.IsSequence()) s.fail(in, "key 'linearize.inputs' must be a list");
      for (size_t i = 0; i < in.size(); ++i)
        c.linearize_inputs.push_back(
            detail::parse_trace_preset(Section(in[i], "linearize.inputs[" + std::to_string(i) + "]", source), 1.0));
      if (c.linearize_inputs.empty() || c.linearize_inputs.size() > 5) s.fail(in, "linearize.inputs must hold 1..5 entries");
    } else {
      TracePreset p;
      p.kind = "fourier";
      p.amplitude = 1.0;
      c.linearize_inputs = {p, p};
    }
  }
  {
    const Section s = r.sub("reconstruction");
    s.allow({"basis", "fourier_modes", "lambda", "row_model", "rank_condition_threshold", "row_drop_tol"});
    ReconstructionOptions& ro = c.q_opts.recon;
    const std::string basis = s.get<std::string>("basis", "fourier_modes");
    if (basis == "fourier_modes")
      ro.basis = BasisKind::fourier_modes;
    else if (basis == "grid_nodal")
      ro.basis = BasisKind::grid_nodal;
    else
      s.fail(s.node("basis"), "basis must be fourier_modes or grid_nodal");
    ro.fourier_modes = s.get<int>("fourier_modes", ro.fourier_modes);
    ro.tikhonov_lambda = s.get<double>("lambda", ro.tikhonov_lambda);
    ro.rank_condition_threshold = s.get<double>("rank_condition_threshold", ro.rank_condition_threshold);
    ro.row_drop_tol = s.get<double>("row_drop_tol", ro.row_drop_tol);
    const std::string rows = s.get<std::string>("row_model", "discrete_adjoint");
    if (rows == "discrete_adjoint")
      ro.boundary_rows = RowModel::discrete_adjoint;
    else if (rows == "quadrature")
      ro.boundary_rows = RowModel::quadrature;
    else
      s.fail(s.node("row_model"), "row_model must be discrete_adjoint or quadrature");
    if (ro.fourier_modes < 1) s.fail(s.node("fourier_modes"), "fourier_modes must be positive");
    if (ro.tikhonov_lambda < 0) s.fail(s.node("lambda"), "lambda must be non-negative");
    ro.rng_seed = c.seed;
    c.v_opts.recon = ro;
  }
  {
    const Section s = r.sub("recover_q");
    s.allow({"max_degree", "n_cgo", "cgo_freq", "taper", "n_triplets", "moments"});
    c.q_opts.functions = detail::parse_functions(s, c.q_opts.functions);
    c.q_opts.n_triplets = s.get<int>("n_triplets", c.q_opts.n_triplets);
    c.q_opts.recon.n_test_triplets = c.q_opts.n_triplets;
    c.q_opts.source = detail::parse_source(s, "moments", c.q_opts.source);
    if (c.q_opts.n_triplets < 1) s.fail(s.node("n_triplets"), "n_triplets must be positive");
  }
  {
    const Section s = r.sub("recover_v");
    s.allow({"orders", "max_degree", "n_cgo", "cgo_freq", "taper", "n_tuples", "moments"});
    c.v_orders = s.get<std::vector<int>>("orders", c.v_orders);
    for (int m : c.v_orders)
      if (m < 3 || m > 5 || m > c.k_trunc) s.fail(s.node("orders"), "recover_v orders must lie in 3..min(5, k_trunc)");
    std::sort(c.v_orders.begin(), c.v_orders.end());
    c.v_opts.functions = detail::parse_functions(s, c.v_opts.functions);
    c.v_opts.n_tuples = s.get<int>("n_tuples", c.v_opts.n_tuples);
    c.v_opts.source = detail::parse_source(s, "moments", c.v_opts.source);
    if (c.v_opts.n_tuples < 1) s.fail(s.node("n_tuples"), "n_tuples must be positive");
  }
  {
    const Section s = r.sub("obstacle_search");
    s.allow({"n_inputs", "center_min", "center_max", "r_min", "r_max", "grid_center", "grid_radius", "max_iterations"});
    auto& o = c.obstacle;
    o.n_inputs = s.get<int>("n_inputs", o.n_inputs);
    o.search.center_min = s.point("center_min", o.search.center_min);
    o.search.center_max = s.point("center_max", o.search.center_max);
    o.search.r_min = s.get<double>("r_min", o.search.r_min);
    o.search.r_max = s.get<double>("r_max", o.search.r_max);
    o.search.grid_center = s.get<int>("grid_center", o.search.grid_center);
    o.search.grid_radius = s.get<int>("grid_radius", o.search.grid_radius);
    o.search.max_iterations = s.get<int>("max_iterations", o.search.max_iterations);
    if (o.n_inputs < 1) s.fail(s.node("n_inputs"), "n_inputs must be positive");
    if (!(o.search.r_min > 0) || !(o.search.r_max > o.search.r_min)) s.fail(s.node("r_min"), "need 0 < r_min < r_max");
  }
  {
    const Section s = r.sub("density");
    s.allow({"target", "max_degree", "n_cgo", "cgo_freq", "N", "ill_threshold"});
    auto& o = c.density;
    if (s.has("target")) {
      const YAML::Node t = s.node("target");
      if (t.IsScalar()) {
        o.target = t.as<std::string>();
        if (o.target != "in_span") s.fail(t, "density.target must be in_span or a coefficient preset table");
      } else {
        o.target = "preset";
        o.target_preset = detail::parse_field_preset(s.sub("target"));
      }
    }
    o.max_degree = s.get<int>("max_degree", o.max_degree);
    o.n_cgo = s.get<int>("n_cgo", o.n_cgo);
    o.cgo_freq = s.get<double>("cgo_freq", o.cgo_freq);
    o.N = s.get<std::vector<int>>("N", o.N);
    o.ill_threshold = s.get<double>("ill_threshold", o.ill_threshold);
    if (o.N.empty()) s.fail(s.node("N"), "density.N must not be empty");
  }
  {
    const Section s = r.sub("dtn_bank");
    s.allow({"orders", "n_tuples"});
    c.bank.orders = s.get<std::vector<int>>("orders", c.bank.orders);
    c.bank.n_tuples = s.get<int>("n_tuples", c.bank.n_tuples);
    for (int m : c.bank.orders)
      if (m < 1 || m > 5) s.fail(s.node("orders"), "dtn_bank orders must lie in 1..5");
  }
  {
    const Section s = r.sub("cgo_fourier");
    s.allow({"enabled", "k"});
    c.cgo_fourier = s.get<bool>("enabled", c.cgo_fourier);
    if (s.has("k")) {
      const auto ks = s.get<std::vector<std::vector<double>>>("k", {});
      c.cgo_k.clear();
      for (const auto& k : ks) {
        if (k.size() != 2) s.fail(s.node("k"), "cgo_fourier.k entries must be pairs");
        c.cgo_k.push_back({k[0], k[1]});
      }
    }
  }
  {
    const Section s = r.sub("cache");
    s.allow({"enabled", "dir"});
    c.cache.enabled = s.get<bool>("enabled", c.cache.enabled);
    c.cache.dir = s.get<std::string>("dir", c.cache.dir);
  }
  c.q_opts.stencil = c.v_opts.stencil = c.obstacle.stencil = c.stencil;
  c.v_opts.recon.rng_seed = c.q_opts.recon.rng_seed = c.seed;
  return c;
}

inline YAML::Node load_yaml(const std::string& path) {
  try {
    return YAML::LoadFile(path);
  } catch (const YAML::BadFile&) {
    throw ConfigError("cannot open config file '" + path + "'");
  } catch (const YAML::ParserException& e) {
    std::ostringstream os;
    os << path << ":" << e.mark.line + 1 << ": " << e.msg;
    throw ConfigError(os.str());
  }
}

inline ExperimentConfig load_config(const std::string& path, const std::optional<std::string>& domain_path = std::nullopt) {
  std::optional<std::pair<YAML::Node, std::string>> dom;
  if (domain_path) dom = std::make_pair(load_yaml(*domain_path), *domain_path);
  return parse_config(load_yaml(path), path, dom);
}

// ---------------------------------------------------------------------------
// Canonical serialization

namespace detail {

inline void emit_point(YAML::Emitter& e, const Point& p) {
  e << YAML::Flow << YAML::BeginSeq << p[0] << p[1] << YAML::EndSeq;
}

inline void emit_field_preset(YAML::Emitter& e, const FieldPreset& p) {
  e << YAML::BeginMap << YAML::Key << "preset" << YAML::Value << p.kind;
  if (p.kind == "constant" || p.kind == "linear") e << YAML::Key << "value" << YAML::Value << p.value;
  if (p.kind == "gaussian_bump" || p.kind == "plane_wave") e << YAML::Key << "amplitude" << YAML::Value << p.amplitude;
  if (p.kind == "gaussian_bump") {
    e << YAML::Key << "width" << YAML::Value << p.width << YAML::Key << "center" << YAML::Value;
    emit_point(e, p.center);
  }
  if (p.kind == "plane_wave") {
    e << YAML::Key << "wavevector" << YAML::Value;
    emit_point(e, p.wavevector);
    e << YAML::Key << "phase" << YAML::Value << p.phase;
  }
  if (p.kind == "linear") {
    e << YAML::Key << "gradient" << YAML::Value;
    emit_point(e, p.gradient);
  }
  if (p.kind == "csv") e << YAML::Key << "path" << YAML::Value << p.path;
  e << YAML::EndMap;
}

inline void emit_trace_preset(YAML::Emitter& e, const TracePreset& p) {
  e << YAML::Flow << YAML::BeginMap << YAML::Key << "preset" << YAML::Value << p.kind << YAML::Key << "amplitude" << YAML::Value
    << p.amplitude << YAML::Key << "mode" << YAML::Value << p.mode << YAML::Key << "parity" << YAML::Value << p.parity
    << YAML::Key << "center" << YAML::Value << p.center << YAML::Key << "width" << YAML::Value << p.width << YAML::EndMap;
}

inline void emit_functions(YAML::Emitter& e, const TestFunctionOptions& o) {
  e << YAML::Key << "max_degree" << YAML::Value << o.max_degree << YAML::Key << "n_cgo" << YAML::Value << o.n_cgo << YAML::Key
    << "cgo_freq" << YAML::Value << o.cgo_freq << YAML::Key << "taper" << YAML::Value << o.taper;
}

inline const char* source_name(MomentSource s) { return s == MomentSource::boundary_data ? "boundary_data" : "interior_oracle"; }

}  // namespace detail

/// Fully resolved configuration (defaults filled in) as YAML; the same text parses back to the
/// same configuration.
inline std::string serialize(const ExperimentConfig& c) {
  using namespace YAML;
  Emitter e;
  e.SetDoublePrecision(17);
  e << BeginMap;
  e << Key << "experiment" << Value << to_string(c.experiment);
  e << Key << "seed" << Value << c.seed;
  e << Key << "output" << Value << c.output;
  e << Key << "domain" << Value << BeginMap;
  e << Key << "shape" << Value << (c.domain.shape == Shape::unit_disk ? "unit_disk" : "unit_square");
  e << Key << "n" << Value << c.domain.n_cells_per_side;
  e << Key << "gamma1" << Value;
  detail::emit_point(e, {c.domain.gamma1.start, c.domain.gamma1.end});
  e << Key << "gamma2" << Value;
  detail::emit_point(e, {c.domain.gamma2.start, c.domain.gamma2.end});
  if (c.domain.obstacle) {
    e << Key << "obstacle" << Value << BeginMap << Key << "center" << Value;
    detail::emit_point(e, c.domain.obstacle->center);
    e << Key << "radius" << Value << c.domain.obstacle->radius << EndMap;
  }
  e << EndMap;
  e << Key << "coefficients" << Value << BeginMap << Key << "k_trunc" << Value << c.k_trunc << Key << "q" << Value;
  detail::emit_field_preset(e, c.q);
  for (const auto& [k, p] : c.V) {
    e << Key << ("V" + std::to_string(k)) << Value;
    detail::emit_field_preset(e, p);
  }
  e << EndMap;
  e << Key << "newton" << Value << BeginMap << Key << "tol_residual" << Value << c.newton.tol_residual << Key << "max_iters" << Value
    << c.newton.max_newton_iters << Key << "damping" << Value << (c.newton.damping == Damping::none ? "none" : "line_search") << Key
    << "delta_data" << Value << c.newton.delta_data << Key << "step_tol" << Value << c.newton.step_tol << EndMap;
  e << Key << "stencil" << Value << BeginMap << Key << "base_eps" << Value << c.stencil.base_eps << Key << "levels" << Value
    << c.stencil.richardson_levels << Key << "mode" << Value
    << (c.stencil.mode == StencilMode::central ? "central" : "forward_poly_fit") << Key << "consistency_tol" << Value
    << c.stencil.consistency_tol << EndMap;
  e << Key << "forward" << Value << BeginMap << Key << "f" << Value;
  detail::emit_trace_preset(e, c.forward_f);
  e << EndMap;
  e << Key << "linearize" << Value << BeginMap << Key << "oracle" << Value << c.linearize_oracle << Key << "inputs" << Value
    << BeginSeq;
  for (const auto& p : c.linearize_inputs) detail::emit_trace_preset(e, p);
  e << EndSeq << EndMap;
  const auto& ro = c.q_opts.recon;
  e << Key << "reconstruction" << Value << BeginMap << Key << "basis" << Value
    << (ro.basis == BasisKind::fourier_modes ? "fourier_modes" : "grid_nodal") << Key << "fourier_modes" << Value << ro.fourier_modes
    << Key << "lambda" << Value << ro.tikhonov_lambda << Key << "row_model" << Value
    << (ro.boundary_rows == RowModel::discrete_adjoint ? "discrete_adjoint" : "quadrature") << Key << "rank_condition_threshold"
    << Value << ro.rank_condition_threshold << Key << "row_drop_tol" << Value << ro.row_drop_tol << EndMap;
  e << Key << "recover_q" << Value << BeginMap;
  detail::emit_functions(e, c.q_opts.functions);
  e << Key << "n_triplets" << Value << c.q_opts.n_triplets << Key << "moments" << Value << detail::source_name(c.q_opts.source)
    << EndMap;
  e << Key << "recover_v" << Value << BeginMap << Key << "orders" << Value << Flow << c.v_orders;
  detail::emit_functions(e, c.v_opts.functions);
  e << Key << "n_tuples" << Value << c.v_opts.n_tuples << Key << "moments" << Value << detail::source_name(c.v_opts.source) << EndMap;
  const auto& os = c.obstacle.search;
  e << Key << "obstacle_search" << Value << BeginMap << Key << "n_inputs" << Value << c.obstacle.n_inputs << Key << "center_min"
    << Value;
  detail::emit_point(e, os.center_min);
  e << Key << "center_max" << Value;
  detail::emit_point(e, os.center_max);
  e << Key << "r_min" << Value << os.r_min << Key << "r_max" << Value << os.r_max << Key << "grid_center" << Value << os.grid_center
    << Key << "grid_radius" << Value << os.grid_radius << Key << "max_iterations" << Value << os.max_iterations << EndMap;
  e << Key << "density" << Value << BeginMap << Key << "target" << Value;
  if (c.density.target == "in_span")
    e << "in_span";
  else
    detail::emit_field_preset(e, c.density.target_preset);
  e << Key << "max_degree" << Value << c.density.max_degree << Key << "n_cgo" << Value << c.density.n_cgo << Key << "cgo_freq"
    << Value << c.density.cgo_freq << Key << "N" << Value << Flow << c.density.N << Key << "ill_threshold" << Value
    << c.density.ill_threshold << EndMap;
  e << Key << "dtn_bank" << Value << BeginMap << Key << "orders" << Value << Flow << c.bank.orders << Key << "n_tuples" << Value
    << c.bank.n_tuples << EndMap;
  e << Key << "cgo_fourier" << Value << BeginMap << Key << "enabled" << Value << c.cgo_fourier << Key << "k" << Value << BeginSeq;
  for (const auto& k : c.cgo_k) detail::emit_point(e, k);
  e << EndSeq << EndMap;
  e << Key << "cache" << Value << BeginMap << Key << "enabled" << Value << c.cache.enabled << Key << "dir" << Value << c.cache.dir
    << EndMap;
  e << EndMap;
  return std::string(e.c_str()) + "\n";
}

// ---------------------------------------------------------------------------
// Output

/// Collects every artifact in memory and writes them, plus the manifest, from one place.
class OutputWriter {
 public:
  explicit OutputWriter(std::filesystem::path dir) : dir_(std::move(dir)) {}

  std::ostringstream& file(const std::string& name) {
    auto it = files_.find(name);
    if (it == files_.end()) {
      order_.push_back(name);
      it = files_.emplace(name, std::make_unique<std::ostringstream>()).first;
    }
    return *it->second;
  }

  void manifest(const std::string& key, const std::string& value) { manifest_.emplace_back(key, value); }

  /// Writes every file and manifest.csv (name, size and content hash of each artifact).
  void flush() {
    std::filesystem::create_directories(dir_);
    std::ostringstream man;
    man << "key,value\n";
    for (const auto& [k, v] : manifest_) man << k << ',' << csv_quote(v) << '\n';
    for (const auto& name : order_) {
      const std::string s = files_.at(name)->str();
      Fnv1a h;
      h.bytes(s.data(), s.size());
      man << "artifact:" << name << ',' << s.size() << ':' << hex64(h.value()) << '\n';
      write(name, s);
    }
    write("manifest.csv", man.str());
  }

  void write(const std::string& name, const std::string& content) const {
    std::ofstream out(dir_ / name, std::ios::binary);
    if (!out) throw Error("cannot write " + (dir_ / name).string());
    out << content;
  }

  const std::filesystem::path& dir() const { return dir_; }

  static std::string csv_quote(const std::string& v) {
    if (v.find_first_of(",\"\n") == std::string::npos) return v;
    std::string q = "\"";
    for (char ch : v) {
      if (ch == '"') q += '"';
      q += ch;
    }
    return q + "\"";
  }

 private:
  std::filesystem::path dir_;
  std::map<std::string, std::unique_ptr<std::ostringstream>> files_;
  std::vector<std::string> order_;
  std::vector<std::pair<std::string, std::string>> manifest_;
};

inline std::string fmt(double v, const char* spec = "%.17g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

inline std::string sci(double v) { return fmt(v, "%.6g"); }

inline void write_real_field(std::ostream& os, const Domain& d, const CVec& values, const std::optional<RVec>& truth = std::nullopt) {
  os << "node,x,y,value" << (truth ? ",truth" : "") << '\n';
  for (int i = 0; i < d.n_nodes(); ++i) {
    os << i << ',' << fmt(d.points[i][0]) << ',' << fmt(d.points[i][1]) << ',' << fmt(values[i].real());
    if (truth) os << ',' << fmt((*truth)[i]);
    os << '\n';
  }
}

inline void write_complex_field(std::ostream& os, const Domain& d, const CVec& values) {
  os << "node,x,y,re,im\n";
  for (int i = 0; i < d.n_nodes(); ++i)
    os << i << ',' << fmt(d.points[i][0]) << ',' << fmt(d.points[i][1]) << ',' << fmt(values[i].real()) << ',' << fmt(values[i].imag())
       << '\n';
}

inline void write_trace(std::ostream& os, const BoundaryTrace& t) {
  const Domain& d = *t.domain;
  os << "node,param,re,im\n";
  for (int b = 0; b < d.n_outer; ++b)
    if (t.mask[b])
      os << b << ',' << fmt(d.boundary_param[b]) << ',' << fmt(t.values[b].real()) << ',' << fmt(t.values[b].imag()) << '\n';
}

inline void write_moments(std::ostream& os, const std::vector<MomentRecord>& ms) {
  os << "ids,order,source,re,im,error\n";
  for (const auto& m : ms)
    os << join_strings(m.ids) << ',' << m.order << ',' << detail::source_name(m.source) << ',' << fmt(m.value.real()) << ','
       << fmt(m.value.imag()) << ',' << fmt(m.error) << '\n';
}

// ---------------------------------------------------------------------------
// Runner

struct RunOutcome {
  int exit_code = 0;
  std::vector<std::string> nonfatal;
};

namespace detail {

struct Model {
  DomainPtr domain;
  DiscretizationPtr disc;
  NonlinearCoefficients coeffs;
};

inline Model build_model(const ExperimentConfig& c) {
  Model m;
  m.domain = build_domain(c.domain);
  m.disc = make_discretization(m.domain);
  m.coeffs = NonlinearCoefficients::zero(*m.domain, c.k_trunc);
  m.coeffs.q = sample_preset(*m.domain, c.q);
  for (const auto& [k, p] : c.V) m.coeffs.V[k - 3] = sample_preset(*m.domain, p);
  return m;
}

inline void report_reconstruction(std::ostream& r, const std::string& name, const ReconstructionReport& rep) {
  r << name << ": moments " << rep.n_moments << " (dropped " << rep.n_dropped << "), unknowns " << rep.n_unknowns << ", lambda "
    << sci(rep.lambda) << ", condition " << sci(rep.condition) << ", effective rank " << rep.effective_rank << ", residual "
    << sci(rep.residual) << ", noise floor " << sci(rep.noise_floor);
  if (rep.relative_l2_error) r << ", relative L2 error " << sci(*rep.relative_l2_error);
  r << '\n';
  for (const auto& w : rep.warnings) r << "  warning: " << w << '\n';
}

inline void errors_header(std::ostream& os) { os << "quantity,relative_l2_error,noise_floor,condition,moments,rank_deficient\n"; }

inline void errors_row(std::ostream& os, const std::string& name, const ReconstructionReport& rep) {
  os << name << ',' << (rep.relative_l2_error ? fmt(*rep.relative_l2_error) : std::string("nan")) << ',' << fmt(rep.noise_floor)
     << ',' << fmt(rep.condition) << ',' << rep.n_moments << ',' << (rep.rank_deficient ? 1 : 0) << '\n';
}

}  // namespace detail

/// Runs one experiment and writes its artifacts under cfg.output. `log` receives progress text.
/// Returns 0, or 2 when a nonfatal condition (RankDeficient, NonIdentifiable) was reported.
/// Errors propagate as exceptions.
inline RunOutcome run_experiment(const ExperimentConfig& cfg, std::ostream& log, const std::string& config_source = "") {
  const auto t0 = std::chrono::steady_clock::now();
  RunOutcome outcome;
  OutputWriter out(cfg.output);
  std::ostringstream& rep = out.file("report.txt");
  const std::string cfg_text = serialize(cfg);
  detail::Model model = detail::build_model(cfg);
  const Domain& d = *model.domain;
  const Discretization& disc = *model.disc;

  std::unique_ptr<FlatFileCache> cache;
  if (cfg.cache.enabled)
    cache = std::make_unique<FlatFileCache>(cfg.cache.dir.empty() ? std::filesystem::path(cfg.output) / "cache"
                                                                  : std::filesystem::path(cfg.cache.dir));
  const SemilinearSolver solver(model.disc, model.coeffs, cfg.newton);
  const DtnSimulator sim(solver, cache.get());

  rep << "experiment: " << to_string(cfg.experiment) << '\n';
  rep << "domain: " << d.signature() << '\n';
  rep << "nodes: interior " << d.n_interior << ", outer boundary " << d.n_outer << ", obstacle boundary " << d.n_obstacle
      << ", Gamma1 " << count(d.gamma1) << ", Gamma2 " << count(d.gamma2) << '\n';
  rep << "small-data radius delta_data = " << sci(cfg.newton.delta_data) << ", ||q||_inf = " << sci(model.coeffs.q_sup()) << '\n';

  auto nonfatal = [&](const std::string& what) {
    outcome.exit_code = 2;
    outcome.nonfatal.push_back(what);
    rep << "nonfatal: " << what << '\n';
  };

  switch (cfg.experiment) {
    case Experiment::forward: {
      const BoundaryTrace f = boundary_preset(model.domain, cfg.forward_f);
      const auto sol = solver.solve(f);
      if (sol.u.values.isZero(0.0))
        rep << "u = 0\n";
      else
        rep << "||u||_inf = " << sci(sol.u.sup_norm()) << '\n';
      const auto& nr = sol.report;
      rep << "||f||_inf = " << sci(nr.data_norm) << ", Newton iterations " << nr.iterations << ", final residual "
          << sci(nr.final_residual) << " (tolerance " << sci(nr.tolerance) << "), C_wp = " << sci(nr.c_wp)
          << (nr.within_small_data ? "" : ", data outside the small-data radius") << '\n';
      rep << "residual history:";
      for (double r : nr.residuals) rep << ' ' << sci(r);
      rep << '\n';
      write_complex_field(out.file("u.csv"), d, sol.u.values);
      write_trace(out.file("dtn.csv"), normal_derivative(sol.u, d.gamma2));
      break;
    }
    case Experiment::dtn_bank: {
      const MomentFamilies fam = make_moment_families(disc, cfg.q_opts.functions);
      const auto& in = fam.inputs;
      const int n_in = static_cast<int>(in.ids.size()), n_out = static_cast<int>(fam.lasts.ids.size());
      auto& bank = out.file("bank.csv");
      bank << "order,input_ids,error_estimate,cancellation_warning\n";
      int records = 0;
      for (int m : cfg.bank.orders) {
        std::vector<std::vector<int>> heads;
        if (m == 1) {
          for (int i = 0; i < n_in; ++i) heads.push_back({i});
        } else if (m == 2) {
          std::set<std::vector<int>> pairs;
          for (const auto& t : sample_tuples(n_in, 2, n_out, cfg.q_opts.n_triplets, cfg.seed)) pairs.insert({t[0], t[1]});
          heads.assign(pairs.begin(), pairs.end());
        } else {
          heads = sample_multisets(n_in, m, cfg.bank.n_tuples, cfg.seed);
        }
        for (const auto& h : heads) {
          std::vector<BoundaryTrace> fl;
          std::vector<std::string> ids;
          for (int i : h) {
            fl.push_back(in.traces[i]);
            ids.push_back(in.ids[i]);
          }
          const auto rec = sim.linearization(fl, cfg.stencil);
          bank << m << ',' << join_strings(ids) << ',' << fmt(rec.error_estimate) << ',' << (rec.cancellation_warning ? 1 : 0) << '\n';
          ++records;
        }
      }
      rep << "linearizations banked: " << records << '\n';
      break;
    }
    case Experiment::linearize: {
      std::vector<BoundaryTrace> fl;
      std::vector<std::string> ids;
      for (size_t i = 0; i < cfg.linearize_inputs.size(); ++i) {
        fl.push_back(boundary_preset(model.domain, cfg.linearize_inputs[i]));
        const auto& p = cfg.linearize_inputs[i];
        ids.push_back(p.kind + std::to_string(p.mode) + p.parity);
      }
      auto rec = sim.linearization(fl, cfg.stencil);
      rec.input_ids = ids;
      write_record_csv(out.file("linearization.csv"), rec);
      rep << "order " << fl.size() << " linearization: ||output||_inf = " << sci(rec.output.sup_norm()) << ", error estimate "
          << sci(rec.error_estimate) << " (roundoff " << sci(rec.roundoff_estimate) << ")"
          << (rec.cancellation_warning ? ", cancellation warning" : "") << '\n';
      if (cfg.linearize_oracle) {
        const BoundaryTrace oracle = sim.chain_oracle(fl);
        const double gap = (rec.output.values - oracle.values).cwiseAbs().maxCoeff();
        rep << "linearized-chain oracle: ||oracle||_inf = " << sci(oracle.sup_norm()) << ", gap " << sci(gap) << '\n';
        write_trace(out.file("oracle.csv"), oracle);
      }
      break;
    }
    case Experiment::recover_q:
    case Experiment::full_pipeline: {
      const RVec q_true = model.coeffs.q;
      const auto qr = run_q_experiment(sim, cfg.q_opts, q_true);
      rep << "q test functions: " << qr.families.inputs.ids.size() << " inputs, " << qr.families.lasts.ids.size()
          << " last functions; second linearizations " << qr.linearizations << '\n';
      if (qr.comparison.compared)
        rep << "Green consistency: " << qr.comparison.consistent << " of " << qr.comparison.compared
            << " boundary moments agree with the interior oracle within combined error\n";
      detail::report_reconstruction(rep, "q", qr.recon.report);
      write_real_field(out.file("q_hat.csv"), d, qr.recon.field.values, q_true);
      write_moments(out.file("q_moments.csv"), qr.moments);
      auto& err = out.file("errors.csv");
      detail::errors_header(err);
      detail::errors_row(err, "q", qr.recon.report);
      if (qr.recon.report.rank_deficient) nonfatal("RankDeficient in q recovery");
      if (cfg.cgo_fourier) {
        const auto fe = run_cgo_fourier(sim, cfg.cgo_k, cfg.stencil, q_true);
        auto& cf = out.file("cgo_fourier.csv");
        cf << "kx,ky,re,im,truth_re,truth_im\n";
        for (const auto& e : fe)
          cf << fmt(e.k[0]) << ',' << fmt(e.k[1]) << ',' << fmt(e.estimate.real()) << ',' << fmt(e.estimate.imag()) << ','
             << fmt(e.truth->real()) << ',' << fmt(e.truth->imag()) << '\n';
        rep << "CGO Fourier route: " << fe.size() << " coefficients (experimental)\n";
      }
      if (cfg.experiment == Experiment::recover_q) break;
      // V_m with the recovered lower-order coefficients
      NonlinearCoefficients known = NonlinearCoefficients::zero(d, cfg.k_trunc);
      known.q = qr.recon.field.values.real();
      double lower_error = qr.recon.report.relative_l2_error.value_or(0.0);
      for (int m : cfg.v_orders) {
        VExperimentOptions vo = cfg.v_opts;
        vo.order = m;
        const RVec truth = model.coeffs.V[m - 3];
        const SemilinearSolver ks(model.disc, known, cfg.newton);
        const auto vr = run_v_experiment(sim, ks, vo, truth, lower_error);
        const std::string name = "V" + std::to_string(m);
        if (vr.comparison.compared)
          rep << name << " Green consistency (exact truth vs data with recovered lower orders): " << vr.comparison.consistent << " of "
              << vr.comparison.compared << '\n';
        detail::report_reconstruction(rep, name, vr.recon.report);
        write_real_field(out.file("v" + std::to_string(m) + "_hat.csv"), d, vr.recon.field.values, truth);
        detail::errors_row(err, name, vr.recon.report);
        if (vr.recon.report.rank_deficient) nonfatal("RankDeficient in " + name + " recovery");
        known.V[m - 3] = vr.recon.field.values.real();
        lower_error = std::max(lower_error, vr.recon.report.relative_l2_error.value_or(0.0));
      }
      break;
    }
    case Experiment::recover_v: {
      auto& err = out.file("errors.csv");
      detail::errors_header(err);
      for (int m : cfg.v_orders) {
        NonlinearCoefficients known = model.coeffs;
        for (int k = m; k <= cfg.k_trunc; ++k) known.V[k - 3].setZero();
        VExperimentOptions vo = cfg.v_opts;
        vo.order = m;
        const RVec truth = model.coeffs.V[m - 3];
        const SemilinearSolver ks(model.disc, known, cfg.newton);
        const auto vr = run_v_experiment(sim, ks, vo, truth);
        const std::string name = "V" + std::to_string(m);
        rep << name << ": order-" << m << " linearizations " << vr.linearizations << '\n';
        if (vr.comparison.compared)
          rep << name << " Green consistency: " << vr.comparison.consistent << " of " << vr.comparison.compared << '\n';
        detail::report_reconstruction(rep, name, vr.recon.report);
        rep << name << ": ||V_hat||_L2 = " << sci(l2_norm(d, vr.recon.field.values)) << '\n';
        write_real_field(out.file("v" + std::to_string(m) + "_hat.csv"), d, vr.recon.field.values, truth);
        write_moments(out.file("v" + std::to_string(m) + "_moments.csv"), vr.moments);
        detail::errors_row(err, name, vr.recon.report);
        if (vr.recon.report.rank_deficient) nonfatal("RankDeficient in " + name + " recovery");
      }
      break;
    }
    case Experiment::recover_obstacle: {
      const auto orr = run_obstacle_experiment(sim, cfg.obstacle);
      const auto& o = orr.report;
      rep << "obstacle: center (" << sci(o.best.center[0]) << ", " << sci(o.best.center[1]) << "), radius " << sci(o.best.radius)
          << ", misfit " << sci(o.misfit) << " (data scale " << sci(o.data_scale) << ", noise level " << sci(o.noise_level)
          << "), evaluations " << o.evaluations << '\n';
      if (cfg.domain.obstacle)
        rep << "true obstacle: center (" << sci(cfg.domain.obstacle->center[0]) << ", " << sci(cfg.domain.obstacle->center[1])
            << "), radius " << sci(cfg.domain.obstacle->radius) << '\n';
      else
        rep << "data generated without an obstacle\n";
      auto& oc = out.file("obstacle.csv");
      oc << "quantity,value,truth\n";
      const auto& t = cfg.domain.obstacle;
      oc << "center_x," << fmt(o.best.center[0]) << ',' << (t ? fmt(t->center[0]) : "nan") << '\n';
      oc << "center_y," << fmt(o.best.center[1]) << ',' << (t ? fmt(t->center[1]) : "nan") << '\n';
      oc << "radius," << fmt(o.best.radius) << ',' << (t ? fmt(t->radius) : "nan") << '\n';
      oc << "misfit," << fmt(o.misfit) << ",nan\n";
      auto& lc = out.file("landscape.csv");
      lc << "cx,cy,r,misfit\n";
      for (const auto& p : o.landscape) lc << fmt(p[0]) << ',' << fmt(p[1]) << ',' << fmt(p[2]) << ',' << fmt(p[3]) << '\n';
      if (o.non_identifiable) nonfatal("NonIdentifiable: " + o.reason);
      break;
    }
    case Experiment::density_check: {
      const Mask gt = d.gamma_tilde();
      const auto basis = density_basis(disc, gt, cfg.density.max_degree, cfg.density.n_cgo, cfg.density.cgo_freq);
      Field target = Field::zeros(model.domain);
      if (cfg.density.target == "in_span") {
        if (basis.size() < 2) throw ConfigError("in_span density target needs at least two basis functions");
        const CVec gx0 = disc.gradient.dx.cast<cplx>() * basis[0].values, gy0 = disc.gradient.dy.cast<cplx>() * basis[0].values;
        const CVec gx1 = disc.gradient.dx.cast<cplx>() * basis[1].values, gy1 = disc.gradient.dy.cast<cplx>() * basis[1].values;
        target.values.head(d.n_interior) = gx0.cwiseProduct(gx1) + gy0.cwiseProduct(gy1);
      } else {
        target.values = sample_preset(d, cfg.density.target_preset).cast<cplx>();
      }
      const auto dr = density_check(disc, basis, target, cfg.density.N, cfg.density.ill_threshold);
      auto& dc = out.file("density.csv");
      dc << "N,columns,rank,residual,gram_condition\n";
      for (size_t k = 0; k < dr.N.size(); ++k)
        dc << dr.N[k] << ',' << dr.n_columns[k] << ',' << dr.rank[k] << ',' << fmt(dr.residual[k]) << ',' << fmt(dr.gram_condition[k])
           << '\n';
      rep << "density: basis " << basis.size() << " functions, Gamma~ nodes " << count(gt) << ", final residual "
          << sci(dr.residual.back()) << ", monotone " << (dr.monotone ? "yes" : "no") << '\n';
      if (dr.gram_ill_conditioned) rep << "warning: GramIllConditioned (condition above " << sci(dr.ill_threshold) << ")\n";
      break;
    }
  }

  rep << "exit code " << outcome.exit_code << '\n';
  out.manifest("tool", std::string("nlinv ") + kVersion);
  out.manifest("eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                            std::to_string(EIGEN_MINOR_VERSION));
  out.manifest("experiment", to_string(cfg.experiment));
  out.manifest("config_source", config_source);
  Fnv1a ch;
  ch.bytes(cfg_text.data(), cfg_text.size());
  out.manifest("config_hash", hex64(ch.value()));
  out.manifest("seed", std::to_string(cfg.seed));
  out.manifest("domain", d.signature());
  out.manifest("model_hash", hex64(sim.model_hash()));
  out.file("config.resolved.yaml") << cfg_text;
  out.flush();

  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::ostringstream timing;
  timing << "wall_seconds," << fmt(wall, "%.3f") << "\nforward_solves," << sim.solves() << "\ncache_hits," << sim.cache_hits() << '\n';
  out.write("timing.txt", timing.str());
  log << rep.str();
  return outcome;
}

}  // namespace nlinv::cli
