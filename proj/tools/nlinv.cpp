#include <CLI11.hpp>

#include <iostream>

#include "nlinv/cli.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> domain;
  bool cgo_fourier = false;
  bool no_cache = false;
};

int execute(const Flags& f, std::optional<nlinv::cli::Experiment> forced) {
  using namespace nlinv;
  try {
    cli::ExperimentConfig cfg = cli::load_config(f.config, f.domain);
    if (forced) cfg.experiment = *forced;
    if (f.seed) {
      cfg.seed = *f.seed;
      cfg.q_opts.recon.rng_seed = cfg.v_opts.recon.rng_seed = *f.seed;
    }
    if (f.out) cfg.output = *f.out;
    if (f.cgo_fourier) cfg.cgo_fourier = true;
    if (f.no_cache) cfg.cache.enabled = false;
    return cli::run_experiment(cfg, std::cout, f.config).exit_code;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semilinear inverse boundary value toolkit: forward solves, DtN linearizations and reconstructions"};
  app.require_subcommand(1);
  Flags flags;
  std::optional<nlinv::cli::Experiment> forced;
  int rc = 0;

  auto add = [&](const std::string& name, const std::string& help, std::optional<nlinv::cli::Experiment> e) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("config", flags.config, "experiment config (YAML)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", flags.seed, "override the RNG seed");
    sub->add_option("--out", flags.out, "override the output directory");
    sub->add_option("--domain", flags.domain, "domain config file replacing the domain table")->check(CLI::ExistingFile);
    sub->add_flag("--cgo-fourier", flags.cgo_fourier, "also run the experimental CGO Fourier route (full boundary only)");
    sub->add_flag("--no-cache", flags.no_cache, "disable the forward-solve cache");
    sub->callback([&, e] {
      forced = e;
      rc = execute(flags, forced);
    });
  };
  using nlinv::cli::Experiment;
  add("run", "run the experiment named in the config", std::nullopt);
  add("forward", "solve the forward problem for one boundary datum", Experiment::forward);
  add("dtn-bank", "precompute and cache the forward solves of the test-function linearizations", Experiment::dtn_bank);
  add("linearize", "one mixed linearization of the DtN map with its oracle", Experiment::linearize);
  add("recover-q", "reconstruct q from second linearizations", Experiment::recover_q);
  add("recover-v", "reconstruct V_m from m-th linearizations with the lower orders known", Experiment::recover_v);
  add("recover-obstacle", "reconstruct a circular obstacle from first linearizations", Experiment::recover_obstacle);
  add("density-check", "span residuals of products of gradients of harmonic functions", Experiment::density_check);
  add("full-pipeline", "q, then V_m with the recovered lower orders", Experiment::full_pipeline);

  CLI11_PARSE(app, argc, argv);
  return rc;
}
