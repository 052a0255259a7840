#include <chrono>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "sthmm/commands.hpp"

using namespace sthmm;

namespace {

struct SamplerFlags {
  SamplerConfig cfg;
  std::string algorithm = "exchange";
  std::string init = "prior";
  bool cold_start = false;
  bool no_adapt = false;
  double prior_sd = 1.0;
};

void add_sampler_options(CLI::App* cmd, SamplerFlags& f, bool with_algorithm) {
  auto& c = f.cfg;
  if (with_algorithm)
    cmd->add_option("--algo", f.algorithm, "Latent-parameter update: exchange, pseudo or noisy_exchange")
        ->check(CLI::IsMember({"exchange", "pseudo", "noisy_exchange"}))
        ->capture_default_str();
  cmd->add_option("--iters", c.iterations, "Total iterations R")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--burnin", c.burn_in, "Burn-in iterations")->check(CLI::NonNegativeNumber)->capture_default_str();
  cmd->add_option("--thin", c.thinning, "Keep every n-th post-burn-in draw")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--field-thin", c.field_thinning, "Keep the latent field of every n-th stored draw")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--aux", c.aux.initial, "Auxiliary Gibbs sweeps M(1)")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--aux-min", c.aux.minimum, "Floor of the auxiliary sweep schedule")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--aux-decay", c.aux.decay_every, "Drop one auxiliary sweep every n iterations (0 = constant)")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cmd->add_flag("--cold-start", f.cold_start, "Start auxiliary chains from a uniform random field");
  cmd->add_option("--noisy-j", c.noisy_j, "Auxiliary draws per noisy-exchange step")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_flag("--no-adapt", f.no_adapt, "Disable proposal-scale adaptation");
  cmd->add_option("--target-accept", c.adaptation.target, "Adaptation target acceptance")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  cmd->add_option("--adapt-c", c.adaptation.c, "Adaptation step constant C")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--adapt-horizon", c.adaptation.horizon_fraction, "Fraction of the run with adaptation on")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  cmd->add_option("--init-scale", c.adaptation.initial_scale, "Initial random-walk standard deviation")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--prior-sd", f.prior_sd, "Prior standard deviation of every latent parameter")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_flag("--symmetric", c.parsimony.symmetric_spatial_temporal, "Symmetric gamma, gamma*, delta");
  cmd->add_flag("--shared-time", c.parsimony.shared_time, "Tie beta* to beta and gamma* to gamma");
  cmd->add_option("--init", f.init, "Emission start: prior draw or moment-based")
      ->check(CLI::IsMember({"prior", "moments"}))
      ->capture_default_str();
}

void finish_sampler(SamplerFlags& f) {
  auto& c = f.cfg;
  c.algorithm = parse_algorithm(f.algorithm);
  c.warm_start = !f.cold_start;
  c.adaptation.enabled = !f.no_adapt;
  c.emission_init = f.init == "moments" ? EmissionInit::moments : EmissionInit::prior;
  c.prior_sd = {f.prior_sd, f.prior_sd, f.prior_sd, f.prior_sd, f.prior_sd};
  if (c.aux.minimum > c.aux.initial) c.aux.minimum = c.aux.initial;
}

struct PriorFlags {
  double sign = 1.0;
  UnivariatePrior uv;
  bool uv_set = false;
};

void add_prior_options(CLI::App* cmd, PriorFlags& p) {
  cmd->add_option("--prior-offdiag-sign", p.sign, "Sign of the off-diagonal entries of S (+1 or -1)")
      ->check(CLI::IsMember({-1.0, 1.0}))
      ->capture_default_str();
  auto* m = cmd->add_option("--uv-m", p.uv.m, "Univariate prior mean of mu")->capture_default_str();
  auto* v = cmd->add_option("--uv-v", p.uv.v, "Univariate prior variance of mu")->check(CLI::PositiveNumber)->capture_default_str();
  auto* a = cmd->add_option("--uv-a", p.uv.a, "Inverse-gamma shape")->check(CLI::PositiveNumber)->capture_default_str();
  auto* b = cmd->add_option("--uv-b", p.uv.b, "Inverse-gamma rate")->check(CLI::PositiveNumber)->capture_default_str();
  for (auto* o : {m, v, a, b}) o->each([&p](const std::string&) { p.uv_set = true; });
}

PriorOptions finish_priors(const PriorFlags& p) {
  PriorOptions o;
  o.off_diagonal_sign = p.sign;
  if (p.uv_set) o.univariate = p.uv;
  return o;
}

void add_data_options(CLI::App* cmd, DataSource& d) {
  cmd->add_option("--data", d.bundle, "Dataset bundle directory");
  cmd->add_option("--obs", d.observations, "Observation CSV (site,time,y1..yd)");
  cmd->add_option("--graph", d.graph, "Edge-list file");
}

int resolve_workers(int flag) { return flag > 0 ? flag : workers_from_env(); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatio-temporal hidden Markov models with an autologistic latent field"};
  app.set_config("--config", "", "INI file with one [section] per command");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);
  app.set_version_flag("--version", "sthmm 0.1.0");

  // simulate
  SimulateOptions sim;
  int sim_replicates = 0, sim_burn = 0, sim_workers = 0;
  std::uint64_t sim_seed = 0;
  auto* simulate = app.add_subcommand("simulate", "Generate scenario datasets as bundles");
  simulate->add_option("--scenario", sim.scenario, "Preset A, B, C or D")
      ->check(CLI::IsMember({"A", "B", "C", "D"}))
      ->capture_default_str();
  simulate->add_option("--scenario-file", sim.scenario_file, "JSON scenario (overrides --scenario)");
  auto* sim_rep_opt = simulate->add_option("--replicates", sim_replicates, "Number of datasets D")->check(CLI::PositiveNumber);
  auto* sim_seed_opt = simulate->add_option("--seed", sim_seed, "Master seed");
  auto* sim_burn_opt = simulate->add_option("--burn-sweeps", sim_burn, "Gibbs sweeps per latent field")->check(CLI::PositiveNumber);
  simulate->add_option("--out", sim.out_dir, "Output directory")->capture_default_str();
  simulate->add_option("--workers", sim_workers, "Worker threads (default from STHMM_WORKERS)");

  // fit
  FitOptions fit;
  SamplerFlags fit_s;
  PriorFlags fit_p;
  int fit_k = 0;
  auto* fitc = app.add_subcommand("fit", "Fit the model to one dataset");
  add_data_options(fitc, fit.data);
  auto* fit_k_opt = fitc->add_option("-K,--states", fit_k, "Number of latent states")->check(CLI::PositiveNumber);
  add_sampler_options(fitc, fit_s, true);
  fitc->add_option("--seed", fit_s.cfg.seed, "Chain seed")->capture_default_str();
  add_prior_options(fitc, fit_p);
  fitc->add_flag("--relabel", fit.relabel, "Order states by the first coordinate of mu");
  fitc->add_flag("--fields", fit.write_fields, "Also write stored latent fields");
  fitc->add_option("--out", fit.out_dir, "Output directory")->capture_default_str();

  // benchmark
  BenchmarkOptions bench;
  SamplerFlags bench_s;
  PriorFlags bench_p;
  int bench_replicates = 0, bench_workers = 0;
  std::uint64_t bench_seed = 0;
  auto* benchc = app.add_subcommand("benchmark", "Compare exchange and pseudo-posterior MAE over replicates");
  benchc->add_option("--scenario", bench.scenario, "Preset A, B, C or D")
      ->check(CLI::IsMember({"A", "B", "C", "D"}))
      ->capture_default_str();
  benchc->add_option("--scenario-file", bench.scenario_file, "JSON scenario (overrides --scenario)");
  auto* bench_rep_opt = benchc->add_option("--replicates", bench_replicates, "Number of datasets D")->check(CLI::PositiveNumber);
  auto* bench_seed_opt = benchc->add_option("--seed", bench_seed, "Master seed for data and chains");
  add_sampler_options(benchc, bench_s, false);
  add_prior_options(benchc, bench_p);
  benchc->add_option("--workers", bench_workers, "Worker threads (default from STHMM_WORKERS)");
  benchc->add_option("--out", bench.out_dir, "Output directory")->capture_default_str();

  // preprocess
  PreprocessOptions pre;
  auto* prec = app.add_subcommand("preprocess", "Relative variation (r_t - r_{t-1}) / r_{t-1} * 100");
  prec->add_option("--input", pre.input, "CSV of levels (site,time,v1..vd)")->required();
  prec->add_option("--output", pre.output, "Observation CSV to write")->required();

  // select-k
  SelectKOptions sel;
  sel.sampler.iterations = 50000;
  sel.sampler.burn_in = 10000;
  sel.sampler.thinning = 10;
  SamplerFlags sel_s;
  sel_s.cfg = sel.sampler;
  PriorFlags sel_p;
  int sel_workers = 0;
  auto* selc = app.add_subcommand("select-k", "Choose the number of states by DIC");
  add_data_options(selc, sel.data);
  selc->add_option("--k-min", sel.k_min, "Smallest K")->check(CLI::PositiveNumber)->capture_default_str();
  selc->add_option("--k-max", sel.k_max, "Largest K")->check(CLI::PositiveNumber)->capture_default_str();
  add_sampler_options(selc, sel_s, true);
  selc->add_option("--seed", sel_s.cfg.seed, "Chain seed")->capture_default_str();
  add_prior_options(selc, sel_p);
  selc->add_option("--workers", sel_workers, "Worker threads (default from STHMM_WORKERS)");
  selc->add_option("--out", sel.out_dir, "Output directory")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    const auto start = std::chrono::steady_clock::now();
    if (simulate->parsed()) {
      if (*sim_rep_opt) sim.replicates = sim_replicates;
      if (*sim_seed_opt) sim.seed = sim_seed;
      if (*sim_burn_opt) sim.burn_sweeps = sim_burn;
      sim.workers = resolve_workers(sim_workers);
      const auto paths = cmd_simulate(sim);
      for (const auto& p : paths) std::cout << p << '\n';
    } else if (fitc->parsed()) {
      finish_sampler(fit_s);
      fit.sampler = fit_s.cfg;
      fit.priors = finish_priors(fit_p);
      if (*fit_k_opt) fit.n_states = fit_k;
      const auto res = cmd_fit(fit);
      std::cout << "algorithm " << res.report.algorithm << ", K = " << res.report.n_states << ", "
                << res.report.n_draws << " draws\n";
      for (const auto& [name, rate] : res.report.acceptance) std::cout << "  acceptance " << name << " = " << rate << '\n';
      if (res.report.misclassification) std::cout << "misclassification " << *res.report.misclassification << '\n';
      if (res.report.dic) std::cout << "DIC " << res.report.dic->dic << " (p_D " << res.report.dic->p_d << ")\n";
      for (const auto& f : res.files) std::cout << f << '\n';
    } else if (benchc->parsed()) {
      finish_sampler(bench_s);
      bench.sampler = bench_s.cfg;
      bench.priors = finish_priors(bench_p);
      if (*bench_rep_opt) bench.replicates = bench_replicates;
      if (*bench_seed_opt) bench.seed = bench_seed;
      bench.workers = resolve_workers(bench_workers);
      const auto res = cmd_benchmark(bench);
      std::cout << benchmark_csv(res);
      std::cout << "exchange lower on " << res.exchange_wins() << " of " << res.rows.size() << " parameters\n";
      for (const auto& f : res.files) std::cout << f << '\n';
    } else if (prec->parsed()) {
      cmd_preprocess_relative_variation(pre);
      std::cout << pre.output << '\n';
    } else if (selc->parsed()) {
      finish_sampler(sel_s);
      sel.sampler = sel_s.cfg;
      sel.priors = finish_priors(sel_p);
      sel.workers = resolve_workers(sel_workers);
      const auto res = cmd_select_k(sel);
      for (const auto& r : res.rows) std::cout << "K = " << r.k << "  DIC " << r.dic.dic << "  p_D " << r.dic.p_d << '\n';
      std::cout << "chosen K = " << res.chosen_k << '\n';
      for (const auto& f : res.files) std::cout << f << '\n';
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cerr << "elapsed " << secs << " s\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
