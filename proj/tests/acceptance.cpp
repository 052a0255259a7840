#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "sthmm/commands.hpp"
#include "sthmm/diagnostics.hpp"
#include "sthmm/synthdata.hpp"
#include "test_helpers.hpp"

using namespace sthmm;
using namespace sthmm::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

fs::path scratch(const std::string& name) {
  const char* root = std::getenv("STHMM_TEST_TMP");
  const fs::path base = root ? fs::path(root) : fs::temp_directory_path() / "sthmm_acceptance";
  const fs::path dir = base / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// |mean(x) - target| in units of the Monte Carlo standard error.
double mc_z(const std::vector<double>& x, double target) {
  return std::abs(mean(x) - target) / std::sqrt(variance(x) / static_cast<double>(x.size()));
}

Outcome conditional_exactness() {
  const auto g = build_grid(2);
  Rng rng(101);
  double worst = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    const auto theta = random_theta(2, rng, 1.0);
    const EnumeratedDistribution exact(theta, g, 2);
    for (std::size_t c = 0; c < exact.size(); ++c) {
      const auto u = exact.field(c);
      for (int i = 0; i < 4; ++i)
        for (int t = 0; t < 2; ++t) {
          const auto fc = full_conditional(i, t, u, theta, g);
          const auto ref = exact.conditional(i, t, u);
          for (int k = 0; k < 2; ++k) worst = std::max(worst, std::abs(fc[k] - ref[k]));
        }
    }
  }
  return {worst <= 1e-12, fmt("max abs error %.3g over 50 theta x 256 fields x 8 coordinates", worst)};
}

Outcome locality() {
  const auto g = build_grid(4);
  const int n_times = 3, k = 3;
  Rng rng(102);
  std::uniform_int_distribution<int> site(0, g.n_sites() - 1), time(0, n_times - 1), state(0, k - 1);
  int unchanged = 0, touched = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto theta = random_theta(k, rng, 1.0);
    auto u = random_field(g.n_sites(), n_times, k, rng);
    const int i = site(rng), t = time(rng);
    const auto before = full_conditional(i, t, u, theta, g);
    for (int j = 0; j < g.n_sites(); ++j)
      for (int s = 0; s < n_times; ++s) {
        const bool blanket = (j == i && std::abs(s - t) <= 1) || (s == t && g.adjacent(i, j));
        if (blanket || state(rng) != 0) continue;
        u(j, s) = state(rng);
        ++touched;
      }
    unchanged += full_conditional(i, t, u, theta, g) == before;
  }
  return {unchanged == 1000, fmt("%.0f/1000 trials bitwise identical, %.0f coordinates perturbed", unchanged, touched)};
}

Outcome z_ratio() {
  const auto g = build_grid(2);
  const int n_times = 2, draws = 100000;
  Rng rng(103);
  std::normal_distribution<double> step(0.0, 0.3);
  double worst = 0.0;
  for (int pair = 0; pair < 10; ++pair) {
    const auto theta = random_theta(2, rng, 0.7);
    auto tilde = theta;
    for (const auto& id : theta.free_parameters()) tilde.set(id, theta.get(id) + step(rng));
    const EnumeratedDistribution aux(tilde, g, n_times);
    std::vector<LatentField> omegas;
    std::vector<double> ratios;
    omegas.reserve(draws);
    for (int d = 0; d < draws; ++d) {
      omegas.push_back(aux.sample(rng));
      ratios.push_back(std::exp(log_potential(omegas.back(), theta, g) - log_potential(omegas.back(), tilde, g)));
    }
    const double estimate = std::exp(log_z_ratio_estimate(theta, tilde, omegas, g));
    const double truth = std::exp(log_partition_exact(theta, g, n_times) - log_partition_exact(tilde, g, n_times));
    const double se = std::sqrt(variance(ratios) / draws);
    worst = std::max(worst, std::abs(estimate - truth) / se);
  }
  return {worst <= 3.0, fmt("worst |estimate - Z ratio| = %.2f MC s.e. over 10 pairs", worst)};
}

Outcome conjugacy() {
  const int draws = 100000;
  Rng rng(104);
  std::normal_distribution<double> z(0.0, 1.0);
  Dataset data;
  data.n_sites = 12;
  data.n_times = 3;
  data.graph = NeighborhoodSystem(12, {});
  data.y.resize(2, 36);
  for (Eigen::Index c = 0; c < 36; ++c) data.y.col(c) = Eigen::Vector2d(1.0 + z(rng), -0.5 + 0.7 * z(rng));
  const auto u = random_field(12, 3, 2, rng);
  const auto prior = default_priors(2).multivariate_prior();
  double worst = 0.0;
  auto track = [&](const std::vector<double>& x, double target) { worst = std::max(worst, mc_z(x, target)); };

  Eigen::Matrix2d sigma;
  sigma << 1.3, 0.4, 0.4, 0.8;
  const auto st = sufficient_stats(data, u, 0);
  const Eigen::Matrix2d post_cov = (st.n * sigma.inverse() + prior.V.inverse()).inverse();
  const Eigen::Vector2d post_mean = post_cov * (sigma.inverse() * st.sum + prior.V.inverse() * prior.m);
  std::vector<std::vector<double>> mu(2), cross(3);
  for (int r = 0; r < draws; ++r) {
    const Eigen::Vector2d x = sample_mu(0, data, u, sigma, prior, rng);
    const Eigen::Vector2d e = x - post_mean;
    mu[0].push_back(x[0]);
    mu[1].push_back(x[1]);
    cross[0].push_back(e[0] * e[0]);
    cross[1].push_back(e[0] * e[1]);
    cross[2].push_back(e[1] * e[1]);
  }
  track(mu[0], post_mean[0]);
  track(mu[1], post_mean[1]);
  track(cross[0], post_cov(0, 0));
  track(cross[1], post_cov(0, 1));
  track(cross[2], post_cov(1, 1));

  const Eigen::Vector2d center(0.9, -0.4);
  const Eigen::Matrix2d scatter = scatter_about(data, u, 1, center);
  const int n1 = sufficient_stats(data, u, 1).n;
  const Eigen::Matrix2d iw_mean = (prior.S + scatter) / (prior.nu + n1 - 2 - 1);
  std::vector<std::vector<double>> sig(3);
  for (int r = 0; r < draws; ++r) {
    const Eigen::MatrixXd s = sample_sigma(1, data, u, center, prior, rng);
    sig[0].push_back(s(0, 0));
    sig[1].push_back(s(0, 1));
    sig[2].push_back(s(1, 1));
  }
  track(sig[0], iw_mean(0, 0));
  track(sig[1], iw_mean(0, 1));
  track(sig[2], iw_mean(1, 1));

  Dataset uv = data;
  uv.y = data.y.topRows(1);
  const UnivariatePrior up{0.5, 4.0, 2.0, 1.0};
  const auto su = sufficient_stats(uv, u, 0);
  const double s2 = 1.7;
  const double v_post = 1.0 / (su.n / s2 + 1.0 / up.v);
  const double m_post = v_post * (su.sum[0] / s2 + up.m / up.v);
  std::vector<double> mu_uv, mu_uv_sq, s_uv;
  for (int r = 0; r < draws; ++r) {
    const double x = sample_mu_univariate(0, uv, u, s2, up, rng);
    mu_uv.push_back(x);
    mu_uv_sq.push_back((x - m_post) * (x - m_post));
  }
  track(mu_uv, m_post);
  track(mu_uv_sq, v_post);
  const double center_uv = 0.8;
  const double ss = scatter_about(uv, u, 0, Eigen::VectorXd::Constant(1, center_uv))(0, 0);
  const double a_post = up.a + su.n / 2.0, b_post = up.b + ss / 2.0;
  for (int r = 0; r < draws; ++r) s_uv.push_back(sample_sigma_univariate(0, uv, u, center_uv, up, rng));
  track(s_uv, b_post / (a_post - 1.0));

  return {worst <= 3.0, fmt("worst deviation %.2f MC s.e. over 11 conditional moments", worst)};
}

Outcome closed_form_posterior() {
  Dataset data;
  data.n_sites = data.n_times = 1;
  data.graph = NeighborhoodSystem(1, {});
  data.y = Eigen::MatrixXd::Constant(1, 1, 0.3);
  EmissionParams em;
  em.mu = {Eigen::VectorXd::Constant(1, -1.0), Eigen::VectorXd::Constant(1, 1.0)};
  em.sigma = {Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Identity(1, 1)};

  SamplerConfig cfg;
  cfg.algorithm = Algorithm::exchange;
  cfg.burn_in = 10000;
  cfg.thinning = 5;
  cfg.iterations = cfg.burn_in + 5 * 100000;
  cfg.field_thinning = 1000;
  cfg.update_emissions = false;
  cfg.adaptation.horizon_fraction = static_cast<double>(cfg.burn_in) / cfg.iterations;
  cfg.seed = 105;
  const auto priors = default_univariate_priors();
  auto init = init_chain(data, priors, 2, cfg);
  init.emission = em;
  const auto out = run_chain(data, priors, cfg, std::move(init));
  auto beta = out.column("beta_1");
  std::sort(beta.begin(), beta.end());

  // p(beta_1 | y) on a grid: N(0, sd^2) prior times the marginal likelihood
  // sum_u p(u | beta_1) N(y; mu_u, 1).
  const double sd = cfg.prior_sd.beta;
  const double l0 = std::exp(-0.5 * 1.3 * 1.3), l1 = std::exp(-0.5 * 0.7 * 0.7);
  const double lo = -10.0 * sd, hi = 10.0 * sd;
  const int cells = 200000;
  const double h = (hi - lo) / cells;
  auto density = [&](double b) { return std::exp(-0.5 * b * b / (sd * sd)) * (std::exp(b) * l0 + l1) / (1.0 + std::exp(b)); };
  std::vector<double> cdf(cells + 1, 0.0);
  for (int c = 1; c <= cells; ++c) cdf[c] = cdf[c - 1] + 0.5 * h * (density(lo + (c - 1) * h) + density(lo + c * h));
  for (double& v : cdf) v /= cdf.back();
  auto exact_cdf = [&](double b) {
    if (b <= lo) return 0.0;
    if (b >= hi) return 1.0;
    const double pos = (b - lo) / h;
    const auto c = static_cast<std::size_t>(pos);
    return cdf[c] + (pos - c) * (cdf[c + 1] - cdf[c]);
  };
  const double n = static_cast<double>(beta.size());
  double ks = 0.0;
  for (std::size_t r = 0; r < beta.size(); ++r) {
    const double f = exact_cdf(beta[r]);
    ks = std::max({ks, std::abs((r + 1) / n - f), std::abs(r / n - f)});
  }
  return {ks < 0.02 && beta.size() == 100000, fmt("KS = %.4f at %.0f draws", ks, n)};
}

Outcome benchmark_direction(int workers) {
  BenchmarkOptions opt;
  opt.scenario = "A";
  opt.replicates = 10;
  opt.seed = 2024;
  opt.sampler.iterations = 2000;
  opt.sampler.burn_in = 1000;
  opt.sampler.field_thinning = 10;
  opt.workers = workers;
  opt.out_dir = scratch("benchmark_direction").string();
  const auto res = cmd_benchmark(opt);
  std::string detail = "exchange wins " + std::to_string(res.exchange_wins()) + "/" + std::to_string(res.rows.size()) + ":";
  for (const auto& r : res.rows)
    detail += " " + r.parameter + fmt("(%.3f vs %.3f)", r.exchange_mae, r.pseudo_mae);
  return {res.exchange_wins() >= 5, detail};
}

ChainOutput fit_scenario(const Dataset& data, std::uint64_t seed) {
  SamplerConfig cfg;
  cfg.iterations = 4000;
  cfg.burn_in = 2000;
  cfg.thinning = 2;
  cfg.seed = seed;
  auto out = run_chain(data, default_priors(data.dim()), data.true_theta->n_states(), cfg);
  relabel_by_first_mean(out);
  return out;
}

Outcome misclassification_zero() {
  std::string detail;
  bool ok = true;
  for (const char* name : {"A", "C"}) {
    const auto data = sample_dataset(scenario_preset(name), 0);
    const auto out = fit_scenario(data, 107);
    const double m = misclassification(map_decode(out), *data.true_field);
    ok = ok && m == 0.0;
    detail += std::string(detail.empty() ? "" : ", ") + name + fmt(": %.4f", m);
  }
  return {ok, "misclassification " + detail};
}

Outcome emission_recovery() {
  const auto data = sample_dataset(scenario_preset("C"), 0);
  const auto out = fit_scenario(data, 108);
  const auto est = posterior_mean_emission(out);
  double worst = 0.0, worst_sample = 0.0;
  std::string detail;
  for (int s = 0; s < 2; ++s) {
    const auto st = sufficient_stats(data, *data.true_field, s);
    for (int h = 0; h < 2; ++h) {
      const double dev = est.mu[s][h] - data.true_emission->mu[s][h];
      worst = std::max(worst, std::abs(dev));
      worst_sample = std::max(worst_sample, std::abs(est.mu[s][h] - st.mean[h]));
      detail += fmt(" mu_%.0f_%.0f=%+.3f", s + 1, h + 1, dev) + fmt("(n=%.0f)", st.n);
    }
  }
  return {worst <= 0.15, fmt("max |mu - truth| = %.3f;", worst) + detail +
                             fmt("; max |mu - within-state sample mean under the true field| = %.3f", worst_sample)};
}

Outcome model_selection(int workers) {
  const auto dir = scratch("select_k");
  write_bundle(sample_dataset(scenario_preset("D"), 0), (dir / "data").string(), "D");
  SelectKOptions opt;
  opt.data.bundle = (dir / "data").string();
  opt.k_min = 1;
  opt.k_max = 4;
  opt.sampler.iterations = 6000;
  opt.sampler.burn_in = 2000;
  opt.sampler.thinning = 4;
  opt.sampler.seed = 109;
  opt.workers = workers;
  opt.out_dir = (dir / "out").string();
  const auto res = cmd_select_k(opt);
  std::string detail = "chosen K = " + std::to_string(res.chosen_k) + "; DIC";
  for (const auto& r : res.rows) detail += " K" + std::to_string(r.k) + fmt("=%.1f", r.dic.dic);
  return {res.chosen_k == 3, detail};
}

Outcome determinism(int workers) {
  BenchmarkOptions opt;
  opt.scenario = "B";
  opt.replicates = 3;
  opt.seed = 11;
  opt.sampler.iterations = 400;
  opt.sampler.burn_in = 200;
  opt.workers = workers;
  const auto first = scratch("determinism_1"), second = scratch("determinism_2");
  opt.out_dir = first.string();
  cmd_benchmark(opt);
  opt.out_dir = second.string();
  opt.workers = 1;
  cmd_benchmark(opt);
  const auto a = slurp(first / "benchmark.csv");
  const auto b = slurp(second / "benchmark.csv");
  return {!a.empty() && a == b, fmt("%.0f-byte benchmark.csv identical across runs", a.size())};
}

Outcome geweke_calibration() {
  const int chains = 1000, n = 5000;
  Rng rng(111);
  std::normal_distribution<double> z(0.0, 1.0);
  int iid_pass = 0, trend_fail = 0;
  std::vector<double> x(n);
  for (int c = 0; c < chains; ++c) {
    for (double& v : x) v = z(rng);
    iid_pass += geweke(x).pass;
    for (int t = 0; t < n; ++t) x[t] = z(rng) + 0.5 * t / n;
    trend_fail += !geweke(x).pass;
  }
  const double rate = iid_pass / double(chains), fail = trend_fail / double(chains);
  return {std::abs(rate - 0.95) <= 0.02 && fail >= 0.99,
          fmt("iid pass rate %.3f, trend failure rate %.3f (chains of length %.0f)", rate, fail, n)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  int workers = 0;
  std::vector<int> only;
  app.add_option("--workers", workers, "Worker threads (default: STHMM_WORKERS or 1)");
  app.add_option("--only", only, "Run only these criteria");
  CLI11_PARSE(app, argc, argv);
  if (workers <= 0) workers = workers_from_env();

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"conditional exactness", conditional_exactness},
      {"locality", locality},
      {"Z-ratio unbiasedness", z_ratio},
      {"conjugacy", conjugacy},
      {"closed-form posterior", closed_form_posterior},
      {"simulation-study direction", [&] { return benchmark_direction(workers); }},
      {"misclassification", misclassification_zero},
      {"emission recovery", emission_recovery},
      {"model selection", [&] { return model_selection(workers); }},
      {"determinism", [&] { return determinism(workers); }},
      {"Geweke calibration", geweke_calibration},
  };
  int failures = 0;
  for (std::size_t c = 0; c < criteria.size(); ++c) {
    const int id = static_cast<int>(c) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[c].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failures += !o.pass;
    std::printf("%s %2d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, criteria[c].first.c_str(), o.detail.c_str(),
                secs);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
