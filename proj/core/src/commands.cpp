#include "sthmm/commands.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

namespace sthmm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CommandError("cannot write " + path.string());
  out << content;
  if (!out) throw CommandError("failed writing " + path.string());
  return path.string();
}

fs::path prepare_dir(const std::string& dir) {
  if (dir.empty()) throw CommandError("output directory must not be empty");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw CommandError("cannot create output directory " + dir);
  return fs::path(dir);
}

ScenarioSpec resolve_scenario(const std::string& name, const std::string& file) {
  if (!file.empty()) {
    if (!fs::exists(file)) throw CommandError("scenario file not found: " + file);
    return load_scenario_file(file);
  }
  return scenario_preset(name);
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return os.str();
}

std::vector<double> theta_means(const ChainOutput& out) {
  std::vector<double> means(out.theta_params.size(), 0.0);
  for (const auto& d : out.draws)
    for (std::size_t p = 0; p < means.size(); ++p) means[p] += d.theta.get(out.theta_params[p]);
  for (double& m : means) m /= static_cast<double>(out.draws.size());
  return means;
}

}  // namespace

int workers_from_env() {
  const char* v = std::getenv(kWorkersEnv);
  if (v == nullptr || *v == '\0') return 1;
  try {
    std::size_t used = 0;
    const int n = std::stoi(v, &used);
    if (used != std::string(v).size() || n < 1) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw CommandError(std::string(kWorkersEnv) + " must be a positive integer, got '" + v + "'");
  }
}

void parallel_for(int n, int workers, const std::function<void(int)>& job) {
  if (n <= 0) return;
  workers = std::clamp(workers, 1, n);
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  std::atomic<int> next{0};
  auto run = [&] {
    for (int j = next++; j < n; j = next++) {
      try {
        job(j);
      } catch (...) {
        errors[j] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    run();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(run);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::vector<std::string> cmd_simulate(const SimulateOptions& opt) {
  ScenarioSpec spec = resolve_scenario(opt.scenario, opt.scenario_file);
  if (opt.replicates) spec.replicates = *opt.replicates;
  if (opt.seed) spec.seed = *opt.seed;
  if (opt.burn_sweeps) spec.burn_sweeps = *opt.burn_sweeps;
  spec.validate();
  const fs::path root = prepare_dir(opt.out_dir);
  std::vector<std::string> paths(static_cast<std::size_t>(spec.replicates));
  for (int r = 0; r < spec.replicates; ++r) {
    std::ostringstream name;
    name << "replicate_" << std::setw(3) << std::setfill('0') << (r + 1);
    paths[r] = (root / name.str()).string();
  }
  parallel_for(spec.replicates, opt.workers,
               [&](int r) { write_bundle(sample_dataset(spec, r), paths[r], spec.name); });
  write_file(root / "scenario.json", scenario_to_json(spec) + "\n");
  return paths;
}

Dataset DataSource::load() const {
  if (!bundle.empty()) {
    if (!observations.empty() || !graph.empty())
      throw CommandError("give either a bundle directory or observations + graph, not both");
    return read_bundle(bundle);
  }
  if (observations.empty() || graph.empty())
    throw CommandError("input data needed: a bundle directory, or both an observation CSV and an edge list");
  return read_dataset(observations, graph);
}

EmissionPriors make_priors(int dim, const PriorOptions& opt) {
  if (dim == 1) {
    EmissionPriors p = default_univariate_priors();
    if (opt.univariate) p.prior = *opt.univariate;
    p.validate();
    return p;
  }
  if (opt.univariate) throw CommandError("univariate prior overrides need d = 1 data");
  if (opt.off_diagonal_sign != 1.0 && opt.off_diagonal_sign != -1.0)
    throw CommandError("prior off-diagonal sign must be +1 or -1");
  return default_priors(dim, opt.off_diagonal_sign);
}

FitResult cmd_fit(const FitOptions& opt) {
  opt.sampler.validate();
  const fs::path root = prepare_dir(opt.out_dir);
  const Dataset data = opt.data.load();
  int k = 0;
  if (opt.n_states) k = *opt.n_states;
  else if (data.true_theta) k = data.true_theta->n_states();
  else throw CommandError("number of states (K) is required when the data carry no truth");
  if (k < 1) throw CommandError("number of states must be at least 1");

  FitResult res;
  res.chain = run_chain(data, make_priors(data.dim(), opt.priors), k, opt.sampler);
  if (opt.relabel) relabel_by_first_mean(res.chain);
  res.report = make_report(res.chain, data);

  std::ostringstream chain_csv;
  write_chain_csv(res.chain, chain_csv);
  res.files.push_back(write_file(root / "chain.csv", chain_csv.str()));

  std::ostringstream acc;
  acc << "parameter,acceptance_rate,final_scale\n";
  for (std::size_t p = 0; p < res.chain.theta_params.size(); ++p)
    acc << parameter_name(res.chain.theta_params[p]) << ',' << fmt(res.chain.acceptance_rate[p]) << ','
        << fmt(res.chain.final_scale[p]) << '\n';
  res.files.push_back(write_file(root / "acceptance.csv", acc.str()));

  res.files.push_back(write_file(root / "report.json", report_to_json(res.report) + "\n"));
  std::ostringstream rep_csv;
  write_report_csv(res.report, rep_csv);
  res.files.push_back(write_file(root / "report.csv", rep_csv.str()));

  if (opt.write_fields) {
    std::ostringstream fields;
    write_fields_csv(res.chain, fields);
    res.files.push_back(write_file(root / "fields.csv", fields.str()));
  }
  return res;
}

int BenchmarkResult::exchange_wins() const {
  int wins = 0;
  for (const auto& r : rows)
    if (r.exchange_mae < r.pseudo_mae) ++wins;
  return wins;
}

std::string benchmark_csv(const BenchmarkResult& result) {
  std::ostringstream os;
  os << "parameter,exchange_mae,pseudo_mae,best\n";
  for (const auto& r : result.rows) {
    const char* best = r.exchange_mae < r.pseudo_mae ? "exchange" : (r.pseudo_mae < r.exchange_mae ? "pseudo" : "tie");
    os << r.parameter << ',' << fmt(r.exchange_mae) << ',' << fmt(r.pseudo_mae) << ',' << best << '\n';
  }
  return os.str();
}

BenchmarkResult cmd_benchmark(const BenchmarkOptions& opt) {
  ScenarioSpec spec = resolve_scenario(opt.scenario, opt.scenario_file);
  if (opt.replicates) spec.replicates = *opt.replicates;
  if (opt.seed) spec.seed = *opt.seed;
  spec.validate();
  opt.sampler.validate();
  const fs::path root = prepare_dir(opt.out_dir);
  const int n_rep = spec.replicates;

  std::vector<Dataset> datasets(static_cast<std::size_t>(n_rep));
  parallel_for(n_rep, opt.workers, [&](int r) { datasets[r] = sample_dataset(spec, r); });
  const EmissionPriors priors = make_priors(spec.dim, opt.priors);

  constexpr Algorithm algos[2] = {Algorithm::exchange, Algorithm::pseudo};
  std::vector<std::vector<double>> estimates(static_cast<std::size_t>(2 * n_rep));
  std::vector<ParamId> params;
  std::mutex params_mutex;
  parallel_for(2 * n_rep, opt.workers, [&](int job) {
    const int r = job / 2;
    SamplerConfig cfg = opt.sampler;
    cfg.algorithm = algos[job % 2];
    cfg.seed = derive_seed(spec.seed, stream_tag::chain, static_cast<std::uint64_t>(r));
    ChainOutput out = run_chain(datasets[r], priors, spec.n_states, cfg);
    relabel_by_first_mean(out);
    estimates[job] = theta_means(out);
    std::lock_guard lock(params_mutex);
    if (params.empty()) params = out.theta_params;
  });

  BenchmarkResult res;
  std::vector<double> truth;
  for (const auto& id : params) truth.push_back(spec.theta.get(id));
  for (int r = 0; r < n_rep; ++r) {
    res.exchange_estimates.push_back(estimates[2 * r]);
    res.pseudo_estimates.push_back(estimates[2 * r + 1]);
  }
  if (!params.empty()) {
    const auto ex = mae(res.exchange_estimates, truth);
    const auto ps = mae(res.pseudo_estimates, truth);
    for (std::size_t p = 0; p < params.size(); ++p) res.rows.push_back({parameter_name(params[p]), ex[p], ps[p]});
  }

  res.files.push_back(write_file(root / "benchmark.csv", benchmark_csv(res)));
  json j;
  j["scenario"] = spec.name;
  j["replicates"] = n_rep;
  j["seed"] = spec.seed;
  j["iterations"] = opt.sampler.iterations;
  j["burn_in"] = opt.sampler.burn_in;
  j["aux_sweeps"] = opt.sampler.aux.initial;
  json rows = json::array();
  for (std::size_t p = 0; p < res.rows.size(); ++p) {
    const auto& r = res.rows[p];
    json e{{"parameter", r.parameter}, {"truth", truth[p]}, {"exchange_mae", r.exchange_mae}, {"pseudo_mae", r.pseudo_mae}};
    e["best"] = r.exchange_mae < r.pseudo_mae ? "exchange" : (r.pseudo_mae < r.exchange_mae ? "pseudo" : "tie");
    rows.push_back(std::move(e));
  }
  j["rows"] = std::move(rows);
  j["exchange_wins"] = res.exchange_wins();
  j["exchange_estimates"] = res.exchange_estimates;
  j["pseudo_estimates"] = res.pseudo_estimates;
  res.files.push_back(write_file(root / "benchmark.json", j.dump(2) + "\n"));
  return res;
}

Eigen::MatrixXd relative_variation(const Eigen::MatrixXd& levels, int n_sites, int n_times) {
  if (n_times < 2) throw CommandError("relative variation needs at least two time points");
  if (levels.cols() != static_cast<Eigen::Index>(n_sites) * n_times)
    throw CommandError("level matrix does not match the site x time grid");
  const int tt = n_times - 1;
  Eigen::MatrixXd y(levels.rows(), static_cast<Eigen::Index>(n_sites) * tt);
  for (int i = 0; i < n_sites; ++i)
    for (int t = 1; t < n_times; ++t)
      for (Eigen::Index h = 0; h < levels.rows(); ++h) {
        const double prev = levels(h, static_cast<Eigen::Index>(i) * n_times + t - 1);
        const double cur = levels(h, static_cast<Eigen::Index>(i) * n_times + t);
        if (!(prev > 0.0))
          throw CommandError("relative variation undefined at site " + std::to_string(i + 1) + ", time " +
                             std::to_string(t + 1) + ": previous level " + fmt(prev) + " is not positive");
        y(h, static_cast<Eigen::Index>(i) * tt + t - 1) = (cur - prev) / prev * 100.0;
      }
  return y;
}

void cmd_preprocess_relative_variation(const PreprocessOptions& opt) {
  if (opt.input.empty() || opt.output.empty()) throw CommandError("preprocess needs an input and an output path");
  std::ifstream in(opt.input);
  if (!in) throw CommandError("cannot open input " + opt.input);
  const Dataset levels = read_observations_csv(in);
  Dataset out;
  out.n_sites = levels.n_sites;
  out.n_times = levels.n_times - 1;
  out.y = relative_variation(levels.y, levels.n_sites, levels.n_times);
  std::ostringstream os;
  write_observations_csv(out, os);
  write_file(opt.output, os.str());
}

SelectKResult cmd_select_k(const SelectKOptions& opt) {
  if (opt.k_min < 1 || opt.k_max < opt.k_min) throw CommandError("need 1 <= k_min <= k_max");
  opt.sampler.validate();
  const fs::path root = prepare_dir(opt.out_dir);
  const Dataset data = opt.data.load();
  const EmissionPriors priors = make_priors(data.dim(), opt.priors);

  SelectKResult res;
  const int batch = std::max(1, opt.workers);
  int next_k = opt.k_min;
  while (next_k <= opt.k_max && !res.stopped_at) {
    const int count = std::min(batch, opt.k_max - next_k + 1);
    std::vector<SelectKRow> rows(static_cast<std::size_t>(count));
    parallel_for(count, opt.workers, [&](int j) {
      const int k = next_k + j;
      ChainOutput out = run_chain(data, priors, k, opt.sampler);
      relabel_by_first_mean(out);
      rows[j] = {k, dic(out, data)};
    });
    for (auto& r : rows) res.rows.push_back(r);
    next_k += count;
    for (std::size_t r = 1; r < res.rows.size(); ++r)
      if (res.rows[r].dic.dic > res.rows[r - 1].dic.dic) {
        res.stopped_at = res.rows[r].k;
        break;
      }
  }
  std::size_t prefix = res.rows.size();
  if (res.stopped_at) prefix = static_cast<std::size_t>(*res.stopped_at - opt.k_min + 1);
  std::size_t best = 0;
  for (std::size_t r = 1; r < prefix; ++r)
    if (res.rows[r].dic.dic < res.rows[best].dic.dic) best = r;
  res.chosen_k = res.rows[best].k;

  std::ostringstream csv;
  csv << "k,dic,mean_deviance,deviance_at_estimate,p_d,chosen\n";
  json rows = json::array();
  for (const auto& r : res.rows) {
    const bool chosen = r.k == res.chosen_k;
    csv << r.k << ',' << fmt(r.dic.dic) << ',' << fmt(r.dic.mean_deviance) << ',' << fmt(r.dic.deviance_at_estimate)
        << ',' << fmt(r.dic.p_d) << ',' << (chosen ? "yes" : "no") << '\n';
    rows.push_back({{"k", r.k},
                    {"dic", r.dic.dic},
                    {"mean_deviance", r.dic.mean_deviance},
                    {"deviance_at_estimate", r.dic.deviance_at_estimate},
                    {"p_d", r.dic.p_d}});
  }
  res.files.push_back(write_file(root / "select_k.csv", csv.str()));
  json j{{"rows", rows}, {"chosen_k", res.chosen_k}};
  j["stopped_at"] = res.stopped_at ? json(*res.stopped_at) : json(nullptr);
  res.files.push_back(write_file(root / "select_k.json", j.dump(2) + "\n"));
  return res;
}

}  // namespace sthmm
