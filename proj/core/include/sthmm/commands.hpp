#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sthmm/diagnostics.hpp"
#include "sthmm/samplers.hpp"
#include "sthmm/synthdata.hpp"

namespace sthmm {

struct CommandError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kWorkersEnv = "STHMM_WORKERS";

/// Worker count from STHMM_WORKERS (default 1). Throws on a malformed value.
int workers_from_env();

/// Runs `n` independent jobs on up to `workers` threads. Each job writes
/// only its own result slot, so output does not depend on scheduling. The
/// first exception (by job index) is rethrown after all workers finish.
void parallel_for(int n, int workers, const std::function<void(int)>& job);

struct SimulateOptions {
  std::string scenario = "A";
  /// JSON scenario file; overrides `scenario` when set.
  std::string scenario_file;
  std::optional<int> replicates;
  std::optional<std::uint64_t> seed;
  std::optional<int> burn_sweeps;
  std::string out_dir = "data";
  int workers = 1;
};

/// Writes one bundle per replicate to out_dir/replicate_NNN and returns the
/// bundle paths in replicate order.
std::vector<std::string> cmd_simulate(const SimulateOptions& opt);

/// Data source shared by fit and select-k: a bundle directory, or an
/// observation CSV plus an edge-list file.
struct DataSource {
  std::string bundle;
  std::string observations;
  std::string graph;

  Dataset load() const;
};

struct PriorOptions {
  /// Sign of the off-diagonal entries of the default inverse-Wishart scale.
  double off_diagonal_sign = 1.0;
  /// Overrides for the univariate model (d = 1).
  std::optional<UnivariatePrior> univariate;
};

EmissionPriors make_priors(int dim, const PriorOptions& opt);

struct FitOptions {
  DataSource data;
  /// Number of states; defaults to the truth's K when the data carry one.
  std::optional<int> n_states;
  SamplerConfig sampler;
  PriorOptions priors;
  /// Order states by the first coordinate of mu before summarizing.
  bool relabel = false;
  bool write_fields = false;
  std::string out_dir = "fit";
};

struct FitResult {
  ChainOutput chain;
  DiagnosticsReport report;
  std::vector<std::string> files;
};

/// Writes chain.csv, acceptance.csv, report.json, report.csv and
/// optionally fields.csv.
FitResult cmd_fit(const FitOptions& opt);

struct BenchmarkOptions {
  std::string scenario = "A";
  std::string scenario_file;
  std::optional<int> replicates;
  std::optional<std::uint64_t> seed;
  SamplerConfig sampler;
  PriorOptions priors;
  int workers = 1;
  std::string out_dir = "benchmark";
};

struct BenchmarkRow {
  std::string parameter;
  double exchange_mae = 0.0;
  double pseudo_mae = 0.0;
};

struct BenchmarkResult {
  std::vector<BenchmarkRow> rows;
  /// Posterior means per replicate, one row per replicate, columns in `rows` order.
  std::vector<std::vector<double>> exchange_estimates;
  std::vector<std::vector<double>> pseudo_estimates;
  std::vector<std::string> files;

  /// Number of parameters on which exchange is strictly better.
  int exchange_wins() const;
};

/// Fits both algorithms to every replicate from identical inits (same chain
/// seed per replicate), relabels, and tabulates per-parameter MAE of the
/// latent parameters. Writes benchmark.csv and benchmark.json.
BenchmarkResult cmd_benchmark(const BenchmarkOptions& opt);

std::string benchmark_csv(const BenchmarkResult& result);

struct PreprocessOptions {
  std::string input;
  std::string output;
};

/// y_{i,t} = (r_{i,t} - r_{i,t-1}) / r_{i,t-1} * 100 for t >= 2, re-indexed
/// to times 1..T-1. Input and output use the observation CSV layout.
void cmd_preprocess_relative_variation(const PreprocessOptions& opt);

/// In-memory form of the transform; `levels` is d x (N*T) site-major.
Eigen::MatrixXd relative_variation(const Eigen::MatrixXd& levels, int n_sites, int n_times);

struct SelectKOptions {
  DataSource data;
  int k_min = 1;
  int k_max = 4;
  SamplerConfig sampler;
  PriorOptions priors;
  int workers = 1;
  std::string out_dir = "select_k";
};

struct SelectKRow {
  int k = 0;
  DicResult dic;
};

struct SelectKResult {
  /// Every evaluated K in increasing order.
  std::vector<SelectKRow> rows;
  int chosen_k = 0;
  /// K at which DIC first rose, if it did.
  std::optional<int> stopped_at;
  std::vector<std::string> files;
};

/// Fits K = k_min, k_min + 1, ... and stops once DIC rises; the chosen K is
/// the minimizer over the evaluated prefix ending at the first rise. Workers
/// evaluate consecutive K in batches, so a batch may run past the stop;
/// those rows are still reported. Writes select_k.csv and select_k.json.
SelectKResult cmd_select_k(const SelectKOptions& opt);

}  // namespace sthmm
