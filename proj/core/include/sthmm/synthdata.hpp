#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "sthmm/emission.hpp"
#include "sthmm/graph.hpp"
#include "sthmm/latent_model.hpp"

namespace sthmm {

struct SynthError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GraphRecipe {
  enum class Kind { grid, erdos_renyi };
  Kind kind = Kind::grid;
  /// Side length for grid recipes.
  int z = 3;
  /// Node and edge counts for Erdos-Renyi recipes.
  int n = 0;
  std::int64_t m = 0;

  int n_sites() const noexcept { return kind == Kind::grid ? z * z : n; }
};

struct ScenarioSpec {
  std::string name = "custom";
  int n_sites = 0;
  int n_times = 0;
  int n_states = 0;
  int dim = 0;
  GraphRecipe graph;
  LatentParams theta;
  EmissionParams emission;
  int replicates = 50;
  std::uint64_t seed = 1;
  int burn_sweeps = 500;

  void validate() const;
};

/// Presets "A", "B", "C", "D" of the simulation study.
ScenarioSpec scenario_preset(const std::string& name);

std::string scenario_to_json(const ScenarioSpec& spec);
ScenarioSpec scenario_from_json(const std::string& text);
ScenarioSpec load_scenario_file(const std::string& path);

/// Uniform random start followed by `burn_sweeps` systematic Gibbs sweeps
/// under theta with no emission terms.
LatentField sample_latent_field(const LatentParams& theta, const NeighborhoodSystem& g, int n_times,
                                int burn_sweeps, Rng& rng);

/// Graph for a replicate: the grid is fixed; Erdos-Renyi graphs are redrawn
/// with seed derive_seed(spec.seed, graph, replicate_index).
NeighborhoodSystem scenario_graph(const ScenarioSpec& spec, int replicate_index);

/// Graph, latent field, then y_{i,t} ~ N(mu_{u_it}, Sigma_{u_it}); truth is
/// recorded in the returned dataset.
Dataset sample_dataset(const ScenarioSpec& spec, int replicate_index);

inline constexpr const char* kObservationsFile = "observations.csv";
inline constexpr const char* kGraphFile = "graph.txt";
inline constexpr const char* kTruthFile = "truth.json";

/// Truth JSON: scenario name, dimensions, theta, emissions and the field
/// (1-based states, one row per site).
std::string truth_to_json(const Dataset& data, const std::string& scenario_name);

/// Attaches the truth stored in `text` to `data`.
void attach_truth_json(Dataset& data, const std::string& text);

/// Writes observations.csv, graph.txt and, when the dataset carries truth,
/// truth.json into `dir` (created if missing).
void write_bundle(const Dataset& data, const std::string& dir, const std::string& scenario_name);

/// Reads a bundle directory; truth.json is optional.
Dataset read_bundle(const std::string& dir);

/// Reads an observation CSV and an edge-list file.
Dataset read_dataset(const std::string& observations_path, const std::string& graph_path);

}  // namespace sthmm
