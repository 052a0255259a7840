#include "sthmm/synthdata.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace sthmm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

EmissionParams gaussian_layer(std::vector<std::vector<double>> means) {
  EmissionParams e;
  for (const auto& m : means) {
    e.mu.push_back(Eigen::Map<const Eigen::VectorXd>(m.data(), static_cast<Eigen::Index>(m.size())));
    e.sigma.push_back(Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(m.size()),
                                                static_cast<Eigen::Index>(m.size())));
  }
  return e;
}

ScenarioSpec two_state(std::string name, GraphRecipe graph, int n_times, double g, double d) {
  ScenarioSpec s;
  s.name = std::move(name);
  s.graph = graph;
  s.n_sites = graph.n_sites();
  s.n_times = n_times;
  s.n_states = 2;
  s.dim = 2;
  const std::vector<double> gamma{0.0, -g, g, 0.0};
  s.theta = LatentParams::from_values(2, {2.0, 0.0}, {2.0, 0.0}, gamma, gamma, {0.0, -d, -d, 0.0});
  s.emission = gaussian_layer({{-3.0, -3.0}, {3.0, 3.0}});
  return s;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SynthError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json matrix_json(std::span<const double> values, int k) {
  json rows = json::array();
  for (int u = 0; u < k; ++u) rows.push_back(std::vector<double>(values.begin() + u * k, values.begin() + (u + 1) * k));
  return rows;
}

std::vector<double> matrix_values(const json& j, int k, const char* what) {
  if (!j.is_array() || static_cast<int>(j.size()) != k)
    throw SynthError(std::string(what) + " must be a " + std::to_string(k) + "x" + std::to_string(k) + " matrix");
  std::vector<double> out;
  for (const auto& row : j) {
    if (!row.is_array() || static_cast<int>(row.size()) != k)
      throw SynthError(std::string(what) + " must be a " + std::to_string(k) + "x" + std::to_string(k) + " matrix");
    for (const auto& v : row) out.push_back(v.get<double>());
  }
  return out;
}

json theta_json(const LatentParams& theta) {
  const int k = theta.n_states();
  json j;
  j["beta"] = std::vector<double>(theta.prevalence(0).begin(), theta.prevalence(0).end());
  j["beta_star"] = std::vector<double>(theta.prevalence(1).begin(), theta.prevalence(1).end());
  j["gamma"] = matrix_json(theta.spatial(0), k);
  j["gamma_star"] = matrix_json(theta.spatial(1), k);
  j["delta"] = matrix_json(theta.temporal(), k);
  j["parsimony"] = {{"symmetric_spatial_temporal", theta.parsimony().symmetric_spatial_temporal},
                    {"shared_time", theta.parsimony().shared_time}};
  return j;
}

LatentParams theta_from_json(const json& j, int k) {
  Parsimony p;
  if (j.contains("parsimony")) {
    p.symmetric_spatial_temporal = j["parsimony"].value("symmetric_spatial_temporal", false);
    p.shared_time = j["parsimony"].value("shared_time", false);
  }
  return LatentParams::from_values(k, j.at("beta").get<std::vector<double>>(),
                                   j.at("beta_star").get<std::vector<double>>(),
                                   matrix_values(j.at("gamma"), k, "gamma"),
                                   matrix_values(j.at("gamma_star"), k, "gamma_star"),
                                   matrix_values(j.at("delta"), k, "delta"), p);
}

json emission_json(const EmissionParams& e) {
  json mu = json::array(), sigma = json::array();
  for (int s = 0; s < e.n_states(); ++s) {
    mu.push_back(std::vector<double>(e.mu[s].data(), e.mu[s].data() + e.mu[s].size()));
    json rows = json::array();
    for (int h = 0; h < e.dim(); ++h) {
      std::vector<double> row;
      for (int l = 0; l < e.dim(); ++l) row.push_back(e.sigma[s](h, l));
      rows.push_back(std::move(row));
    }
    sigma.push_back(std::move(rows));
  }
  return {{"mu", mu}, {"sigma", sigma}};
}

EmissionParams emission_from_json(const json& j, int k, int d) {
  EmissionParams e;
  const auto& mu = j.at("mu");
  const auto& sigma = j.at("sigma");
  if (static_cast<int>(mu.size()) != k || static_cast<int>(sigma.size()) != k)
    throw SynthError("emission truth must list " + std::to_string(k) + " states");
  for (int s = 0; s < k; ++s) {
    const auto m = mu[s].get<std::vector<double>>();
    if (static_cast<int>(m.size()) != d) throw SynthError("mu has the wrong dimension");
    e.mu.emplace_back(Eigen::Map<const Eigen::VectorXd>(m.data(), d));
    const auto vals = matrix_values(sigma[s], d, "sigma");
    Eigen::MatrixXd S(d, d);
    for (int h = 0; h < d; ++h)
      for (int l = 0; l < d; ++l) S(h, l) = vals[h * d + l];
    e.sigma.push_back(std::move(S));
  }
  e.validate();
  return e;
}

}  // namespace

void ScenarioSpec::validate() const {
  if (n_sites < 1 || n_times < 1 || n_states < 1 || dim < 1)
    throw SynthError("scenario dimensions must be positive");
  if (graph.n_sites() != n_sites) throw SynthError("graph recipe does not match n_sites");
  if (graph.kind == GraphRecipe::Kind::grid && graph.z < 1) throw SynthError("grid side must be positive");
  if (graph.kind == GraphRecipe::Kind::erdos_renyi &&
      (graph.m < 0 || graph.m > static_cast<std::int64_t>(graph.n) * (graph.n - 1) / 2))
    throw SynthError("Erdos-Renyi edge count out of range");
  if (theta.n_states() != n_states) throw SynthError("theta has the wrong number of states");
  if (emission.n_states() != n_states || emission.dim() != dim)
    throw SynthError("emission truth does not match n_states/dim");
  emission.validate();
  if (replicates < 1) throw SynthError("replicates must be at least 1");
  if (burn_sweeps < 1) throw SynthError("burn_sweeps must be at least 1");
}

ScenarioSpec scenario_preset(const std::string& name) {
  GraphRecipe er;
  er.kind = GraphRecipe::Kind::erdos_renyi;
  er.n = 40;
  er.m = 20;
  if (name == "A") {
    GraphRecipe grid;
    grid.z = 3;
    return two_state("A", grid, 5, 1.0, 1.0);
  }
  if (name == "B") return two_state("B", er, 5, 2.0, 2.0);
  if (name == "C") return two_state("C", er, 10, 2.0, 1.0);
  if (name == "D") {
    ScenarioSpec s;
    s.name = "D";
    s.graph = er;
    s.n_sites = 40;
    s.n_times = 5;
    s.n_states = 3;
    s.dim = 2;
    const std::vector<double> gamma{0, -2, -2, -2, 0, -2, -2, -2, 0};
    const std::vector<double> delta{0, -1, -1, -1, 0, -1, -1, -1, 0};
    s.theta = LatentParams::from_values(3, {0, 0, 0}, {0, 0, 0}, gamma, gamma, delta);
    s.emission = gaussian_layer({{-5.0, -5.0}, {0.0, 5.0}, {5.0, -5.0}});
    return s;
  }
  throw SynthError("unknown scenario '" + name + "' (expected A, B, C or D)");
}

std::string scenario_to_json(const ScenarioSpec& spec) {
  json j;
  j["name"] = spec.name;
  j["n_sites"] = spec.n_sites;
  j["n_times"] = spec.n_times;
  j["n_states"] = spec.n_states;
  j["dim"] = spec.dim;
  if (spec.graph.kind == GraphRecipe::Kind::grid) {
    j["graph"] = {{"kind", "grid"}, {"z", spec.graph.z}};
  } else {
    j["graph"] = {{"kind", "erdos_renyi"}, {"n", spec.graph.n}, {"m", spec.graph.m}};
  }
  j["theta"] = theta_json(spec.theta);
  j["emission"] = emission_json(spec.emission);
  j["replicates"] = spec.replicates;
  j["seed"] = spec.seed;
  j["burn_sweeps"] = spec.burn_sweeps;
  return j.dump(2);
}

ScenarioSpec scenario_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    static const std::vector<std::string> known{"name",  "n_sites",  "n_times",    "n_states",   "dim",        "graph",
                                                "theta", "emission", "replicates", "seed", "burn_sweeps"};
    for (const auto& [key, _] : j.items())
      if (std::find(known.begin(), known.end(), key) == known.end())
        throw SynthError("unknown scenario key '" + key + "'");
    ScenarioSpec s;
    s.name = j.value("name", std::string("custom"));
    s.n_states = j.at("n_states").get<int>();
    s.n_times = j.at("n_times").get<int>();
    s.dim = j.at("dim").get<int>();
    const auto& g = j.at("graph");
    const auto kind = g.at("kind").get<std::string>();
    if (kind == "grid") {
      s.graph.kind = GraphRecipe::Kind::grid;
      s.graph.z = g.at("z").get<int>();
    } else if (kind == "erdos_renyi") {
      s.graph.kind = GraphRecipe::Kind::erdos_renyi;
      s.graph.n = g.at("n").get<int>();
      s.graph.m = g.at("m").get<std::int64_t>();
    } else {
      throw SynthError("unknown graph kind '" + kind + "'");
    }
    s.n_sites = j.value("n_sites", s.graph.n_sites());
    s.theta = theta_from_json(j.at("theta"), s.n_states);
    s.emission = emission_from_json(j.at("emission"), s.n_states, s.dim);
    s.replicates = j.value("replicates", 50);
    s.seed = j.value("seed", std::uint64_t{1});
    s.burn_sweeps = j.value("burn_sweeps", 500);
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw SynthError(std::string("invalid scenario JSON: ") + e.what());
  } catch (const LatentModelError& e) {
    throw SynthError(std::string("invalid scenario theta: ") + e.what());
  } catch (const EmissionError& e) {
    throw SynthError(std::string("invalid scenario emission: ") + e.what());
  }
}

ScenarioSpec load_scenario_file(const std::string& path) { return scenario_from_json(read_text(path)); }

LatentField sample_latent_field(const LatentParams& theta, const NeighborhoodSystem& g, int n_times,
                                int burn_sweeps, Rng& rng) {
  if (burn_sweeps < 1) throw SynthError("burn_sweeps must be at least 1");
  LatentField u(g.n_sites(), n_times);
  std::uniform_int_distribution<int> pick(0, theta.n_states() - 1);
  for (int& v : u.values()) v = pick(rng);
  for (int s = 0; s < burn_sweeps; ++s) gibbs_sweep(u, theta, g, rng);
  return u;
}

NeighborhoodSystem scenario_graph(const ScenarioSpec& spec, int replicate_index) {
  if (spec.graph.kind == GraphRecipe::Kind::grid) return build_grid(spec.graph.z);
  return build_erdos_renyi(spec.graph.n, spec.graph.m,
                           derive_seed(spec.seed, stream_tag::graph, static_cast<std::uint64_t>(replicate_index)));
}

Dataset sample_dataset(const ScenarioSpec& spec, int replicate_index) {
  spec.validate();
  if (replicate_index < 0) throw SynthError("replicate index must be non-negative");
  const auto idx = static_cast<std::uint64_t>(replicate_index);
  Dataset data;
  data.n_sites = spec.n_sites;
  data.n_times = spec.n_times;
  data.graph = scenario_graph(spec, replicate_index);
  Rng field_rng(derive_seed(spec.seed, stream_tag::field, idx));
  LatentField u = sample_latent_field(spec.theta, data.graph, spec.n_times, spec.burn_sweeps, field_rng);
  Rng emission_rng(derive_seed(spec.seed, stream_tag::emission, idx));
  data.y.resize(spec.dim, static_cast<Eigen::Index>(spec.n_sites) * spec.n_times);
  for (int i = 0; i < spec.n_sites; ++i)
    for (int t = 0; t < spec.n_times; ++t) {
      const int s = u(i, t);
      data.y.col(static_cast<Eigen::Index>(i) * spec.n_times + t) =
          sample_mvnormal(spec.emission.mu[s], spec.emission.sigma[s], emission_rng);
    }
  data.true_field = std::move(u);
  data.true_theta = spec.theta;
  data.true_emission = spec.emission;
  return data;
}

std::string truth_to_json(const Dataset& data, const std::string& scenario_name) {
  json j;
  j["scenario"] = scenario_name;
  j["n_sites"] = data.n_sites;
  j["n_times"] = data.n_times;
  j["dim"] = data.dim();
  int k = 0;
  if (data.true_theta) k = data.true_theta->n_states();
  else if (data.true_emission) k = data.true_emission->n_states();
  j["n_states"] = k;
  j["theta"] = data.true_theta ? theta_json(*data.true_theta) : json(nullptr);
  j["emission"] = data.true_emission ? emission_json(*data.true_emission) : json(nullptr);
  if (data.true_field) {
    json rows = json::array();
    for (int i = 0; i < data.n_sites; ++i) {
      std::vector<int> row;
      for (int t = 0; t < data.n_times; ++t) row.push_back((*data.true_field)(i, t) + 1);
      rows.push_back(std::move(row));
    }
    j["field"] = std::move(rows);
  } else {
    j["field"] = nullptr;
  }
  return j.dump(2);
}

void attach_truth_json(Dataset& data, const std::string& text) {
  try {
    const json j = json::parse(text);
    if (j.at("n_sites").get<int>() != data.n_sites || j.at("n_times").get<int>() != data.n_times)
      throw SynthError("truth dimensions do not match the observations");
    const int k = j.at("n_states").get<int>();
    if (!j.at("theta").is_null()) data.true_theta = theta_from_json(j["theta"], k);
    if (!j.at("emission").is_null()) data.true_emission = emission_from_json(j["emission"], k, data.dim());
    if (!j.at("field").is_null()) {
      const auto& rows = j["field"];
      if (static_cast<int>(rows.size()) != data.n_sites) throw SynthError("truth field has the wrong number of sites");
      LatentField u(data.n_sites, data.n_times);
      for (int i = 0; i < data.n_sites; ++i) {
        const auto row = rows[i].get<std::vector<int>>();
        if (static_cast<int>(row.size()) != data.n_times)
          throw SynthError("truth field has the wrong number of times");
        for (int t = 0; t < data.n_times; ++t) {
          if (row[t] < 1 || row[t] > k) throw SynthError("truth field state out of range");
          u(i, t) = row[t] - 1;
        }
      }
      data.true_field = std::move(u);
    }
  } catch (const json::exception& e) {
    throw SynthError(std::string("invalid truth JSON: ") + e.what());
  } catch (const LatentModelError& e) {
    throw SynthError(std::string("invalid truth theta: ") + e.what());
  } catch (const EmissionError& e) {
    throw SynthError(std::string("invalid truth emission: ") + e.what());
  }
}

void write_bundle(const Dataset& data, const std::string& dir, const std::string& scenario_name) {
  fs::create_directories(dir);
  const fs::path root(dir);
  {
    std::ofstream out(root / kObservationsFile);
    if (!out) throw SynthError("cannot write " + (root / kObservationsFile).string());
    write_observations_csv(data, out);
  }
  save_edge_list_file(data.graph, (root / kGraphFile).string());
  if (data.true_theta || data.true_emission || data.true_field) {
    std::ofstream out(root / kTruthFile);
    if (!out) throw SynthError("cannot write " + (root / kTruthFile).string());
    out << truth_to_json(data, scenario_name) << '\n';
  }
}

Dataset read_dataset(const std::string& observations_path, const std::string& graph_path) {
  if (!fs::exists(observations_path)) throw SynthError("observation file not found: " + observations_path);
  if (!fs::exists(graph_path)) throw SynthError("edge-list file not found: " + graph_path);
  std::ifstream in(observations_path);
  if (!in) throw SynthError("cannot open " + observations_path);
  Dataset data = read_observations_csv(in);
  data.graph = load_edge_list_file(graph_path);
  if (data.graph.n_sites() != data.n_sites)
    throw SynthError("edge list declares " + std::to_string(data.graph.n_sites()) + " sites but observations have " +
                     std::to_string(data.n_sites));
  data.validate();
  return data;
}

Dataset read_bundle(const std::string& dir) {
  const fs::path root(dir);
  if (!fs::is_directory(root)) throw SynthError("bundle directory not found: " + dir);
  Dataset data = read_dataset((root / kObservationsFile).string(), (root / kGraphFile).string());
  if (fs::exists(root / kTruthFile)) attach_truth_json(data, read_text((root / kTruthFile).string()));
  return data;
}

}  // namespace sthmm
