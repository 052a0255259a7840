#include "sthmm/samplers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

namespace sthmm {

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::pseudo: return "pseudo";
    case Algorithm::exchange: return "exchange";
    case Algorithm::noisy_exchange: return "noisy_exchange";
  }
  return "?";
}

Algorithm parse_algorithm(const std::string& s) {
  if (s == "pseudo") return Algorithm::pseudo;
  if (s == "exchange") return Algorithm::exchange;
  if (s == "noisy_exchange" || s == "noisy") return Algorithm::noisy_exchange;
  throw SamplerError("unknown algorithm '" + s + "' (expected pseudo, exchange or noisy_exchange)");
}

int AuxSchedule::at(int r) const noexcept {
  if (decay_every <= 0) return initial;
  return std::max(minimum, initial - r / decay_every);
}

double LatentPriorSd::of(Family f) const noexcept {
  switch (f) {
    case Family::beta: return beta;
    case Family::beta_star: return beta_star;
    case Family::gamma: return gamma;
    case Family::gamma_star: return gamma_star;
    case Family::delta: return delta;
  }
  return 1.0;
}

void SamplerConfig::validate() const {
  if (iterations < 1) throw SamplerError("iterations must be positive");
  if (burn_in < 0 || burn_in >= iterations) throw SamplerError("need 0 <= burn_in < iterations");
  if (thinning < 1 || field_thinning < 1) throw SamplerError("thinning must be positive");
  if (aux.initial < 1 || aux.minimum < 1 || aux.minimum > aux.initial || aux.decay_every < 0)
    throw SamplerError("auxiliary schedule needs 1 <= minimum <= initial and decay_every >= 0");
  if (noisy_j < 1) throw SamplerError("noisy exchange needs J >= 1");
  if (!(adaptation.target > 0.0 && adaptation.target < 1.0))
    throw SamplerError("target acceptance must lie in (0, 1)");
  if (!(adaptation.c >= 0.0) || !(adaptation.initial_scale > 0.0) ||
      !(adaptation.horizon_fraction >= 0.0 && adaptation.horizon_fraction <= 1.0))
    throw SamplerError("invalid adaptation settings");
  for (Family f : {Family::beta, Family::beta_star, Family::gamma, Family::gamma_star, Family::delta})
    if (!(prior_sd.of(f) > 0.0)) throw SamplerError("latent prior standard deviations must be positive");
}

namespace {

EmissionParams moment_start(const Dataset& data, int k) {
  const auto coords = data.y.cols();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(coords));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return data.y(0, a) < data.y(0, b); });
  const Eigen::VectorXd grand = data.y.rowwise().mean();
  const Eigen::MatrixXd centered = data.y.colwise() - grand;
  Eigen::MatrixXd cov = centered * centered.transpose() / std::max<Eigen::Index>(coords - 1, 1);
  cov += 1e-6 * Eigen::MatrixXd::Identity(data.dim(), data.dim());
  EmissionParams p;
  for (int s = 0; s < k; ++s) {
    const auto lo = coords * s / k, hi = std::max(coords * (s + 1) / k, lo + 1);
    Eigen::VectorXd m = Eigen::VectorXd::Zero(data.dim());
    for (auto c = lo; c < hi && c < coords; ++c) m += data.y.col(order[static_cast<std::size_t>(c)]);
    p.mu.push_back(m / static_cast<double>(std::min(hi, coords) - lo));
    p.sigma.push_back(cov);
  }
  return p;
}

double log_normal_prior(double x, double sd) { return -0.5 * (x / sd) * (x / sd); }

StepResult accept_or_reject(ChainState& state, std::size_t which, const LatentParams& proposal,
                            double log_ratio) {
  StepResult res;
  res.alpha = log_ratio >= 0.0 ? 1.0 : std::exp(log_ratio);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  res.accepted = log_ratio >= 0.0 || std::log(unif(state.rng)) < log_ratio;
  if (res.accepted) state.theta = proposal;
  ++state.proposed[which];
  if (res.accepted) ++state.accepted[which];
  return res;
}

LatentParams propose(ChainState& state, std::size_t which) {
  const ParamId id = state.params.at(which);
  std::normal_distribution<double> eps(0.0, std::exp(state.log_scale[which]));
  LatentParams prop = state.theta;
  prop.set(id, state.theta.get(id) + eps(state.rng));
  return prop;
}

LatentField auxiliary_start(const ChainState& state, const SamplerConfig& config, Rng& rng) {
  if (config.warm_start) return state.field;
  LatentField start(state.field.n_sites(), state.field.n_times());
  std::uniform_int_distribution<int> pick(0, state.theta.n_states() - 1);
  for (int& s : start.values()) s = pick(rng);
  return start;
}

}  // namespace

ChainState init_chain(const Dataset& data, const EmissionPriors& priors, int n_states,
                      const SamplerConfig& config) {
  if (n_states < 1) throw SamplerError("number of states must be at least 1");
  data.validate();
  priors.validate();
  if (priors.dim() != data.dim()) throw SamplerError("prior dimension does not match the data");
  config.validate();

  ChainState st;
  st.theta = LatentParams(n_states, config.parsimony);
  st.params = st.theta.free_parameters();
  st.log_scale.assign(st.params.size(), std::log(config.adaptation.initial_scale));
  st.accepted.assign(st.params.size(), 0);
  st.proposed.assign(st.params.size(), 0);

  Rng init_rng(derive_seed(config.seed, stream_tag::init, 0));
  st.field = LatentField(data.n_sites, data.n_times);
  std::uniform_int_distribution<int> pick(0, n_states - 1);
  for (int& s : st.field.values()) s = pick(init_rng);
  st.emission = config.emission_init == EmissionInit::moments
                    ? moment_start(data, n_states)
                    : sample_emission_prior(priors, n_states, init_rng);
  st.rng = Rng(derive_seed(config.seed, stream_tag::chain, 0));
  return st;
}

double log_latent_prior(const LatentParams& theta, std::span<const ParamId> params,
                        const LatentPriorSd& sd) {
  double lp = 0.0;
  for (const auto& id : params) lp += log_normal_prior(theta.get(id), sd.of(id.family));
  return lp;
}

void latent_sweep(ChainState& state, const Dataset& data) {
  const auto table = emission_log_table(data, state.emission);
  gibbs_sweep(state.field, state.theta, data.graph, state.rng, table);
}

void update_emissions(ChainState& state, const Dataset& data, const EmissionPriors& priors) {
  auto& e = state.emission;
  for (int s = 0; s < e.n_states(); ++s) {
    if (priors.univariate()) {
      const auto& p = priors.univariate_prior();
      e.mu[s][0] = sample_mu_univariate(s, data, state.field, e.sigma[s](0, 0), p, state.rng);
      e.sigma[s](0, 0) = sample_sigma_univariate(s, data, state.field, e.mu[s][0], p, state.rng);
    } else {
      const auto& p = priors.multivariate_prior();
      e.mu[s] = sample_mu(s, data, state.field, e.sigma[s], p, state.rng);
      e.sigma[s] = sample_sigma(s, data, state.field, e.mu[s], p, state.rng);
    }
  }
}

StepResult pseudo_theta_step(ChainState& state, std::size_t which, const NeighborhoodSystem& g,
                             const SamplerConfig& config) {
  const LatentParams prop = propose(state, which);
  const double log_ratio =
      log_latent_prior(prop, state.params, config.prior_sd) -
      log_latent_prior(state.theta, state.params, config.prior_sd) +
      log_pseudo_likelihood(state.field, prop, g) - log_pseudo_likelihood(state.field, state.theta, g);
  return accept_or_reject(state, which, prop, log_ratio);
}

LatentField draw_auxiliary(const LatentField& start, const LatentParams& theta_tilde,
                           const NeighborhoodSystem& g, int sweeps, Rng& rng) {
  LatentField omega = start;
  for (int m = 0; m < sweeps; ++m) gibbs_sweep(omega, theta_tilde, g, rng);
  return omega;
}

StepResult exchange_theta_step(ChainState& state, std::size_t which, const NeighborhoodSystem& g,
                               const SamplerConfig& config) {
  const ParamId id = state.params.at(which);
  const LatentParams prop = propose(state, which);
  const LatentField start = auxiliary_start(state, config, state.rng);
  const LatentField omega = draw_auxiliary(start, prop, g, config.aux.at(state.iteration), state.rng);
  // log q is linear in theta: only the changed parameter's statistic enters.
  const double step = prop.get(id) - state.theta.get(id);
  const double log_ratio =
      log_normal_prior(prop.get(id), config.prior_sd.of(id.family)) -
      log_normal_prior(state.theta.get(id), config.prior_sd.of(id.family)) +
      step * (parameter_statistic(id, state.field, state.theta, g) -
              parameter_statistic(id, omega, state.theta, g));
  return accept_or_reject(state, which, prop, log_ratio);
}

double log_z_ratio_estimate(const LatentParams& theta, const LatentParams& theta_tilde,
                            std::span<const LatentField> omegas, const NeighborhoodSystem& g) {
  if (omegas.empty()) throw SamplerError("noisy exchange needs at least one auxiliary field");
  std::vector<double> terms;
  terms.reserve(omegas.size());
  for (const auto& w : omegas) terms.push_back(log_potential(w, theta, g) - log_potential(w, theta_tilde, g));
  const double m = *std::max_element(terms.begin(), terms.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : terms) s += std::exp(v - m);
  return m + std::log(s / static_cast<double>(terms.size()));
}

double noisy_exchange_log_ratio(const LatentParams& theta, const LatentParams& theta_tilde,
                                const LatentField& u, std::span<const LatentField> omegas,
                                const NeighborhoodSystem& g, std::span<const ParamId> params,
                                const LatentPriorSd& sd) {
  return log_latent_prior(theta_tilde, params, sd) - log_latent_prior(theta, params, sd) +
         log_potential(u, theta_tilde, g) - log_potential(u, theta, g) +
         log_z_ratio_estimate(theta, theta_tilde, omegas, g);
}

StepResult noisy_exchange_theta_step(ChainState& state, std::size_t which,
                                     const NeighborhoodSystem& g, const SamplerConfig& config) {
  const LatentParams prop = propose(state, which);
  std::vector<LatentField> omegas;
  omegas.reserve(static_cast<std::size_t>(config.noisy_j));
  const int sweeps = config.aux.at(state.iteration);
  for (int j = 0; j < config.noisy_j; ++j) {
    const LatentField start = auxiliary_start(state, config, state.rng);
    omegas.push_back(draw_auxiliary(start, prop, g, sweeps, state.rng));
  }
  const double log_ratio =
      noisy_exchange_log_ratio(state.theta, prop, state.field, omegas, g, state.params, config.prior_sd);
  return accept_or_reject(state, which, prop, log_ratio);
}

void adapt_scale(ChainState& state, std::size_t which, double observed_alpha, int r, int total,
                 const Adaptation& adaptation) {
  if (!adaptation.enabled || r < 1) return;
  if (static_cast<double>(r) > adaptation.horizon_fraction * total) return;
  state.log_scale.at(which) += adaptation.c / r * (observed_alpha - adaptation.target);
}

ChainOutput run_chain(const Dataset& data, const EmissionPriors& priors, const SamplerConfig& config,
                      ChainState state) {
  config.validate();
  data.validate();
  if (state.field.n_sites() != data.n_sites || state.field.n_times() != data.n_times)
    throw SamplerError("initial field does not match the data");
  const auto t0 = std::chrono::steady_clock::now();

  ChainOutput out;
  out.algorithm = config.algorithm;
  out.n_states = state.theta.n_states();
  out.dim = data.dim();
  out.theta_params = state.params;
  const int kept = (config.iterations - config.burn_in) / config.thinning;
  out.draws.reserve(static_cast<std::size_t>(kept));

  std::vector<long> acc_post(state.params.size(), 0), prop_post(state.params.size(), 0);

  for (int r = 1; r <= config.iterations; ++r) {
    state.iteration = r;
    try {
      if (config.update_emissions) update_emissions(state, data, priors);
      if (config.update_theta) {
        for (std::size_t p = 0; p < state.params.size(); ++p) {
          StepResult res;
          switch (config.algorithm) {
            case Algorithm::pseudo: res = pseudo_theta_step(state, p, data.graph, config); break;
            case Algorithm::exchange: res = exchange_theta_step(state, p, data.graph, config); break;
            case Algorithm::noisy_exchange: res = noisy_exchange_theta_step(state, p, data.graph, config); break;
          }
          adapt_scale(state, p, res.alpha, r, config.iterations, config.adaptation);
          if (r > config.burn_in) {
            ++prop_post[p];
            acc_post[p] += res.accepted;
          }
        }
      }
      if (config.update_field) latent_sweep(state, data);
    } catch (const std::exception& e) {
      throw SamplerError("iteration " + std::to_string(r) + ": " + e.what());
    }
    if (r > config.burn_in && (r - config.burn_in) % config.thinning == 0 &&
        static_cast<int>(out.draws.size()) < kept) {
      out.draws.push_back(Draw{r, state.theta, state.emission});
      const int d = static_cast<int>(out.draws.size()) - 1;
      if (d % config.field_thinning == 0) {
        out.fields.push_back(state.field);
        out.field_draw.push_back(d);
      }
    }
  }
  for (std::size_t p = 0; p < state.params.size(); ++p) {
    out.acceptance_rate.push_back(prop_post[p] ? static_cast<double>(acc_post[p]) / prop_post[p] : 0.0);
    out.final_scale.push_back(std::exp(state.log_scale[p]));
  }
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

ChainOutput run_chain(const Dataset& data, const EmissionPriors& priors, int n_states,
                      const SamplerConfig& config) {
  return run_chain(data, priors, config, init_chain(data, priors, n_states, config));
}

std::vector<std::string> ChainOutput::column_names() const {
  std::vector<std::string> names;
  for (const auto& id : theta_params) names.push_back(parameter_name(id));
  for (int s = 0; s < n_states; ++s)
    for (int h = 0; h < dim; ++h) names.push_back("mu_" + std::to_string(s + 1) + "_" + std::to_string(h + 1));
  for (int s = 0; s < n_states; ++s)
    for (int h = 0; h < dim; ++h)
      for (int l = h; l < dim; ++l)
        names.push_back("sigma_" + std::to_string(s + 1) + "_" + std::to_string(h + 1) + "_" +
                        std::to_string(l + 1));
  return names;
}

std::vector<std::vector<double>> ChainOutput::table() const {
  std::vector<std::vector<double>> rows;
  rows.reserve(draws.size());
  for (const auto& d : draws) {
    std::vector<double> row;
    for (const auto& id : theta_params) row.push_back(d.theta.get(id));
    for (int s = 0; s < n_states; ++s)
      for (int h = 0; h < dim; ++h) row.push_back(d.emission.mu[s][h]);
    for (int s = 0; s < n_states; ++s)
      for (int h = 0; h < dim; ++h)
        for (int l = h; l < dim; ++l) row.push_back(d.emission.sigma[s](h, l));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<double> ChainOutput::column(const std::string& name) const {
  const auto names = column_names();
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw SamplerError("no chain column named '" + name + "'");
  const auto c = static_cast<std::size_t>(it - names.begin());
  std::vector<double> col;
  for (const auto& row : table()) col.push_back(row[c]);
  return col;
}

void write_chain_csv(const ChainOutput& out, std::ostream& os) {
  os << "iteration";
  for (const auto& n : out.column_names()) os << ',' << n;
  os << '\n';
  const auto old = os.precision(std::numeric_limits<double>::max_digits10);
  const auto rows = out.table();
  for (std::size_t d = 0; d < rows.size(); ++d) {
    os << out.draws[d].iteration;
    for (double v : rows[d]) os << ',' << v;
    os << '\n';
  }
  os.precision(old);
}

void write_fields_csv(const ChainOutput& out, std::ostream& os) {
  os << "draw,site,time,state\n";
  for (std::size_t f = 0; f < out.fields.size(); ++f) {
    const auto& u = out.fields[f];
    for (int i = 0; i < u.n_sites(); ++i)
      for (int t = 0; t < u.n_times(); ++t)
        os << out.field_draw[f] + 1 << ',' << i + 1 << ',' << t + 1 << ',' << u(i, t) + 1 << '\n';
  }
}

}  // namespace sthmm
