#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sthmm/emission.hpp"
#include "sthmm/latent_model.hpp"

namespace sthmm {

struct SamplerError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Algorithm { pseudo, exchange, noisy_exchange };

std::string to_string(Algorithm a);
Algorithm parse_algorithm(const std::string& s);

/// Number of auxiliary Gibbs sweeps at iteration r:
/// M(r) = max(minimum, initial - floor(r / decay_every)), or `initial` when
/// decay_every is 0. Non-increasing in r by construction.
struct AuxSchedule {
  int initial = 5;
  int minimum = 5;
  int decay_every = 0;

  int at(int r) const noexcept;
};

/// Robbins-Monro scaling of each random-walk proposal:
/// log phi += (c / r) (alpha - target) while r <= horizon_fraction * R.
struct Adaptation {
  bool enabled = true;
  double target = 0.44;
  double c = 1.0;
  double horizon_fraction = 0.5;
  double initial_scale = 0.5;
};

/// Standard deviations of the zero-mean Gaussian priors on latent parameters.
struct LatentPriorSd {
  double beta = 1.0;
  double beta_star = 1.0;
  double gamma = 1.0;
  double gamma_star = 1.0;
  double delta = 1.0;

  double of(Family f) const noexcept;
};

enum class EmissionInit { prior, moments };

struct SamplerConfig {
  int iterations = 10000;
  int burn_in = 5000;
  int thinning = 1;
  /// Keep every field_thinning-th stored draw's latent field.
  int field_thinning = 1;
  Algorithm algorithm = Algorithm::exchange;
  AuxSchedule aux;
  /// Start each auxiliary Gibbs chain at the current latent field.
  bool warm_start = true;
  int noisy_j = 1;
  Adaptation adaptation;
  LatentPriorSd prior_sd;
  Parsimony parsimony;
  EmissionInit emission_init = EmissionInit::prior;
  std::uint64_t seed = 1;

  bool update_emissions = true;
  bool update_theta = true;
  bool update_field = true;

  void validate() const;
};

/// Everything a chain carries between iterations.
struct ChainState {
  LatentParams theta;
  EmissionParams emission;
  LatentField field;
  std::vector<ParamId> params;     // free latent parameters, update order
  std::vector<double> log_scale;   // per free parameter
  std::vector<long> accepted;      // per free parameter
  std::vector<long> proposed;
  int iteration = 0;
  Rng rng;
};

struct StepResult {
  bool accepted = false;
  /// min(1, acceptance ratio).
  double alpha = 0.0;
};

struct Draw {
  int iteration = 0;
  LatentParams theta;
  EmissionParams emission;
};

struct ChainOutput {
  Algorithm algorithm = Algorithm::exchange;
  int n_states = 0;
  int dim = 0;
  std::vector<ParamId> theta_params;
  std::vector<Draw> draws;
  /// Stored latent fields and the index into `draws` each belongs to.
  std::vector<LatentField> fields;
  std::vector<int> field_draw;
  /// Post-burn-in acceptance fraction per free latent parameter.
  std::vector<double> acceptance_rate;
  std::vector<double> final_scale;
  double wall_seconds = 0.0;

  /// theta names, then mu_u_h, then sigma_u_h_l (h <= l), all 1-based.
  std::vector<std::string> column_names() const;
  /// Row per draw, column per name.
  std::vector<std::vector<double>> table() const;
  std::vector<double> column(const std::string& name) const;
};

/// Uniform iid latent field, theta = 0, emissions from the prior (or the
/// moment-based start). Depends only on (data, priors, K, seed, parsimony,
/// emission_init), so both algorithms share a start under the same seed.
ChainState init_chain(const Dataset& data, const EmissionPriors& priors, int n_states,
                      const SamplerConfig& config);

double log_latent_prior(const LatentParams& theta, std::span<const ParamId> params,
                        const LatentPriorSd& sd);

/// Resamples every U_{i,t} from its emission-weighted full conditional.
void latent_sweep(ChainState& state, const Dataset& data);

/// Gibbs updates of every state's mean and covariance (or variance).
void update_emissions(ChainState& state, const Dataset& data, const EmissionPriors& priors);

StepResult pseudo_theta_step(ChainState& state, std::size_t which, const NeighborhoodSystem& g,
                             const SamplerConfig& config);

StepResult exchange_theta_step(ChainState& state, std::size_t which, const NeighborhoodSystem& g,
                               const SamplerConfig& config);

StepResult noisy_exchange_theta_step(ChainState& state, std::size_t which,
                                     const NeighborhoodSystem& g, const SamplerConfig& config);

/// log of (1/J) sum_j q_theta(omega_j) / q_theta_tilde(omega_j), accumulated
/// with log-sum-exp.
double log_z_ratio_estimate(const LatentParams& theta, const LatentParams& theta_tilde,
                            std::span<const LatentField> omegas, const NeighborhoodSystem& g);

/// log acceptance ratio of the noisy exchange move for given auxiliary draws.
double noisy_exchange_log_ratio(const LatentParams& theta, const LatentParams& theta_tilde,
                                const LatentField& u, std::span<const LatentField> omegas,
                                const NeighborhoodSystem& g, std::span<const ParamId> params,
                                const LatentPriorSd& sd);

/// Auxiliary draw: M Gibbs sweeps under theta_tilde with no emission terms,
/// started at `start`.
LatentField draw_auxiliary(const LatentField& start, const LatentParams& theta_tilde,
                           const NeighborhoodSystem& g, int sweeps, Rng& rng);

/// Updates log_scale[which] for iteration r out of R.
void adapt_scale(ChainState& state, std::size_t which, double observed_alpha, int r, int total,
                 const Adaptation& adaptation);

/// Runs the configured sampler from `init`.
ChainOutput run_chain(const Dataset& data, const EmissionPriors& priors, const SamplerConfig& config,
                      ChainState init);

ChainOutput run_chain(const Dataset& data, const EmissionPriors& priors, int n_states,
                      const SamplerConfig& config);

/// One row per draw: "iteration,<column_names>".
void write_chain_csv(const ChainOutput& out, std::ostream& os);

/// "draw,site,time,state" rows for every stored field.
void write_fields_csv(const ChainOutput& out, std::ostream& os);

}  // namespace sthmm
