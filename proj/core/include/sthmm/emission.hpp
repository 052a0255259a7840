#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "sthmm/graph.hpp"
#include "sthmm/latent_model.hpp"
#include "sthmm/rng.hpp"

namespace sthmm {

struct EmissionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Per-state Gaussian parameters. The univariate model is d = 1 with
/// sigma[u](0,0) holding the variance.
struct EmissionParams {
  std::vector<Eigen::VectorXd> mu;
  std::vector<Eigen::MatrixXd> sigma;

  int n_states() const noexcept { return static_cast<int>(mu.size()); }
  int dim() const noexcept { return mu.empty() ? 0 : static_cast<int>(mu.front().size()); }

  /// Throws EmissionError naming the state if a covariance is not SPD.
  void validate() const;

  /// New state k takes old state perm[k].
  EmissionParams permuted(std::span<const int> perm) const;
};

/// mu_u ~ N(m, V), Sigma_u ~ IW(nu, S).
struct MultivariatePrior {
  Eigen::VectorXd m;
  Eigen::MatrixXd V;
  double nu = 0.0;
  Eigen::MatrixXd S;
};

/// mu_u ~ N(m, v), sigma2_u ~ IG(a, b) (shape a, rate b).
struct UnivariatePrior {
  double m = 0.0;
  double v = 1000.0;
  double a = 2.0;
  double b = 1.0;
};

struct EmissionPriors {
  std::variant<MultivariatePrior, UnivariatePrior> prior;

  bool univariate() const noexcept { return std::holds_alternative<UnivariatePrior>(prior); }
  const MultivariatePrior& multivariate_prior() const { return std::get<MultivariatePrior>(prior); }
  const UnivariatePrior& univariate_prior() const { return std::get<UnivariatePrior>(prior); }
  int dim() const;

  /// SPD checks, nu > d - 1, v, a, b > 0.
  void validate() const;
};

/// m = 0, V = 100 I, nu = 2(floor((d+1)/2) + 1), S with diagonal nu and
/// off-diagonal `off_diagonal_sign` * nu / 2.
EmissionPriors default_priors(int dim, double off_diagonal_sign = 1.0);

/// N(0, 1000) means and IG(2, 1) variances.
EmissionPriors default_univariate_priors();

/// Observations y_{i,t} in R^d for every site and time, with optional truth.
struct Dataset {
  int n_sites = 0;
  int n_times = 0;
  /// d x (N*T); column i*T + t holds y_{i,t}.
  Eigen::MatrixXd y;
  NeighborhoodSystem graph;

  std::optional<LatentField> true_field;
  std::optional<LatentParams> true_theta;
  std::optional<EmissionParams> true_emission;

  int dim() const noexcept { return static_cast<int>(y.rows()); }
  auto obs(int i, int t) const { return y.col(static_cast<Eigen::Index>(i) * n_times + t); }

  /// Dimensions consistent and every entry finite.
  void validate() const;
};

/// log N(y; mu_u, Sigma_u) including the normalizing constant.
double log_emission(const Eigen::Ref<const Eigen::VectorXd>& y, int state,
                    const EmissionParams& params);

/// N*T*K table of log N(y_{i,t}; mu_k, Sigma_k), coordinate-major, the layout
/// gibbs_sweep expects.
std::vector<double> emission_log_table(const Dataset& data, const EmissionParams& params);

/// Complete-data log-likelihood sum_{i,t} log N(y_{i,t}; mu_{u_it}, Sigma_{u_it}).
double complete_data_log_likelihood(const Dataset& data, const LatentField& u,
                                    const EmissionParams& params);

struct SufficientStats {
  int n = 0;
  Eigen::VectorXd sum;
  /// Valid only when n > 0.
  Eigen::VectorXd mean;
};

SufficientStats sufficient_stats(const Dataset& data, const LatentField& u, int state);

/// sum over coordinates labelled `state` of (y - center)(y - center)'.
Eigen::MatrixXd scatter_about(const Dataset& data, const LatentField& u, int state,
                              const Eigen::VectorXd& center);

/// mu_u | ... ~ N(Vt mt, Vt), Vt^{-1} = n Sigma^{-1} + V^{-1},
/// mt = Sigma^{-1} n ybar + V^{-1} m.
Eigen::VectorXd sample_mu(int state, const Dataset& data, const LatentField& u,
                          const Eigen::MatrixXd& sigma_u, const MultivariatePrior& prior, Rng& rng);

/// Sigma_u | ... ~ IW(nu + n, S + sum (y - mu)(y - mu)').
Eigen::MatrixXd sample_sigma(int state, const Dataset& data, const LatentField& u,
                             const Eigen::VectorXd& mu_u, const MultivariatePrior& prior, Rng& rng);

double sample_mu_univariate(int state, const Dataset& data, const LatentField& u, double sigma2_u,
                            const UnivariatePrior& prior, Rng& rng);

double sample_sigma_univariate(int state, const Dataset& data, const LatentField& u, double mu_u,
                               const UnivariatePrior& prior, Rng& rng);

Eigen::VectorXd sample_mvnormal(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, Rng& rng);

/// Inverse-Wishart draw via the Bartlett factorization.
Eigen::MatrixXd sample_inverse_wishart(double df, const Eigen::MatrixXd& scale, Rng& rng);

/// Inverse-gamma with shape a and rate b.
double sample_inverse_gamma(double a, double b, Rng& rng);

/// Draws every state's parameters from the prior.
EmissionParams sample_emission_prior(const EmissionPriors& priors, int n_states, Rng& rng);

/// Observation CSV: header "site,time,y1,...,yd", 1-based indices.
void write_observations_csv(const Dataset& data, std::ostream& out);

/// Reads observations; the graph must be attached by the caller.
Dataset read_observations_csv(std::istream& in);

}  // namespace sthmm
