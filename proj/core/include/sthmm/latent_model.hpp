#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sthmm/graph.hpp"
#include "sthmm/rng.hpp"

namespace sthmm {

struct LatentModelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EnumerationTooLarge : LatentModelError {
  using LatentModelError::LatentModelError;
};

enum class Family { beta, beta_star, gamma, gamma_star, delta };

/// One scalar latent parameter. States are 0-based; `v` is -1 for the
/// prevalence vectors.
struct ParamId {
  Family family = Family::beta;
  int u = 0;
  int v = -1;

  friend bool operator==(const ParamId&, const ParamId&) = default;
};

/// "beta_1", "beta_star_2", "gamma_1_2", "gamma_star_2_1", "delta_1_2" (1-based).
std::string parameter_name(const ParamId& id);
ParamId parse_parameter_name(const std::string& name);

struct Parsimony {
  /// gamma, gamma_star and delta are symmetric; only u < v entries are free.
  bool symmetric_spatial_temporal = false;
  /// beta_star = beta and gamma_star = gamma.
  bool shared_time = false;

  friend bool operator==(const Parsimony&, const Parsimony&) = default;
};

/// Parameters of the K-state autologistic spatio-temporal field.
///
/// The identifiability constraints (last prevalence entry zero, zero matrix
/// diagonals) and the parsimony ties are enforced by construction: the only
/// mutator is `set`, which takes a free parameter and writes every entry tied
/// to it.
class LatentParams {
 public:
  LatentParams() = default;
  explicit LatentParams(int n_states, Parsimony parsimony = {});

  /// Validating constructor from full vectors/matrices (row-major K*K).
  static LatentParams from_values(int n_states, std::vector<double> beta,
                                  std::vector<double> beta_star, std::vector<double> gamma,
                                  std::vector<double> gamma_star, std::vector<double> delta,
                                  Parsimony parsimony = {});

  int n_states() const noexcept { return k_; }
  const Parsimony& parsimony() const noexcept { return parsimony_; }

  double beta(int u) const { return beta_[u]; }
  double beta_star(int u) const { return beta_star_[u]; }
  double gamma(int u, int v) const { return gamma_[u * k_ + v]; }
  double gamma_star(int u, int v) const { return gamma_star_[u * k_ + v]; }
  double delta(int u, int v) const { return delta_[u * k_ + v]; }

  /// Prevalence and spatial blocks for time index t (0-based): t = 0 uses
  /// beta/gamma, later times use beta_star/gamma_star.
  std::span<const double> prevalence(int t) const { return t == 0 ? beta_ : beta_star_; }
  std::span<const double> spatial(int t) const { return t == 0 ? gamma_ : gamma_star_; }
  std::span<const double> temporal() const { return delta_; }

  double get(const ParamId& id) const;

  /// Sets a free parameter and every entry tied to it. Throws if `id` is not
  /// free under the constraints.
  void set(const ParamId& id, double value);

  bool is_free(const ParamId& id) const;

  /// Free parameters in update order: beta, beta_star, gamma, gamma_star,
  /// delta; row-major within matrices.
  std::vector<ParamId> free_parameters() const;

  /// Entries of the full parameterization that move together with `id`.
  std::vector<ParamId> tied_entries(const ParamId& id) const;

  /// Relabels states: new state k is old state perm[k]. Prevalences are
  /// re-based so the last entry stays zero, which leaves p(u | theta)
  /// unchanged up to the relabeling.
  LatentParams permuted(std::span<const int> perm) const;

  friend bool operator==(const LatentParams&, const LatentParams&) = default;

 private:
  double& entry(const ParamId& id);
  void check_id(const ParamId& id) const;

  int k_ = 0;
  Parsimony parsimony_;
  std::vector<double> beta_, beta_star_;
  std::vector<double> gamma_, gamma_star_, delta_;
};

/// N x T array of 0-based state labels, stored site-major (index i*T + t).
class LatentField {
 public:
  LatentField() = default;
  LatentField(int n_sites, int n_times, int fill = 0)
      : n_(n_sites), t_(n_times), values_(static_cast<std::size_t>(n_sites) * n_times, fill) {}

  int n_sites() const noexcept { return n_; }
  int n_times() const noexcept { return t_; }
  std::size_t size() const noexcept { return values_.size(); }

  int operator()(int i, int t) const { return values_[static_cast<std::size_t>(i) * t_ + t]; }
  int& operator()(int i, int t) { return values_[static_cast<std::size_t>(i) * t_ + t]; }

  std::span<const int> values() const noexcept { return values_; }
  std::span<int> values() noexcept { return values_; }

  /// Largest label + 1 (0 for an empty field).
  int max_state() const;

  friend bool operator==(const LatentField&, const LatentField&) = default;

 private:
  int n_ = 0, t_ = 0;
  std::vector<int> values_;
};

/// Throws LatentModelError if dims disagree with g or a label is outside [0, K).
void validate_field(const LatentField& u, const LatentParams& theta, const NeighborhoodSystem& g);

/// log q_theta(u): prevalence and ordered-pair spatial terms at every time,
/// plus transitions between consecutive times at the same site.
double log_potential(const LatentField& u, const LatentParams& theta, const NeighborhoodSystem& g);

/// d log q_theta(u) / d(free parameter `id`), i.e. the indicator count of the
/// parameter summed over every tied entry. log q is linear in theta, so
/// log q_{theta + h e_id}(u) - log q_theta(u) = h * parameter_statistic(...).
double parameter_statistic(const ParamId& id, const LatentField& u, const LatentParams& theta,
                           const NeighborhoodSystem& g);

inline constexpr std::uint64_t kDefaultEnumerationCap = std::uint64_t{1} << 20;

/// K^(N*T) if it fits in 64 bits, otherwise UINT64_MAX.
std::uint64_t configuration_count(int n_states, int n_sites, int n_times);

/// Exhaustive distribution p(u | theta) over all K^(N*T) fields. Field index
/// is the mixed-radix number with coordinate i*T + t as digit (base K), most
/// significant digit first.
class EnumeratedDistribution {
 public:
  EnumeratedDistribution(const LatentParams& theta, const NeighborhoodSystem& g, int n_times,
                         std::uint64_t cap = kDefaultEnumerationCap);

  std::size_t size() const noexcept { return probs_.size(); }
  double log_partition() const noexcept { return log_z_; }
  const std::vector<double>& probabilities() const noexcept { return probs_; }

  double probability(const LatentField& u) const { return probs_.at(index(u)); }
  LatentField field(std::size_t index) const;
  std::size_t index(const LatentField& u) const;

  /// p(U_{i,t} = . | rest) obtained by summing the table.
  std::vector<double> conditional(int i, int t, const LatentField& u) const;

  /// Exact draw from the table.
  LatentField sample(Rng& rng) const;

 private:
  int k_, n_, t_;
  double log_z_ = 0.0;
  std::vector<double> probs_;
  std::vector<double> cdf_;
};

double log_partition_exact(const LatentParams& theta, const NeighborhoodSystem& g, int n_times,
                           std::uint64_t cap = kDefaultEnumerationCap);

inline EnumeratedDistribution exact_field_distribution(const LatentParams& theta,
                                                       const NeighborhoodSystem& g, int n_times,
                                                       std::uint64_t cap = kDefaultEnumerationCap) {
  return EnumeratedDistribution(theta, g, n_times, cap);
}

/// Unnormalized log full-conditional scores of U_{i,t} for every state,
/// written into `out` (size K). Every incident edge contributes: an edge
/// (i, j) with i < j adds gamma[w][u_j], an edge (j, i) with j < i adds
/// gamma[u_j][w].
void conditional_log_scores(int i, int t, const LatentField& u, const LatentParams& theta,
                            const NeighborhoodSystem& g, std::span<double> out);

/// p(U_{i,t} = . | all other coordinates, theta), normalized.
std::vector<double> full_conditional(int i, int t, const LatentField& u, const LatentParams& theta,
                                     const NeighborhoodSystem& g);

/// log p(U_{i,t}=w | rest) / p(U_{i,t}=k | rest) as a difference of log
/// potentials.
double log_odds(int i, int t, int w, int k, const LatentField& u, const LatentParams& theta,
                const NeighborhoodSystem& g);

/// Sum over all coordinates of log full_conditional at the observed label.
double log_pseudo_likelihood(const LatentField& u, const LatentParams& theta,
                             const NeighborhoodSystem& g);

/// One systematic scan (site-major, then time) resampling every coordinate
/// from its full conditional. `extra_log_weights`, when non-empty, holds
/// N*T*K additive log terms (coordinate-major) such as emission
/// log-densities.
void gibbs_sweep(LatentField& u, const LatentParams& theta, const NeighborhoodSystem& g, Rng& rng,
                 std::span<const double> extra_log_weights = {});

/// Draws from a categorical distribution given unnormalized log weights.
/// Overwrites `log_w` with normalized probabilities.
int sample_categorical_log(std::span<double> log_w, Rng& rng);

void write_field_csv(const LatentField& u, std::ostream& out);
LatentField read_field_csv(std::istream& in);

}  // namespace sthmm
