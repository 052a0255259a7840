#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sthmm/emission.hpp"
#include "sthmm/samplers.hpp"

namespace sthmm {

struct DiagnosticsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kMinChainLength = 100;

/// Spectral density at frequency zero from a Yule-Walker AR fit with the
/// order chosen by AIC (maximum order min(n - 1, 10 log10 n)).
double spectral_density_at_zero(std::span<const double> x);

struct GewekeResult {
  double z = 0.0;
  bool pass = true;
};

/// Compares the means of the first `frac_a` and last `frac_b` of the chain;
/// passes at the 95% level (|z| < 1.96).
GewekeResult geweke(std::span<const double> chain, double frac_a = 0.1, double frac_b = 0.5);

/// Non-overlapping batch means with batch size floor(sqrt(n)).
double mcse_batch_means(std::span<const double> chain);

struct DicResult {
  double dic = 0.0;
  double mean_deviance = 0.0;
  double deviance_at_estimate = 0.0;
  double p_d = 0.0;
};

/// Complete-data DIC: D = -2 log p(y | u, mu, Sigma) averaged over stored
/// draws with a stored field, plug-in at posterior-mean emissions and the
/// MAP field.
DicResult dic(const ChainOutput& out, const Dataset& data);

/// Posterior-mean emission parameters over all stored draws.
EmissionParams posterior_mean_emission(const ChainOutput& out);

/// Per-coordinate modal state across stored fields; ties go to the lower state.
LatentField map_decode(const ChainOutput& out);

inline constexpr int kMaxPermutationStates = 6;

/// Fraction of coordinates that differ after the best relabeling of
/// `estimated` (exhaustive over K! permutations, K <= 6).
double misclassification(const LatentField& estimated, const LatentField& truth);

/// MAE_p = mean over replicates of |estimate_p - truth_p|. `estimates` has
/// one row per replicate.
std::vector<double> mae(const std::vector<std::vector<double>>& estimates, std::span<const double> truth);

/// Orders states within every draw by the first coordinate of mu and applies
/// the same permutation to theta, emissions and the matching stored field.
void relabel_by_first_mean(ChainOutput& out);

struct ParameterSummary {
  std::string name;
  double mean = 0.0;
  double mcse = 0.0;
  double geweke_z = 0.0;
  bool geweke_pass = true;
  std::optional<double> truth;
  std::optional<double> abs_error;
};

struct DiagnosticsReport {
  std::string algorithm;
  int n_states = 0;
  std::size_t n_draws = 0;
  std::vector<ParameterSummary> parameters;
  std::vector<std::pair<std::string, double>> acceptance;
  std::optional<DicResult> dic;
  std::optional<LatentField> map_field;
  std::optional<double> misclassification;
  /// Mean absolute error over the latent parameters with a known truth.
  std::optional<double> theta_mae;
};

/// Summaries for every chain column. Truth comes from the dataset when
/// present. Chains shorter than the diagnostic minimum get mean only.
DiagnosticsReport make_report(const ChainOutput& out, const Dataset& data);

/// Truth value for a chain column, if the dataset carries one.
std::optional<double> true_value(const Dataset& data, const std::string& column);

std::string report_to_json(const DiagnosticsReport& report);
void write_report_csv(const DiagnosticsReport& report, std::ostream& os);

}  // namespace sthmm
