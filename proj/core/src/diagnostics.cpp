#include "sthmm/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>

#include <nlohmann/json.hpp>

namespace sthmm {

namespace {

void require_length(std::span<const double> x) {
  if (x.size() < kMinChainLength)
    throw DiagnosticsError("chain of length " + std::to_string(x.size()) + " is shorter than " +
                           std::to_string(kMinChainLength));
}

double mean_of(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

}  // namespace

double spectral_density_at_zero(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n < 2) throw DiagnosticsError("spectral density needs at least two values");
  const double m = mean_of(x);
  const int max_order =
      static_cast<int>(std::min<double>(static_cast<double>(n) - 1.0, std::floor(10.0 * std::log10(static_cast<double>(n)))));
  std::vector<double> acov(static_cast<std::size_t>(max_order) + 1, 0.0);
  for (int lag = 0; lag <= max_order; ++lag) {
    double s = 0.0;
    for (std::size_t t = static_cast<std::size_t>(lag); t < n; ++t) s += (x[t] - m) * (x[t - lag] - m);
    acov[lag] = s / static_cast<double>(n);
  }
  if (acov[0] <= 0.0) return 0.0;

  // Levinson-Durbin; keep the AIC-best order.
  std::vector<double> phi, best_phi;
  double v = acov[0];
  double best_aic = static_cast<double>(n) * std::log(v);
  double best_v = v;
  int best_order = 0;
  for (int k = 1; k <= max_order; ++k) {
    double num = acov[k];
    for (int j = 1; j < k; ++j) num -= phi[j - 1] * acov[k - j];
    const double kappa = num / v;
    std::vector<double> next(static_cast<std::size_t>(k));
    for (int j = 1; j < k; ++j) next[j - 1] = phi[j - 1] - kappa * phi[k - j - 1];
    next[k - 1] = kappa;
    phi = std::move(next);
    v *= (1.0 - kappa * kappa);
    if (!(v > 0.0)) break;
    const double aic = static_cast<double>(n) * std::log(v) + 2.0 * k;
    if (aic < best_aic) {
      best_aic = aic;
      best_v = v;
      best_order = k;
      best_phi = phi;
    }
  }
  const double var_pred = best_v * static_cast<double>(n) / static_cast<double>(n - (best_order + 1));
  const double denom = 1.0 - std::accumulate(best_phi.begin(), best_phi.end(), 0.0);
  return var_pred / (denom * denom);
}

GewekeResult geweke(std::span<const double> chain, double frac_a, double frac_b) {
  require_length(chain);
  if (!(frac_a > 0.0 && frac_b > 0.0 && frac_a + frac_b <= 1.0))
    throw DiagnosticsError("Geweke fractions must be positive and sum to at most 1");
  const std::size_t n = chain.size();
  const auto na = static_cast<std::size_t>(std::floor(frac_a * static_cast<double>(n)));
  const auto nb = static_cast<std::size_t>(std::floor(frac_b * static_cast<double>(n)));
  const auto a = chain.subspan(0, na);
  const auto b = chain.subspan(n - nb, nb);
  const double diff = mean_of(a) - mean_of(b);
  const double var = spectral_density_at_zero(a) / static_cast<double>(na) +
                     spectral_density_at_zero(b) / static_cast<double>(nb);
  GewekeResult res;
  if (var > 0.0) {
    res.z = diff / std::sqrt(var);
  } else {
    res.z = diff == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), diff);
  }
  res.pass = std::abs(res.z) < 1.96;
  return res;
}

double mcse_batch_means(std::span<const double> chain) {
  require_length(chain);
  const std::size_t n = chain.size();
  const auto b = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(n))));
  const std::size_t a = n / b;
  std::vector<double> means(a);
  for (std::size_t k = 0; k < a; ++k) means[k] = mean_of(chain.subspan(k * b, b));
  const double m = mean_of(means);
  double ss = 0.0;
  for (double v : means) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(a - 1)) / std::sqrt(static_cast<double>(a));
}

EmissionParams posterior_mean_emission(const ChainOutput& out) {
  if (out.draws.empty()) throw DiagnosticsError("no stored draws");
  EmissionParams mean = out.draws.front().emission;
  for (int s = 0; s < out.n_states; ++s) {
    mean.mu[s].setZero();
    mean.sigma[s].setZero();
  }
  for (const auto& d : out.draws)
    for (int s = 0; s < out.n_states; ++s) {
      mean.mu[s] += d.emission.mu[s];
      mean.sigma[s] += d.emission.sigma[s];
    }
  const double n = static_cast<double>(out.draws.size());
  for (int s = 0; s < out.n_states; ++s) {
    mean.mu[s] /= n;
    mean.sigma[s] /= n;
  }
  return mean;
}

LatentField map_decode(const ChainOutput& out) {
  if (out.fields.empty()) throw DiagnosticsError("no stored latent fields");
  const auto& first = out.fields.front();
  int k = out.n_states;
  for (const auto& f : out.fields) k = std::max(k, f.max_state());
  std::vector<int> counts(first.size() * static_cast<std::size_t>(k), 0);
  for (const auto& f : out.fields) {
    const auto v = f.values();
    for (std::size_t c = 0; c < v.size(); ++c) ++counts[c * k + v[c]];
  }
  LatentField map(first.n_sites(), first.n_times());
  auto mv = map.values();
  for (std::size_t c = 0; c < mv.size(); ++c) {
    const auto* row = &counts[c * k];
    mv[c] = static_cast<int>(std::max_element(row, row + k) - row);
  }
  return map;
}

DicResult dic(const ChainOutput& out, const Dataset& data) {
  if (out.fields.empty()) throw DiagnosticsError("DIC needs stored latent fields");
  double sum = 0.0;
  for (std::size_t f = 0; f < out.fields.size(); ++f) {
    const auto& draw = out.draws.at(static_cast<std::size_t>(out.field_draw[f]));
    sum += -2.0 * complete_data_log_likelihood(data, out.fields[f], draw.emission);
  }
  DicResult r;
  r.mean_deviance = sum / static_cast<double>(out.fields.size());
  r.deviance_at_estimate = -2.0 * complete_data_log_likelihood(data, map_decode(out), posterior_mean_emission(out));
  r.p_d = r.mean_deviance - r.deviance_at_estimate;
  r.dic = r.mean_deviance + r.p_d;
  return r;
}

double misclassification(const LatentField& estimated, const LatentField& truth) {
  if (estimated.n_sites() != truth.n_sites() || estimated.n_times() != truth.n_times())
    throw DiagnosticsError("fields have different dimensions");
  if (truth.size() == 0) return 0.0;
  const int k = std::max(estimated.max_state(), truth.max_state());
  if (k > kMaxPermutationStates)
    throw DiagnosticsError("label-permutation search refused for more than " +
                           std::to_string(kMaxPermutationStates) + " states");
  // confusion[a][b] = #{c : estimated = a, truth = b}
  std::vector<long> confusion(static_cast<std::size_t>(k * k), 0);
  const auto e = estimated.values();
  const auto t = truth.values();
  for (std::size_t c = 0; c < e.size(); ++c) ++confusion[e[c] * k + t[c]];
  std::vector<int> perm(static_cast<std::size_t>(k));
  std::iota(perm.begin(), perm.end(), 0);
  long best = 0;
  do {
    long agree = 0;
    for (int a = 0; a < k; ++a) agree += confusion[a * k + perm[a]];
    best = std::max(best, agree);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return 1.0 - static_cast<double>(best) / static_cast<double>(e.size());
}

std::vector<double> mae(const std::vector<std::vector<double>>& estimates, std::span<const double> truth) {
  if (estimates.empty()) throw DiagnosticsError("MAE needs at least one replicate");
  std::vector<double> out(truth.size(), 0.0);
  for (const auto& row : estimates) {
    if (row.size() != truth.size()) throw DiagnosticsError("estimate and truth lengths differ");
    for (std::size_t p = 0; p < truth.size(); ++p) out[p] += std::abs(row[p] - truth[p]);
  }
  for (double& v : out) v /= static_cast<double>(estimates.size());
  return out;
}

void relabel_by_first_mean(ChainOutput& out) {
  const int k = out.n_states;
  std::vector<std::vector<int>> perms;
  perms.reserve(out.draws.size());
  for (auto& d : out.draws) {
    std::vector<int> perm(static_cast<std::size_t>(k));
    std::iota(perm.begin(), perm.end(), 0);
    std::stable_sort(perm.begin(), perm.end(),
                     [&](int a, int b) { return d.emission.mu[a][0] < d.emission.mu[b][0]; });
    d.theta = d.theta.permuted(perm);
    d.emission = d.emission.permuted(perm);
    perms.push_back(std::move(perm));
  }
  for (std::size_t f = 0; f < out.fields.size(); ++f) {
    const auto& perm = perms.at(static_cast<std::size_t>(out.field_draw[f]));
    std::vector<int> inverse(perm.size());
    for (int a = 0; a < k; ++a) inverse[perm[a]] = a;
    for (int& s : out.fields[f].values()) s = inverse[s];
  }
}

std::optional<double> true_value(const Dataset& data, const std::string& column) {
  if (column.rfind("mu_", 0) == 0 || column.rfind("sigma_", 0) == 0) {
    if (!data.true_emission) return std::nullopt;
    const auto& e = *data.true_emission;
    int s = 0, h = 0, l = 0;
    if (column[0] == 'm' && std::sscanf(column.c_str(), "mu_%d_%d", &s, &h) == 2) {
      if (s < 1 || s > e.n_states() || h < 1 || h > e.dim()) return std::nullopt;
      return e.mu[s - 1][h - 1];
    }
    if (std::sscanf(column.c_str(), "sigma_%d_%d_%d", &s, &h, &l) == 3) {
      if (s < 1 || s > e.n_states() || h < 1 || l < 1 || h > e.dim() || l > e.dim()) return std::nullopt;
      return e.sigma[s - 1](h - 1, l - 1);
    }
    return std::nullopt;
  }
  if (!data.true_theta) return std::nullopt;
  try {
    const ParamId id = parse_parameter_name(column);
    if (id.u >= data.true_theta->n_states() || id.v >= data.true_theta->n_states()) return std::nullopt;
    return data.true_theta->get(id);
  } catch (const LatentModelError&) {
    return std::nullopt;
  }
}

DiagnosticsReport make_report(const ChainOutput& out, const Dataset& data) {
  DiagnosticsReport rep;
  rep.algorithm = to_string(out.algorithm);
  rep.n_states = out.n_states;
  rep.n_draws = out.draws.size();
  const auto names = out.column_names();
  const auto rows = out.table();
  const bool long_enough = rows.size() >= kMinChainLength;
  double abs_sum = 0.0;
  int abs_count = 0;
  for (std::size_t c = 0; c < names.size(); ++c) {
    std::vector<double> col;
    col.reserve(rows.size());
    for (const auto& r : rows) col.push_back(r[c]);
    ParameterSummary ps;
    ps.name = names[c];
    ps.mean = col.empty() ? 0.0 : mean_of(col);
    if (long_enough) {
      ps.mcse = mcse_batch_means(col);
      const auto g = geweke(col);
      ps.geweke_z = g.z;
      ps.geweke_pass = g.pass;
    }
    ps.truth = true_value(data, names[c]);
    if (ps.truth) {
      ps.abs_error = std::abs(ps.mean - *ps.truth);
      if (c < out.theta_params.size()) {
        abs_sum += *ps.abs_error;
        ++abs_count;
      }
    }
    rep.parameters.push_back(std::move(ps));
  }
  if (abs_count > 0) rep.theta_mae = abs_sum / abs_count;
  for (std::size_t p = 0; p < out.theta_params.size(); ++p)
    rep.acceptance.emplace_back(parameter_name(out.theta_params[p]), out.acceptance_rate.at(p));
  if (!out.fields.empty()) {
    rep.dic = dic(out, data);
    rep.map_field = map_decode(out);
    if (data.true_field) rep.misclassification = misclassification(*rep.map_field, *data.true_field);
  }
  return rep;
}

std::string report_to_json(const DiagnosticsReport& report) {
  using nlohmann::json;
  json j;
  j["algorithm"] = report.algorithm;
  j["n_states"] = report.n_states;
  j["n_draws"] = report.n_draws;
  json params = json::array();
  for (const auto& p : report.parameters) {
    json e{{"name", p.name}, {"mean", p.mean}, {"mcse", p.mcse}, {"geweke_z", p.geweke_z},
           {"geweke_pass", p.geweke_pass}};
    e["truth"] = p.truth ? json(*p.truth) : json(nullptr);
    e["abs_error"] = p.abs_error ? json(*p.abs_error) : json(nullptr);
    params.push_back(std::move(e));
  }
  j["parameters"] = std::move(params);
  json acc = json::object();
  for (const auto& [name, rate] : report.acceptance) acc[name] = rate;
  j["acceptance"] = std::move(acc);
  if (report.dic) {
    j["dic"] = {{"dic", report.dic->dic},
                {"mean_deviance", report.dic->mean_deviance},
                {"deviance_at_estimate", report.dic->deviance_at_estimate},
                {"p_d", report.dic->p_d}};
  } else {
    j["dic"] = nullptr;
  }
  j["misclassification"] = report.misclassification ? json(*report.misclassification) : json(nullptr);
  j["theta_mae"] = report.theta_mae ? json(*report.theta_mae) : json(nullptr);
  if (report.map_field) {
    json rows = json::array();
    const auto& f = *report.map_field;
    for (int i = 0; i < f.n_sites(); ++i) {
      json row = json::array();
      for (int t = 0; t < f.n_times(); ++t) row.push_back(f(i, t) + 1);
      rows.push_back(std::move(row));
    }
    j["map_field"] = std::move(rows);
  } else {
    j["map_field"] = nullptr;
  }
  return j.dump(2);
}

void write_report_csv(const DiagnosticsReport& report, std::ostream& os) {
  os << "parameter,mean,mcse,geweke_z,geweke_pass,truth,abs_error\n";
  const auto old = os.precision(std::numeric_limits<double>::max_digits10);
  for (const auto& p : report.parameters) {
    os << p.name << ',' << p.mean << ',' << p.mcse << ',' << p.geweke_z << ',' << (p.geweke_pass ? "yes" : "no")
       << ',';
    if (p.truth) os << *p.truth;
    os << ',';
    if (p.abs_error) os << *p.abs_error;
    os << '\n';
  }
  os.precision(old);
}

}  // namespace sthmm
