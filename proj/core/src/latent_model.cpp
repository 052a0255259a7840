#include "sthmm/latent_model.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

namespace sthmm {

namespace {

const char* family_prefix(Family f) {
  switch (f) {
    case Family::beta: return "beta";
    case Family::beta_star: return "beta_star";
    case Family::gamma: return "gamma";
    case Family::gamma_star: return "gamma_star";
    case Family::delta: return "delta";
  }
  return "?";
}

bool is_vector_family(Family f) { return f == Family::beta || f == Family::beta_star; }

double log_sum_exp(std::span<const double> x) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : x) m = std::max(m, v);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

}  // namespace

std::string parameter_name(const ParamId& id) {
  std::string s = family_prefix(id.family);
  s += '_' + std::to_string(id.u + 1);
  if (!is_vector_family(id.family)) s += '_' + std::to_string(id.v + 1);
  return s;
}

ParamId parse_parameter_name(const std::string& name) {
  static const std::pair<const char*, Family> prefixes[] = {
      {"beta_star_", Family::beta_star}, {"beta_", Family::beta},
      {"gamma_star_", Family::gamma_star}, {"gamma_", Family::gamma},
      {"delta_", Family::delta}};
  for (const auto& [prefix, fam] : prefixes) {
    const std::string p = prefix;
    if (name.rfind(p, 0) != 0) continue;
    std::istringstream rest(name.substr(p.size()));
    ParamId id{fam, 0, -1};
    char sep = 0;
    if (!(rest >> id.u)) break;
    id.u -= 1;
    if (!is_vector_family(fam)) {
      if (!(rest >> sep >> id.v) || sep != '_') break;
      id.v -= 1;
    }
    if (rest >> sep) break;
    return id;
  }
  throw LatentModelError("unrecognized parameter name '" + name + "'");
}

LatentParams::LatentParams(int n_states, Parsimony parsimony)
    : k_(n_states),
      parsimony_(parsimony),
      beta_(static_cast<std::size_t>(std::max(n_states, 0)), 0.0),
      beta_star_(beta_.size(), 0.0),
      gamma_(beta_.size() * beta_.size(), 0.0),
      gamma_star_(gamma_.size(), 0.0),
      delta_(gamma_.size(), 0.0) {
  if (n_states < 1) throw LatentModelError("number of states must be at least 1");
}

LatentParams LatentParams::from_values(int n_states, std::vector<double> beta,
                                       std::vector<double> beta_star, std::vector<double> gamma,
                                       std::vector<double> gamma_star, std::vector<double> delta,
                                       Parsimony parsimony) {
  LatentParams p(n_states, parsimony);
  const auto k = static_cast<std::size_t>(n_states);
  if (beta.size() != k || beta_star.size() != k || gamma.size() != k * k ||
      gamma_star.size() != k * k || delta.size() != k * k)
    throw LatentModelError("latent parameter dimensions do not match K");
  if (beta[k - 1] != 0.0 || beta_star[k - 1] != 0.0)
    throw LatentModelError("last prevalence entry must be zero");
  for (std::size_t u = 0; u < k; ++u) {
    if (gamma[u * k + u] != 0.0 || gamma_star[u * k + u] != 0.0 || delta[u * k + u] != 0.0)
      throw LatentModelError("matrix diagonals must be zero");
  }
  if (parsimony.symmetric_spatial_temporal) {
    for (std::size_t u = 0; u < k; ++u)
      for (std::size_t v = u + 1; v < k; ++v)
        if (gamma[u * k + v] != gamma[v * k + u] ||
            gamma_star[u * k + v] != gamma_star[v * k + u] || delta[u * k + v] != delta[v * k + u])
          throw LatentModelError("symmetric parameterization requires symmetric matrices");
  }
  if (parsimony.shared_time && (beta != beta_star || gamma != gamma_star))
    throw LatentModelError("shared-time parameterization requires beta = beta_star, gamma = gamma_star");
  p.beta_ = std::move(beta);
  p.beta_star_ = std::move(beta_star);
  p.gamma_ = std::move(gamma);
  p.gamma_star_ = std::move(gamma_star);
  p.delta_ = std::move(delta);
  return p;
}

void LatentParams::check_id(const ParamId& id) const {
  if (id.u < 0 || id.u >= k_) throw LatentModelError("state index out of range");
  if (is_vector_family(id.family)) {
    if (id.v != -1) throw LatentModelError("prevalence parameters take one index");
  } else if (id.v < 0 || id.v >= k_) {
    throw LatentModelError("state index out of range");
  }
}

double& LatentParams::entry(const ParamId& id) {
  switch (id.family) {
    case Family::beta: return beta_[id.u];
    case Family::beta_star: return beta_star_[id.u];
    case Family::gamma: return gamma_[id.u * k_ + id.v];
    case Family::gamma_star: return gamma_star_[id.u * k_ + id.v];
    case Family::delta: return delta_[id.u * k_ + id.v];
  }
  throw LatentModelError("bad parameter family");
}

double LatentParams::get(const ParamId& id) const {
  check_id(id);
  return const_cast<LatentParams*>(this)->entry(id);
}

bool LatentParams::is_free(const ParamId& id) const {
  if (id.u < 0 || id.u >= k_) return false;
  if (is_vector_family(id.family)) {
    if (id.v != -1 || id.u == k_ - 1) return false;
    return !(id.family == Family::beta_star && parsimony_.shared_time);
  }
  if (id.v < 0 || id.v >= k_ || id.u == id.v) return false;
  if (id.family == Family::gamma_star && parsimony_.shared_time) return false;
  if (parsimony_.symmetric_spatial_temporal && id.u > id.v) return false;
  return true;
}

std::vector<ParamId> LatentParams::tied_entries(const ParamId& id) const {
  if (!is_free(id)) throw LatentModelError(parameter_name(id) + " is not a free parameter");
  std::vector<ParamId> out{id};
  if (parsimony_.symmetric_spatial_temporal && !is_vector_family(id.family))
    out.push_back({id.family, id.v, id.u});
  if (parsimony_.shared_time && (id.family == Family::beta || id.family == Family::gamma)) {
    const Family twin = id.family == Family::beta ? Family::beta_star : Family::gamma_star;
    const auto n = out.size();
    for (std::size_t i = 0; i < n; ++i) out.push_back({twin, out[i].u, out[i].v});
  }
  return out;
}

void LatentParams::set(const ParamId& id, double value) {
  for (const auto& e : tied_entries(id)) entry(e) = value;
}

std::vector<ParamId> LatentParams::free_parameters() const {
  std::vector<ParamId> out;
  for (Family f : {Family::beta, Family::beta_star}) {
    for (int u = 0; u < k_; ++u) {
      ParamId id{f, u, -1};
      if (is_free(id)) out.push_back(id);
    }
  }
  for (Family f : {Family::gamma, Family::gamma_star, Family::delta}) {
    for (int u = 0; u < k_; ++u)
      for (int v = 0; v < k_; ++v) {
        ParamId id{f, u, v};
        if (is_free(id)) out.push_back(id);
      }
  }
  return out;
}

LatentParams LatentParams::permuted(std::span<const int> perm) const {
  if (static_cast<int>(perm.size()) != k_) throw LatentModelError("permutation size != K");
  LatentParams p(k_, parsimony_);
  const int last = perm[k_ - 1];
  for (int a = 0; a < k_; ++a) {
    p.beta_[a] = beta_[perm[a]] - beta_[last];
    p.beta_star_[a] = beta_star_[perm[a]] - beta_star_[last];
    for (int b = 0; b < k_; ++b) {
      p.gamma_[a * k_ + b] = gamma_[perm[a] * k_ + perm[b]];
      p.gamma_star_[a * k_ + b] = gamma_star_[perm[a] * k_ + perm[b]];
      p.delta_[a * k_ + b] = delta_[perm[a] * k_ + perm[b]];
    }
  }
  p.beta_[k_ - 1] = 0.0;
  p.beta_star_[k_ - 1] = 0.0;
  return p;
}

int LatentField::max_state() const {
  if (values_.empty()) return 0;
  return *std::max_element(values_.begin(), values_.end()) + 1;
}

void validate_field(const LatentField& u, const LatentParams& theta, const NeighborhoodSystem& g) {
  if (u.n_sites() != g.n_sites()) throw LatentModelError("field has a different number of sites than the graph");
  if (u.n_times() < 1) throw LatentModelError("field needs at least one time point");
  const int k = theta.n_states();
  for (int s : u.values())
    if (s < 0 || s >= k)
      throw LatentModelError("state label " + std::to_string(s + 1) + " outside 1.." + std::to_string(k));
}

double log_potential(const LatentField& u, const LatentParams& theta, const NeighborhoodSystem& g) {
  validate_field(u, theta, g);
  const int n = u.n_sites(), nt = u.n_times(), k = theta.n_states();
  double total = 0.0;
  for (int t = 0; t < nt; ++t) {
    const auto b = theta.prevalence(t);
    const auto gm = theta.spatial(t);
    for (int i = 0; i < n; ++i) total += b[u(i, t)];
    for (const auto& [i, j] : g.ordered_pairs()) total += gm[u(i, t) * k + u(j, t)];
    if (t > 0) {
      const auto d = theta.temporal();
      for (int i = 0; i < n; ++i) total += d[u(i, t - 1) * k + u(i, t)];
    }
  }
  return total;
}

double parameter_statistic(const ParamId& id, const LatentField& u, const LatentParams& theta,
                           const NeighborhoodSystem& g) {
  validate_field(u, theta, g);
  const int n = u.n_sites(), nt = u.n_times();
  double count = 0.0;
  for (const auto& e : theta.tied_entries(id)) {
    switch (e.family) {
      case Family::beta:
        for (int i = 0; i < n; ++i) count += u(i, 0) == e.u;
        break;
      case Family::beta_star:
        for (int t = 1; t < nt; ++t)
          for (int i = 0; i < n; ++i) count += u(i, t) == e.u;
        break;
      case Family::gamma:
      case Family::gamma_star: {
        const int t0 = e.family == Family::gamma ? 0 : 1;
        const int t1 = e.family == Family::gamma ? 1 : nt;
        for (int t = t0; t < t1; ++t)
          for (const auto& [i, j] : g.ordered_pairs()) count += u(i, t) == e.u && u(j, t) == e.v;
        break;
      }
      case Family::delta:
        for (int t = 1; t < nt; ++t)
          for (int i = 0; i < n; ++i) count += u(i, t - 1) == e.u && u(i, t) == e.v;
        break;
    }
  }
  return count;
}

std::uint64_t configuration_count(int n_states, int n_sites, int n_times) {
  const std::uint64_t k = static_cast<std::uint64_t>(n_states);
  const std::int64_t coords = static_cast<std::int64_t>(n_sites) * n_times;
  std::uint64_t total = 1;
  for (std::int64_t c = 0; c < coords; ++c) {
    if (k != 0 && total > std::numeric_limits<std::uint64_t>::max() / k)
      return std::numeric_limits<std::uint64_t>::max();
    total *= k;
  }
  return total;
}

EnumeratedDistribution::EnumeratedDistribution(const LatentParams& theta,
                                               const NeighborhoodSystem& g, int n_times,
                                               std::uint64_t cap)
    : k_(theta.n_states()), n_(g.n_sites()), t_(n_times) {
  if (n_times < 1) throw LatentModelError("need at least one time point");
  const std::uint64_t count = configuration_count(k_, n_, t_);
  if (count > cap)
    throw EnumerationTooLarge("enumeration of " + std::to_string(k_) + "^" +
                              std::to_string(static_cast<long long>(n_) * t_) +
                              " configurations exceeds the cap of " + std::to_string(cap));
  std::vector<double> logq(count);
  for (std::uint64_t idx = 0; idx < count; ++idx) logq[idx] = log_potential(field(idx), theta, g);
  log_z_ = log_sum_exp(logq);
  probs_.resize(count);
  cdf_.resize(count);
  double acc = 0.0;
  for (std::uint64_t idx = 0; idx < count; ++idx) {
    probs_[idx] = std::exp(logq[idx] - log_z_);
    acc += probs_[idx];
    cdf_[idx] = acc;
  }
}

LatentField EnumeratedDistribution::field(std::size_t index) const {
  LatentField u(n_, t_);
  auto vals = u.values();
  for (std::size_t c = vals.size(); c-- > 0;) {
    vals[c] = static_cast<int>(index % static_cast<std::size_t>(k_));
    index /= static_cast<std::size_t>(k_);
  }
  return u;
}

std::size_t EnumeratedDistribution::index(const LatentField& u) const {
  if (u.n_sites() != n_ || u.n_times() != t_) throw LatentModelError("field dims mismatch");
  std::size_t idx = 0;
  for (int s : u.values()) {
    if (s < 0 || s >= k_) throw LatentModelError("state label out of range");
    idx = idx * static_cast<std::size_t>(k_) + static_cast<std::size_t>(s);
  }
  return idx;
}

std::vector<double> EnumeratedDistribution::conditional(int i, int t, const LatentField& u) const {
  std::vector<double> p(static_cast<std::size_t>(k_));
  LatentField x = u;
  for (int s = 0; s < k_; ++s) {
    x(i, t) = s;
    p[s] = probs_[index(x)];
  }
  const double total = std::accumulate(p.begin(), p.end(), 0.0);
  for (double& v : p) v /= total;
  return p;
}

LatentField EnumeratedDistribution::sample(Rng& rng) const {
  std::uniform_real_distribution<double> unif(0.0, cdf_.back());
  const double r = unif(rng);
  auto it = std::upper_bound(cdf_.begin(), cdf_.end(), r);
  if (it == cdf_.end()) --it;
  return field(static_cast<std::size_t>(it - cdf_.begin()));
}

double log_partition_exact(const LatentParams& theta, const NeighborhoodSystem& g, int n_times,
                           std::uint64_t cap) {
  return EnumeratedDistribution(theta, g, n_times, cap).log_partition();
}

void conditional_log_scores(int i, int t, const LatentField& u, const LatentParams& theta,
                            const NeighborhoodSystem& g, std::span<double> out) {
  const int k = theta.n_states();
  const int nt = u.n_times();
  const auto b = theta.prevalence(t);
  const auto gm = theta.spatial(t);
  const auto d = theta.temporal();
  const auto& nb = g.neighbors(i);
  for (int w = 0; w < k; ++w) {
    double s = b[w];
    for (int j : nb) s += j > i ? gm[w * k + u(j, t)] : gm[u(j, t) * k + w];
    if (t > 0) s += d[u(i, t - 1) * k + w];
    if (t + 1 < nt) s += d[w * k + u(i, t + 1)];
    out[w] = s;
  }
}

namespace {

void check_coordinate(int i, int t, const LatentField& u) {
  if (i < 0 || i >= u.n_sites() || t < 0 || t >= u.n_times())
    throw LatentModelError("coordinate (" + std::to_string(i + 1) + "," + std::to_string(t + 1) +
                           ") out of range");
}

void normalize_log(std::span<double> w) {
  const double lse = log_sum_exp(w);
  for (double& v : w) v = std::exp(v - lse);
}

}  // namespace

std::vector<double> full_conditional(int i, int t, const LatentField& u, const LatentParams& theta,
                                     const NeighborhoodSystem& g) {
  check_coordinate(i, t, u);
  std::vector<double> p(static_cast<std::size_t>(theta.n_states()));
  conditional_log_scores(i, t, u, theta, g, p);
  normalize_log(p);
  return p;
}

double log_odds(int i, int t, int w, int k, const LatentField& u, const LatentParams& theta,
                const NeighborhoodSystem& g) {
  check_coordinate(i, t, u);
  if (w == k) throw LatentModelError("log-odds needs two distinct states");
  LatentField a = u, b = u;
  a(i, t) = w;
  b(i, t) = k;
  return log_potential(a, theta, g) - log_potential(b, theta, g);
}

double log_pseudo_likelihood(const LatentField& u, const LatentParams& theta,
                             const NeighborhoodSystem& g) {
  validate_field(u, theta, g);
  std::vector<double> scores(static_cast<std::size_t>(theta.n_states()));
  double total = 0.0;
  for (int i = 0; i < u.n_sites(); ++i)
    for (int t = 0; t < u.n_times(); ++t) {
      conditional_log_scores(i, t, u, theta, g, scores);
      total += scores[u(i, t)] - log_sum_exp(scores);
    }
  return total;
}

int sample_categorical_log(std::span<double> log_w, Rng& rng) {
  normalize_log(log_w);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double r = unif(rng);
  const int k = static_cast<int>(log_w.size());
  for (int s = 0; s < k - 1; ++s) {
    r -= log_w[s];
    if (r < 0.0) return s;
  }
  return k - 1;
}

void gibbs_sweep(LatentField& u, const LatentParams& theta, const NeighborhoodSystem& g, Rng& rng,
                 std::span<const double> extra_log_weights) {
  const int k = theta.n_states();
  if (k < 2) return;
  const int n = u.n_sites(), nt = u.n_times();
  const bool weighted = !extra_log_weights.empty();
  if (weighted && extra_log_weights.size() != u.size() * static_cast<std::size_t>(k))
    throw LatentModelError("extra log-weight table has the wrong size");
  std::vector<double> scores(static_cast<std::size_t>(k));
  for (int i = 0; i < n; ++i) {
    for (int t = 0; t < nt; ++t) {
      conditional_log_scores(i, t, u, theta, g, scores);
      if (weighted) {
        const std::size_t base = (static_cast<std::size_t>(i) * nt + t) * k;
        for (int w = 0; w < k; ++w) scores[w] += extra_log_weights[base + w];
      }
      u(i, t) = sample_categorical_log(scores, rng);
    }
  }
}

void write_field_csv(const LatentField& u, std::ostream& out) {
  out << "site,time,state\n";
  for (int i = 0; i < u.n_sites(); ++i)
    for (int t = 0; t < u.n_times(); ++t) out << i + 1 << ',' << t + 1 << ',' << u(i, t) + 1 << '\n';
}

LatentField read_field_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw LatentModelError("empty field CSV");
  struct Row { int i, t, s; };
  std::vector<Row> rows;
  int n = 0, nt = 0;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::istringstream ls(line);
    Row r{};
    char c1 = 0, c2 = 0;
    if (!(ls >> r.i >> c1 >> r.t >> c2 >> r.s) || c1 != ',' || c2 != ',' || r.i < 1 || r.t < 1 || r.s < 1)
      throw LatentModelError("field CSV line " + std::to_string(line_no) + ": expected site,time,state");
    n = std::max(n, r.i);
    nt = std::max(nt, r.t);
    rows.push_back(r);
  }
  if (rows.size() != static_cast<std::size_t>(n) * nt)
    throw LatentModelError("field CSV does not cover a full site x time grid");
  LatentField u(n, nt, -1);
  for (const auto& r : rows) {
    if (u(r.i - 1, r.t - 1) != -1) throw LatentModelError("field CSV repeats a coordinate");
    u(r.i - 1, r.t - 1) = r.s - 1;
  }
  return u;
}

}  // namespace sthmm
