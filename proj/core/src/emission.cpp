#include "sthmm/emission.hpp"

#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

namespace sthmm {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

Eigen::LLT<Eigen::MatrixXd> factor_spd(const Eigen::MatrixXd& m, const std::string& what) {
  if (m.rows() != m.cols()) throw EmissionError(what + " is not square");
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) throw EmissionError(what + " is not positive definite");
  return llt;
}

std::string state_label(int state) { return "state " + std::to_string(state + 1); }

}  // namespace

void EmissionParams::validate() const {
  if (mu.size() != sigma.size()) throw EmissionError("emission parameter count mismatch");
  const int d = dim();
  for (int u = 0; u < n_states(); ++u) {
    if (mu[u].size() != d || sigma[u].rows() != d || sigma[u].cols() != d)
      throw EmissionError("emission dimensions inconsistent at " + state_label(u));
    if (!sigma[u].isApprox(sigma[u].transpose()))
      throw EmissionError("covariance of " + state_label(u) + " is not symmetric");
    factor_spd(sigma[u], "covariance of " + state_label(u));
  }
}

EmissionParams EmissionParams::permuted(std::span<const int> perm) const {
  EmissionParams out;
  for (int k : perm) {
    out.mu.push_back(mu.at(k));
    out.sigma.push_back(sigma.at(k));
  }
  return out;
}

int EmissionPriors::dim() const {
  return univariate() ? 1 : static_cast<int>(multivariate_prior().m.size());
}

void EmissionPriors::validate() const {
  if (univariate()) {
    const auto& p = univariate_prior();
    if (!(p.v > 0.0) || !(p.a > 0.0) || !(p.b > 0.0))
      throw EmissionError("univariate prior needs v, a, b > 0");
    return;
  }
  const auto& p = multivariate_prior();
  const auto d = p.m.size();
  if (d < 1 || p.V.rows() != d || p.S.rows() != d) throw EmissionError("prior dimensions inconsistent");
  factor_spd(p.V, "prior mean covariance V");
  factor_spd(p.S, "prior scale S");
  if (!(p.nu > static_cast<double>(d) - 1.0)) throw EmissionError("prior degrees of freedom must exceed d - 1");
}

EmissionPriors default_priors(int dim, double off_diagonal_sign) {
  if (dim < 1) throw EmissionError("dimension must be at least 1");
  MultivariatePrior p;
  p.m = Eigen::VectorXd::Zero(dim);
  p.V = 100.0 * Eigen::MatrixXd::Identity(dim, dim);
  p.nu = 2.0 * ((dim + 1) / 2 + 1);
  p.S = Eigen::MatrixXd::Constant(dim, dim, (off_diagonal_sign >= 0 ? 1.0 : -1.0) * p.nu / 2.0);
  p.S.diagonal().setConstant(p.nu);
  return EmissionPriors{p};
}

EmissionPriors default_univariate_priors() { return EmissionPriors{UnivariatePrior{}}; }

void Dataset::validate() const {
  if (n_sites < 1 || n_times < 1) throw EmissionError("dataset needs at least one site and time");
  if (y.cols() != static_cast<Eigen::Index>(n_sites) * n_times || y.rows() < 1)
    throw EmissionError("observation matrix has the wrong shape");
  if (graph.n_sites() != n_sites) throw EmissionError("graph and observations disagree on N");
  if (!y.allFinite()) throw EmissionError("observations contain non-finite values");
  if (true_field && (true_field->n_sites() != n_sites || true_field->n_times() != n_times))
    throw EmissionError("true field dimensions mismatch");
}

double log_emission(const Eigen::Ref<const Eigen::VectorXd>& y, int state,
                    const EmissionParams& params) {
  if (state < 0 || state >= params.n_states()) throw EmissionError("state out of range");
  const auto llt = factor_spd(params.sigma[state], "covariance of " + state_label(state));
  const Eigen::VectorXd z = llt.matrixL().solve(y - params.mu[state]);
  const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -0.5 * (static_cast<double>(y.size()) * kLog2Pi + log_det + z.squaredNorm());
}

std::vector<double> emission_log_table(const Dataset& data, const EmissionParams& params) {
  const int k = params.n_states();
  const auto coords = static_cast<Eigen::Index>(data.n_sites) * data.n_times;
  std::vector<double> table(static_cast<std::size_t>(coords) * k);
  const double d = data.dim();
  for (int s = 0; s < k; ++s) {
    const auto llt = factor_spd(params.sigma[s], "covariance of " + state_label(s));
    const Eigen::MatrixXd L = llt.matrixL();
    const double norm = -0.5 * (d * kLog2Pi + 2.0 * L.diagonal().array().log().sum());
    const Eigen::MatrixXd z = L.triangularView<Eigen::Lower>().solve(data.y.colwise() - params.mu[s]);
    const Eigen::VectorXd q = z.colwise().squaredNorm().transpose();
    for (Eigen::Index c = 0; c < coords; ++c) table[static_cast<std::size_t>(c) * k + s] = norm - 0.5 * q[c];
  }
  return table;
}

double complete_data_log_likelihood(const Dataset& data, const LatentField& u,
                                    const EmissionParams& params) {
  const auto table = emission_log_table(data, params);
  const int k = params.n_states();
  double total = 0.0;
  const auto labels = u.values();
  for (std::size_t c = 0; c < labels.size(); ++c) total += table[c * k + labels[c]];
  return total;
}

SufficientStats sufficient_stats(const Dataset& data, const LatentField& u, int state) {
  SufficientStats st;
  st.sum = Eigen::VectorXd::Zero(data.dim());
  const auto labels = u.values();
  for (std::size_t c = 0; c < labels.size(); ++c) {
    if (labels[c] != state) continue;
    ++st.n;
    st.sum += data.y.col(static_cast<Eigen::Index>(c));
  }
  if (st.n > 0) st.mean = st.sum / st.n;
  return st;
}

Eigen::MatrixXd scatter_about(const Dataset& data, const LatentField& u, int state,
                              const Eigen::VectorXd& center) {
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(data.dim(), data.dim());
  const auto labels = u.values();
  for (std::size_t c = 0; c < labels.size(); ++c) {
    if (labels[c] != state) continue;
    const Eigen::VectorXd r = data.y.col(static_cast<Eigen::Index>(c)) - center;
    s.noalias() += r * r.transpose();
  }
  return s;
}

Eigen::VectorXd sample_mvnormal(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, Rng& rng) {
  const auto llt = factor_spd(cov, "normal covariance");
  std::normal_distribution<double> z;
  Eigen::VectorXd e(mean.size());
  for (auto& v : e) v = z(rng);
  return mean + llt.matrixL() * e;
}

Eigen::VectorXd sample_mu(int state, const Dataset& data, const LatentField& u,
                          const Eigen::MatrixXd& sigma_u, const MultivariatePrior& prior, Rng& rng) {
  const auto st = sufficient_stats(data, u, state);
  const auto sigma_llt = factor_spd(sigma_u, "covariance of " + state_label(state));
  const auto v_llt = factor_spd(prior.V, "prior mean covariance V");
  const auto d = prior.m.size();
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d, d);
  const Eigen::MatrixXd sigma_inv = sigma_llt.solve(eye);
  const Eigen::MatrixXd v_inv = v_llt.solve(eye);
  Eigen::MatrixXd precision = st.n * sigma_inv + v_inv;
  precision = 0.5 * (precision + precision.transpose());
  const Eigen::VectorXd b = sigma_inv * st.sum + v_inv * prior.m;
  const Eigen::LLT<Eigen::MatrixXd> p_llt(precision);
  if (p_llt.info() != Eigen::Success)
    throw EmissionError("posterior precision of the mean of " + state_label(state) + " is singular");
  const Eigen::VectorXd mean = p_llt.solve(b);
  // precision = L L', so L'^{-1} z has covariance precision^{-1}.
  std::normal_distribution<double> z;
  Eigen::VectorXd e(d);
  for (auto& x : e) x = z(rng);
  return mean + p_llt.matrixU().solve(e);
}

Eigen::MatrixXd sample_inverse_wishart(double df, const Eigen::MatrixXd& scale, Rng& rng) {
  const auto d = scale.rows();
  if (!(df > static_cast<double>(d) - 1.0)) throw EmissionError("inverse-Wishart degrees of freedom must exceed d - 1");
  const auto c_llt = factor_spd(scale, "inverse-Wishart scale");
  const Eigen::MatrixXd C = c_llt.matrixL();
  // Bartlett: A lower triangular, A_ii^2 ~ chi2(df - i), A_ij ~ N(0,1) below
  // the diagonal. With scale = C C', Sigma = (C A^{-T})(C A^{-T})'.
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(d, d);
  std::normal_distribution<double> z;
  for (Eigen::Index i = 0; i < d; ++i) {
    std::gamma_distribution<double> chi2((df - static_cast<double>(i)) / 2.0, 2.0);
    A(i, i) = std::sqrt(chi2(rng));
    for (Eigen::Index j = 0; j < i; ++j) A(i, j) = z(rng);
  }
  const Eigen::MatrixXd X = A.triangularView<Eigen::Lower>().solve(C.transpose());
  Eigen::MatrixXd sigma = X.transpose() * X;
  return 0.5 * (sigma + sigma.transpose());
}

Eigen::MatrixXd sample_sigma(int state, const Dataset& data, const LatentField& u,
                             const Eigen::VectorXd& mu_u, const MultivariatePrior& prior, Rng& rng) {
  const auto st = sufficient_stats(data, u, state);
  const Eigen::MatrixXd scale = prior.S + scatter_about(data, u, state, mu_u);
  try {
    return sample_inverse_wishart(prior.nu + st.n, scale, rng);
  } catch (const EmissionError& e) {
    throw EmissionError(state_label(state) + ": " + e.what());
  }
}

double sample_inverse_gamma(double a, double b, Rng& rng) {
  if (!(a > 0.0) || !(b > 0.0)) throw EmissionError("inverse-gamma needs positive shape and rate");
  std::gamma_distribution<double> g(a, 1.0 / b);
  return 1.0 / g(rng);
}

double sample_mu_univariate(int state, const Dataset& data, const LatentField& u, double sigma2_u,
                            const UnivariatePrior& prior, Rng& rng) {
  if (data.dim() != 1) throw EmissionError("univariate update needs d = 1");
  if (!(sigma2_u > 0.0)) throw EmissionError("variance of " + state_label(state) + " must be positive");
  const auto st = sufficient_stats(data, u, state);
  const double v_post = 1.0 / (st.n / sigma2_u + 1.0 / prior.v);
  const double m_post = st.sum[0] / sigma2_u + prior.m / prior.v;
  std::normal_distribution<double> z(m_post * v_post, std::sqrt(v_post));
  return z(rng);
}

double sample_sigma_univariate(int state, const Dataset& data, const LatentField& u, double mu_u,
                               const UnivariatePrior& prior, Rng& rng) {
  if (data.dim() != 1) throw EmissionError("univariate update needs d = 1");
  const auto st = sufficient_stats(data, u, state);
  const Eigen::VectorXd center = Eigen::VectorXd::Constant(1, mu_u);
  const double ss = scatter_about(data, u, state, center)(0, 0);
  return sample_inverse_gamma(prior.a + 0.5 * st.n, prior.b + 0.5 * ss, rng);
}

EmissionParams sample_emission_prior(const EmissionPriors& priors, int n_states, Rng& rng) {
  EmissionParams p;
  for (int s = 0; s < n_states; ++s) {
    if (priors.univariate()) {
      const auto& up = priors.univariate_prior();
      std::normal_distribution<double> z(up.m, std::sqrt(up.v));
      p.mu.push_back(Eigen::VectorXd::Constant(1, z(rng)));
      p.sigma.push_back(Eigen::MatrixXd::Constant(1, 1, sample_inverse_gamma(up.a, up.b, rng)));
    } else {
      const auto& mp = priors.multivariate_prior();
      p.mu.push_back(sample_mvnormal(mp.m, mp.V, rng));
      p.sigma.push_back(sample_inverse_wishart(mp.nu, mp.S, rng));
    }
  }
  return p;
}

void write_observations_csv(const Dataset& data, std::ostream& out) {
  out << "site,time";
  for (int h = 0; h < data.dim(); ++h) out << ",y" << h + 1;
  out << '\n';
  out.precision(17);
  for (int i = 0; i < data.n_sites; ++i)
    for (int t = 0; t < data.n_times; ++t) {
      out << i + 1 << ',' << t + 1;
      const auto y = data.obs(i, t);
      for (Eigen::Index h = 0; h < y.size(); ++h) out << ',' << y[h];
      out << '\n';
    }
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ls(line);
  while (std::getline(ls, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    out.push_back(cell);
  }
  return out;
}

}  // namespace

Dataset read_observations_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw EmissionError("observation CSV is empty");
  const auto header = split_csv(line);
  if (header.size() < 3 || header[0] != "site" || header[1] != "time")
    throw EmissionError("observation CSV header must be site,time,y1,...");
  const int d = static_cast<int>(header.size()) - 2;
  struct Row { int i, t; Eigen::VectorXd y; };
  std::vector<Row> rows;
  int n = 0, nt = 0, line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv(line);
    if (static_cast<int>(cells.size()) != d + 2)
      throw EmissionError("observation CSV line " + std::to_string(line_no) + ": expected " +
                          std::to_string(d + 2) + " columns");
    Row r{0, 0, Eigen::VectorXd(d)};
    try {
      r.i = std::stoi(cells[0]);
      r.t = std::stoi(cells[1]);
      for (int h = 0; h < d; ++h) r.y[h] = std::stod(cells[h + 2]);
    } catch (const std::exception&) {
      throw EmissionError("observation CSV line " + std::to_string(line_no) + ": not a number");
    }
    if (r.i < 1 || r.t < 1) throw EmissionError("observation CSV line " + std::to_string(line_no) + ": indices are 1-based");
    n = std::max(n, r.i);
    nt = std::max(nt, r.t);
    rows.push_back(std::move(r));
  }
  if (rows.size() != static_cast<std::size_t>(n) * nt || rows.empty())
    throw EmissionError("observation CSV does not cover a full site x time grid");
  Dataset data;
  data.n_sites = n;
  data.n_times = nt;
  data.y = Eigen::MatrixXd::Constant(d, static_cast<Eigen::Index>(n) * nt, std::nan(""));
  for (const auto& r : rows) {
    auto col = data.y.col(static_cast<Eigen::Index>(r.i - 1) * nt + (r.t - 1));
    if (!std::isnan(col[0])) throw EmissionError("observation CSV repeats a coordinate");
    col = r.y;
  }
  return data;
}

}  // namespace sthmm
