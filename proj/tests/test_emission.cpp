#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "sthmm/emission.hpp"
#include "test_helpers.hpp"

using namespace sthmm;
using namespace sthmm::testing;

namespace {

Dataset random_dataset(int n, int nt, int d, Rng& rng, double spread = 2.0) {
  Dataset data;
  data.n_sites = n;
  data.n_times = nt;
  data.graph = NeighborhoodSystem(n, {});
  data.y.resize(d, n * nt);
  std::normal_distribution<double> z(0.0, spread);
  for (Eigen::Index c = 0; c < data.y.cols(); ++c)
    for (int h = 0; h < d; ++h) data.y(h, c) = z(rng);
  return data;
}

EmissionParams two_state_params() {
  EmissionParams p;
  p.mu = {Eigen::Vector2d(-1.0, 0.5), Eigen::Vector2d(2.0, 1.0)};
  Eigen::Matrix2d a, b;
  a << 1.5, 0.4, 0.4, 0.8;
  b << 0.6, -0.2, -0.2, 2.0;
  p.sigma = {a, b};
  return p;
}

/// Checks |empirical mean - expected| <= 3 standard errors for every entry.
void check_moments(const std::vector<Eigen::MatrixXd>& draws, const Eigen::MatrixXd& expected) {
  const auto n = static_cast<double>(draws.size());
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(expected.rows(), expected.cols());
  for (const auto& d : draws) m += d;
  m /= n;
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(expected.rows(), expected.cols());
  for (const auto& d : draws) v += (d - m).cwiseAbs2();
  v /= (n - 1);
  for (Eigen::Index r = 0; r < expected.rows(); ++r)
    for (Eigen::Index c = 0; c < expected.cols(); ++c) {
      const double se = std::sqrt(v(r, c) / n);
      CHECK_MESSAGE(std::abs(m(r, c) - expected(r, c)) <= 3 * se,
                    "entry (" << r << "," << c << ") mean " << m(r, c) << " expected " << expected(r, c));
    }
}

}  // namespace

TEST_CASE("log emission") {
  EmissionParams p;
  p.mu = {Eigen::VectorXd::Zero(1)};
  p.sigma = {Eigen::MatrixXd::Identity(1, 1)};
  CHECK(log_emission(Eigen::VectorXd::Zero(1), 0, p) == doctest::Approx(-0.5 * std::log(2 * std::numbers::pi)));
  p.mu = {Eigen::VectorXd::Zero(2)};
  p.sigma = {Eigen::MatrixXd::Identity(2, 2)};
  CHECK(log_emission(Eigen::VectorXd::Zero(2), 0, p) == doctest::Approx(-std::log(2 * std::numbers::pi)));

  // Dense second code path: explicit inverse and determinant.
  Rng rng(1);
  const auto q = two_state_params();
  std::normal_distribution<double> z(0.0, 2.0);
  for (int rep = 0; rep < 50; ++rep) {
    const Eigen::Vector2d y(z(rng), z(rng));
    for (int s = 0; s < 2; ++s) {
      const Eigen::Vector2d r = y - q.mu[s];
      const double dense = -std::log(2 * std::numbers::pi) - 0.5 * std::log(q.sigma[s].determinant()) -
                           0.5 * r.dot(q.sigma[s].inverse() * r);
      CHECK(log_emission(y, s, q) == doctest::Approx(dense).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(log_emission(Eigen::VectorXd::Zero(2), 2, q), EmissionError);

  // Integrates to one on a d = 1 grid.
  EmissionParams uni;
  uni.mu = {Eigen::VectorXd::Constant(1, 0.7)};
  uni.sigma = {Eigen::MatrixXd::Constant(1, 1, 2.3)};
  const double lo = -20.0, hi = 20.0;
  const int n = 200000;
  const double h = (hi - lo) / n;
  double total = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double w = (i == 0 || i == n) ? 0.5 : 1.0;
    total += w * std::exp(log_emission(Eigen::VectorXd::Constant(1, lo + i * h), 0, uni));
  }
  CHECK(std::abs(total * h - 1.0) < 1e-6);
}

TEST_CASE("emission table and complete-data likelihood") {
  Rng rng(2);
  const auto data = random_dataset(4, 3, 2, rng);
  const auto p = two_state_params();
  const auto table = emission_log_table(data, p);
  const auto u = random_field(4, 3, 2, rng);
  double total = 0.0;
  for (int i = 0; i < 4; ++i)
    for (int t = 0; t < 3; ++t) {
      for (int s = 0; s < 2; ++s)
        CHECK(table[(i * 3 + t) * 2 + s] == doctest::Approx(log_emission(data.obs(i, t), s, p)).epsilon(1e-12));
      total += log_emission(data.obs(i, t), u(i, t), p);
    }
  CHECK(complete_data_log_likelihood(data, u, p) == doctest::Approx(total).epsilon(1e-12));
}

TEST_CASE("sufficient statistics") {
  Rng rng(3);
  const auto data = random_dataset(5, 4, 2, rng);
  const auto all_one = sufficient_stats(data, LatentField(5, 4, 1), 1);
  CHECK(all_one.n == 20);
  CHECK(all_one.mean.isApprox(data.y.rowwise().mean(), 1e-12));
  CHECK(sufficient_stats(data, LatentField(5, 4, 1), 0).n == 0);

  const auto u = random_field(5, 4, 3, rng);
  const Eigen::Vector2d center(0.3, -0.1);
  for (int s = 0; s < 3; ++s) {
    int n = 0;
    Eigen::Vector2d sum = Eigen::Vector2d::Zero();
    Eigen::Matrix2d scatter = Eigen::Matrix2d::Zero();
    for (int i = 0; i < 5; ++i)
      for (int t = 0; t < 4; ++t)
        if (u(i, t) == s) {
          ++n;
          sum += data.obs(i, t);
          scatter += (data.obs(i, t) - center) * (data.obs(i, t) - center).transpose();
        }
    const auto st = sufficient_stats(data, u, s);
    CHECK(st.n == n);
    CHECK(st.sum.isApprox(sum, 1e-12));
    if (n > 0) CHECK(st.mean.isApprox(sum / n, 1e-12));
    CHECK(scatter_about(data, u, s, center).isApprox(scatter, 1e-12));
  }
}

TEST_CASE("default priors") {
  const auto p2 = default_priors(2).multivariate_prior();
  CHECK(p2.nu == 4.0);
  CHECK(p2.S(0, 0) == 4.0);
  CHECK(p2.S(1, 1) == 4.0);
  CHECK(p2.S(0, 1) == 2.0);
  CHECK(p2.V.isApprox(100.0 * Eigen::MatrixXd::Identity(2, 2)));
  CHECK(p2.m.isZero());
  CHECK(default_priors(2, -1.0).multivariate_prior().S(1, 0) == -2.0);
  const auto p3 = default_priors(3).multivariate_prior();
  CHECK(p3.nu == 6.0);
  CHECK(p3.V.isApprox(100.0 * Eigen::MatrixXd::Identity(3, 3)));
  CHECK(default_priors(1).multivariate_prior().nu == 4.0);
  const auto u = default_univariate_priors();
  REQUIRE(u.univariate());
  CHECK(u.univariate_prior().m == 0.0);
  CHECK(u.univariate_prior().v == 1000.0);
  CHECK(u.univariate_prior().a == 2.0);
  CHECK(u.univariate_prior().b == 1.0);
  CHECK_NOTHROW(default_priors(4).validate());
}

TEST_CASE("conjugate mean update") {
  const int draws = 100000;
  SUBCASE("empty state draws from the prior") {
    Rng rng(4);
    const auto data = random_dataset(3, 2, 2, rng);
    MultivariatePrior prior = default_priors(2).multivariate_prior();
    prior.m = Eigen::Vector2d(1.0, -2.0);
    prior.V << 2.0, 0.5, 0.5, 1.0;
    std::vector<Eigen::MatrixXd> d;
    for (int r = 0; r < draws; ++r)
      d.push_back(sample_mu(1, data, LatentField(3, 2, 0), Eigen::Matrix2d::Identity(), prior, rng));
    check_moments(d, prior.m);
  }
  SUBCASE("one observation, unit variances") {
    Rng rng(5);
    Dataset data;
    data.n_sites = data.n_times = 1;
    data.graph = NeighborhoodSystem(1, {});
    data.y = Eigen::MatrixXd::Constant(1, 1, 1.6);
    MultivariatePrior prior{Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1), 4.0,
                            Eigen::MatrixXd::Identity(1, 1)};
    std::vector<double> xs;
    for (int r = 0; r < draws; ++r)
      xs.push_back(sample_mu(0, data, LatentField(1, 1, 0), Eigen::MatrixXd::Identity(1, 1), prior, rng)[0]);
    CHECK(std::abs(mean(xs) - 0.8) < 3 * std::sqrt(0.5 / draws));
    CHECK(variance(xs) == doctest::Approx(0.5).epsilon(0.02));
    UnivariatePrior up{0.0, 1.0, 2.0, 1.0};
    xs.clear();
    for (int r = 0; r < draws; ++r) xs.push_back(sample_mu_univariate(0, data, LatentField(1, 1, 0), 1.0, up, rng));
    CHECK(std::abs(mean(xs) - 0.8) < 3 * std::sqrt(0.5 / draws));
    CHECK(variance(xs) == doctest::Approx(0.5).epsilon(0.02));
  }
  SUBCASE("fixed instance against a dense solve") {
    Rng rng(6);
    const auto data = random_dataset(6, 3, 2, rng);
    const auto u = random_field(6, 3, 2, rng);
    const auto prior = default_priors(2).multivariate_prior();
    Eigen::Matrix2d sigma;
    sigma << 1.2, 0.3, 0.3, 0.7;
    const auto st = sufficient_stats(data, u, 0);
    const Eigen::MatrixXd post_cov = (st.n * sigma.inverse() + prior.V.inverse()).inverse();
    const Eigen::VectorXd post_mean = post_cov * (sigma.inverse() * st.sum + prior.V.inverse() * prior.m);
    std::vector<Eigen::MatrixXd> d, outer;
    for (int r = 0; r < draws; ++r) {
      const Eigen::VectorXd x = sample_mu(0, data, u, sigma, prior, rng);
      d.push_back(x);
      outer.push_back((x - post_mean) * (x - post_mean).transpose());
    }
    check_moments(d, post_mean);
    check_moments(outer, post_cov);
  }
}

TEST_CASE("conjugate covariance update") {
  const int draws = 100000;
  SUBCASE("empty state: inverse-Wishart prior mean") {
    Rng rng(7);
    const auto data = random_dataset(3, 2, 2, rng);
    MultivariatePrior prior = default_priors(2).multivariate_prior();
    prior.nu = 10.0;
    std::vector<Eigen::MatrixXd> d;
    for (int r = 0; r < draws; ++r) d.push_back(sample_sigma(1, data, LatentField(3, 2, 0), Eigen::Vector2d::Zero(), prior, rng));
    check_moments(d, prior.S / (prior.nu - 2 - 1));
  }
  SUBCASE("fixed instance posterior mean") {
    Rng rng(8);
    const auto data = random_dataset(10, 4, 2, rng);
    const auto u = random_field(10, 4, 2, rng);
    const auto prior = default_priors(2).multivariate_prior();
    const Eigen::Vector2d mu(0.2, -0.4);
    Eigen::Matrix2d s_tilde = Eigen::Matrix2d::Zero();
    int n = 0;
    for (int i = 0; i < 10; ++i)
      for (int t = 0; t < 4; ++t)
        if (u(i, t) == 1) {
          ++n;
          s_tilde += (data.obs(i, t) - mu) * (data.obs(i, t) - mu).transpose();
        }
    std::vector<Eigen::MatrixXd> d;
    for (int r = 0; r < draws; ++r) d.push_back(sample_sigma(1, data, u, mu, prior, rng));
    check_moments(d, (prior.S + s_tilde) / (prior.nu + n - 2 - 1));
  }
  SUBCASE("draws are SPD") {
    Rng rng(9);
    const auto data = random_dataset(2, 2, 3, rng);
    const auto prior = default_priors(3).multivariate_prior();
    for (int r = 0; r < 10000; ++r) {
      const auto s = sample_sigma(0, data, LatentField(2, 2, 0), Eigen::Vector3d::Zero(), prior, rng);
      REQUIRE(s.isApprox(s.transpose()));
      REQUIRE(Eigen::LLT<Eigen::MatrixXd>(s).info() == Eigen::Success);
    }
  }
  SUBCASE("univariate inverse-gamma") {
    Rng rng(10);
    const auto data = random_dataset(5, 4, 1, rng);
    const auto u = random_field(5, 4, 2, rng);
    const UnivariatePrior prior{0.0, 1000.0, 2.0, 1.0};
    const double mu = 0.3;
    double ss = 0.0;
    int n = 0;
    for (int i = 0; i < 5; ++i)
      for (int t = 0; t < 4; ++t)
        if (u(i, t) == 0) {
          ++n;
          ss += (data.obs(i, t)[0] - mu) * (data.obs(i, t)[0] - mu);
        }
    std::vector<double> xs;
    for (int r = 0; r < draws; ++r) xs.push_back(sample_sigma_univariate(0, data, u, mu, prior, rng));
    const double a = prior.a + n / 2.0, b = prior.b + ss / 2.0;
    CHECK(std::abs(mean(xs) - b / (a - 1)) <= 3 * std::sqrt(variance(xs) / draws));
    xs.clear();
    for (int r = 0; r < draws; ++r) xs.push_back(sample_sigma_univariate(0, data, LatentField(5, 4, 1), mu, prior, rng));
    // Empty state: IG(2, 1) has mean 1 and infinite variance, so compare medians.
    std::nth_element(xs.begin(), xs.begin() + draws / 2, xs.end());
    CHECK(xs[draws / 2] == doctest::Approx(0.5958).epsilon(0.02));
  }
}

TEST_CASE("parameter validation and permutation") {
  auto p = two_state_params();
  CHECK_NOTHROW(p.validate());
  const std::vector<int> swap{1, 0};
  const auto q = p.permuted(swap);
  CHECK(q.mu[0] == p.mu[1]);
  CHECK(q.sigma[1] == p.sigma[0]);
  p.sigma[1](0, 1) = p.sigma[1](1, 0) = 5.0;
  CHECK_THROWS_WITH_AS(p.validate(), doctest::Contains("state 2"), EmissionError);
  MultivariatePrior bad = default_priors(2).multivariate_prior();
  bad.nu = 0.5;
  CHECK_THROWS_AS(EmissionPriors{bad}.validate(), EmissionError);
  const EmissionPriors bad_uv{UnivariatePrior{0.0, -1.0, 2.0, 1.0}};
  CHECK_THROWS_AS(bad_uv.validate(), EmissionError);
}

TEST_CASE("observation CSV") {
  Rng rng(11);
  auto data = random_dataset(3, 4, 2, rng);
  std::stringstream ss;
  write_observations_csv(data, ss);
  CHECK(ss.str().rfind("site,time,y1,y2\n", 0) == 0);
  const auto back = read_observations_csv(ss);
  CHECK(back.n_sites == 3);
  CHECK(back.n_times == 4);
  CHECK(back.y == data.y);

  std::istringstream bad_header("a,b,c\n1,1,0\n");
  CHECK_THROWS_AS(read_observations_csv(bad_header), EmissionError);
  std::istringstream missing("site,time,y1\n1,1,0\n1,2,0\n2,1,0\n");
  CHECK_THROWS_AS(read_observations_csv(missing), EmissionError);
  std::istringstream nan_cell("site,time,y1\n1,1,abc\n");
  CHECK_THROWS_WITH_AS(read_observations_csv(nan_cell), doctest::Contains("line 2"), EmissionError);
}
