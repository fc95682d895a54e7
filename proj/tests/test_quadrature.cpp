#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <boost/math/distributions/normal.hpp>
#include <cmath>

#include "cmpc/quadrature.hpp"
#include "cmpc/rng.hpp"

using namespace cmpc;

namespace {

// Exact standard-Gaussian moments E[z^k]: 0 for odd k, (k-1)!! for even k.
double gaussian_moment(int k) {
  if (k % 2 == 1) return 0.0;
  double m = 1.0;
  for (int i = k - 1; i > 1; i -= 2) m *= i;
  return m;
}

}  // namespace

TEST_CASE("lattice points without shift") {
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(1);
  const Eigen::MatrixXd pts = lattice_uniform_with_shift(4, 1, zero);
  CHECK(pts(0, 0) == 0.0);
  CHECK(pts(1, 0) == 0.25);
  CHECK(pts(2, 0) == 0.5);
  CHECK(pts(3, 0) == 0.75);

  const Eigen::MatrixXd multi = lattice_uniform_with_shift(8, 5, Eigen::VectorXd::Zero(5));
  CHECK(multi.row(0).cwiseAbs().maxCoeff() == 0.0);  // origin at i = 0
}

TEST_CASE("shifting by u then by 1-u recovers the original lattice") {
  CounterRng rng = CounterRng::keyed(41, {});
  const int d = 6;
  Eigen::VectorXd u(d);
  for (int j = 0; j < d; ++j) u[j] = rng.next_unit();
  const Eigen::MatrixXd base = lattice_uniform_with_shift(64, d, Eigen::VectorXd::Zero(d));
  Eigen::MatrixXd shifted = lattice_uniform_with_shift(64, d, u);
  // Apply the complementary shift elementwise.
  for (Eigen::Index i = 0; i < shifted.rows(); ++i) {
    for (int j = 0; j < d; ++j) {
      double v = shifted(i, j) + (1.0 - u[j]);
      if (v >= 1.0) v -= 1.0;
      shifted(i, j) = v;
    }
  }
  CHECK((shifted - base).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("shifted points stay on the lattice modulo the shift") {
  const std::uint64_t seed = 2024;
  const int d = 8;
  const std::int64_t n = 256;
  const Eigen::VectorXd shift = lattice_shift_from_seed(d, seed);
  const Eigen::MatrixXd pts = lattice_uniform(n, d, seed);
  const Eigen::MatrixXd base = lattice_uniform_with_shift(n, d, Eigen::VectorXd::Zero(d));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) {
      double v = pts(i, j) - shift[j];
      if (v < 0.0) v += 1.0;
      CHECK(std::abs(v - base(i, j)) < 1e-12);
    }
  }
}

TEST_CASE("lattice argument guards") {
  CHECK_THROWS(lattice_uniform(3, 2, 0));                       // not a power of two
  CHECK_THROWS(lattice_uniform(1 << 21, 2, 0));                 // too many points
  CHECK_THROWS(lattice_uniform(16, 65, 0));                     // dimension too large
  CHECK_NOTHROW(lattice_uniform(1, 1, 0));
  CHECK_NOTHROW(lattice_uniform(kMaxLatticePoints, kMaxLatticeDim, 0));
}

TEST_CASE("monte carlo points") {
  const Eigen::MatrixXd a = mc_uniform(512, 3, 9);
  const Eigen::MatrixXd b = mc_uniform(512, 3, 9);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.minCoeff() >= 0.0);
  CHECK(a.maxCoeff() < 1.0);
  const Eigen::MatrixXd big = mc_uniform(100000, 1, 4);
  CHECK(std::abs(big.mean() - 0.5) < 0.005);
}

TEST_CASE("inverse normal cdf against boost oracle") {
  CHECK(inverse_normal_cdf(0.5) == 0.0);
  CHECK(inverse_normal_cdf(0.975) == doctest::Approx(1.959964).epsilon(1e-6));

  const boost::math::normal_distribution<double> normal;
  for (double u = 1e-10; u < 1.0; u = u < 0.1 ? u * 3.7 : u + 0.037) {
    const double expected = boost::math::quantile(normal, u);
    CHECK(std::abs(inverse_normal_cdf(u) - expected) < 1e-9 * std::max(1.0, std::abs(expected)));
  }
  // Round trip against the erfc-based CDF.
  for (double u = 1e-9; u < 1.0; u += 0.0013) {
    CHECK(std::abs(normal_cdf(inverse_normal_cdf(u)) - u) < 1e-9);
  }
}

TEST_CASE("uniform endpoints are nudged, not infinite") {
  Eigen::MatrixXd pts(2, 1);
  pts << 0.0, 1.0;
  const Eigen::MatrixXd z = to_gaussian(pts);
  CHECK(std::isfinite(z(0, 0)));
  CHECK(std::isfinite(z(1, 0)));
  CHECK(z(0, 0) < -6.0);
  CHECK(z(1, 0) > 6.0);
}

TEST_CASE("gauss-hermite base cases") {
  Eigen::VectorXd nodes, weights;
  hermite_nodes_weights(1, nodes, weights);
  CHECK(nodes[0] == 0.0);
  CHECK(weights[0] == 1.0);

  hermite_nodes_weights(2, nodes, weights);
  CHECK(nodes[0] == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(nodes[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(weights[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(weights[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("gauss-hermite integrates gaussian monomials exactly") {
  for (int n = 1; n <= 16; ++n) {
    Eigen::VectorXd nodes, weights;
    hermite_nodes_weights(n, nodes, weights);
    CHECK(std::abs(weights.sum() - 1.0) < 1e-12);
    for (int k = 0; k <= 2 * n - 1; ++k) {
      double estimate = 0.0;
      double magnitude = 0.0;
      for (int i = 0; i < n; ++i) {
        estimate += weights[i] * std::pow(nodes[i], k);
        magnitude += weights[i] * std::pow(std::abs(nodes[i]), k);
      }
      const double expected = gaussian_moment(k);
      // Odd moments vanish by symmetric cancellation of terms of size
      // `magnitude`, which sets the attainable floating-point scale.
      const double scale = expected == 0.0 ? std::max(1.0, magnitude) : expected;
      CHECK(std::abs(estimate - expected) / scale < 1e-8);
    }
  }
}

TEST_CASE("tensor gauss-hermite rules") {
  const IntegrationRule rule = gauss_hermite_rule(5, 3);
  CHECK(rule.size() == 125);
  CHECK(rule.dim() == 3);
  CHECK(std::abs(rule.weights.sum() - 1.0) < 1e-12);
  // Mixed moment E[z0^2 z1^4] = 1 * 3.
  double estimate = 0.0;
  for (Eigen::Index i = 0; i < rule.size(); ++i) {
    estimate += rule.weights[i] * rule.points(i, 0) * rule.points(i, 0) *
                std::pow(rule.points(i, 1), 4);
  }
  CHECK(estimate == doctest::Approx(3.0).epsilon(1e-8));

  CHECK_THROWS(gauss_hermite_rule(2, 5));
  CHECK_THROWS(gauss_hermite_rule(40, 4));  // 40^4 > 2^20
}

TEST_CASE("make_rule weights and reproducibility") {
  for (Method m : {Method::MonteCarlo, Method::Rqmc}) {
    const IntegrationRule a = make_rule(m, 128, 4, 11);
    const IntegrationRule b = make_rule(m, 128, 4, 11);
    CHECK(std::abs(a.weights.sum() - 1.0) < 1e-12);
    CHECK((a.points - b.points).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.points.allFinite());
  }
}

TEST_CASE("monte carlo estimates are unbiased across seeds") {
  // f(z) = cos(z_1) cos(z_2), E[f] = exp(-1) for a standard Gaussian.
  const double truth = std::exp(-1.0);
  const int num_seeds = 200;
  const std::int64_t n = 256;
  std::vector<double> estimates;
  for (int s = 0; s < num_seeds; ++s) {
    const IntegrationRule rule = make_rule(Method::MonteCarlo, n, 2, 1000 + s);
    double est = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      est += rule.weights[i] * std::cos(rule.points(i, 0)) * std::cos(rule.points(i, 1));
    }
    estimates.push_back(est);
  }
  double mean = 0.0;
  for (double e : estimates) mean += e;
  mean /= num_seeds;
  double var = 0.0;
  for (double e : estimates) var += (e - mean) * (e - mean);
  var /= (num_seeds - 1);
  const double se = std::sqrt(var / num_seeds);
  CHECK(std::abs(mean - truth) < 4.0 * se);
}

TEST_CASE("integration error estimation") {
  // Constant integrand: zero spread across shifts.
  const auto constant = [](const IntegrationRule&) { return -3.5; };
  const ErrorEstimate est = estimate_integration_error(constant, 64, 2, 8, 5);
  CHECK(est.mean_ll == doctest::Approx(-3.5));
  CHECK(est.standard_error == 0.0);

  CHECK_THROWS(estimate_integration_error(constant, 64, 2, 1, 5));
  const std::vector<std::uint64_t> dup{7, 7};
  CHECK_THROWS(estimate_integration_error(constant, 64, 2, dup));

  // Variance of the smooth integrand shrinks with more lattice points.
  const auto integrand = [](const IntegrationRule& rule) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < rule.size(); ++i) {
      acc += rule.weights[i] * std::exp(0.3 * rule.points.row(i).sum());
    }
    return std::log(acc);
  };
  const ErrorEstimate coarse = estimate_integration_error(integrand, 1 << 6, 4, 8, 3);
  const ErrorEstimate fine = estimate_integration_error(integrand, 1 << 10, 4, 8, 3);
  CHECK(fine.standard_error < coarse.standard_error);
}

TEST_CASE("rule csv export") {
  const IntegrationRule rule = make_rule(Method::Rqmc, 8, 2, 3);
  const auto path = std::filesystem::temp_directory_path() / "cmpc_rule.csv";
  save_rule_csv(rule, path);
  std::ifstream in(path);
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    ++lines;
    CHECK(std::count(line.begin(), line.end(), ',') == 2);
  }
  CHECK(lines == 8);
}
