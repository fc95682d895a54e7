#include "cmpc/quadrature.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include "cmpc/rng.hpp"

namespace cmpc {

namespace detail {
extern const std::uint32_t kLatticeGeneratingVector[kMaxLatticeDim];
}

namespace {

bool is_power_of_two(std::int64_t n) { return n > 0 && (n & (n - 1)) == 0; }

void check_lattice_args(std::int64_t n, int d) {
  if (!is_power_of_two(n) || n > kMaxLatticePoints) {
    throw std::invalid_argument("lattice size must be a power of two <= 2^20");
  }
  if (d < 1 || d > kMaxLatticeDim) {
    throw std::invalid_argument("lattice dimension must be in [1, 64]");
  }
}

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::MonteCarlo: return "mc";
    case Method::Rqmc: return "rqmc";
    case Method::GaussHermite: return "gh";
  }
  throw std::logic_error("unreachable");
}

Method method_from_string(const std::string& name) {
  if (name == "mc") return Method::MonteCarlo;
  if (name == "rqmc") return Method::Rqmc;
  if (name == "gh") return Method::GaussHermite;
  throw std::invalid_argument("unknown integration method '" + name + "'");
}

Eigen::VectorXd lattice_shift_from_seed(int d, std::uint64_t shift_seed) {
  CounterRng rng = CounterRng::keyed(shift_seed, {rng_stream::kLatticeShift});
  Eigen::VectorXd shift(d);
  for (int j = 0; j < d; ++j) shift[j] = rng.next_unit();
  return shift;
}

Eigen::MatrixXd lattice_uniform_with_shift(std::int64_t n, int d,
                                           const Eigen::VectorXd& shift) {
  check_lattice_args(n, d);
  if (shift.size() != d) throw std::invalid_argument("shift dimension mismatch");
  Eigen::MatrixXd points(n, d);
  for (int j = 0; j < d; ++j) {
    // (i * g_j) mod n is exact in 64-bit integers for n <= 2^20.
    const std::uint64_t g = detail::kLatticeGeneratingVector[j];
    const std::uint64_t mask = static_cast<std::uint64_t>(n) - 1;
    const double inv_n = 1.0 / static_cast<double>(n);
    const double s = shift[j];
    for (std::int64_t i = 0; i < n; ++i) {
      const double u = static_cast<double>((static_cast<std::uint64_t>(i) * g) & mask) * inv_n;
      double shifted = u + s;
      if (shifted >= 1.0) shifted -= 1.0;
      points(i, j) = shifted;
    }
  }
  return points;
}

Eigen::MatrixXd lattice_uniform(std::int64_t n, int d, std::uint64_t shift_seed) {
  return lattice_uniform_with_shift(n, d, lattice_shift_from_seed(d, shift_seed));
}

Eigen::MatrixXd mc_uniform(std::int64_t n, int d, std::uint64_t seed) {
  if (n < 1 || d < 1) throw std::invalid_argument("mc_uniform needs n >= 1, d >= 1");
  CounterRng rng = CounterRng::keyed(seed, {rng_stream::kMcPoints});
  Eigen::MatrixXd points(n, d);
  for (std::int64_t i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) points(i, j) = rng.next_unit();
  }
  return points;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z * M_SQRT1_2); }

double inverse_normal_cdf(double u) {
  constexpr double kLo = 1e-12;
  if (u < kLo) u = kLo;
  if (u > 1.0 - kLo) u = 1.0 - kLo;

  // Acklam's rational approximation (relative error ~1.15e-9)...
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double dd[] = {7.784695709041462e-03, 3.224671290700398e-01,
                              2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double x;
  if (u < p_low) {
    const double q = std::sqrt(-2.0 * std::log(u));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((dd[0] * q + dd[1]) * q + dd[2]) * q + dd[3]) * q + 1.0);
  } else if (u <= 1.0 - p_low) {
    const double q = u - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-u));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((dd[0] * q + dd[1]) * q + dd[2]) * q + dd[3]) * q + 1.0);
  }
  // ...then one Halley step against the erfc-based CDF.
  const double e = normal_cdf(x) - u;
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  const double q = e / pdf;
  x -= q / (1.0 + 0.5 * x * q);
  return x;
}

Eigen::MatrixXd to_gaussian(const Eigen::MatrixXd& uniform_points) {
  Eigen::MatrixXd z(uniform_points.rows(), uniform_points.cols());
  for (Eigen::Index i = 0; i < uniform_points.size(); ++i) {
    z.data()[i] = inverse_normal_cdf(uniform_points.data()[i]);
  }
  return z;
}

void hermite_nodes_weights(int n, Eigen::VectorXd& nodes, Eigen::VectorXd& weights) {
  if (n < 1) throw std::invalid_argument("hermite rule needs n >= 1");
  nodes.resize(n);
  weights.resize(n);
  if (n == 1) {
    nodes[0] = 0.0;
    weights[0] = 1.0;
    return;
  }
  // Physicists' convention first (weight exp(-x^2)), largest root downwards,
  // then rescaled to the probabilists' measure. Initial guesses and the
  // orthonormal three-term recurrence follow the classic gauher scheme.
  constexpr double kEps = 1e-14;
  constexpr int kMaxNewton = 64;
  const double pim4 = 0.7511255444649425;  // pi^(-1/4)
  const int half = (n + 1) / 2;
  Eigen::VectorXd x_phys(n), w_phys(n);
  double z = 0.0;
  for (int i = 0; i < half; ++i) {
    if (i == 0) {
      z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -0.16667);
    } else if (i == 1) {
      z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
    } else if (i == 2) {
      z = 1.86 * z - 0.86 * x_phys[0];
    } else if (i == 3) {
      z = 1.91 * z - 0.91 * x_phys[1];
    } else {
      z = 2.0 * z - x_phys[i - 2];
    }
    double pp = 0.0;
    for (int it = 0; it < kMaxNewton; ++it) {
      double p1 = pim4;
      double p2 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = z * std::sqrt(2.0 / (j + 1.0)) * p2 - std::sqrt(static_cast<double>(j) / (j + 1.0)) * p3;
      }
      pp = std::sqrt(2.0 * n) * p2;
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) <= kEps) break;
    }
    x_phys[i] = z;
    x_phys[n - 1 - i] = -z;
    w_phys[i] = 2.0 / (pp * pp);
    w_phys[n - 1 - i] = w_phys[i];
  }
  // Probabilists' measure: z -> sqrt(2) x, weights sum to sqrt(pi) before
  // normalisation. Sort ascending.
  for (int i = 0; i < n; ++i) {
    nodes[i] = -x_phys[i] * M_SQRT2;
    weights[i] = w_phys[i];
  }
  weights /= weights.sum();
}

IntegrationRule gauss_hermite_rule(int n_per_dim, int d) {
  if (d < 1 || d > 4) throw std::invalid_argument("gauss-hermite rule limited to d <= 4");
  if (n_per_dim < 1) throw std::invalid_argument("n_per_dim must be >= 1");
  double total = 1.0;
  for (int j = 0; j < d; ++j) total *= static_cast<double>(n_per_dim);
  if (total > static_cast<double>(std::int64_t{1} << 20)) {
    throw std::invalid_argument("gauss-hermite tensor rule exceeds 2^20 points");
  }
  Eigen::VectorXd nodes, weights;
  hermite_nodes_weights(n_per_dim, nodes, weights);

  const std::int64_t n_total = static_cast<std::int64_t>(total);
  IntegrationRule rule;
  rule.method = Method::GaussHermite;
  rule.nodes_per_dim = n_per_dim;
  rule.points.resize(n_total, d);
  rule.weights.resize(n_total);
  std::vector<int> index(static_cast<std::size_t>(d), 0);
  for (std::int64_t i = 0; i < n_total; ++i) {
    double w = 1.0;
    for (int j = 0; j < d; ++j) {
      rule.points(i, j) = nodes[index[static_cast<std::size_t>(j)]];
      w *= weights[index[static_cast<std::size_t>(j)]];
    }
    rule.weights[i] = w;
    for (int j = d - 1; j >= 0; --j) {
      if (++index[static_cast<std::size_t>(j)] < n_per_dim) break;
      index[static_cast<std::size_t>(j)] = 0;
    }
  }
  rule.weights /= rule.weights.sum();
  return rule;
}

IntegrationRule make_rule(Method method, std::int64_t n, int d, std::uint64_t seed) {
  IntegrationRule rule;
  rule.method = method;
  rule.seed = seed;
  switch (method) {
    case Method::MonteCarlo:
      rule.points = to_gaussian(mc_uniform(n, d, seed));
      break;
    case Method::Rqmc:
      rule.shift = lattice_shift_from_seed(d, seed);
      rule.points = to_gaussian(lattice_uniform_with_shift(n, d, rule.shift));
      break;
    case Method::GaussHermite:
      throw std::invalid_argument("use gauss_hermite_rule(n_per_dim, d) for gh rules");
  }
  rule.weights = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  return rule;
}

void save_rule_csv(const IntegrationRule& rule, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open file for writing: " + path.string());
  out.precision(17);
  for (Eigen::Index i = 0; i < rule.size(); ++i) {
    for (int j = 0; j < rule.dim(); ++j) out << rule.points(i, j) << ',';
    out << rule.weights[i] << '\n';
  }
  if (!out) throw std::runtime_error("write failure on " + path.string());
}

ErrorEstimate estimate_integration_error(
    const std::function<double(const IntegrationRule&)>& mean_ll_of_rule, std::int64_t n,
    int d, int num_shifts, std::uint64_t seed) {
  if (num_shifts < 2) throw std::invalid_argument("error estimation needs >= 2 shifts");
  CounterRng rng = CounterRng::keyed(seed, {rng_stream::kErrorShift});
  std::vector<std::uint64_t> seeds;
  std::set<std::uint64_t> seen;
  while (seeds.size() < static_cast<std::size_t>(num_shifts)) {
    const std::uint64_t s = rng.next_u64();
    if (seen.insert(s).second) seeds.push_back(s);
  }
  return estimate_integration_error(mean_ll_of_rule, n, d, seeds);
}

ErrorEstimate estimate_integration_error(
    const std::function<double(const IntegrationRule&)>& mean_ll_of_rule, std::int64_t n,
    int d, const std::vector<std::uint64_t>& shift_seeds) {
  if (shift_seeds.size() < 2) throw std::invalid_argument("error estimation needs >= 2 shifts");
  std::set<std::uint64_t> unique(shift_seeds.begin(), shift_seeds.end());
  if (unique.size() != shift_seeds.size()) {
    throw std::invalid_argument("shift seeds must be distinct");
  }
  ErrorEstimate est;
  for (std::uint64_t s : shift_seeds) {
    est.per_shift.push_back(mean_ll_of_rule(make_rule(Method::Rqmc, n, d, s)));
  }
  const double r = static_cast<double>(est.per_shift.size());
  double mean = 0.0;
  for (double v : est.per_shift) mean += v;
  mean /= r;
  double var = 0.0;
  for (double v : est.per_shift) var += (v - mean) * (v - mean);
  var /= (r - 1.0);
  est.mean_ll = mean;
  est.standard_error = std::sqrt(var / r);
  return est;
}

}  // namespace cmpc
