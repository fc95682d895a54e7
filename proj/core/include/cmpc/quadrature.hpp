#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace cmpc {

enum class Method { MonteCarlo, Rqmc, GaussHermite };

std::string to_string(Method m);
Method method_from_string(const std::string& name);

// N latent points with weights summing to 1 (within 1e-12) and the
// provenance needed to regenerate them.
struct IntegrationRule {
  Method method = Method::Rqmc;
  Eigen::MatrixXd points;   // N x d
  Eigen::VectorXd weights;  // N
  std::uint64_t seed = 0;
  Eigen::VectorXd shift;    // RQMC only
  int nodes_per_dim = 0;    // Gauss-Hermite only

  Eigen::Index size() const { return points.rows(); }
  int dim() const { return static_cast<int>(points.cols()); }
};

inline constexpr int kMaxLatticeDim = 64;
inline constexpr std::int64_t kMaxLatticePoints = std::int64_t{1} << 20;

// Rank-1 lattice u_i = frac(i * g / N) in [0,1)^d with the given shift added
// modulo 1. N must be a power of two <= 2^20, d <= 64.
Eigen::MatrixXd lattice_uniform_with_shift(std::int64_t n, int d, const Eigen::VectorXd& shift);

// Same, with the shift drawn uniformly from shift_seed.
Eigen::MatrixXd lattice_uniform(std::int64_t n, int d, std::uint64_t shift_seed);

Eigen::VectorXd lattice_shift_from_seed(int d, std::uint64_t shift_seed);

// i.i.d. uniforms in [0,1)^d from the counter-based generator.
Eigen::MatrixXd mc_uniform(std::int64_t n, int d, std::uint64_t seed);

// Inverse standard normal CDF: rational approximation plus one Halley
// refinement; absolute error below 1e-9 on (1e-10, 1 - 1e-10).
double inverse_normal_cdf(double u);
double normal_cdf(double z);

// Componentwise inverse-CDF map of uniforms to standard-normal latents.
// Entries at 0 or 1 are nudged to the 1e-12 boundary first.
Eigen::MatrixXd to_gaussian(const Eigen::MatrixXd& uniform_points);

// 1-D probabilists' Gauss-Hermite nodes and weights (recurrence + Newton
// polishing), weights normalised to sum to 1.
void hermite_nodes_weights(int n, Eigen::VectorXd& nodes, Eigen::VectorXd& weights);

// Tensor-product rule for a standard Gaussian in d <= 4 dimensions,
// n_per_dim^d <= 2^20 points, weights renormalised to sum to 1.
IntegrationRule gauss_hermite_rule(int n_per_dim, int d);

// MC/RQMC rule with Gaussian-mapped points and uniform weights 1/N.
IntegrationRule make_rule(Method method, std::int64_t n, int d, std::uint64_t seed);

// CSV export: d point columns followed by one weight column.
void save_rule_csv(const IntegrationRule& rule, const std::filesystem::path& path);

struct ErrorEstimate {
  double mean_ll = 0.0;
  double standard_error = 0.0;
  std::vector<double> per_shift;
};

// Evaluates `mean_ll_of_rule` under R independently shifted RQMC rules and
// returns the sample mean and standard error across shifts. Shift seeds are
// derived from `seed`; the explicit-seed overload rejects duplicates.
ErrorEstimate estimate_integration_error(
    const std::function<double(const IntegrationRule&)>& mean_ll_of_rule, std::int64_t n,
    int d, int num_shifts, std::uint64_t seed);
ErrorEstimate estimate_integration_error(
    const std::function<double(const IntegrationRule&)>& mean_ll_of_rule, std::int64_t n,
    int d, const std::vector<std::uint64_t>& shift_seeds);

}  // namespace cmpc
