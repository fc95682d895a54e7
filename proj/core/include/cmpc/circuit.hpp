#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <span>
#include <string>

#include "cmpc/dataset.hpp"
#include "cmpc/structure.hpp"

namespace cmpc {

// Leaf probabilities are clamped into [kProbEps, 1 - kProbEps] when created
// from raw decoder outputs or fitted frequencies, keeping every log finite.
inline constexpr double kProbEps = 1e-7;

// Leaf parameters of one mixture component, in the layout of param_dim():
// Factorised -> p_1..p_D; Clt -> p_{1|0}, p_{1|1}, ..., p_{D|0}, p_{D|1}.
struct LeafParams {
  Eigen::VectorXd p;
};

// Clamps raw probabilities and checks the length against the structure.
LeafParams make_leaf_params(const CircuitStructure& s, Eigen::VectorXd raw,
                            double eps = kProbEps);

struct PcMetadata {
  std::string method;
  std::int64_t n_points = 0;
  int latent_dim = 0;
  std::string decoder_digest;
  std::map<std::string, std::string> extra;
};

// A finite mixture of circuits sharing one structure. Component i's leaf
// parameters are the i-th column of params (param_dim(structure) rows).
// Weights are nonnegative and sum to 1 within 1e-9; zero-weight components
// are kept but skipped during evaluation.
struct CompiledPC {
  CircuitStructure structure;
  Eigen::VectorXd weights;
  Eigen::MatrixXd params;
  PcMetadata metadata;

  Eigen::Index num_components() const { return weights.size(); }
};

CompiledPC make_compiled_pc(CircuitStructure structure, Eigen::VectorXd weights,
                            Eigen::MatrixXd params, PcMetadata metadata = {});

// Throws std::invalid_argument on any invariant violation.
void validate_pc(const CompiledPC& pc);

// log p(x | params) of a single component.
double component_log_density(const CircuitStructure& s, const Eigen::VectorXd& params,
                             std::span<const std::uint8_t> x);

// log sum_i w_i p(x | params_i), via log-sum-exp.
double mixture_log_density(const CompiledPC& pc, std::span<const std::uint8_t> x);

// Exact log p(x_observed); unobserved variables are summed out at the leaves
// (Factorised) or by one upward pass over the tree (Clt), per component.
double marginal_log_density(const CompiledPC& pc, std::span<const std::uint8_t> x,
                            std::span<const std::uint8_t> observed);

// Same marginal for a single component (no mixture weight).
double component_marginal_log_density(const CircuitStructure& s, const Eigen::VectorXd& params,
                                      std::span<const std::uint8_t> x,
                                      std::span<const std::uint8_t> observed);

struct MpeResult {
  std::vector<std::uint8_t> completion;
  Eigen::Index component = 0;
};

// Picks the component maximising w_i p_i(x_observed) (ties to the lower
// index), then completes the unobserved variables with that component's
// most probable assignment given the evidence. Observed entries are copied
// through unchanged.
MpeResult mpe_complete(const CompiledPC& pc, std::span<const std::uint8_t> x,
                       std::span<const std::uint8_t> observed);

// Ancestral sampling: component index from the weights, then leaves (Clt:
// root first, children given their parent's value). Deterministic in seed.
BinaryDataset sample(const CompiledPC& pc, std::size_t count, std::uint64_t seed);

// Oracle data for recovery tests; identical to sample() with a train tag.
BinaryDataset generate_synthetic(const CompiledPC& ground_truth, std::size_t count,
                                 std::uint64_t seed);

}  // namespace cmpc
