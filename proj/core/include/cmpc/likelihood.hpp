#pragma once

#include <Eigen/Dense>
#include <optional>

#include "cmpc/circuit.hpp"
#include "cmpc/dataset.hpp"
#include "cmpc/structure.hpp"

namespace cmpc {

// Component probabilities obtained from raw decoder logits via the logistic
// function and clamping. `active` marks entries where the clamp did not bind
// (gradient flows only there).
struct ClampedProbs {
  Eigen::MatrixXd probs;   // param_dim x N
  Eigen::MatrixXd active;  // param_dim x N, 1.0 where unclamped
};

ClampedProbs logits_to_clamped_probs(const Eigen::MatrixXd& logits /* N x param_dim */,
                                     double eps = kProbEps);

// X columns gathered at each variable's parent (zero column at the root).
Eigen::MatrixXd parent_gather(const CircuitStructure& s, const Eigen::MatrixXd& x);

// S(j, i) = log p(x_j | component i), one row per batch row, one column per
// component. Computed as dense matrix products against per-component
// log-parameter coefficients.
Eigen::MatrixXd component_scores(const CircuitStructure& s, const Eigen::MatrixXd& params,
                                 const Eigen::MatrixXd& x);

// Same with unobserved entries (observed(j,v) == 0) marginalised out exactly.
Eigen::MatrixXd masked_component_scores(const CircuitStructure& s,
                                        const Eigen::MatrixXd& params,
                                        const Eigen::MatrixXd& x,
                                        const Eigen::MatrixXd& observed);

struct LikelihoodResult {
  Eigen::VectorXd per_row;
  double mean = 0.0;
};

// log sum_i w_i exp(S(j,i)) per row, by stable log-sum-exp; zero weights are
// skipped (they enter as -inf logs and vanish under the max-shift).
LikelihoodResult weighted_log_sum_exp(const Eigen::MatrixXd& scores,
                                      const Eigen::VectorXd& weights);

LikelihoodResult batch_log_likelihood(const CircuitStructure& s, const Eigen::MatrixXd& params,
                                      const Eigen::VectorXd& weights, const Eigen::MatrixXd& x);

// Lower-bound objective over the K components per row maximising
// w_i p(x_j | component i); remaining weights are not renormalised.
// Ties broken towards the lower component index.
LikelihoodResult topk_log_likelihood(const CircuitStructure& s, const Eigen::MatrixXd& params,
                                     const Eigen::VectorXd& weights, const Eigen::MatrixXd& x,
                                     int k);

LikelihoodResult masked_log_likelihood(const CircuitStructure& s, const Eigen::MatrixXd& params,
                                       const Eigen::VectorXd& weights, const Eigen::MatrixXd& x,
                                       const Eigen::MatrixXd& observed);

struct LikelihoodGradient {
  LikelihoodResult value;
  // d(mean per-row log-likelihood) / d(raw logits), N x param_dim.
  Eigen::MatrixXd logit_grad;
};

// Gradient of the mean per-row objective with respect to the raw logits the
// probabilities came from. `top_k` switches to the top-K objective;
// `observed` switches to the masked objective (mutually exclusive with
// top_k).
LikelihoodGradient batch_log_likelihood_grad(
    const CircuitStructure& s, const ClampedProbs& probs, const Eigen::VectorXd& weights,
    const Eigen::MatrixXd& x, std::optional<int> top_k = std::nullopt,
    const Eigen::MatrixXd* observed = nullptr);

// Mean log-likelihood of a full dataset, chunked over rows and components so
// arbitrarily large N stays within memory.
double dataset_mean_log_likelihood(const CircuitStructure& s, const Eigen::MatrixXd& params,
                                   const Eigen::VectorXd& weights, const BinaryDataset& data,
                                   const MissingMask* mask = nullptr);

}  // namespace cmpc
