#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cmpc/adam.hpp"
#include "cmpc/circuit.hpp"
#include "cmpc/dataset.hpp"
#include "cmpc/decoder.hpp"
#include "cmpc/likelihood.hpp"
#include "cmpc/quadrature.hpp"
#include "cmpc/structure.hpp"

namespace cmpc {

// Validation and test rules are a single fixed random shift with this seed.
inline constexpr std::uint64_t kEvalSeed = 42;

struct TrainConfig {
  std::int64_t n_points = 1 << 10;
  int latent_dim = 4;
  int batch_size = 128;
  int max_epochs = 300;
  int patience = 15;
  std::optional<int> top_k;
  std::uint64_t seed = 0;
  Method method = Method::Rqmc;
  AdamConfig adam;
  bool batch_norm = true;
  double leaky_slope = 0.01;
  std::vector<int> hidden_widths;  // empty = default schedule
  std::uint64_t eval_seed = kEvalSeed;

  void validate() const;
};

struct EpochStats {
  double train_objective = 0.0;
  double valid_ll = 0.0;
  double wall_ms = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  int best_epoch = -1;
  double best_valid_ll = 0.0;
  double total_wall_ms = 0.0;
};

struct TrainResult {
  Decoder decoder;
  TrainReport report;
};

// Decoder-level objective: one forward over the rule's points (batch-norm
// statistics taken over those points), then the Eq.-style mixture
// log-likelihood of the batch rows.
LikelihoodResult batch_log_likelihood(const Decoder& dec, const CircuitStructure& s,
                                      const IntegrationRule& rule, const Eigen::MatrixXd& x);
LikelihoodResult topk_log_likelihood(const Decoder& dec, const CircuitStructure& s,
                                     const IntegrationRule& rule, const Eigen::MatrixXd& x,
                                     int k);
LikelihoodResult masked_log_likelihood_objective(const Decoder& dec, const CircuitStructure& s,
                                                 const IntegrationRule& rule,
                                                 const Eigen::MatrixXd& x,
                                                 const Eigen::MatrixXd& observed);

// Mean log-likelihood of a dataset under the decoder evaluated on a rule.
double evaluate_mean_ll(const Decoder& dec, const CircuitStructure& s,
                        const IntegrationRule& rule, const BinaryDataset& data,
                        const MissingMask* mask = nullptr);

// Trains the decoder by maximising the numerical-integration log-likelihood:
// a fresh random shift (RQMC) or fresh samples (MC) per step, Adam updates,
// per-epoch validation on a fixed rule, early stopping on patience, and the
// best-validation decoder returned. With `train_mask`, each component term
// is the exact marginal over the observed entries.
TrainResult train_cm(const TrainConfig& config, const BinaryDataset& train,
                     const BinaryDataset& valid, const CircuitStructure& structure,
                     const MissingMask* train_mask = nullptr,
                     const MissingMask* valid_mask = nullptr);

enum class MixtureMode { EqualWeight, LearnableWeight, Em };

std::string to_string(MixtureMode mode);
MixtureMode mixture_mode_from_string(const std::string& name);

struct PlainMixtureResult {
  CompiledPC pc;
  TrainReport report;
};

// Plain discrete-mixture baselines over factorised components: equal or
// learnable weights trained with the same Adam loop as train_cm, or
// Bernoulli-mixture EM run to convergence of the train log-likelihood.
// For EM, report.epochs[t].train_objective holds the train LL at iteration t.
PlainMixtureResult train_plain_mixture(const BinaryDataset& train, const BinaryDataset* valid,
                                       int num_components, MixtureMode mode,
                                       const TrainConfig& config);

struct EvalRow {
  std::int64_t n_points = 0;
  std::string method;
  std::uint64_t seed = 0;
  double mean_ll = 0.0;
  double standard_error = 0.0;
};

// Mean test LL of a trained decoder for each requested number of points.
std::vector<EvalRow> evaluate_model(const Decoder& dec, const CircuitStructure& s,
                                    const BinaryDataset& data,
                                    const std::vector<std::int64_t>& n_points, Method method,
                                    std::uint64_t seed);

// Mean test LL of an already-compiled PC (the point count is fixed).
EvalRow evaluate_pc(const CompiledPC& pc, const BinaryDataset& data);

// Spec signature for integration-error estimation on a trained model.
ErrorEstimate estimate_integration_error(const Decoder& dec, const CircuitStructure& s,
                                         const BinaryDataset& data, std::int64_t n_points,
                                         int num_shifts, std::uint64_t seed);

}  // namespace cmpc
