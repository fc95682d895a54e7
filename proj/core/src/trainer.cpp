#include "cmpc/trainer.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "cmpc/rng.hpp"

namespace cmpc {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) {
  return CounterRng::keyed(seed, {tag, index}).next_u64();
}

Eigen::MatrixXd training_points(const TrainConfig& config, std::uint64_t step) {
  if (config.method == Method::Rqmc) {
    return to_gaussian(lattice_uniform(config.n_points, config.latent_dim,
                                       derive_seed(config.seed, rng_stream::kLatticeShift, step)));
  }
  return to_gaussian(mc_uniform(config.n_points, config.latent_dim,
                                derive_seed(config.seed, rng_stream::kMcPoints, step)));
}

ClampedProbs decoder_probs_on_rule(const Decoder& dec, const IntegrationRule& rule) {
  return logits_to_clamped_probs(forward_batch_stats(dec, rule.points));
}

}  // namespace

void TrainConfig::validate() const {
  if (n_points < 1) throw std::invalid_argument("n_points must be >= 1");
  if (method == Method::Rqmc && (n_points & (n_points - 1)) != 0) {
    throw std::invalid_argument("RQMC needs a power-of-two number of points");
  }
  if (latent_dim < 1) throw std::invalid_argument("latent_dim must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (max_epochs < 1) throw std::invalid_argument("max_epochs must be >= 1");
  if (patience < 1) throw std::invalid_argument("patience must be >= 1");
  if (top_k && (*top_k < 1 || *top_k > n_points)) {
    throw std::invalid_argument("top_k must satisfy 1 <= K <= N");
  }
}

LikelihoodResult batch_log_likelihood(const Decoder& dec, const CircuitStructure& s,
                                      const IntegrationRule& rule, const Eigen::MatrixXd& x) {
  const ClampedProbs probs = decoder_probs_on_rule(dec, rule);
  return batch_log_likelihood(s, probs.probs, rule.weights, x);
}

LikelihoodResult topk_log_likelihood(const Decoder& dec, const CircuitStructure& s,
                                     const IntegrationRule& rule, const Eigen::MatrixXd& x,
                                     int k) {
  const ClampedProbs probs = decoder_probs_on_rule(dec, rule);
  return topk_log_likelihood(s, probs.probs, rule.weights, x, k);
}

LikelihoodResult masked_log_likelihood_objective(const Decoder& dec, const CircuitStructure& s,
                                                 const IntegrationRule& rule,
                                                 const Eigen::MatrixXd& x,
                                                 const Eigen::MatrixXd& observed) {
  const ClampedProbs probs = decoder_probs_on_rule(dec, rule);
  return masked_log_likelihood(s, probs.probs, rule.weights, x, observed);
}

double evaluate_mean_ll(const Decoder& dec, const CircuitStructure& s,
                        const IntegrationRule& rule, const BinaryDataset& data,
                        const MissingMask* mask) {
  const ClampedProbs probs = decoder_probs_on_rule(dec, rule);
  return dataset_mean_log_likelihood(s, probs.probs, rule.weights, data, mask);
}

TrainResult train_cm(const TrainConfig& config, const BinaryDataset& train,
                     const BinaryDataset& valid, const CircuitStructure& structure,
                     const MissingMask* train_mask, const MissingMask* valid_mask) {
  config.validate();
  validate_structure(structure);
  if (train.num_vars != structure.num_vars || valid.num_vars != structure.num_vars) {
    throw std::invalid_argument("dataset variable count does not match structure");
  }
  if (train_mask && train_mask->num_rows() != train.num_rows()) {
    throw std::invalid_argument("train mask row count mismatch");
  }
  if (config.top_k && train_mask) {
    throw std::invalid_argument("top-k training does not combine with missing data");
  }

  const auto t0 = Clock::now();
  Decoder decoder = init_decoder(config.latent_dim, param_dim(structure), config.hidden_widths,
                                 config.seed, config.batch_norm, config.leaky_slope);
  AdamState adam = make_adam(static_cast<Eigen::Index>(decoder.num_params()), config.adam);
  Eigen::VectorXd flat = flatten_params(decoder);
  const Eigen::VectorXd weights =
      Eigen::VectorXd::Constant(config.n_points, 1.0 / static_cast<double>(config.n_points));
  const IntegrationRule valid_rule =
      make_rule(Method::Rqmc, config.n_points, config.latent_dim, config.eval_seed);

  TrainResult result;
  result.report.best_valid_ll = -std::numeric_limits<double>::infinity();
  Decoder best_decoder = decoder;
  int epochs_since_best = 0;
  std::uint64_t step = 0;

  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    const auto epoch_t0 = Clock::now();
    const auto batches = make_batches(train, config.batch_size,
                                      derive_seed(config.seed, rng_stream::kShuffle,
                                                  static_cast<std::uint64_t>(epoch)));
    double objective_sum = 0.0;
    for (const auto& batch : batches) {
      const Eigen::MatrixXd z = training_points(config, step++);
      ForwardCache cache;
      const Eigen::MatrixXd logits = forward_train(decoder, z, &cache);
      const ClampedProbs probs = logits_to_clamped_probs(logits);
      const Eigen::MatrixXd x = train.rows_as_matrix(batch);
      Eigen::MatrixXd obs;
      if (train_mask) obs = train_mask->rows_as_matrix(batch);
      const LikelihoodGradient grad = batch_log_likelihood_grad(
          structure, probs, weights, x, config.top_k, train_mask ? &obs : nullptr);
      const Gradients dec_grads = backward(decoder, cache, grad.logit_grad);
      Eigen::VectorXd g = flatten_gradients(decoder, dec_grads);
      g = -g;  // ascent
      adam_step(adam, flat, g);
      set_params(decoder, flat);
      objective_sum += grad.value.per_row.sum();
    }

    EpochStats stats;
    stats.train_objective = objective_sum / static_cast<double>(train.num_rows());
    stats.valid_ll = evaluate_mean_ll(decoder, structure, valid_rule, valid, valid_mask);
    stats.wall_ms = ms_since(epoch_t0);
    result.report.epochs.push_back(stats);

    if (stats.valid_ll > result.report.best_valid_ll) {
      result.report.best_valid_ll = stats.valid_ll;
      result.report.best_epoch = epoch;
      best_decoder = decoder;
      epochs_since_best = 0;
    } else if (++epochs_since_best >= config.patience) {
      break;
    }
  }
  result.report.total_wall_ms = ms_since(t0);
  result.decoder = std::move(best_decoder);
  return result;
}

std::string to_string(MixtureMode mode) {
  switch (mode) {
    case MixtureMode::EqualWeight: return "equal";
    case MixtureMode::LearnableWeight: return "learnable";
    case MixtureMode::Em: return "em";
  }
  throw std::logic_error("unreachable");
}

MixtureMode mixture_mode_from_string(const std::string& name) {
  if (name == "equal") return MixtureMode::EqualWeight;
  if (name == "learnable") return MixtureMode::LearnableWeight;
  if (name == "em") return MixtureMode::Em;
  throw std::invalid_argument("unknown mixture mode '" + name + "'");
}

std::vector<EvalRow> evaluate_model(const Decoder& dec, const CircuitStructure& s,
                                    const BinaryDataset& data,
                                    const std::vector<std::int64_t>& n_points, Method method,
                                    std::uint64_t seed) {
  std::vector<EvalRow> rows;
  for (std::int64_t n : n_points) {
    IntegrationRule rule;
    if (method == Method::GaussHermite) {
      // n is interpreted as nodes per dimension for tensor rules.
      rule = gauss_hermite_rule(static_cast<int>(n), dec.input_dim);
    } else {
      rule = make_rule(method, n, dec.input_dim, seed);
    }
    EvalRow row;
    row.n_points = rule.size();
    row.method = to_string(method);
    row.seed = seed;
    row.mean_ll = evaluate_mean_ll(dec, s, rule, data);
    rows.push_back(row);
  }
  return rows;
}

EvalRow evaluate_pc(const CompiledPC& pc, const BinaryDataset& data) {
  EvalRow row;
  row.n_points = pc.num_components();
  row.method = pc.metadata.method.empty() ? "pc" : pc.metadata.method;
  row.mean_ll = dataset_mean_log_likelihood(pc.structure, pc.params, pc.weights, data);
  return row;
}

ErrorEstimate estimate_integration_error(const Decoder& dec, const CircuitStructure& s,
                                         const BinaryDataset& data, std::int64_t n_points,
                                         int num_shifts, std::uint64_t seed) {
  return estimate_integration_error(
      [&](const IntegrationRule& rule) { return evaluate_mean_ll(dec, s, rule, data); },
      n_points, dec.input_dim, num_shifts, seed);
}

}  // namespace cmpc
