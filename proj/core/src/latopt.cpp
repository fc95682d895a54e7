#include "cmpc/latopt.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "cmpc/likelihood.hpp"
#include "cmpc/rng.hpp"

namespace cmpc {

namespace {
using Clock = std::chrono::steady_clock;
}

LatOptResult latent_optimise(const Decoder& dec, const CircuitStructure& structure,
                             const IntegrationRule& init, const BinaryDataset& train,
                             const BinaryDataset& valid, const LatOptConfig& config) {
  validate_structure(structure);
  if (init.dim() != dec.input_dim) {
    throw std::invalid_argument("rule dimension does not match decoder input");
  }
  if (config.max_epochs < 0 || config.patience < 1 || config.batch_size < 1) {
    throw std::invalid_argument("invalid latent-optimisation configuration");
  }
  const Eigen::Index n = init.size();
  const double uniform = 1.0 / static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::abs(init.weights[i] - uniform) > 1e-12) {
      throw std::invalid_argument("latent optimisation requires uniform 1/N weights");
    }
  }

  const auto t0 = Clock::now();
  const Eigen::VectorXd weights = Eigen::VectorXd::Constant(n, uniform);
  Eigen::MatrixXd points = init.points;
  Eigen::VectorXd flat = Eigen::Map<const Eigen::VectorXd>(points.data(), points.size());
  AdamState adam = make_adam(flat.size(), config.adam);

  auto valid_ll_of = [&](const Eigen::MatrixXd& z) {
    const ClampedProbs probs = logits_to_clamped_probs(forward_batch_stats(dec, z));
    return dataset_mean_log_likelihood(structure, probs.probs, weights, valid);
  };

  LatOptResult result;
  result.report.best_epoch = -1;  // initial points
  result.report.best_valid_ll = valid_ll_of(points);
  Eigen::MatrixXd best_points = points;
  int epochs_since_best = 0;

  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    const auto epoch_t0 = Clock::now();
    const auto batches =
        make_batches(train, config.batch_size,
                     CounterRng::keyed(config.seed, {rng_stream::kShuffle,
                                                     static_cast<std::uint64_t>(epoch)})
                         .next_u64());
    double objective_sum = 0.0;
    for (const auto& batch : batches) {
      ForwardCache cache;
      const Eigen::MatrixXd logits = forward_batch_stats(dec, points, &cache);
      const ClampedProbs probs = logits_to_clamped_probs(logits);
      const Eigen::MatrixXd x = train.rows_as_matrix(batch);
      const LikelihoodGradient grad =
          batch_log_likelihood_grad(structure, probs, weights, x);
      const Eigen::MatrixXd z_grad = latent_gradient(dec, cache, grad.logit_grad);
      Eigen::VectorXd g = -Eigen::Map<const Eigen::VectorXd>(z_grad.data(), z_grad.size());
      adam_step(adam, flat, g);
      points = Eigen::Map<const Eigen::MatrixXd>(flat.data(), points.rows(), points.cols());
      objective_sum += grad.value.per_row.sum();
    }

    EpochStats stats;
    stats.train_objective = objective_sum / static_cast<double>(train.num_rows());
    stats.valid_ll = valid_ll_of(points);
    stats.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - epoch_t0).count();
    result.report.epochs.push_back(stats);

    if (stats.valid_ll > result.report.best_valid_ll) {
      result.report.best_valid_ll = stats.valid_ll;
      result.report.best_epoch = epoch;
      best_points = points;
      epochs_since_best = 0;
    } else if (++epochs_since_best >= config.patience) {
      break;
    }
  }

  result.rule.method = init.method;
  result.rule.points = std::move(best_points);
  result.rule.weights = weights;
  result.rule.seed = init.seed;
  result.rule.shift = init.shift;
  result.report.total_wall_ms =
      std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
  return result;
}

}  // namespace cmpc
