#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "cmpc/rng.hpp"
#include "cmpc/trainer.hpp"

namespace cmpc {

namespace {

using Clock = std::chrono::steady_clock;

constexpr double kEmAlpha = 1e-3;       // M-step smoothing per component cell
constexpr double kEmTol = 1e-6;         // stop when train-LL gains fall below
constexpr double kInitAlpha = 0.1;      // smoothing of the seed rows

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

// Component logits seeded from smoothed random training rows.
Eigen::MatrixXd init_component_logits(const BinaryDataset& train, int num_components,
                                      std::uint64_t seed) {
  const int d = train.num_vars;
  CounterRng rng = CounterRng::keyed(seed, {rng_stream::kMixtureInit});
  Eigen::MatrixXd logits(num_components, d);
  for (int i = 0; i < num_components; ++i) {
    const std::size_t r = rng.next_below(train.num_rows());
    for (int v = 0; v < d; ++v) {
      const double p = (train.at(r, v) + kInitAlpha) / (1.0 + 2.0 * kInitAlpha);
      logits(i, v) = std::log(p / (1.0 - p));
    }
  }
  return logits;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& eta) {
  const double m = eta.maxCoeff();
  Eigen::VectorXd w = (eta.array() - m).exp();
  return w / w.sum();
}

struct GradientState {
  Eigen::MatrixXd logits;   // N x D
  Eigen::VectorXd eta;      // N (learnable mode only)
};

PlainMixtureResult train_gradient_mixture(const BinaryDataset& train,
                                          const BinaryDataset* valid, int num_components,
                                          MixtureMode mode, const TrainConfig& config) {
  const auto t0 = Clock::now();
  const bool learnable = mode == MixtureMode::LearnableWeight;
  const CircuitStructure structure = make_factorised_structure(train.num_vars);

  GradientState state;
  state.logits = init_component_logits(train, num_components, config.seed);
  state.eta = Eigen::VectorXd::Zero(num_components);

  const Eigen::Index n_logit = state.logits.size();
  const Eigen::Index n_total = n_logit + (learnable ? num_components : 0);
  Eigen::VectorXd flat(n_total);
  auto pack = [&] {
    std::copy(state.logits.data(), state.logits.data() + n_logit, flat.data());
    if (learnable) std::copy(state.eta.data(), state.eta.data() + num_components,
                             flat.data() + n_logit);
  };
  auto unpack = [&] {
    std::copy(flat.data(), flat.data() + n_logit, state.logits.data());
    if (learnable) std::copy(flat.data() + n_logit, flat.data() + n_total, state.eta.data());
  };
  pack();
  AdamState adam = make_adam(n_total, config.adam);

  const Eigen::VectorXd equal_w =
      Eigen::VectorXd::Constant(num_components, 1.0 / num_components);

  PlainMixtureResult result;
  result.report.best_valid_ll = -std::numeric_limits<double>::infinity();
  GradientState best_state = state;
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
      const Eigen::MatrixXd x = train.rows_as_matrix(batch);
      const double b = static_cast<double>(x.rows());
      const ClampedProbs probs = logits_to_clamped_probs(state.logits);
      const Eigen::VectorXd w = learnable ? softmax(state.eta) : equal_w;
      const Eigen::MatrixXd scores = component_scores(structure, probs.probs, x);
      const LikelihoodResult value = weighted_log_sum_exp(scores, w);
      objective_sum += value.per_row.sum();

      Eigen::MatrixXd resp(x.rows(), num_components);
      for (Eigen::Index j = 0; j < x.rows(); ++j) {
        for (int i = 0; i < num_components; ++i) {
          resp(j, i) = std::exp(scores(j, i) + std::log(w[i]) - value.per_row[j]);
        }
      }
      Eigen::MatrixXd gt = resp.transpose() * x;  // N x D
      const Eigen::VectorXd rsum = resp.colwise().sum();
      gt.array() -= probs.probs.transpose().array().colwise() * rsum.array();
      gt.array() *= probs.active.transpose().array();
      gt /= b;

      Eigen::VectorXd g(n_total);
      std::copy(gt.data(), gt.data() + n_logit, g.data());
      if (learnable) {
        const Eigen::VectorXd gw = rsum / b - w;
        std::copy(gw.data(), gw.data() + num_components, g.data() + n_logit);
      }
      g = -g;
      adam_step(adam, flat, g);
      unpack();
    }

    EpochStats stats;
    stats.train_objective = objective_sum / static_cast<double>(train.num_rows());
    if (valid) {
      const ClampedProbs probs = logits_to_clamped_probs(state.logits);
      const Eigen::VectorXd w = learnable ? softmax(state.eta) : equal_w;
      stats.valid_ll = dataset_mean_log_likelihood(structure, probs.probs, w, *valid);
    }
    stats.wall_ms = ms_since(epoch_t0);
    result.report.epochs.push_back(stats);

    const double score = valid ? stats.valid_ll : stats.train_objective;
    if (score > result.report.best_valid_ll) {
      result.report.best_valid_ll = score;
      result.report.best_epoch = epoch;
      best_state = state;
      epochs_since_best = 0;
    } else if (++epochs_since_best >= config.patience) {
      break;
    }
  }

  PcMetadata metadata;
  metadata.method = learnable ? "dm-learnable" : "dm-equal";
  metadata.n_points = num_components;
  const ClampedProbs best_probs = logits_to_clamped_probs(best_state.logits);
  Eigen::VectorXd weights = learnable ? softmax(best_state.eta) : equal_w;
  weights /= weights.sum();
  result.pc = make_compiled_pc(structure, std::move(weights), best_probs.probs,
                               std::move(metadata));
  result.report.total_wall_ms = ms_since(t0);
  return result;
}

PlainMixtureResult train_em_mixture(const BinaryDataset& train, const BinaryDataset* valid,
                                    int num_components, const TrainConfig& config) {
  const auto t0 = Clock::now();
  const CircuitStructure structure = make_factorised_structure(train.num_vars);
  const int d = train.num_vars;
  const std::size_t m = train.num_rows();
  const double m_d = static_cast<double>(m);

  const ClampedProbs init =
      logits_to_clamped_probs(init_component_logits(train, num_components, config.seed));
  Eigen::MatrixXd params = init.probs;  // D x N
  Eigen::VectorXd weights = Eigen::VectorXd::Constant(num_components, 1.0 / num_components);

  PlainMixtureResult result;
  double prev_ll = -std::numeric_limits<double>::infinity();
  constexpr std::size_t kChunk = 2048;

  for (int it = 0; it < config.max_epochs; ++it) {
    const auto it_t0 = Clock::now();
    // E-step over the full training set, accumulating sufficient statistics.
    Eigen::VectorXd r_sum = Eigen::VectorXd::Zero(num_components);
    Eigen::MatrixXd rx_sum = Eigen::MatrixXd::Zero(num_components, d);
    double ll_sum = 0.0;
    std::vector<std::uint32_t> idx;
    for (std::size_t start = 0; start < m; start += kChunk) {
      const std::size_t stop = std::min(m, start + kChunk);
      idx.resize(stop - start);
      std::iota(idx.begin(), idx.end(), static_cast<std::uint32_t>(start));
      const Eigen::MatrixXd x = train.rows_as_matrix(idx);
      const Eigen::MatrixXd scores = component_scores(structure, params, x);
      const LikelihoodResult value = weighted_log_sum_exp(scores, weights);
      ll_sum += value.per_row.sum();
      Eigen::MatrixXd resp(x.rows(), num_components);
      for (Eigen::Index j = 0; j < x.rows(); ++j) {
        for (int i = 0; i < num_components; ++i) {
          const double lw = weights[i] > 0.0 ? std::log(weights[i])
                                             : -std::numeric_limits<double>::infinity();
          const double t = scores(j, i) + lw;
          resp(j, i) = std::isfinite(t) ? std::exp(t - value.per_row[j]) : 0.0;
        }
      }
      r_sum += resp.colwise().sum();
      rx_sum.noalias() += resp.transpose() * x;
    }
    const double ll = ll_sum / m_d;

    EpochStats stats;
    stats.train_objective = ll;
    if (valid) stats.valid_ll = dataset_mean_log_likelihood(structure, params, weights, *valid);
    stats.wall_ms = ms_since(it_t0);
    result.report.epochs.push_back(stats);
    result.report.best_epoch = it;
    result.report.best_valid_ll = valid ? stats.valid_ll : ll;

    if (it > 0 && ll - prev_ll < kEmTol) break;
    prev_ll = ll;

    // M-step: smoothed weighted relative frequencies.
    weights = r_sum / m_d;
    weights = weights.cwiseMax(0.0);
    weights /= weights.sum();
    for (int i = 0; i < num_components; ++i) {
      for (int v = 0; v < d; ++v) {
        const double p = (rx_sum(i, v) + kEmAlpha) / (r_sum[i] + 2.0 * kEmAlpha);
        params(v, i) = std::min(1.0 - kProbEps, std::max(kProbEps, p));
      }
    }
  }

  PcMetadata metadata;
  metadata.method = "dm-em";
  metadata.n_points = num_components;
  result.pc = make_compiled_pc(structure, std::move(weights), std::move(params),
                               std::move(metadata));
  result.report.total_wall_ms = ms_since(t0);
  return result;
}

}  // namespace

PlainMixtureResult train_plain_mixture(const BinaryDataset& train, const BinaryDataset* valid,
                                       int num_components, MixtureMode mode,
                                       const TrainConfig& config) {
  if (num_components < 1) throw std::invalid_argument("mixture needs >= 1 components");
  if (train.num_rows() == 0) throw std::invalid_argument("empty training data");
  if (mode == MixtureMode::Em) {
    return train_em_mixture(train, valid, num_components, config);
  }
  return train_gradient_mixture(train, valid, num_components, mode, config);
}

}  // namespace cmpc
