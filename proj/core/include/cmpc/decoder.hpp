#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cmpc {

inline constexpr double kBatchNormEps = 1e-5;

struct BatchNormState {
  Eigen::VectorXd gamma, beta;
  Eigen::VectorXd running_mean, running_var;
};

struct DecoderLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
  std::optional<BatchNormState> batch_norm;  // hidden layers only, when enabled
};

// MLP mapping latent points to raw leaf-parameter logits. Hidden layers are
// affine -> batch norm (optional) -> LeakyReLU; the last layer is affine only.
struct Decoder {
  int input_dim = 0;
  int output_dim = 0;
  double leaky_slope = 0.01;
  double bn_momentum = 0.1;
  bool bn_frozen = false;
  bool bn_has_stats = false;
  std::vector<DecoderLayer> layers;

  bool has_batch_norm() const {
    return !layers.empty() && layers.front().batch_norm.has_value();
  }
  std::size_t num_params() const;
  std::vector<int> layer_widths() const;  // input_dim, hidden..., output_dim
};

// Hidden sizes grow geometrically from the latent to the output dimension,
// with a floor of 64 units; five hidden layers by default (six affine layers
// in total).
std::vector<int> default_hidden_widths(int input_dim, int output_dim);

// Kaiming-uniform initialisation for the LeakyReLU slope; deterministic in
// seed. An empty hidden_widths picks the default sizes.
Decoder init_decoder(int input_dim, int output_dim, std::vector<int> hidden_widths,
                     std::uint64_t seed, bool batch_norm = true, double leaky_slope = 0.01);

// How batch-norm statistics are obtained during a forward pass:
//   Train      - statistics of the current batch; running stats updated.
//   BatchStats - statistics of the current batch; no state mutated.
//   Eval       - stored (frozen or running) statistics; requires that some
//                statistics exist.
enum class ForwardMode { Train, BatchStats, Eval };

struct LayerCache {
  Eigen::MatrixXd input;          // N x in
  Eigen::MatrixXd pre_activation; // N x out (post batch-norm)
  Eigen::MatrixXd xhat;           // batch-norm only
  Eigen::VectorXd inv_std;        // batch-norm only
};

struct ForwardCache {
  ForwardMode mode = ForwardMode::BatchStats;
  std::vector<LayerCache> layers;
};

Eigen::MatrixXd forward_train(Decoder& dec, const Eigen::MatrixXd& z, ForwardCache* cache);
Eigen::MatrixXd forward_batch_stats(const Decoder& dec, const Eigen::MatrixXd& z,
                                    ForwardCache* cache = nullptr);
Eigen::MatrixXd forward_eval(const Decoder& dec, const Eigen::MatrixXd& z,
                             ForwardCache* cache = nullptr);

struct LayerGradients {
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;
  Eigen::VectorXd gamma, beta;  // batch-norm only
};

struct Gradients {
  std::vector<LayerGradients> layers;
  Eigen::MatrixXd input;  // N x input_dim
};

// Exact reverse-mode gradients through the cached forward pass.
// output_grad is d(objective)/d(raw outputs), N x output_dim.
Gradients backward(const Decoder& dec, const ForwardCache& cache,
                   const Eigen::MatrixXd& output_grad);

// Gradient with respect to the input points only.
Eigen::MatrixXd latent_gradient(const Decoder& dec, const ForwardCache& cache,
                                const Eigen::MatrixXd& output_grad);

// Computes batch statistics over z once, stores them as the frozen
// statistics, and marks the decoder frozen. Used before eval-mode passes.
void freeze_batch_norm_stats(Decoder& dec, const Eigen::MatrixXd& z);

// Trainable parameters (weights, biases, batch-norm scale/offset) as one
// flat vector, and back. Running statistics are not trainable.
Eigen::VectorXd flatten_params(const Decoder& dec);
void set_params(Decoder& dec, const Eigen::VectorXd& flat);
Eigen::VectorXd flatten_gradients(const Decoder& dec, const Gradients& grads);

// FNV-1a digest over the architecture and trainable parameters.
std::string decoder_digest(const Decoder& dec);

}  // namespace cmpc
