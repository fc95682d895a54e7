#include "cmpc/decoder.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "cmpc/rng.hpp"

namespace cmpc {

namespace {

void check_input(const Decoder& dec, const Eigen::MatrixXd& z) {
  if (dec.layers.empty()) throw std::invalid_argument("decoder has no layers");
  if (z.cols() != dec.input_dim) {
    throw std::invalid_argument("input dimension mismatch: got " + std::to_string(z.cols()) +
                                ", decoder expects " + std::to_string(dec.input_dim));
  }
  if (z.rows() < 1) throw std::invalid_argument("empty input batch");
}

Eigen::MatrixXd run_forward(const Decoder& dec, const Eigen::MatrixXd& z, ForwardMode mode,
                            ForwardCache* cache, Decoder* mutable_dec) {
  check_input(dec, z);
  if (mode == ForwardMode::Eval && dec.has_batch_norm() && !dec.bn_has_stats) {
    throw std::logic_error("eval-mode forward before any batch-norm statistics exist");
  }
  if (cache) {
    cache->mode = mode;
    cache->layers.assign(dec.layers.size(), {});
  }
  const std::size_t last = dec.layers.size() - 1;
  Eigen::MatrixXd x = z;
  for (std::size_t k = 0; k < dec.layers.size(); ++k) {
    const DecoderLayer& layer = dec.layers[k];
    if (cache) cache->layers[k].input = x;
    Eigen::MatrixXd a = (x * layer.weight.transpose()).rowwise() + layer.bias.transpose();
    if (layer.batch_norm) {
      const BatchNormState& bn = *layer.batch_norm;
      Eigen::VectorXd mean, var;
      if (mode == ForwardMode::Eval) {
        mean = bn.running_mean;
        var = bn.running_var;
      } else {
        const double n = static_cast<double>(a.rows());
        mean = a.colwise().mean();
        var = (a.rowwise() - mean.transpose()).array().square().colwise().sum() / n;
        if (mode == ForwardMode::Train && mutable_dec) {
          BatchNormState& live = *mutable_dec->layers[k].batch_norm;
          const double m = dec.bn_momentum;
          live.running_mean = (1.0 - m) * live.running_mean + m * mean;
          live.running_var = (1.0 - m) * live.running_var + m * var;
        }
      }
      const Eigen::VectorXd inv_std = (var.array() + kBatchNormEps).rsqrt();
      Eigen::MatrixXd xhat =
          (a.rowwise() - mean.transpose()).array().rowwise() * inv_std.transpose().array();
      a = (xhat.array().rowwise() * bn.gamma.transpose().array()).rowwise() +
          bn.beta.transpose().array();
      if (cache) {
        cache->layers[k].xhat = std::move(xhat);
        cache->layers[k].inv_std = inv_std;
      }
    }
    if (cache) cache->layers[k].pre_activation = a;
    if (k != last) {
      x = a.array().max(0.0) + dec.leaky_slope * a.array().min(0.0);
    } else {
      x = std::move(a);
    }
  }
  if (mode == ForwardMode::Train && mutable_dec && dec.has_batch_norm()) {
    mutable_dec->bn_has_stats = true;
  }
  return x;
}

}  // namespace

std::size_t Decoder::num_params() const {
  std::size_t n = 0;
  for (const DecoderLayer& layer : layers) {
    n += static_cast<std::size_t>(layer.weight.size()) +
         static_cast<std::size_t>(layer.bias.size());
    if (layer.batch_norm) {
      n += 2 * static_cast<std::size_t>(layer.batch_norm->gamma.size());
    }
  }
  return n;
}

std::vector<int> Decoder::layer_widths() const {
  std::vector<int> widths{input_dim};
  for (const DecoderLayer& layer : layers) {
    widths.push_back(static_cast<int>(layer.weight.rows()));
  }
  return widths;
}

std::vector<int> default_hidden_widths(int input_dim, int output_dim) {
  constexpr int kMinHidden = 64;
  constexpr int kNumHidden = 5;
  std::vector<int> widths;
  const double ratio = static_cast<double>(output_dim) / static_cast<double>(input_dim);
  for (int k = 1; k <= kNumHidden; ++k) {
    const double h = input_dim * std::pow(ratio, static_cast<double>(k) / 6.0);
    widths.push_back(std::max(kMinHidden, static_cast<int>(std::lround(h))));
  }
  return widths;
}

Decoder init_decoder(int input_dim, int output_dim, std::vector<int> hidden_widths,
                     std::uint64_t seed, bool batch_norm, double leaky_slope) {
  if (input_dim < 1 || output_dim < 1) {
    throw std::invalid_argument("decoder dimensions must be >= 1");
  }
  if (hidden_widths.empty()) hidden_widths = default_hidden_widths(input_dim, output_dim);
  for (int h : hidden_widths) {
    if (h < 1) throw std::invalid_argument("hidden width must be >= 1");
  }

  Decoder dec;
  dec.input_dim = input_dim;
  dec.output_dim = output_dim;
  dec.leaky_slope = leaky_slope;
  std::vector<int> widths{input_dim};
  widths.insert(widths.end(), hidden_widths.begin(), hidden_widths.end());
  widths.push_back(output_dim);

  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    const int fan_in = widths[k];
    const int fan_out = widths[k + 1];
    DecoderLayer layer;
    layer.weight.resize(fan_out, fan_in);
    layer.bias.resize(fan_out);
    CounterRng wrng = CounterRng::keyed(seed, {rng_stream::kDecoderInit, k, 0});
    CounterRng brng = CounterRng::keyed(seed, {rng_stream::kDecoderInit, k, 1});
    const double w_bound = std::sqrt(6.0 / ((1.0 + leaky_slope * leaky_slope) * fan_in));
    const double b_bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) {
      layer.weight.data()[i] = (2.0 * wrng.next_unit() - 1.0) * w_bound;
    }
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) {
      layer.bias[i] = (2.0 * brng.next_unit() - 1.0) * b_bound;
    }
    if (batch_norm && k + 2 < widths.size()) {
      BatchNormState bn;
      bn.gamma = Eigen::VectorXd::Ones(fan_out);
      bn.beta = Eigen::VectorXd::Zero(fan_out);
      bn.running_mean = Eigen::VectorXd::Zero(fan_out);
      bn.running_var = Eigen::VectorXd::Ones(fan_out);
      layer.batch_norm = std::move(bn);
    }
    dec.layers.push_back(std::move(layer));
  }
  return dec;
}

Eigen::MatrixXd forward_train(Decoder& dec, const Eigen::MatrixXd& z, ForwardCache* cache) {
  return run_forward(dec, z, ForwardMode::Train, cache, &dec);
}

Eigen::MatrixXd forward_batch_stats(const Decoder& dec, const Eigen::MatrixXd& z,
                                    ForwardCache* cache) {
  return run_forward(dec, z, ForwardMode::BatchStats, cache, nullptr);
}

Eigen::MatrixXd forward_eval(const Decoder& dec, const Eigen::MatrixXd& z,
                             ForwardCache* cache) {
  return run_forward(dec, z, ForwardMode::Eval, cache, nullptr);
}

Gradients backward(const Decoder& dec, const ForwardCache& cache,
                   const Eigen::MatrixXd& output_grad) {
  if (cache.layers.size() != dec.layers.size()) {
    throw std::invalid_argument("forward cache does not match decoder");
  }
  const std::size_t last = dec.layers.size() - 1;
  if (output_grad.rows() != cache.layers[last].pre_activation.rows() ||
      output_grad.cols() != dec.output_dim) {
    throw std::invalid_argument("output gradient shape mismatch");
  }

  Gradients grads;
  grads.layers.resize(dec.layers.size());
  Eigen::MatrixXd g = output_grad;
  for (std::size_t idx = dec.layers.size(); idx-- > 0;) {
    const DecoderLayer& layer = dec.layers[idx];
    const LayerCache& lc = cache.layers[idx];
    if (idx != last) {
      // Through LeakyReLU.
      g = (lc.pre_activation.array() > 0.0)
              .select(g, (g.array() * dec.leaky_slope).matrix());
    }
    if (layer.batch_norm) {
      const BatchNormState& bn = *layer.batch_norm;
      Eigen::MatrixXd dxhat = g.array().rowwise() * bn.gamma.transpose().array();
      grads.layers[idx].gamma = (g.array() * lc.xhat.array()).colwise().sum();
      grads.layers[idx].beta = g.colwise().sum();
      if (cache.mode == ForwardMode::Eval) {
        g = dxhat.array().rowwise() * lc.inv_std.transpose().array();
      } else {
        const double n = static_cast<double>(g.rows());
        const Eigen::RowVectorXd sum_dxhat = dxhat.colwise().sum();
        const Eigen::RowVectorXd sum_dxhat_xhat =
            (dxhat.array() * lc.xhat.array()).colwise().sum();
        g = (((dxhat * n).rowwise() - sum_dxhat).array() -
             lc.xhat.array().rowwise() * sum_dxhat_xhat.array())
                .rowwise() *
            (lc.inv_std.transpose().array() / n);
      }
    }
    grads.layers[idx].weight.noalias() = g.transpose() * lc.input;
    grads.layers[idx].bias = g.colwise().sum();
    if (idx == 0) {
      grads.input.noalias() = g * layer.weight;
    } else {
      g = g * layer.weight;
    }
  }
  return grads;
}

Eigen::MatrixXd latent_gradient(const Decoder& dec, const ForwardCache& cache,
                                const Eigen::MatrixXd& output_grad) {
  return backward(dec, cache, output_grad).input;
}

void freeze_batch_norm_stats(Decoder& dec, const Eigen::MatrixXd& z) {
  check_input(dec, z);
  if (!dec.has_batch_norm()) {
    dec.bn_frozen = true;
    return;
  }
  const std::size_t last = dec.layers.size() - 1;
  Eigen::MatrixXd x = z;
  for (std::size_t k = 0; k < dec.layers.size(); ++k) {
    DecoderLayer& layer = dec.layers[k];
    Eigen::MatrixXd a = (x * layer.weight.transpose()).rowwise() + layer.bias.transpose();
    if (layer.batch_norm) {
      BatchNormState& bn = *layer.batch_norm;
      const double n = static_cast<double>(a.rows());
      bn.running_mean = a.colwise().mean();
      bn.running_var =
          (a.rowwise() - bn.running_mean.transpose()).array().square().colwise().sum() / n;
      const Eigen::VectorXd inv_std = (bn.running_var.array() + kBatchNormEps).rsqrt();
      a = ((a.rowwise() - bn.running_mean.transpose()).array().rowwise() *
           (inv_std.array() * bn.gamma.array()).transpose())
              .rowwise() +
          bn.beta.transpose().array();
    }
    if (k != last) {
      x = a.array().max(0.0) + dec.leaky_slope * a.array().min(0.0);
    } else {
      x = std::move(a);
    }
  }
  dec.bn_frozen = true;
  dec.bn_has_stats = true;
}

Eigen::VectorXd flatten_params(const Decoder& dec) {
  Eigen::VectorXd flat(static_cast<Eigen::Index>(dec.num_params()));
  Eigen::Index pos = 0;
  for (const DecoderLayer& layer : dec.layers) {
    std::memcpy(flat.data() + pos, layer.weight.data(),
                sizeof(double) * static_cast<std::size_t>(layer.weight.size()));
    pos += layer.weight.size();
    std::memcpy(flat.data() + pos, layer.bias.data(),
                sizeof(double) * static_cast<std::size_t>(layer.bias.size()));
    pos += layer.bias.size();
    if (layer.batch_norm) {
      const BatchNormState& bn = *layer.batch_norm;
      std::memcpy(flat.data() + pos, bn.gamma.data(),
                  sizeof(double) * static_cast<std::size_t>(bn.gamma.size()));
      pos += bn.gamma.size();
      std::memcpy(flat.data() + pos, bn.beta.data(),
                  sizeof(double) * static_cast<std::size_t>(bn.beta.size()));
      pos += bn.beta.size();
    }
  }
  return flat;
}

void set_params(Decoder& dec, const Eigen::VectorXd& flat) {
  if (flat.size() != static_cast<Eigen::Index>(dec.num_params())) {
    throw std::invalid_argument("flat parameter vector has wrong length");
  }
  Eigen::Index pos = 0;
  for (DecoderLayer& layer : dec.layers) {
    std::memcpy(layer.weight.data(), flat.data() + pos,
                sizeof(double) * static_cast<std::size_t>(layer.weight.size()));
    pos += layer.weight.size();
    std::memcpy(layer.bias.data(), flat.data() + pos,
                sizeof(double) * static_cast<std::size_t>(layer.bias.size()));
    pos += layer.bias.size();
    if (layer.batch_norm) {
      BatchNormState& bn = *layer.batch_norm;
      std::memcpy(bn.gamma.data(), flat.data() + pos,
                  sizeof(double) * static_cast<std::size_t>(bn.gamma.size()));
      pos += bn.gamma.size();
      std::memcpy(bn.beta.data(), flat.data() + pos,
                  sizeof(double) * static_cast<std::size_t>(bn.beta.size()));
      pos += bn.beta.size();
    }
  }
}

Eigen::VectorXd flatten_gradients(const Decoder& dec, const Gradients& grads) {
  Eigen::VectorXd flat(static_cast<Eigen::Index>(dec.num_params()));
  Eigen::Index pos = 0;
  for (std::size_t k = 0; k < dec.layers.size(); ++k) {
    const LayerGradients& lg = grads.layers[k];
    std::memcpy(flat.data() + pos, lg.weight.data(),
                sizeof(double) * static_cast<std::size_t>(lg.weight.size()));
    pos += lg.weight.size();
    std::memcpy(flat.data() + pos, lg.bias.data(),
                sizeof(double) * static_cast<std::size_t>(lg.bias.size()));
    pos += lg.bias.size();
    if (dec.layers[k].batch_norm) {
      std::memcpy(flat.data() + pos, lg.gamma.data(),
                  sizeof(double) * static_cast<std::size_t>(lg.gamma.size()));
      pos += lg.gamma.size();
      std::memcpy(flat.data() + pos, lg.beta.data(),
                  sizeof(double) * static_cast<std::size_t>(lg.beta.size()));
      pos += lg.beta.size();
    }
  }
  return flat;
}

std::string decoder_digest(const Decoder& dec) {
  std::uint64_t h = 1469598103934665603ull;
  auto absorb = [&h](const void* data, std::size_t len) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  };
  const auto widths = dec.layer_widths();
  for (int w : widths) absorb(&w, sizeof(w));
  absorb(&dec.leaky_slope, sizeof(dec.leaky_slope));
  const bool bn = dec.has_batch_norm();
  absorb(&bn, sizeof(bn));
  const Eigen::VectorXd flat = flatten_params(dec);
  absorb(flat.data(), sizeof(double) * static_cast<std::size_t>(flat.size()));
  char buf[19];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace cmpc
