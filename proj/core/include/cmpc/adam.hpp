#pragma once

#include <Eigen/Dense>

namespace cmpc {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  Eigen::VectorXd m, v;
  long step = 0;
};

inline AdamState make_adam(Eigen::Index size, AdamConfig config = {}) {
  AdamState state;
  state.config = config;
  state.m = Eigen::VectorXd::Zero(size);
  state.v = Eigen::VectorXd::Zero(size);
  return state;
}

// Standard bias-corrected Adam descent step on `params` in place.
void adam_step(AdamState& state, Eigen::VectorXd& params, const Eigen::VectorXd& grads);

}  // namespace cmpc
