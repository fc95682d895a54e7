#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <vector>

#include "cmpc/circuit.hpp"
#include "cmpc/dataset.hpp"
#include "cmpc/rng.hpp"
#include "cmpc/structure.hpp"

namespace cmpc::test {

inline Eigen::VectorXd random_weights(Eigen::Index n, CounterRng& rng) {
  Eigen::VectorXd w(n);
  for (Eigen::Index i = 0; i < n; ++i) w[i] = -std::log(1.0 - rng.next_unit());
  w /= w.sum();
  return w;
}

inline Eigen::MatrixXd random_probs(Eigen::Index rows, Eigen::Index cols, CounterRng& rng,
                                    double lo = 0.05, double hi = 0.95) {
  Eigen::MatrixXd p(rows, cols);
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    p.data()[i] = lo + (hi - lo) * rng.next_unit();
  }
  return p;
}

// Uniformly random labelled tree: each variable after the first attaches to
// a random earlier variable under a random relabelling.
inline CircuitStructure random_tree(int num_vars, CounterRng& rng) {
  std::vector<int> label(static_cast<std::size_t>(num_vars));
  for (int v = 0; v < num_vars; ++v) label[static_cast<std::size_t>(v)] = v;
  for (int v = num_vars - 1; v > 0; --v) {
    std::swap(label[static_cast<std::size_t>(v)],
              label[rng.next_below(static_cast<std::uint64_t>(v + 1))]);
  }
  std::vector<int> parent(static_cast<std::size_t>(num_vars), -1);
  for (int k = 1; k < num_vars; ++k) {
    const int child = label[static_cast<std::size_t>(k)];
    const int par = label[rng.next_below(static_cast<std::uint64_t>(k))];
    parent[static_cast<std::size_t>(child)] = par;
  }
  return make_clt_structure(std::move(parent));
}

inline CompiledPC random_pc(StructureKind kind, int num_vars, Eigen::Index n_components,
                            CounterRng& rng) {
  CircuitStructure s = kind == StructureKind::Factorised ? make_factorised_structure(num_vars)
                                                         : random_tree(num_vars, rng);
  const Eigen::MatrixXd params = random_probs(param_dim(s), n_components, rng);
  return make_compiled_pc(std::move(s), random_weights(n_components, rng), params);
}

inline std::vector<std::uint8_t> random_row(int num_vars, CounterRng& rng) {
  std::vector<std::uint8_t> row(static_cast<std::size_t>(num_vars));
  for (auto& v : row) v = rng.next_unit() < 0.5 ? 1 : 0;
  return row;
}

inline std::vector<std::uint8_t> random_mask_row(int num_vars, CounterRng& rng,
                                                 double p_observed = 0.5) {
  std::vector<std::uint8_t> row(static_cast<std::size_t>(num_vars));
  for (auto& v : row) v = rng.next_unit() < p_observed ? 1 : 0;
  return row;
}

inline BinaryDataset random_dataset(int num_vars, std::size_t rows, CounterRng& rng) {
  BinaryDataset data;
  data.num_vars = num_vars;
  data.values.resize(rows * static_cast<std::size_t>(num_vars));
  for (auto& v : data.values) v = rng.next_unit() < 0.5 ? 1 : 0;
  return data;
}

// Central finite differences of a scalar function of a flat vector.
inline Eigen::VectorXd finite_difference(const std::function<double(const Eigen::VectorXd&)>& f,
                                         const Eigen::VectorXd& x, double h = 1e-4) {
  Eigen::VectorXd grad(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double hi = f(probe);
    probe[i] = x[i] - h;
    const double lo = f(probe);
    probe[i] = x[i];
    grad[i] = (hi - lo) / (2.0 * h);
  }
  return grad;
}

// Max relative disagreement, guarded against tiny denominators.
inline double max_rel_err(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double scale = std::max({1.0, std::abs(a[i]), std::abs(b[i])});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

}  // namespace cmpc::test
