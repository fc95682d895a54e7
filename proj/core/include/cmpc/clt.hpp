#pragma once

#include <Eigen/Dense>

#include "cmpc/circuit.hpp"
#include "cmpc/dataset.hpp"
#include "cmpc/structure.hpp"

namespace cmpc {

// Smoothed pairwise joint counts n_uv(a,b) = alpha + #{rows: x_u=a, x_v=b}.
// Symmetric: n_uv(a,b) == n_vu(b,a). The diagonal carries the marginal
// counts (n_uu(0,1) and n_uu(1,0) are alpha only).
struct PairwiseCounts {
  int num_vars = 0;
  double total = 0.0;  // number of rows M
  double alpha = 0.0;
  Eigen::MatrixXd n00, n01, n10, n11;  // n01(u,v) = n_uv(0,1)
};

PairwiseCounts pairwise_counts(const BinaryDataset& data, double alpha);

// Pairwise mutual information in nats from the normalised smoothed joints;
// MI(u,u) is forced to 0, and tiny negative values are clipped to 0.
Eigen::MatrixXd mutual_information(const PairwiseCounts& counts);

// Maximum-weight spanning tree over the MI edges (Kruskal), directed away
// from the chosen root. Ties broken by (-MI, min(u,v), max(u,v)) for full
// determinism.
CircuitStructure max_spanning_tree(const Eigen::MatrixXd& mi, int root = 0);

// Closed-form maximum-likelihood tree parameters: smoothed conditional
// relative frequencies (root: smoothed marginal). When a parent value never
// occurs and alpha is 0, the undetermined conditional defaults to 0.5.
LeafParams fit_clt_closed_form(const BinaryDataset& data, const CircuitStructure& structure,
                               double alpha, double clamp_eps = kProbEps);

// Closed-form independent model: smoothed marginal frequencies.
LeafParams fit_factorised_closed_form(const BinaryDataset& data, double alpha,
                                      double clamp_eps = kProbEps);

// Convenience: counts -> MI -> spanning tree on training data.
CircuitStructure learn_clt_structure(const BinaryDataset& data, double alpha = 0.1,
                                     int root = 0);

inline constexpr double kDefaultCltAlpha = 0.1;

}  // namespace cmpc
