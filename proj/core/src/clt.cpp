#include "cmpc/clt.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <tuple>
#include <vector>

namespace cmpc {

namespace {

constexpr std::size_t kCountChunk = 4096;

// Union-find with path halving.
struct Dsu {
  std::vector<int> parent;
  explicit Dsu(int n) : parent(static_cast<std::size_t>(n)) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] =
          parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  }
  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[static_cast<std::size_t>(a)] = b;
    return true;
  }
};

}  // namespace

PairwiseCounts pairwise_counts(const BinaryDataset& data, double alpha) {
  if (data.num_rows() == 0) throw std::invalid_argument("pairwise_counts needs data");
  if (alpha < 0.0) throw std::invalid_argument("alpha must be >= 0");
  const int D = data.num_vars;
  const std::size_t M = data.num_rows();

  Eigen::MatrixXd c11 = Eigen::MatrixXd::Zero(D, D);
  Eigen::VectorXd ones_count = Eigen::VectorXd::Zero(D);
  std::vector<std::uint32_t> idx;
  for (std::size_t start = 0; start < M; start += kCountChunk) {
    const std::size_t stop = std::min(M, start + kCountChunk);
    idx.resize(stop - start);
    std::iota(idx.begin(), idx.end(), static_cast<std::uint32_t>(start));
    const Eigen::MatrixXd X = data.rows_as_matrix(idx);
    c11.noalias() += X.transpose() * X;
    ones_count += X.colwise().sum().transpose();
  }

  PairwiseCounts counts;
  counts.num_vars = D;
  counts.total = static_cast<double>(M);
  counts.alpha = alpha;
  counts.n11 = c11.array() + alpha;
  counts.n10 = (ones_count.replicate(1, D) - c11).array() + alpha;
  counts.n01 = counts.n10.transpose();
  counts.n00 = (static_cast<double>(M) - ones_count.replicate(1, D).array() -
                ones_count.transpose().replicate(D, 1).array() + c11.array()) +
               alpha;
  // Diagonal: joint of a variable with itself; the off-value cells are alpha.
  for (int v = 0; v < D; ++v) {
    counts.n11(v, v) = ones_count[v] + alpha;
    counts.n00(v, v) = static_cast<double>(M) - ones_count[v] + alpha;
    counts.n01(v, v) = alpha;
    counts.n10(v, v) = alpha;
  }
  return counts;
}

Eigen::MatrixXd mutual_information(const PairwiseCounts& counts) {
  const int D = counts.num_vars;
  const double total = counts.total + 4.0 * counts.alpha;
  Eigen::MatrixXd mi = Eigen::MatrixXd::Zero(D, D);
  for (int u = 0; u < D; ++u) {
    for (int v = u + 1; v < D; ++v) {
      const double q[2][2] = {
          {counts.n00(u, v) / total, counts.n01(u, v) / total},
          {counts.n10(u, v) / total, counts.n11(u, v) / total},
      };
      const double qu[2] = {q[0][0] + q[0][1], q[1][0] + q[1][1]};
      const double qv[2] = {q[0][0] + q[1][0], q[0][1] + q[1][1]};
      double value = 0.0;
      for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
          if (q[a][b] <= 0.0) continue;
          value += q[a][b] * std::log(q[a][b] / (qu[a] * qv[b]));
        }
      }
      if (value < 0.0) {
        if (value < -1e-12) throw std::logic_error("mutual information below -1e-12");
        value = 0.0;
      }
      mi(u, v) = value;
      mi(v, u) = value;
    }
  }
  return mi;
}

CircuitStructure max_spanning_tree(const Eigen::MatrixXd& mi, int root) {
  const int D = static_cast<int>(mi.rows());
  if (D < 1 || mi.cols() != D) throw std::invalid_argument("MI matrix must be square");
  if (root < 0 || root >= D) throw std::invalid_argument("root index out of range");

  struct Edge {
    double weight;
    int u, v;
  };
  std::vector<Edge> edges;
  edges.reserve(static_cast<std::size_t>(D) * static_cast<std::size_t>(D - 1) / 2);
  for (int u = 0; u < D; ++u) {
    for (int v = u + 1; v < D; ++v) edges.push_back({mi(u, v), u, v});
  }
  std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
    return std::tie(b.weight, a.u, a.v) < std::tie(a.weight, b.u, b.v);
  });

  std::vector<std::vector<int>> adjacent(static_cast<std::size_t>(D));
  Dsu dsu(D);
  int accepted = 0;
  for (const Edge& e : edges) {
    if (dsu.unite(e.u, e.v)) {
      adjacent[static_cast<std::size_t>(e.u)].push_back(e.v);
      adjacent[static_cast<std::size_t>(e.v)].push_back(e.u);
      if (++accepted == D - 1) break;
    }
  }

  std::vector<int> parent(static_cast<std::size_t>(D), -2);
  std::vector<int> stack{root};
  parent[static_cast<std::size_t>(root)] = -1;
  while (!stack.empty()) {
    const int u = stack.back();
    stack.pop_back();
    for (int v : adjacent[static_cast<std::size_t>(u)]) {
      if (parent[static_cast<std::size_t>(v)] == -2) {
        parent[static_cast<std::size_t>(v)] = u;
        stack.push_back(v);
      }
    }
  }
  return make_clt_structure(std::move(parent));
}

LeafParams fit_clt_closed_form(const BinaryDataset& data, const CircuitStructure& structure,
                               double alpha, double clamp_eps) {
  if (structure.kind != StructureKind::Clt) {
    throw std::invalid_argument("fit_clt_closed_form needs a CLT structure");
  }
  if (structure.num_vars != data.num_vars) {
    throw std::invalid_argument("structure and data variable counts differ");
  }
  const int D = data.num_vars;
  const std::size_t M = data.num_rows();
  Eigen::VectorXd raw(2 * D);
  // c[v][b][x]: occurrences of x_v = x with parent value b.
  std::vector<std::array<std::array<double, 2>, 2>> c(
      static_cast<std::size_t>(D), {{{0.0, 0.0}, {0.0, 0.0}}});
  for (std::size_t r = 0; r < M; ++r) {
    const auto row = data.row(r);
    for (int v = 0; v < D; ++v) {
      const int par = structure.parent[static_cast<std::size_t>(v)];
      const int b = par == -1 ? 0 : row[static_cast<std::size_t>(par)];
      c[static_cast<std::size_t>(v)][static_cast<std::size_t>(b)]
       [row[static_cast<std::size_t>(v)]] += 1.0;
    }
  }
  for (int v = 0; v < D; ++v) {
    const bool is_root = structure.parent[static_cast<std::size_t>(v)] == -1;
    for (int b = 0; b < 2; ++b) {
      double ones = c[static_cast<std::size_t>(v)][static_cast<std::size_t>(b)][1];
      double total = ones + c[static_cast<std::size_t>(v)][static_cast<std::size_t>(b)][0];
      if (is_root && b == 1) {
        raw[2 * v + 1] = 0.5;  // unused slot, fixed for determinism
        continue;
      }
      const double denom = total + 2.0 * alpha;
      raw[2 * v + b] = denom > 0.0 ? (ones + alpha) / denom : 0.5;
    }
  }
  return make_leaf_params(structure, std::move(raw), clamp_eps);
}

LeafParams fit_factorised_closed_form(const BinaryDataset& data, double alpha,
                                      double clamp_eps) {
  const int D = data.num_vars;
  const double M = static_cast<double>(data.num_rows());
  Eigen::VectorXd raw(D);
  for (int v = 0; v < D; ++v) {
    double ones = 0.0;
    for (std::size_t r = 0; r < data.num_rows(); ++r) ones += data.at(r, v);
    raw[v] = (ones + alpha) / (M + 2.0 * alpha);
  }
  return make_leaf_params(make_factorised_structure(D), std::move(raw), clamp_eps);
}

CircuitStructure learn_clt_structure(const BinaryDataset& data, double alpha, int root) {
  return max_spanning_tree(mutual_information(pairwise_counts(data, alpha)), root);
}

}  // namespace cmpc
