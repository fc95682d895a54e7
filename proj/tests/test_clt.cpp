#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "cmpc/circuit.hpp"
#include "cmpc/clt.hpp"
#include "support.hpp"

using namespace cmpc;

namespace {

BinaryDataset dataset_from_rows(std::initializer_list<std::initializer_list<int>> rows) {
  BinaryDataset data;
  data.num_vars = static_cast<int>(rows.begin()->size());
  for (const auto& row : rows) {
    for (int v : row) data.values.push_back(static_cast<std::uint8_t>(v));
  }
  return data;
}

double dataset_mean_ll(const BinaryDataset& data, const CircuitStructure& s,
                       const LeafParams& params) {
  double total = 0.0;
  for (std::size_t r = 0; r < data.num_rows(); ++r) {
    total += component_log_density(s, params.p, data.row(r));
  }
  return total / static_cast<double>(data.num_rows());
}

std::set<std::pair<int, int>> undirected_edges(const CircuitStructure& s) {
  std::set<std::pair<int, int>> edges;
  for (int v = 0; v < s.num_vars; ++v) {
    const int p = s.parent[static_cast<std::size_t>(v)];
    if (p != -1) edges.insert({std::min(v, p), std::max(v, p)});
  }
  return edges;
}

}  // namespace

TEST_CASE("pairwise counts") {
  const auto data = dataset_from_rows({{0, 0}, {1, 1}});
  const auto c0 = pairwise_counts(data, 0.0);
  CHECK(c0.n00(0, 1) == 1.0);
  CHECK(c0.n11(0, 1) == 1.0);
  CHECK(c0.n01(0, 1) == 0.0);
  CHECK(c0.n10(0, 1) == 0.0);
  CHECK(c0.n11(0, 0) == 1.0);  // diagonal marginal
  CHECK(c0.n00(1, 1) == 1.0);

  const auto c1 = pairwise_counts(data, 1.0);
  CHECK(c1.n00(0, 1) == 2.0);
  CHECK(c1.n01(0, 1) == 1.0);

  // identical columns: off-diagonal joints are alpha only
  const auto dup = dataset_from_rows({{0, 0}, {1, 1}, {1, 1}});
  const auto cd = pairwise_counts(dup, 0.25);
  CHECK(cd.n01(0, 1) == 0.25);
  CHECK(cd.n10(0, 1) == 0.25);
}

TEST_CASE("pairwise counts symmetry for random data") {
  CounterRng rng = CounterRng::keyed(31, {});
  const auto data = test::random_dataset(7, 200, rng);
  const auto counts = pairwise_counts(data, 0.5);
  CHECK((counts.n01 - counts.n10.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((counts.n00 - counts.n00.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((counts.n11 - counts.n11.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mutual information") {
  // Exactly balanced independent pair: MI = 0.
  const auto indep = dataset_from_rows({{0, 0}, {0, 1}, {1, 0}, {1, 1}});
  const auto mi0 = mutual_information(pairwise_counts(indep, 0.0));
  CHECK(mi0(0, 1) == doctest::Approx(0.0).epsilon(1e-12));

  // Perfectly correlated balanced pair: MI = log 2.
  const auto same = dataset_from_rows({{0, 0}, {1, 1}});
  const auto mi1 = mutual_information(pairwise_counts(same, 0.0));
  CHECK(mi1(0, 1) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  CounterRng rng = CounterRng::keyed(32, {});
  const auto data = test::random_dataset(6, 100, rng);
  const auto mi = mutual_information(pairwise_counts(data, 0.1));
  CHECK((mi - mi.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(mi.diagonal().cwiseAbs().maxCoeff() == 0.0);
  CHECK(mi.minCoeff() >= 0.0);
}

TEST_CASE("max spanning tree on a 3-variable example") {
  Eigen::MatrixXd mi = Eigen::MatrixXd::Zero(3, 3);
  mi(0, 1) = mi(1, 0) = 0.5;
  mi(1, 2) = mi(2, 1) = 0.4;
  mi(0, 2) = mi(2, 0) = 0.1;
  const auto tree = max_spanning_tree(mi, 0);
  CHECK(undirected_edges(tree) ==
        std::set<std::pair<int, int>>{{0, 1}, {1, 2}});
  CHECK(tree.parent[0] == -1);
  CHECK(tree.parent[1] == 0);
  CHECK(tree.parent[2] == 1);
}

TEST_CASE("degenerate and tied spanning trees") {
  const auto single = max_spanning_tree(Eigen::MatrixXd::Zero(1, 1), 0);
  CHECK(single.num_vars == 1);
  CHECK(single.parent[0] == -1);

  // All-equal MI: result fixed purely by the deterministic tie-break.
  const Eigen::MatrixXd flat = Eigen::MatrixXd::Constant(5, 5, 0.3);
  const auto a = max_spanning_tree(flat, 0);
  const auto b = max_spanning_tree(flat, 0);
  CHECK(a.parent == b.parent);
  // Tie-break (-MI, min, max) selects edges (0,1), (0,2), (0,3), (0,4).
  for (int v = 1; v < 5; ++v) CHECK(a.parent[static_cast<std::size_t>(v)] == 0);
}

TEST_CASE("spanning tree is a valid tree for random MI matrices") {
  CounterRng rng = CounterRng::keyed(33, {});
  for (int rep = 0; rep < 30; ++rep) {
    const int d = 2 + static_cast<int>(rng.next_below(12));
    Eigen::MatrixXd mi = Eigen::MatrixXd::Zero(d, d);
    for (int u = 0; u < d; ++u) {
      for (int v = u + 1; v < d; ++v) {
        // Coarse grid of values forces frequent ties.
        mi(u, v) = mi(v, u) = 0.1 * static_cast<double>(rng.next_below(4));
      }
    }
    const int root = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(d)));
    const auto tree = max_spanning_tree(mi, root);
    CHECK_NOTHROW(validate_structure(tree));
    CHECK(tree.parent[static_cast<std::size_t>(root)] == -1);
  }
}

TEST_CASE("closed-form clt parameters on a chain") {
  const auto data = dataset_from_rows({{0, 0}, {0, 1}, {1, 1}});
  const auto chain = make_clt_structure({-1, 0});
  const auto params = fit_clt_closed_form(data, chain, 0.0, 0.0);
  CHECK(params.p[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));  // root marginal
  CHECK(params.p[2] == doctest::Approx(0.5).epsilon(1e-12));        // p(x1=1 | x0=0)
  CHECK(params.p[3] == doctest::Approx(1.0).epsilon(1e-12));        // p(x1=1 | x0=1)
}

TEST_CASE("deterministic edges hit the clamp") {
  const auto data = dataset_from_rows({{0, 0}, {1, 1}, {1, 1}});
  const auto chain = make_clt_structure({-1, 0});
  const auto params = fit_clt_closed_form(data, chain, 0.0);
  CHECK(params.p[2] == doctest::Approx(kProbEps));
  CHECK(params.p[3] == doctest::Approx(1.0 - kProbEps));
}

TEST_CASE("huge smoothing pushes parameters to one half") {
  CounterRng rng = CounterRng::keyed(34, {});
  const auto data = test::random_dataset(5, 50, rng);
  const auto tree = learn_clt_structure(data);
  const auto params = fit_clt_closed_form(data, tree, 1e9);
  for (Eigen::Index i = 0; i < params.p.size(); ++i) {
    CHECK(params.p[i] == doctest::Approx(0.5).epsilon(1e-6));
  }
  const auto fact = fit_factorised_closed_form(data, 1e9);
  for (Eigen::Index i = 0; i < fact.p.size(); ++i) {
    CHECK(fact.p[i] == doctest::Approx(0.5).epsilon(1e-6));
  }
}

TEST_CASE("clt train LL minus factorised train LL equals summed edge MI") {
  CounterRng rng = CounterRng::keyed(35, {});
  for (int rep = 0; rep < 5; ++rep) {
    // Data with real dependencies, sampled from a random tree model.
    const int d = 4 + static_cast<int>(rng.next_below(6));
    const auto truth = test::random_pc(StructureKind::Clt, d, 1, rng);
    const auto data = sample(truth, 400, 100 + static_cast<std::uint64_t>(rep));

    const auto counts = pairwise_counts(data, 0.0);
    const auto mi = mutual_information(counts);
    const auto tree = max_spanning_tree(mi, 0);
    const auto clt_params = fit_clt_closed_form(data, tree, 0.0, 0.0);
    const auto fact_params = fit_factorised_closed_form(data, 0.0, 0.0);

    const double clt_ll = dataset_mean_ll(data, tree, clt_params);
    const double fact_ll =
        dataset_mean_ll(data, make_factorised_structure(d), fact_params);
    double mi_sum = 0.0;
    for (int v = 0; v < d; ++v) {
      const int p = tree.parent[static_cast<std::size_t>(v)];
      if (p != -1) mi_sum += mi(v, p);
    }
    CHECK(clt_ll - fact_ll == doctest::Approx(mi_sum).epsilon(1e-9));
    CHECK(clt_ll >= fact_ll - 1e-12);
  }
}

TEST_CASE("structure recovery from strong-edge synthetic data") {
  CounterRng rng = CounterRng::keyed(36, {});
  const int d = 10;
  const auto tree = test::random_tree(d, rng);
  Eigen::VectorXd q(2 * d);
  for (int v = 0; v < d; ++v) {
    if (tree.parent[static_cast<std::size_t>(v)] == -1) {
      q[2 * v] = 0.5;
      q[2 * v + 1] = 0.5;
    } else if (rng.next_unit() < 0.5) {
      q[2 * v] = 0.1;
      q[2 * v + 1] = 0.9;
    } else {
      q[2 * v] = 0.9;
      q[2 * v + 1] = 0.1;
    }
  }
  Eigen::MatrixXd params(2 * d, 1);
  params.col(0) = q;
  const auto truth = make_compiled_pc(tree, Eigen::VectorXd::Ones(1), params);
  const auto data = sample(truth, 10000, 77);
  const auto learned = learn_clt_structure(data, 0.1, 0);
  CHECK(undirected_edges(learned) == undirected_edges(tree));
}

TEST_CASE("empty data is rejected") {
  BinaryDataset empty;
  empty.num_vars = 3;
  CHECK_THROWS(pairwise_counts(empty, 0.1));
}
