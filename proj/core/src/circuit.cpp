#include "cmpc/circuit.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "cmpc/rng.hpp"

namespace cmpc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_row(const CircuitStructure& s, std::span<const std::uint8_t> x) {
  if (static_cast<int>(x.size()) != s.num_vars) {
    throw std::invalid_argument("row length does not match num_vars");
  }
}

// One upward sum-product pass over the tree, summing out unobserved
// variables. Messages are kept in the linear domain, renormalised per node
// with the log of the factored-out scale accumulated separately.
double clt_marginal_one(const CircuitStructure& s, const Eigen::VectorXd& pr,
                        std::span<const std::uint8_t> x, std::span<const std::uint8_t> observed,
                        const std::vector<int>& topo,
                        const std::vector<std::vector<int>>& children) {
  const int D = s.num_vars;
  // m0[v], m1[v]: message from v to its parent for parent value 0 / 1.
  std::vector<double> m0(static_cast<std::size_t>(D)), m1(static_cast<std::size_t>(D));
  double log_scale = 0.0;
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    const int v = *it;
    double child_prod[2] = {1.0, 1.0};
    for (int c : children[static_cast<std::size_t>(v)]) {
      child_prod[0] *= m0[static_cast<std::size_t>(c)];
      child_prod[1] *= m1[static_cast<std::size_t>(c)];
    }
    const bool is_root = s.parent[static_cast<std::size_t>(v)] == -1;
    const double q1_b0 = pr[2 * v];
    const double q1_b1 = is_root ? q1_b0 : pr[2 * v + 1];
    double out[2];
    const bool obs = observed[static_cast<std::size_t>(v)] != 0;
    const bool val1 = obs && x[static_cast<std::size_t>(v)] != 0;
    for (int b = 0; b < 2; ++b) {
      const double q1 = b == 0 ? q1_b0 : q1_b1;
      double acc = 0.0;
      if (!obs || !val1) acc += (1.0 - q1) * child_prod[0];
      if (!obs || val1) acc += q1 * child_prod[1];
      out[b] = acc;
    }
    if (is_root) {
      if (out[0] <= 0.0) return kNegInf;
      return log_scale + std::log(out[0]);
    }
    const double scale = std::max(out[0], out[1]);
    if (scale <= 0.0) return kNegInf;
    m0[static_cast<std::size_t>(v)] = out[0] / scale;
    m1[static_cast<std::size_t>(v)] = out[1] / scale;
    log_scale += std::log(scale);
  }
  throw std::logic_error("clt topological order did not end at the root");
}

// Max-product completion of one component given evidence. Log domain.
void clt_mpe_one(const CircuitStructure& s, const Eigen::VectorXd& pr,
                 std::span<const std::uint8_t> x, std::span<const std::uint8_t> observed,
                 const std::vector<int>& topo, const std::vector<std::vector<int>>& children,
                 std::vector<std::uint8_t>& out) {
  const int D = s.num_vars;
  std::vector<double> s0(static_cast<std::size_t>(D)), s1(static_cast<std::size_t>(D));
  // choice[v][b]: maximising value of x_v when the parent takes value b.
  std::vector<std::array<std::uint8_t, 2>> choice(static_cast<std::size_t>(D));
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    const int v = *it;
    double child_sum[2] = {0.0, 0.0};
    for (int c : children[static_cast<std::size_t>(v)]) {
      child_sum[0] += s0[static_cast<std::size_t>(c)];
      child_sum[1] += s1[static_cast<std::size_t>(c)];
    }
    const bool is_root = s.parent[static_cast<std::size_t>(v)] == -1;
    const bool obs = observed[static_cast<std::size_t>(v)] != 0;
    const bool val1 = obs && x[static_cast<std::size_t>(v)] != 0;
    for (int b = 0; b < (is_root ? 1 : 2); ++b) {
      const double q1 = b == 0 || is_root ? pr[2 * v] : pr[2 * v + 1];
      const double score0 = obs && val1 ? kNegInf : std::log1p(-q1) + child_sum[0];
      const double score1 = obs && !val1 ? kNegInf : std::log(q1) + child_sum[1];
      const bool pick1 = score1 >= score0;
      const double best = pick1 ? score1 : score0;
      choice[static_cast<std::size_t>(v)][static_cast<std::size_t>(b)] = pick1 ? 1 : 0;
      (b == 0 ? s0 : s1)[static_cast<std::size_t>(v)] = best;
    }
  }
  // Descend root-first, assigning each variable its maximising value given
  // the parent's already-assigned value.
  for (int v : topo) {
    const int p = s.parent[static_cast<std::size_t>(v)];
    const std::uint8_t b = p == -1 ? 0 : out[static_cast<std::size_t>(p)];
    out[static_cast<std::size_t>(v)] = choice[static_cast<std::size_t>(v)][b];
  }
  for (int v = 0; v < D; ++v) {
    if (observed[static_cast<std::size_t>(v)]) {
      out[static_cast<std::size_t>(v)] = x[static_cast<std::size_t>(v)];
    }
  }
}

}  // namespace

LeafParams make_leaf_params(const CircuitStructure& s, Eigen::VectorXd raw, double eps) {
  if (raw.size() != param_dim(s)) {
    throw std::invalid_argument("leaf parameter length does not match structure");
  }
  for (Eigen::Index i = 0; i < raw.size(); ++i) {
    if (!std::isfinite(raw[i])) throw std::invalid_argument("leaf parameter not finite");
    raw[i] = std::min(1.0 - eps, std::max(eps, raw[i]));
  }
  return LeafParams{std::move(raw)};
}

CompiledPC make_compiled_pc(CircuitStructure structure, Eigen::VectorXd weights,
                            Eigen::MatrixXd params, PcMetadata metadata) {
  CompiledPC pc{std::move(structure), std::move(weights), std::move(params),
                std::move(metadata)};
  validate_pc(pc);
  return pc;
}

void validate_pc(const CompiledPC& pc) {
  validate_structure(pc.structure);
  if (pc.weights.size() < 1) throw std::invalid_argument("compiled PC has no components");
  if (pc.params.rows() != param_dim(pc.structure) || pc.params.cols() != pc.weights.size()) {
    throw std::invalid_argument("compiled PC parameter matrix has wrong shape");
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < pc.weights.size(); ++i) {
    const double w = pc.weights[i];
    if (!std::isfinite(w) || w < 0.0) throw std::invalid_argument("component weight invalid");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("component weights sum to " + std::to_string(total) +
                                ", expected 1");
  }
  for (Eigen::Index i = 0; i < pc.params.size(); ++i) {
    const double p = pc.params.data()[i];
    if (!std::isfinite(p) || p < 0.0 || p > 1.0) {
      throw std::invalid_argument("leaf probability outside [0, 1]");
    }
  }
}

double component_log_density(const CircuitStructure& s, const Eigen::VectorXd& params,
                             std::span<const std::uint8_t> x) {
  check_row(s, x);
  if (params.size() != param_dim(s)) {
    throw std::invalid_argument("leaf parameter length does not match structure");
  }
  double ll = 0.0;
  if (s.kind == StructureKind::Factorised) {
    for (int v = 0; v < s.num_vars; ++v) {
      const double p = params[v];
      ll += x[static_cast<std::size_t>(v)] ? std::log(p) : std::log1p(-p);
    }
  } else {
    for (int v = 0; v < s.num_vars; ++v) {
      const int par = s.parent[static_cast<std::size_t>(v)];
      const int slot = (par == -1 || x[static_cast<std::size_t>(par)] == 0) ? 2 * v : 2 * v + 1;
      const double p = params[slot];
      ll += x[static_cast<std::size_t>(v)] ? std::log(p) : std::log1p(-p);
    }
  }
  return ll;
}

double mixture_log_density(const CompiledPC& pc, std::span<const std::uint8_t> x) {
  double best = kNegInf;
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(pc.num_components()));
  for (Eigen::Index i = 0; i < pc.num_components(); ++i) {
    if (pc.weights[i] == 0.0) continue;
    const double t =
        std::log(pc.weights[i]) + component_log_density(pc.structure, pc.params.col(i), x);
    terms.push_back(t);
    best = std::max(best, t);
  }
  if (terms.empty() || best == kNegInf) return kNegInf;
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - best);
  return best + std::log(acc);
}

double component_marginal_log_density(const CircuitStructure& s, const Eigen::VectorXd& params,
                                      std::span<const std::uint8_t> x,
                                      std::span<const std::uint8_t> observed) {
  check_row(s, x);
  if (observed.size() != x.size()) throw std::invalid_argument("mask length mismatch");
  if (s.kind == StructureKind::Factorised) {
    double ll = 0.0;
    for (int v = 0; v < s.num_vars; ++v) {
      if (!observed[static_cast<std::size_t>(v)]) continue;  // leaf marginal is 1
      const double p = params[v];
      ll += x[static_cast<std::size_t>(v)] ? std::log(p) : std::log1p(-p);
    }
    return ll;
  }
  const auto topo = clt_topological_order(s);
  const auto children = clt_children(s);
  return clt_marginal_one(s, params, x, observed, topo, children);
}

double marginal_log_density(const CompiledPC& pc, std::span<const std::uint8_t> x,
                            std::span<const std::uint8_t> observed) {
  const auto topo = pc.structure.kind == StructureKind::Clt
                        ? clt_topological_order(pc.structure)
                        : std::vector<int>{};
  const auto children = pc.structure.kind == StructureKind::Clt
                            ? clt_children(pc.structure)
                            : std::vector<std::vector<int>>{};
  check_row(pc.structure, x);
  if (observed.size() != x.size()) throw std::invalid_argument("mask length mismatch");
  double best = kNegInf;
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(pc.num_components()));
  for (Eigen::Index i = 0; i < pc.num_components(); ++i) {
    if (pc.weights[i] == 0.0) continue;
    double comp;
    if (pc.structure.kind == StructureKind::Factorised) {
      comp = 0.0;
      for (int v = 0; v < pc.structure.num_vars; ++v) {
        if (!observed[static_cast<std::size_t>(v)]) continue;
        const double p = pc.params(v, i);
        comp += x[static_cast<std::size_t>(v)] ? std::log(p) : std::log1p(-p);
      }
    } else {
      comp = clt_marginal_one(pc.structure, pc.params.col(i), x, observed, topo, children);
    }
    const double t = std::log(pc.weights[i]) + comp;
    terms.push_back(t);
    best = std::max(best, t);
  }
  if (terms.empty() || best == kNegInf) return kNegInf;
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - best);
  return best + std::log(acc);
}

MpeResult mpe_complete(const CompiledPC& pc, std::span<const std::uint8_t> x,
                       std::span<const std::uint8_t> observed) {
  check_row(pc.structure, x);
  if (observed.size() != x.size()) throw std::invalid_argument("mask length mismatch");
  Eigen::Index best_i = -1;
  double best_score = kNegInf;
  for (Eigen::Index i = 0; i < pc.num_components(); ++i) {
    if (pc.weights[i] == 0.0) continue;
    const double score =
        std::log(pc.weights[i]) +
        component_marginal_log_density(pc.structure, pc.params.col(i), x, observed);
    if (score > best_score) {
      best_score = score;
      best_i = i;
    }
  }
  if (best_i < 0) throw std::invalid_argument("no component with positive weight");

  MpeResult result;
  result.component = best_i;
  result.completion.assign(x.begin(), x.end());
  if (pc.structure.kind == StructureKind::Factorised) {
    for (int v = 0; v < pc.structure.num_vars; ++v) {
      if (!observed[static_cast<std::size_t>(v)]) {
        result.completion[static_cast<std::size_t>(v)] = pc.params(v, best_i) >= 0.5 ? 1 : 0;
      }
    }
  } else {
    const auto topo = clt_topological_order(pc.structure);
    const auto children = clt_children(pc.structure);
    clt_mpe_one(pc.structure, pc.params.col(best_i), x, observed, topo, children,
                result.completion);
  }
  return result;
}

BinaryDataset sample(const CompiledPC& pc, std::size_t count, std::uint64_t seed) {
  validate_pc(pc);
  CounterRng rng = CounterRng::keyed(seed, {rng_stream::kSampling});
  BinaryDataset out;
  out.num_vars = pc.structure.num_vars;
  out.values.resize(count * static_cast<std::size_t>(out.num_vars));

  const auto topo = pc.structure.kind == StructureKind::Clt
                        ? clt_topological_order(pc.structure)
                        : std::vector<int>{};
  for (std::size_t r = 0; r < count; ++r) {
    // Component index by inverse-CDF over the weights.
    const double u = rng.next_unit();
    double cum = 0.0;
    Eigen::Index comp = pc.num_components() - 1;
    for (Eigen::Index i = 0; i < pc.num_components(); ++i) {
      cum += pc.weights[i];
      if (u < cum) {
        comp = i;
        break;
      }
    }
    std::uint8_t* row = out.values.data() + r * static_cast<std::size_t>(out.num_vars);
    if (pc.structure.kind == StructureKind::Factorised) {
      for (int v = 0; v < out.num_vars; ++v) {
        row[v] = rng.next_unit() < pc.params(v, comp) ? 1 : 0;
      }
    } else {
      for (int v : topo) {
        const int par = pc.structure.parent[static_cast<std::size_t>(v)];
        const int slot = (par == -1 || row[par] == 0) ? 2 * v : 2 * v + 1;
        row[v] = rng.next_unit() < pc.params(slot, comp) ? 1 : 0;
      }
    }
  }
  return out;
}

BinaryDataset generate_synthetic(const CompiledPC& ground_truth, std::size_t count,
                                 std::uint64_t seed) {
  BinaryDataset data = sample(ground_truth, count, seed);
  data.split_tag = "train";
  return data;
}

}  // namespace cmpc
