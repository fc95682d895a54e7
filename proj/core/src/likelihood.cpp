#include "cmpc/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace cmpc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_shapes(const CircuitStructure& s, const Eigen::MatrixXd& params,
                  const Eigen::MatrixXd& x) {
  if (params.rows() != param_dim(s)) {
    throw std::invalid_argument("parameter matrix rows != param_dim(structure)");
  }
  if (x.cols() != s.num_vars) {
    throw std::invalid_argument("batch columns != num_vars");
  }
}

Eigen::VectorXd log_weights(const Eigen::VectorXd& weights) {
  Eigen::VectorXd lw(weights.size());
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    lw[i] = weights[i] > 0.0 ? std::log(weights[i]) : kNegInf;
  }
  return lw;
}

// Per-component coefficients of S as a function of the batch in the
// {1, x_v, x_par(v), x_v * x_par(v)} basis.
struct ScoreBasis {
  Eigen::VectorXd constant;   // N
  Eigen::MatrixXd lin;        // D x N, coefficient of x_v
  Eigen::MatrixXd par_lin;    // D x N, coefficient of x_par(v) (CLT only)
  Eigen::MatrixXd pair_lin;   // D x N, coefficient of x_v * x_par(v) (CLT only)
};

ScoreBasis make_basis(const CircuitStructure& s, const Eigen::MatrixXd& params) {
  const int D = s.num_vars;
  const Eigen::Index n = params.cols();
  ScoreBasis basis;
  if (s.kind == StructureKind::Factorised) {
    const Eigen::ArrayXXd p = params.array();
    const Eigen::ArrayXXd log_p = p.log();
    const Eigen::ArrayXXd log_1p = (1.0 - p).log();
    basis.lin = (log_p - log_1p).matrix();
    basis.constant = log_1p.colwise().sum().matrix().transpose();
    return basis;
  }
  basis.lin.resize(D, n);
  basis.par_lin.resize(D, n);
  basis.pair_lin.resize(D, n);
  basis.constant = Eigen::VectorXd::Zero(n);
  for (int v = 0; v < D; ++v) {
    const bool is_root = s.parent[static_cast<std::size_t>(v)] == -1;
    const Eigen::ArrayXd q0 = params.row(2 * v).transpose().array();
    const Eigen::ArrayXd a0 = (1.0 - q0).log();
    const Eigen::ArrayXd b0 = q0.log() - a0;
    basis.constant.array() += a0;
    basis.lin.row(v) = b0.transpose();
    if (is_root) {
      basis.par_lin.row(v).setZero();
      basis.pair_lin.row(v).setZero();
    } else {
      const Eigen::ArrayXd q1 = params.row(2 * v + 1).transpose().array();
      const Eigen::ArrayXd a1 = (1.0 - q1).log();
      const Eigen::ArrayXd b1 = q1.log() - a1;
      basis.par_lin.row(v) = (a1 - a0).transpose();
      basis.pair_lin.row(v) = (b1 - b0).transpose();
    }
  }
  return basis;
}

// ---- masked CLT scores and gradients (belief propagation per row) ----

struct TreeScratch {
  std::vector<int> topo;
  std::vector<std::vector<int>> children;
  // per variable: log message to the parent for parent state 0/1
  std::vector<double> lm0, lm1;
  // per variable and own state: sum of children's log messages
  std::vector<double> sub0, sub1;
  // per variable: normalised log belief
  std::vector<double> lb0, lb1;
};

double lse2(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// Upward pass; fills scratch.lm*/sub* and returns log p(x_observed).
double clt_masked_upward(const CircuitStructure& s, const Eigen::Ref<const Eigen::VectorXd>& q,
                         const double* x, const double* obs, TreeScratch& scratch) {
  for (auto it = scratch.topo.rbegin(); it != scratch.topo.rend(); ++it) {
    const int v = *it;
    double sub[2] = {0.0, 0.0};
    for (int c : scratch.children[static_cast<std::size_t>(v)]) {
      sub[0] += scratch.lm0[static_cast<std::size_t>(c)];
      sub[1] += scratch.lm1[static_cast<std::size_t>(c)];
    }
    scratch.sub0[static_cast<std::size_t>(v)] = sub[0];
    scratch.sub1[static_cast<std::size_t>(v)] = sub[1];
    const bool is_root = s.parent[static_cast<std::size_t>(v)] == -1;
    const bool observed = obs[v] != 0.0;
    const bool val1 = observed && x[v] != 0.0;
    const double q_b0 = q[2 * v];
    const double q_b1 = is_root ? q_b0 : q[2 * v + 1];
    double out[2];
    for (int b = 0; b < (is_root ? 1 : 2); ++b) {
      const double q1 = b == 0 ? q_b0 : q_b1;
      const double term0 = observed && val1 ? kNegInf : std::log1p(-q1) + sub[0];
      const double term1 = observed && !val1 ? kNegInf : std::log(q1) + sub[1];
      out[b] = lse2(term0, term1);
    }
    if (is_root) return out[0];
    scratch.lm0[static_cast<std::size_t>(v)] = out[0];
    scratch.lm1[static_cast<std::size_t>(v)] = out[1];
  }
  throw std::logic_error("clt topological order did not end at the root");
}

// Downward pass accumulating d log p(x_obs) / d t_slot, scaled by `scale`,
// into grad_out column `comp`. Requires the upward pass for the same row.
void clt_masked_downward_grad(const CircuitStructure& s,
                              const Eigen::Ref<const Eigen::VectorXd>& q,
                              const Eigen::Ref<const Eigen::VectorXd>& active, const double* x,
                              const double* obs, double log_total, double scale,
                              TreeScratch& scratch, Eigen::MatrixXd& grad_out,
                              Eigen::Index comp) {
  for (int v : scratch.topo) {
    const int par = s.parent[static_cast<std::size_t>(v)];
    const bool observed = obs[v] != 0.0;
    const bool val1 = observed && x[v] != 0.0;
    if (par == -1) {
      const double q_r = q[2 * v];
      const double l0 = observed && val1
                            ? kNegInf
                            : std::log1p(-q_r) + scratch.sub0[static_cast<std::size_t>(v)];
      const double l1 = observed && !val1
                            ? kNegInf
                            : std::log(q_r) + scratch.sub1[static_cast<std::size_t>(v)];
      scratch.lb0[static_cast<std::size_t>(v)] = l0 - log_total;
      scratch.lb1[static_cast<std::size_t>(v)] = l1 - log_total;
      const double post1 = std::exp(scratch.lb1[static_cast<std::size_t>(v)]);
      grad_out(2 * v, comp) += scale * active[2 * v] * (post1 - q_r);
      continue;
    }
    // Cavity: parent belief with this edge's upward message divided out;
    // adding the edge and subtree factors gives the exact log pair marginal.
    const double lc0 =
        scratch.lb0[static_cast<std::size_t>(par)] - scratch.lm0[static_cast<std::size_t>(v)];
    const double lc1 =
        scratch.lb1[static_cast<std::size_t>(par)] - scratch.lm1[static_cast<std::size_t>(v)];
    const double q_b0 = q[2 * v];
    const double q_b1 = q[2 * v + 1];
    double lp[2][2];
    lp[0][0] = observed && val1
                   ? kNegInf
                   : lc0 + std::log1p(-q_b0) + scratch.sub0[static_cast<std::size_t>(v)];
    lp[0][1] = observed && !val1
                   ? kNegInf
                   : lc0 + std::log(q_b0) + scratch.sub1[static_cast<std::size_t>(v)];
    lp[1][0] = observed && val1
                   ? kNegInf
                   : lc1 + std::log1p(-q_b1) + scratch.sub0[static_cast<std::size_t>(v)];
    lp[1][1] = observed && !val1
                   ? kNegInf
                   : lc1 + std::log(q_b1) + scratch.sub1[static_cast<std::size_t>(v)];
    const double pair[2][2] = {{std::exp(lp[0][0]), std::exp(lp[0][1])},
                               {std::exp(lp[1][0]), std::exp(lp[1][1])}};
    grad_out(2 * v, comp) +=
        scale * active[2 * v] * (pair[0][1] - q_b0 * (pair[0][0] + pair[0][1]));
    grad_out(2 * v + 1, comp) +=
        scale * active[2 * v + 1] * (pair[1][1] - q_b1 * (pair[1][0] + pair[1][1]));
    scratch.lb0[static_cast<std::size_t>(v)] = lse2(lp[0][0], lp[1][0]);
    scratch.lb1[static_cast<std::size_t>(v)] = lse2(lp[0][1], lp[1][1]);
  }
}

TreeScratch make_scratch(const CircuitStructure& s) {
  TreeScratch scratch;
  scratch.topo = clt_topological_order(s);
  scratch.children = clt_children(s);
  const std::size_t d = static_cast<std::size_t>(s.num_vars);
  scratch.lm0.resize(d);
  scratch.lm1.resize(d);
  scratch.sub0.resize(d);
  scratch.sub1.resize(d);
  scratch.lb0.resize(d);
  scratch.lb1.resize(d);
  return scratch;
}

// Indices of the K largest entries; ties towards lower index.
void top_k_indices(const Eigen::RowVectorXd& values, int k, std::vector<int>& out) {
  out.resize(static_cast<std::size_t>(values.size()));
  std::iota(out.begin(), out.end(), 0);
  std::nth_element(out.begin(), out.begin() + (k - 1), out.end(), [&](int a, int b) {
    return values[a] != values[b] ? values[a] > values[b] : a < b;
  });
  out.resize(static_cast<std::size_t>(k));
}

LikelihoodResult topk_from_scores(const Eigen::MatrixXd& scores, const Eigen::VectorXd& weights,
                                  int k, Eigen::MatrixXd* responsibilities) {
  if (k < 1 || k > scores.cols()) throw std::invalid_argument("top-k out of range [1, N]");
  const Eigen::VectorXd lw = log_weights(weights);
  LikelihoodResult result;
  result.per_row.resize(scores.rows());
  if (responsibilities) {
    responsibilities->setZero(scores.rows(), scores.cols());
  }
  std::vector<int> selected;
  for (Eigen::Index j = 0; j < scores.rows(); ++j) {
    const Eigen::RowVectorXd weighted = scores.row(j) + lw.transpose();
    top_k_indices(weighted, k, selected);
    double best = kNegInf;
    for (int i : selected) best = std::max(best, weighted[i]);
    if (best == kNegInf) {
      result.per_row[j] = kNegInf;
      continue;
    }
    double acc = 0.0;
    for (int i : selected) {
      if (weighted[i] != kNegInf) acc += std::exp(weighted[i] - best);
    }
    const double lse = best + std::log(acc);
    result.per_row[j] = lse;
    if (responsibilities) {
      for (int i : selected) {
        if (weighted[i] != kNegInf) (*responsibilities)(j, i) = std::exp(weighted[i] - lse);
      }
    }
  }
  result.mean = result.per_row.mean();
  return result;
}

}  // namespace

ClampedProbs logits_to_clamped_probs(const Eigen::MatrixXd& logits, double eps) {
  ClampedProbs out;
  const double hi_logit = std::log((1.0 - eps) / eps);
  out.probs.resize(logits.cols(), logits.rows());
  out.active.resize(logits.cols(), logits.rows());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
      const double t = logits(r, c);
      const double sig = 1.0 / (1.0 + std::exp(-t));
      out.probs(c, r) = std::min(1.0 - eps, std::max(eps, sig));
      out.active(c, r) = std::abs(t) < hi_logit ? 1.0 : 0.0;
    }
  }
  return out;
}

Eigen::MatrixXd parent_gather(const CircuitStructure& s, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd xp = Eigen::MatrixXd::Zero(x.rows(), x.cols());
  for (int v = 0; v < s.num_vars; ++v) {
    const int par = s.parent.empty() ? -1 : s.parent[static_cast<std::size_t>(v)];
    if (par != -1) xp.col(v) = x.col(par);
  }
  return xp;
}

Eigen::MatrixXd component_scores(const CircuitStructure& s, const Eigen::MatrixXd& params,
                                 const Eigen::MatrixXd& x) {
  check_shapes(s, params, x);
  const ScoreBasis basis = make_basis(s, params);
  Eigen::MatrixXd scores = x * basis.lin;
  if (s.kind == StructureKind::Clt) {
    const Eigen::MatrixXd xp = parent_gather(s, x);
    scores.noalias() += xp * basis.par_lin;
    scores.noalias() += (x.array() * xp.array()).matrix() * basis.pair_lin;
  }
  scores.rowwise() += basis.constant.transpose();
  return scores;
}

Eigen::MatrixXd masked_component_scores(const CircuitStructure& s,
                                        const Eigen::MatrixXd& params,
                                        const Eigen::MatrixXd& x,
                                        const Eigen::MatrixXd& observed) {
  check_shapes(s, params, x);
  if (observed.rows() != x.rows() || observed.cols() != x.cols()) {
    throw std::invalid_argument("mask shape does not match batch");
  }
  if (s.kind == StructureKind::Factorised) {
    const Eigen::ArrayXXd p = params.array();
    const Eigen::MatrixXd log_1p = (1.0 - p).log().matrix();
    const Eigen::MatrixXd lin = p.log().matrix() - log_1p;
    Eigen::MatrixXd scores = (x.array() * observed.array()).matrix() * lin;
    scores.noalias() += observed * log_1p;
    return scores;
  }
  TreeScratch scratch = make_scratch(s);
  Eigen::MatrixXd scores(x.rows(), params.cols());
  for (Eigen::Index j = 0; j < x.rows(); ++j) {
    const Eigen::RowVectorXd row = x.row(j);
    const Eigen::RowVectorXd obs = observed.row(j);
    for (Eigen::Index i = 0; i < params.cols(); ++i) {
      scores(j, i) = clt_masked_upward(s, params.col(i), row.data(), obs.data(), scratch);
    }
  }
  return scores;
}

LikelihoodResult weighted_log_sum_exp(const Eigen::MatrixXd& scores,
                                      const Eigen::VectorXd& weights) {
  if (scores.cols() != weights.size()) {
    throw std::invalid_argument("scores/weights size mismatch");
  }
  const Eigen::VectorXd lw = log_weights(weights);
  LikelihoodResult result;
  result.per_row.resize(scores.rows());
  for (Eigen::Index j = 0; j < scores.rows(); ++j) {
    double best = kNegInf;
    for (Eigen::Index i = 0; i < scores.cols(); ++i) {
      const double t = scores(j, i) + lw[i];
      if (t > best) best = t;
    }
    if (best == kNegInf) {
      result.per_row[j] = kNegInf;
      continue;
    }
    double acc = 0.0;
    for (Eigen::Index i = 0; i < scores.cols(); ++i) {
      const double t = scores(j, i) + lw[i];
      if (t != kNegInf) acc += std::exp(t - best);
    }
    result.per_row[j] = best + std::log(acc);
  }
  result.mean = result.per_row.mean();
  return result;
}

LikelihoodResult batch_log_likelihood(const CircuitStructure& s, const Eigen::MatrixXd& params,
                                      const Eigen::VectorXd& weights, const Eigen::MatrixXd& x) {
  return weighted_log_sum_exp(component_scores(s, params, x), weights);
}

LikelihoodResult topk_log_likelihood(const CircuitStructure& s, const Eigen::MatrixXd& params,
                                     const Eigen::VectorXd& weights, const Eigen::MatrixXd& x,
                                     int k) {
  return topk_from_scores(component_scores(s, params, x), weights, k, nullptr);
}

LikelihoodResult masked_log_likelihood(const CircuitStructure& s, const Eigen::MatrixXd& params,
                                       const Eigen::VectorXd& weights, const Eigen::MatrixXd& x,
                                       const Eigen::MatrixXd& observed) {
  return weighted_log_sum_exp(masked_component_scores(s, params, x, observed), weights);
}

LikelihoodGradient batch_log_likelihood_grad(const CircuitStructure& s,
                                             const ClampedProbs& probs,
                                             const Eigen::VectorXd& weights,
                                             const Eigen::MatrixXd& x,
                                             std::optional<int> top_k,
                                             const Eigen::MatrixXd* observed) {
  if (top_k && observed) {
    throw std::invalid_argument("top-k and masked objectives cannot be combined");
  }
  const Eigen::MatrixXd& params = probs.probs;
  const double batch = static_cast<double>(x.rows());
  const Eigen::Index n = params.cols();

  const Eigen::MatrixXd scores = observed
                                     ? masked_component_scores(s, params, x, *observed)
                                     : component_scores(s, params, x);

  LikelihoodGradient out;
  Eigen::MatrixXd resp;  // B x N
  if (top_k) {
    out.value = topk_from_scores(scores, weights, *top_k, &resp);
  } else {
    out.value = weighted_log_sum_exp(scores, weights);
    const Eigen::VectorXd lw = log_weights(weights);
    resp.resize(scores.rows(), n);
    for (Eigen::Index j = 0; j < scores.rows(); ++j) {
      for (Eigen::Index i = 0; i < n; ++i) {
        const double t = scores(j, i) + lw[i];
        resp(j, i) = t == kNegInf ? 0.0 : std::exp(t - out.value.per_row[j]);
      }
    }
  }

  out.logit_grad.resize(n, param_dim(s));
  if (s.kind == StructureKind::Factorised) {
    const Eigen::MatrixXd xe = observed ? (x.array() * observed->array()).matrix() : x;
    Eigen::MatrixXd gt = resp.transpose() * xe;  // N x D
    if (observed) {
      const Eigen::MatrixXd obs_mass = resp.transpose() * *observed;  // N x D
      gt.array() -= params.transpose().array() * obs_mass.array();
    } else {
      const Eigen::VectorXd rsum = resp.colwise().sum();
      gt.array() -= params.transpose().array().colwise() * rsum.array();
    }
    out.logit_grad = (gt.array() * probs.active.transpose().array()).matrix() / batch;
    return out;
  }

  if (observed) {
    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(param_dim(s), n);
    TreeScratch scratch = make_scratch(s);
    for (Eigen::Index j = 0; j < x.rows(); ++j) {
      const Eigen::RowVectorXd row = x.row(j);
      const Eigen::RowVectorXd obs = observed->row(j);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double r = resp(j, i);
        if (r == 0.0) continue;
        const double log_total =
            clt_masked_upward(s, params.col(i), row.data(), obs.data(), scratch);
        clt_masked_downward_grad(s, params.col(i), probs.active.col(i), row.data(), obs.data(),
                                 log_total, r / batch, scratch, grad, i);
      }
    }
    out.logit_grad = grad.transpose();
    return out;
  }

  const Eigen::MatrixXd xp = parent_gather(s, x);
  const Eigen::MatrixXd xxp = (x.array() * xp.array()).matrix();
  const Eigen::MatrixXd m_all = resp.transpose() * x;  // N x D, sum_j R_ji x_jv
  const Eigen::MatrixXd m1 = resp.transpose() * xxp;   // N x D
  const Eigen::MatrixXd w1 = resp.transpose() * xp;    // N x D
  const Eigen::VectorXd rsum = resp.colwise().sum();   // N
  for (int v = 0; v < s.num_vars; ++v) {
    const Eigen::ArrayXd q0 = params.row(2 * v).transpose().array();
    const Eigen::ArrayXd q1 = params.row(2 * v + 1).transpose().array();
    const Eigen::ArrayXd w1v = w1.col(v).array();
    const Eigen::ArrayXd w0v = rsum.array() - w1v;
    const Eigen::ArrayXd m1v = m1.col(v).array();
    const Eigen::ArrayXd m0v = m_all.col(v).array() - m1v;
    out.logit_grad.col(2 * v) =
        ((m0v - q0 * w0v) * probs.active.row(2 * v).transpose().array()).matrix() / batch;
    out.logit_grad.col(2 * v + 1) =
        ((m1v - q1 * w1v) * probs.active.row(2 * v + 1).transpose().array()).matrix() / batch;
  }
  return out;
}

double dataset_mean_log_likelihood(const CircuitStructure& s, const Eigen::MatrixXd& params,
                                   const Eigen::VectorXd& weights, const BinaryDataset& data,
                                   const MissingMask* mask) {
  constexpr std::size_t kRowChunk = 1024;
  constexpr Eigen::Index kCompChunk = 8192;
  const std::size_t m = data.num_rows();
  if (m == 0) throw std::invalid_argument("empty dataset");
  const Eigen::VectorXd lw = log_weights(weights);
  double total = 0.0;
  std::vector<std::uint32_t> idx;
  for (std::size_t start = 0; start < m; start += kRowChunk) {
    const std::size_t stop = std::min(m, start + kRowChunk);
    idx.resize(stop - start);
    std::iota(idx.begin(), idx.end(), static_cast<std::uint32_t>(start));
    const Eigen::MatrixXd x = data.rows_as_matrix(idx);
    const Eigen::MatrixXd obs = mask ? mask->rows_as_matrix(idx) : Eigen::MatrixXd();
    Eigen::VectorXd row_max = Eigen::VectorXd::Constant(x.rows(), kNegInf);
    Eigen::VectorXd row_acc = Eigen::VectorXd::Zero(x.rows());
    for (Eigen::Index c0 = 0; c0 < params.cols(); c0 += kCompChunk) {
      const Eigen::Index width = std::min(kCompChunk, params.cols() - c0);
      const Eigen::MatrixXd block = params.middleCols(c0, width);
      Eigen::MatrixXd scores =
          mask ? masked_component_scores(s, block, x, obs) : component_scores(s, block, x);
      scores.rowwise() += lw.segment(c0, width).transpose();
      for (Eigen::Index j = 0; j < scores.rows(); ++j) {
        for (Eigen::Index i = 0; i < width; ++i) {
          const double t = scores(j, i);
          if (t == kNegInf) continue;
          if (t <= row_max[j]) {
            row_acc[j] += std::exp(t - row_max[j]);
          } else {
            row_acc[j] = row_acc[j] * std::exp(row_max[j] - t) + 1.0;
            row_max[j] = t;
          }
        }
      }
    }
    for (Eigen::Index j = 0; j < row_max.size(); ++j) {
      total += row_max[j] + std::log(row_acc[j]);
    }
  }
  return total / static_cast<double>(m);
}

}  // namespace cmpc
