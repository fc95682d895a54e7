#include "cmpc/brute_force.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace cmpc {

namespace {

constexpr int kMaxEnumVars = 20;

void check_enum_guard(const CompiledPC& pc) {
  if (pc.structure.num_vars > kMaxEnumVars) {
    throw std::invalid_argument("brute-force enumeration limited to 20 variables");
  }
}

double component_density_linear(const CompiledPC& pc, Eigen::Index i,
                                std::span<const std::uint8_t> x) {
  double prob = 1.0;
  const auto& s = pc.structure;
  for (int v = 0; v < s.num_vars; ++v) {
    double p1;
    if (s.kind == StructureKind::Factorised) {
      p1 = pc.params(v, i);
    } else {
      const int par = s.parent[static_cast<std::size_t>(v)];
      p1 = (par == -1 || x[static_cast<std::size_t>(par)] == 0) ? pc.params(2 * v, i)
                                                                : pc.params(2 * v + 1, i);
    }
    prob *= x[static_cast<std::size_t>(v)] ? p1 : 1.0 - p1;
  }
  return prob;
}

double mixture_density_linear(const CompiledPC& pc, std::span<const std::uint8_t> x) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < pc.num_components(); ++i) {
    if (pc.weights[i] == 0.0) continue;
    total += pc.weights[i] * component_density_linear(pc, i, x);
  }
  return total;
}

}  // namespace

double brute_force_log_density(const CompiledPC& pc, std::span<const std::uint8_t> x) {
  check_enum_guard(pc);
  if (static_cast<int>(x.size()) != pc.structure.num_vars) {
    throw std::invalid_argument("row length does not match num_vars");
  }
  return std::log(mixture_density_linear(pc, x));
}

double brute_force_total_mass(const CompiledPC& pc) {
  check_enum_guard(pc);
  const int D = pc.structure.num_vars;
  std::vector<std::uint8_t> state(static_cast<std::size_t>(D), 0);
  double mass = 0.0;
  for (std::uint64_t code = 0; code < (std::uint64_t{1} << D); ++code) {
    for (int v = 0; v < D; ++v) state[static_cast<std::size_t>(v)] = (code >> v) & 1u;
    mass += mixture_density_linear(pc, state);
  }
  return mass;
}

double brute_force_marginal_log_density(const CompiledPC& pc, std::span<const std::uint8_t> x,
                                        std::span<const std::uint8_t> observed) {
  check_enum_guard(pc);
  const int D = pc.structure.num_vars;
  if (static_cast<int>(x.size()) != D || observed.size() != x.size()) {
    throw std::invalid_argument("row/mask length does not match num_vars");
  }
  std::vector<int> free_vars;
  for (int v = 0; v < D; ++v) {
    if (!observed[static_cast<std::size_t>(v)]) free_vars.push_back(v);
  }
  std::vector<std::uint8_t> state(x.begin(), x.end());
  double mass = 0.0;
  for (std::uint64_t code = 0; code < (std::uint64_t{1} << free_vars.size()); ++code) {
    for (std::size_t k = 0; k < free_vars.size(); ++k) {
      state[static_cast<std::size_t>(free_vars[k])] = (code >> k) & 1u;
    }
    mass += mixture_density_linear(pc, state);
  }
  return std::log(mass);
}

}  // namespace cmpc
