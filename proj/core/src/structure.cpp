#include "cmpc/structure.hpp"

#include <stdexcept>

namespace cmpc {

std::string to_string(StructureKind kind) {
  return kind == StructureKind::Factorised ? "factorised" : "clt";
}

StructureKind structure_kind_from_string(const std::string& name) {
  if (name == "factorised") return StructureKind::Factorised;
  if (name == "clt") return StructureKind::Clt;
  throw std::invalid_argument("unknown structure kind '" + name + "'");
}

CircuitStructure make_factorised_structure(int num_vars) {
  CircuitStructure s{StructureKind::Factorised, num_vars, {}};
  validate_structure(s);
  return s;
}

CircuitStructure make_clt_structure(std::vector<int> parent) {
  CircuitStructure s{StructureKind::Clt, static_cast<int>(parent.size()), std::move(parent)};
  validate_structure(s);
  return s;
}

void validate_structure(const CircuitStructure& s) {
  if (s.num_vars < 1) throw std::invalid_argument("structure needs num_vars >= 1");
  if (s.kind == StructureKind::Factorised) return;
  if (static_cast<int>(s.parent.size()) != s.num_vars) {
    throw std::invalid_argument("clt parent array length must equal num_vars");
  }
  int root = -1;
  for (int v = 0; v < s.num_vars; ++v) {
    const int p = s.parent[v];
    if (p == -1) {
      if (root != -1) throw std::invalid_argument("clt has more than one root");
      root = v;
    } else if (p < 0 || p >= s.num_vars || p == v) {
      throw std::invalid_argument("clt parent index out of range");
    }
  }
  if (root == -1) throw std::invalid_argument("clt has no root");
  // Walking up from every node must reach the root without revisiting.
  for (int v = 0; v < s.num_vars; ++v) {
    int hops = 0;
    int cur = v;
    while (cur != -1) {
      cur = s.parent[cur];
      if (++hops > s.num_vars) {
        throw std::invalid_argument("clt parent links contain a cycle");
      }
    }
  }
}

int param_dim(const CircuitStructure& s) {
  return s.kind == StructureKind::Factorised ? s.num_vars : 2 * s.num_vars;
}

int clt_root(const CircuitStructure& s) {
  for (int v = 0; v < s.num_vars; ++v) {
    if (s.parent[v] == -1) return v;
  }
  throw std::invalid_argument("clt has no root");
}

std::vector<int> clt_topological_order(const CircuitStructure& s) {
  auto children = clt_children(s);
  std::vector<int> order;
  order.reserve(static_cast<std::size_t>(s.num_vars));
  std::vector<int> stack{clt_root(s)};
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    order.push_back(v);
    for (int c : children[static_cast<std::size_t>(v)]) stack.push_back(c);
  }
  return order;
}

std::vector<std::vector<int>> clt_children(const CircuitStructure& s) {
  std::vector<std::vector<int>> children(static_cast<std::size_t>(s.num_vars));
  for (int v = 0; v < s.num_vars; ++v) {
    if (s.parent[v] != -1) children[static_cast<std::size_t>(s.parent[v])].push_back(v);
  }
  return children;
}

}  // namespace cmpc
