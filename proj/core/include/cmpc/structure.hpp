#pragma once

#include <string>
#include <vector>

namespace cmpc {

enum class StructureKind { Factorised, Clt };

std::string to_string(StructureKind kind);
StructureKind structure_kind_from_string(const std::string& name);

// Skeleton of a circuit over num_vars binary variables. For Clt, parent[v] is
// the parent variable of v and exactly one root has parent -1; the links must
// form a single tree. For Factorised, parent is empty.
struct CircuitStructure {
  StructureKind kind = StructureKind::Factorised;
  int num_vars = 0;
  std::vector<int> parent;
};

CircuitStructure make_factorised_structure(int num_vars);
CircuitStructure make_clt_structure(std::vector<int> parent);

// Throws std::invalid_argument if the invariants above do not hold.
void validate_structure(const CircuitStructure& s);

// Number of leaf parameters per mixture component: D for Factorised, 2D for
// Clt (slots 2v and 2v+1 hold P(x_v=1 | parent=0) and P(x_v=1 | parent=1);
// the root only uses slot 2v).
int param_dim(const CircuitStructure& s);

int clt_root(const CircuitStructure& s);

// Root-first ordering in which every variable appears after its parent.
std::vector<int> clt_topological_order(const CircuitStructure& s);

std::vector<std::vector<int>> clt_children(const CircuitStructure& s);

}  // namespace cmpc
