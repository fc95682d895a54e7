#pragma once

#include <cstdint>
#include <span>

#include "cmpc/circuit.hpp"

namespace cmpc {

// Enumeration-based reference implementations, computed with direct products
// and sums in the linear domain and deliberately independent of the query
// code in circuit.cpp. Guarded to num_vars <= 20.

double brute_force_log_density(const CompiledPC& pc, std::span<const std::uint8_t> x);

// Sums the density over all 2^D states.
double brute_force_total_mass(const CompiledPC& pc);

// Sums the density over every assignment of the unobserved variables.
double brute_force_marginal_log_density(const CompiledPC& pc, std::span<const std::uint8_t> x,
                                        std::span<const std::uint8_t> observed);

}  // namespace cmpc
