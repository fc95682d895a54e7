#pragma once

#include "cmpc/circuit.hpp"
#include "cmpc/decoder.hpp"
#include "cmpc/quadrature.hpp"
#include "cmpc/structure.hpp"

namespace cmpc {

// Turns (decoder, rule) into a standard finite mixture of circuits: one
// eval-mode decoder forward over all N points with batch-norm statistics
// frozen over exactly those points, logits through the logistic function and
// clamping, weights copied from the rule. Deterministic in its inputs.
CompiledPC compile(const Decoder& dec, const CircuitStructure& structure,
                   const IntegrationRule& rule);

}  // namespace cmpc
