#pragma once

#include <cstdint>

#include "cmpc/dataset.hpp"
#include "cmpc/decoder.hpp"
#include "cmpc/quadrature.hpp"
#include "cmpc/structure.hpp"
#include "cmpc/trainer.hpp"

namespace cmpc {

struct LatOptConfig {
  int max_epochs = 50;
  int patience = 15;
  int batch_size = 128;
  std::uint64_t seed = 0;
  AdamConfig adam;
};

struct LatOptResult {
  IntegrationRule rule;
  TrainReport report;
};

// Post-training refinement of the integration points with the decoder
// frozen: Adam ascent on the mixture log-likelihood over the points only,
// mini-batched over the data, early-stopped on validation LL computed with
// the current candidate points. Weights stay uniform at 1/N. The initial
// points count as a checkpoint candidate, so zero epochs returns them
// unchanged; the decoder is never mutated.
LatOptResult latent_optimise(const Decoder& dec, const CircuitStructure& structure,
                             const IntegrationRule& init, const BinaryDataset& train,
                             const BinaryDataset& valid, const LatOptConfig& config);

}  // namespace cmpc
