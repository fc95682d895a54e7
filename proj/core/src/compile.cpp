#include "cmpc/compile.hpp"

#include <stdexcept>

#include "cmpc/likelihood.hpp"

namespace cmpc {

CompiledPC compile(const Decoder& dec, const CircuitStructure& structure,
                   const IntegrationRule& rule) {
  validate_structure(structure);
  if (dec.output_dim != param_dim(structure)) {
    throw std::invalid_argument("decoder output does not match structure parameter count");
  }
  if (rule.dim() != dec.input_dim) {
    throw std::invalid_argument("rule dimension does not match decoder input");
  }
  Decoder frozen = dec;
  freeze_batch_norm_stats(frozen, rule.points);
  const Eigen::MatrixXd logits = forward_eval(frozen, rule.points);
  ClampedProbs probs = logits_to_clamped_probs(logits);

  PcMetadata metadata;
  metadata.method = to_string(rule.method);
  metadata.n_points = rule.size();
  metadata.latent_dim = rule.dim();
  metadata.decoder_digest = decoder_digest(dec);
  return make_compiled_pc(structure, rule.weights, std::move(probs.probs),
                          std::move(metadata));
}

}  // namespace cmpc
