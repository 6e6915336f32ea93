#pragma once

// The HSN model: walk-posterior encoder, edge scorer for the graph posterior,
// walk prior, and the schema-conditioned likelihood.

#include "hsn/decoder.hpp"
#include "hsn/encoder.hpp"
#include "hsn/graph_posterior.hpp"

#include <optional>

namespace hsn {

enum class LikelihoodMode { BagEmission, PsaCausal };

std::string to_string(LikelihoodMode m);
LikelihoodMode parse_likelihood_mode(const std::string& s);

struct ModelConfig {
  int nodes = 0;
  int vocab_size = 0;
  int length = 0;
  double prior_edge_prob = 0.2;
  bool trainable_prior = false;
  LikelihoodMode mode = LikelihoodMode::BagEmission;
  EncoderConfig encoder;
  EdgeScorerConfig scorer;
  DecoderConfig decoder;

  void validate() const;
};

class HsnModel {
 public:
  HsnModel() = default;
  /// `emission` is the K x V bag matrix used in bag-emission mode (may be empty otherwise).
  HsnModel(const ModelConfig& cfg, Matrix emission, Rng& rng);

  const ModelConfig& config() const { return cfg_; }
  const Matrix& emission() const { return emission_; }

  /// Prior walk parameters as tensors (trainable when configured).
  WalkTensors prior() const;
  /// Schema-conditioned log-likelihood, B x 1.
  Tensor log_likelihood(const std::vector<std::vector<int>>& batch, std::span<const Tensor> steps, bool training,
                        Rng& rng) const;
  /// Every trainable tensor with a stable name.
  nn::ParamList parameters() const;

  Encoder encoder;
  EdgeScorer scorer;
  std::optional<PsaDecoder> decoder;
  Tensor prior_rho_logits;                  // 1 x K, trainable prior only
  std::vector<Tensor> prior_log_weights;    // L-1 entries of 1 x K

 private:
  ModelConfig cfg_;
  Matrix emission_;
};

}  // namespace hsn
