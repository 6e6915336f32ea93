#pragma once

// Likelihoods conditioned on a schema: the fixed bag-emission model of the
// synthetic language, and a small causal transformer whose layers prepend
// projected schema symbols to their keys and values (pseudo-self-attention).

#include "hsn/encoder.hpp"
#include "hsn/nn.hpp"

#include <span>
#include <vector>

namespace hsn {

inline constexpr double kEmissionFloor = 1e-10;

/// Per-sequence sum_i log(sum_k z_i^k E[k, x_i] + 1e-10), B x 1.
/// `steps` holds L tensors of shape B x K (one-hot or relaxed).
Tensor bag_log_likelihood(std::span<const Tensor> steps, const Matrix& emission,
                          const std::vector<std::vector<int>>& batch);
double bag_log_likelihood(const Matrix& schema, const Matrix& emission, const std::vector<int>& sequence);

struct PsaWeights {
  Tensor key;    // K x D
  Tensor value;  // K x D
};

/// Single-sequence pseudo-self-attention:
/// softmax(Q [S W_K + P; K]^T / sqrt(D / heads)) [S W_V + P; V] per head, where S is
/// the L x K schema and P the first L rows of the sinusoidal table. The causal
/// mask covers token positions only; every query sees all L symbol slots.
Tensor psa_attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& schema, const PsaWeights& psa,
                     bool causal, int heads = 1);

struct DecoderConfig {
  int vocab_size = 0;  // ids V and V+1 are reserved for BOS and UNK
  int nodes = 0;
  int n_layers = 2;
  int n_heads = 2;
  int width = 64;
  int hidden_dim = 128;
  double word_dropout = 0.3;

  void validate() const;
};

class PsaDecoder {
 public:
  PsaDecoder() = default;
  PsaDecoder(const DecoderConfig& cfg, Rng& rng);

  const DecoderConfig& config() const { return cfg_; }
  int bos() const { return cfg_.vocab_size; }
  int unk() const { return cfg_.vocab_size + 1; }

  /// Next-token logits, (B*T) x V. `schema` is (B*L) x K with rows
  /// sequence-major, or undefined for L = 0. Position t sees tokens < t.
  Tensor logits(const std::vector<std::vector<int>>& batch, const Tensor& schema, int length, bool training,
                Rng& rng) const;
  /// Per-sequence log-likelihood, B x 1.
  Tensor log_likelihood(const std::vector<std::vector<int>>& batch, const Tensor& schema, int length, bool training,
                        Rng& rng) const;
  void collect(nn::ParamList& out) const;

  Tensor embedding;  // (V+2) x D
  struct Layer {
    TransformerBlock block;
    PsaWeights psa;
  };
  std::vector<Layer> layers;
  nn::LayerNorm ln_out;
  nn::Linear out;

 private:
  DecoderConfig cfg_;
};

/// Stacks L step tensors (each B x K) into (B*L) x K rows, sequence-major.
Tensor interleave_steps(std::span<const Tensor> steps);

}  // namespace hsn
