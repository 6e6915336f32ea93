#pragma once

// Token sequence -> walk posterior parameters. Embeddings plus sinusoidal
// positions, pre-norm self-attention blocks, then L learnable queries attend
// to the token states and a linear readout maps each query to K logits.

#include "hsn/nn.hpp"
#include "hsn/walk.hpp"

#include <vector>

namespace hsn {

struct EncoderConfig {
  int vocab_size = 0;
  int embed_dim = 256;
  int n_blocks = 2;
  int n_heads = 2;
  int hidden_dim = 256;
  double dropout = 0.2;
  int length = 0;  // L readout queries
  int nodes = 0;   // K output width

  void validate() const;
};

struct TransformerBlock {
  nn::LayerNorm ln_attn, ln_ff;
  nn::Linear wq, wk, wv, wo, ff_in, ff_out;

  static TransformerBlock create(int width, int hidden, Rng& rng);
  void collect(const std::string& prefix, nn::ParamList& out) const;
};

/// h: (B*L) x K, rows ordered sequence-major (row b*L + i is h_{i+1} of sequence b).
struct EncoderOutput {
  Tensor h;
  Eigen::Index batch = 0;
  int length = 0;
};

class Encoder {
 public:
  Encoder() = default;
  Encoder(const EncoderConfig& cfg, Rng& rng);

  const EncoderConfig& config() const { return cfg_; }

  /// (B*T) x D token embeddings with positions added. Sequences must share length T.
  Tensor embed(const std::vector<std::vector<int>>& batch) const;
  EncoderOutput encode(const std::vector<std::vector<int>>& batch, bool training, Rng& rng) const;
  void collect(nn::ParamList& out) const;
  /// Sets the readout to zero so every output is exactly zero.
  void zero_readout();

  Tensor embedding;  // V x D
  std::vector<TransformerBlock> blocks;
  Tensor queries;  // L x D
  TransformerBlock readout_block;
  nn::LayerNorm ln_kv, ln_out;
  nn::Linear readout;

 private:
  Tensor self_block(const TransformerBlock& b, const Tensor& x, Eigen::Index batch, Eigen::Index t, bool training,
                    Rng& rng) const;
  EncoderConfig cfg_;
};

/// rho = softmax(h_1), f^[i] = exp(h_{i+1}) (shifted by the detached row max,
/// which leaves every transition matrix unchanged).
WalkTensors to_walk_tensors(const EncoderOutput& out);
/// Per-sequence numeric parameters.
std::vector<WalkPosteriorParams> to_walk_params(const EncoderOutput& out);

}  // namespace hsn
