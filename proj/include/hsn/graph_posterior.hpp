#pragma once

// Variational distribution over the symbol graph: an MLP scores every
// unordered symbol pair, edges are independent Bernoullis.

#include "hsn/graph.hpp"
#include "hsn/nn.hpp"
#include "hsn/relaxed.hpp"

namespace hsn {

struct EdgeScorerConfig {
  int nodes = 0;
  int hidden = 256;
  /// 0 selects indicator symbols; otherwise symbols are learnable dense vectors.
  int symbol_dim = 0;
  /// Init scale of the first layer; the output layer uses 1/sqrt(hidden).
  double input_std = 1.0;

  void validate() const;
};

/// g(e_i, e_j) = w2 . tanh(W [e_i; e_j] + b1) + b2, symmetrized by averaging
/// both argument orders. With indicator symbols W [e_i; e_j] = Wa_i + Wb_j.
class EdgeScorer {
 public:
  EdgeScorer() = default;
  EdgeScorer(const EdgeScorerConfig& cfg, Rng& rng);
  /// Scorer whose logits are all `logit` (zero weights, bias `logit`).
  static EdgeScorer constant(const EdgeScorerConfig& cfg, double logit);

  const EdgeScorerConfig& config() const { return cfg_; }
  int nodes() const { return cfg_.nodes; }

  /// Symmetric K x K logits. The diagonal is not meaningful.
  Tensor logits() const;
  void collect(const std::string& prefix, nn::ParamList& out) const;

  Tensor symbols;  // K x S, dense mode only
  Tensor wa, wb;   // (K or S) x H
  Tensor b1, w2;   // 1 x H
  Tensor b2;       // 1 x 1

 private:
  EdgeScorerConfig cfg_;
};

/// 1 off the diagonal, 0 on it.
Matrix off_diagonal_mask(int k);
/// 1 strictly above the diagonal.
Matrix upper_mask(int k);

/// sigmoid(logits) with a zero diagonal.
Tensor edge_probabilities(const Tensor& logits);
Matrix edge_probabilities(const EdgeScorer& scorer);

/// Relaxed graph: one binary-concrete draw per unordered pair, mirrored; zero diagonal.
Tensor sample_relaxed_graph(const Tensor& logits, Temperature tau, Rng& rng);
/// Hard graph: one Bernoulli draw per unordered pair using the upper triangle of `probs`.
AdjacencyMatrix sample_graph(const Matrix& probs, Rng& rng);

/// Sum over unordered pairs of KL[Bern(q) || Bern(p)], with 0 log 0 = 0.
double kl_graphs(const Matrix& q_probs, double p);
/// Differentiable version on probabilities (pairs i < j).
Tensor kl_graphs(const Tensor& q_probs, double p);
/// Differentiable version on logits, stable for saturated edges.
Tensor kl_graphs_logits(const Tensor& logits, double p);

}  // namespace hsn
