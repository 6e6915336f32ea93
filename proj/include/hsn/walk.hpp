#pragma once

// Biased random walks on a (possibly relaxed) graph: transition matrices,
// sampling, exact log-probabilities, step marginals and closed-form KL
// divergences between walk distributions.
//
// Conventions: a transition matrix is column-stochastic, column j being the
// distribution of the next node given the current node j. Step i's matrix
// (0-based) moves the walker from position i to position i + 1.

#include "hsn/relaxed.hpp"
#include "hsn/rng.hpp"
#include "hsn/tensor.hpp"

#include <optional>
#include <span>
#include <vector>

namespace hsn {

/// Prior over walks. `weights` holds one vector (homogeneous walk) or one
/// vector per transition (inhomogeneous walk).
struct WalkPrior {
  RowVector rho;
  std::vector<RowVector> weights;
  bool trainable = false;

  static WalkPrior uniform(int nodes);
  int nodes() const { return static_cast<int>(rho.size()); }
  const RowVector& step_weights(int step) const;
  void validate() const;
};

/// Posterior walk parameters for one sequence: a start distribution and one
/// positive weight vector per transition.
struct WalkPosteriorParams {
  RowVector rho;
  std::vector<RowVector> weights;

  int nodes() const { return static_cast<int>(rho.size()); }
  int length() const { return static_cast<int>(weights.size()) + 1; }
  void validate() const;
};

struct Schema {
  std::vector<int> nodes;
  /// Relaxed one-hot rows (L x K) when sampled in relaxed mode.
  std::optional<Matrix> relaxed;
};

/// Differentiable batch of walk parameters: rho is B x K and each entry of
/// `weights` (one per transition) is B x K.
struct WalkTensors {
  Tensor rho;
  std::vector<Tensor> weights;

  Eigen::Index batch() const { return rho.rows(); }
  Eigen::Index nodes() const { return rho.cols(); }
  int length() const { return static_cast<int>(weights.size()) + 1; }
};

WalkTensors to_tensors(const WalkPrior& prior, int length);
WalkTensors to_tensors(const WalkPosteriorParams& params);
/// Stacks single-sequence parameters into one batch.
WalkTensors stack(std::span<const WalkPosteriorParams> batch);

struct WalkDiagnostics {
  /// Set when a log of a zero probability was clamped.
  bool clamped = false;
};

inline constexpr double kLogFloor = -1e9;

// ---- Differentiable API -------------------------------------------------

/// f: 1 x K positive weights, adj: K x K nonnegative (binary or relaxed).
Tensor transition_matrix(const Tensor& f, const Tensor& adj);

/// L entries of B x K marginals: rho, Q^[0] rho, Q^[1] Q^[0] rho, ...
std::vector<Tensor> step_marginals(const WalkTensors& params, const Tensor& adj);

/// Log-probability of each walk in the batch (B x 1). `steps` holds L one-hot
/// or relaxed B x K matrices; relaxed entries use the bilinear form.
Tensor walk_log_prob(std::span<const Tensor> steps, const WalkTensors& params, const Tensor& adj,
                     WalkDiagnostics* diag = nullptr);

/// Exact KL between two first-order chains given explicit start
/// distributions (1 x K) and per-step transition matrices (K x K).
Tensor kl_markov_chains(const Tensor& rho_q, std::span<const Tensor> q_steps, const Tensor& rho_p,
                        std::span<const Tensor> p_steps, WalkDiagnostics* diag = nullptr);

/// Exact KL[q || p] between a single-sequence posterior (batch 1) and the prior.
Tensor kl_walks(const WalkTensors& q, const WalkTensors& p, const Tensor& adj,
                WalkDiagnostics* diag = nullptr);

/// KL of a step-factorized posterior (L marginals, each 1 x K) against the prior walk.
Tensor kl_walks_mean_field(std::span<const Tensor> q_marginals, const WalkTensors& p, const Tensor& adj,
                           WalkDiagnostics* diag = nullptr);

struct AggregatedPosterior {
  Tensor rho;                 // 1 x K
  std::vector<Tensor> steps;  // L-1 entries, K x K
};

/// Minibatch average of start distributions and transition matrices.
AggregatedPosterior aggregate_posterior(const WalkTensors& batch, const Tensor& adj);

/// KL[q* || p] for the aggregated posterior of a batch.
Tensor kl_walks_aggregated(const WalkTensors& batch, const WalkTensors& p, const Tensor& adj,
                           WalkDiagnostics* diag = nullptr);

/// Relaxed walk samples for a batch: L entries of B x K simplex rows.
std::vector<Tensor> sample_relaxed_walks(const WalkTensors& params, const Tensor& adj, Temperature tau,
                                         Rng& rng);

// ---- Plain numeric API --------------------------------------------------

Matrix transition_matrix(const RowVector& f, const Matrix& adj);
std::vector<RowVector> step_marginals(const WalkPosteriorParams& params, const Matrix& adj);
double walk_log_prob(const Schema& schema, const WalkPosteriorParams& params, const Matrix& adj,
                     WalkDiagnostics* diag = nullptr);
double walk_log_prob(const Schema& schema, const WalkPrior& prior, const Matrix& adj,
                     WalkDiagnostics* diag = nullptr);
double kl_walks(const WalkPosteriorParams& q, const WalkPrior& p, const Matrix& adj,
                WalkDiagnostics* diag = nullptr);
double kl_walks_mean_field(std::span<const RowVector> q_marginals, const WalkPrior& p, const Matrix& adj,
                           WalkDiagnostics* diag = nullptr);

struct AggregatedPosteriorValue {
  RowVector rho;
  std::vector<Matrix> steps;
};
AggregatedPosteriorValue aggregate_posterior(std::span<const WalkPosteriorParams> batch, const Matrix& adj);

/// Hard or relaxed walk sample. `length` must equal params.length() for posteriors.
Schema sample_walk(const WalkPosteriorParams& params, const Matrix& adj, Rng& rng, bool relaxed = false,
                   double tau = 1.0);
Schema sample_walk(const WalkPrior& prior, const Matrix& adj, int length, Rng& rng, bool relaxed = false,
                   double tau = 1.0);

/// Prior parameters expanded to posterior form (weights repeated per step).
WalkPosteriorParams as_params(const WalkPrior& prior, int length);

}  // namespace hsn
