#pragma once

// Training objective: reconstruction of the batch under relaxed walks on a
// relaxed graph sample, minus annealed KL terms for the aggregated walk
// posterior and the graph posterior.

#include "hsn/model.hpp"

namespace hsn {

struct ObjectiveOptions {
  double tau = 0.75;
  double beta = 1.0;
  double kl_threshold = 0.1;
  bool training = true;
  /// Also estimate mutual information (mean per-sequence KL minus aggregated KL).
  bool compute_mi = true;
};

struct ObjectiveTerms {
  double reconstruction = 0.0;  // mean log-likelihood per sequence
  double kl_walk_aggregated = 0.0;
  double kl_graph = 0.0;
  double mi_estimate = 0.0;
  double beta_walk = 0.0;
  double beta_graph = 0.0;
  double loss_value = 0.0;
  Tensor loss;  // differentiable scalar
};

ObjectiveTerms hsn_objective(const HsnModel& model, const std::vector<std::vector<int>>& batch,
                             const ObjectiveOptions& opts, Rng& rng);

/// Linear ramp 0 -> 1 over the first `ramp_fraction` of each of `n_cycles`
/// equal cycles, then held at 1.
double cyclical_beta(std::int64_t step, std::int64_t total_steps, int n_cycles, double ramp_fraction);

/// max(kl, threshold) with zero gradient below the threshold.
Tensor kl_threshold(const Tensor& kl, double threshold = 0.1);

/// Mean over the batch of KL[q_n || p] minus KL[q* || p], without gradient.
double mutual_information_estimate(const WalkTensors& batch, const WalkTensors& prior, const Tensor& adj);

}  // namespace hsn
