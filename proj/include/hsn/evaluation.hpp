#pragma once

// Graph recovery metrics, importance-weighted likelihood and mutual
// information for trained models.

#include "hsn/model.hpp"
#include "hsn/synthetic.hpp"

#include <functional>
#include <iosfwd>
#include <map>

namespace hsn {

/// Mann-Whitney AUC of `probs` against `truth` over unordered pairs i < j;
/// ties count one half. Throws ConfigError when truth has no edges or no non-edges.
double roc_auc_edges(const Matrix& probs, const AdjacencyMatrix& truth);

/// sqrt(sum_ij (G1 - G2)^2) over the full matrix.
double frobenius_diff(const AdjacencyMatrix& g1, const AdjacencyMatrix& g2);
double frobenius_diff(const Matrix& g1, const Matrix& g2);

/// Everything the importance-weighted estimator needs for one sequence.
struct McProblem {
  Matrix edge_probs;            // q(A): independent Bernoulli per pair i < j
  double prior_edge_prob = 0.5; // p(A)
  WalkPosteriorParams posterior;
  WalkPosteriorParams prior;
  /// log p(x | z) for a hard walk.
  std::function<double(const std::vector<int>&)> log_likelihood;
};

/// log (1/(S R)) sum_s sum_r p(x|z) p(z|A) p(A) / (q(z|x,A) q(A)), with z^(r,s)
/// drawn from the posterior walk on the hard graph A^(s) ~ q(A).
double mc_log_marginal(const McProblem& problem, int walks, int graphs, Rng& rng);

struct PerplexityResult {
  double perplexity = 0.0;
  double mean_nll = 0.0;  // nats per sequence
  std::vector<double> log_marginals;
};

/// exp(-sum log p_hat / total tokens) over `sequences`.
PerplexityResult mc_perplexity(const HsnModel& model, const std::vector<std::vector<int>>& sequences, int walks,
                               int graphs, Rng& rng);

/// E_x KL[q(z|x); p] - KL[q*; p] under one hard graph sample, q* aggregated over `sequences`.
double mutual_information(const HsnModel& model, const std::vector<std::vector<int>>& sequences, Rng& rng);
/// Same identity for explicit posteriors on a fixed graph.
double mutual_information(std::span<const WalkPosteriorParams> posteriors, const WalkPrior& prior,
                          const Matrix& adj);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};
MeanStd mean_std(const std::vector<double>& xs);

struct RecoveryReport {
  double roc_auc = 0.0;
  MeanStd frobenius_to_truth;
  MeanStd frobenius_to_random;
  MeanStd edges_inferred;
  std::int64_t edges_truth = 0;
  int samples = 0;
  std::vector<std::uint64_t> seeds;
  bool all_closer_to_truth = true;
};

/// Samples `n` graphs from the posterior and `n` independent random graphs
/// from the truth's model family (`random_model` with fresh seeds).
RecoveryReport recovery_report(const Matrix& probs, const AdjacencyMatrix& truth, const GraphModelConfig& random_model,
                               int n, Rng& rng);

/// Degree distribution averaged over `samples` hard draws from edge probabilities.
std::map<int, double> mean_degree_distribution(const Matrix& probs, int samples, Rng& rng);

void write_report_json(std::ostream& os, const RecoveryReport& r, const std::map<std::string, double>& extra);
/// Columns mirror the ground-truth table: AUC, Frobenius to truth and random, edge counts.
void write_table_csv(std::ostream& os, const std::string& label, const RecoveryReport& r);
/// degree,inferred,truth,erdos_renyi rows.
void write_degree_csv(std::ostream& os, const std::vector<std::pair<std::string, std::map<int, double>>>& columns);

}  // namespace hsn
