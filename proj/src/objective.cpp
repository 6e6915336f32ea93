#include "hsn/objective.hpp"

#include "hsn/errors.hpp"

#include <cmath>

namespace hsn {

double cyclical_beta(std::int64_t step, std::int64_t total_steps, int n_cycles, double ramp_fraction) {
  if (total_steps < 1 || n_cycles < 1 || !(ramp_fraction > 0.0 && ramp_fraction <= 1.0)) {
    throw ConfigError("invalid annealing schedule");
  }
  if (step < 0 || step >= total_steps) throw ConfigError("annealing step out of range");
  const double period = static_cast<double>(total_steps) / n_cycles;
  const double pos = std::fmod(static_cast<double>(step), period) / period;
  return std::min(1.0, pos / ramp_fraction);
}

Tensor kl_threshold(const Tensor& kl, double threshold) { return ops::floor_threshold(kl, threshold); }

double mutual_information_estimate(const WalkTensors& batch, const WalkTensors& prior, const Tensor& adj) {
  ad::NoGradGuard guard;
  const Tensor a = adj.detach();
  double mean_kl = 0.0;
  for (Eigen::Index n = 0; n < batch.batch(); ++n) {
    WalkTensors one;
    one.rho = Tensor(Matrix(batch.rho.value().row(n)));
    for (const auto& w : batch.weights) one.weights.emplace_back(Matrix(w.value().row(n)));
    mean_kl += kl_walks(one, prior, a).item();
  }
  mean_kl /= static_cast<double>(batch.batch());
  return mean_kl - kl_walks_aggregated(batch, prior, a).item();
}

ObjectiveTerms hsn_objective(const HsnModel& model, const std::vector<std::vector<int>>& batch,
                             const ObjectiveOptions& opts, Rng& rng) {
  if (batch.empty()) throw ConfigError("objective needs a non-empty batch");
  if (!(opts.beta >= 0.0 && opts.beta <= 1.0)) throw ConfigError("annealing weight must lie in [0, 1]");
  const Temperature tau(opts.tau);

  const Tensor logits = model.scorer.logits();
  const Tensor adj = sample_relaxed_graph(logits, tau, rng);
  const EncoderOutput enc = model.encoder.encode(batch, opts.training, rng);
  const WalkTensors q = to_walk_tensors(enc);
  const WalkTensors prior = model.prior();
  const std::vector<Tensor> steps = sample_relaxed_walks(q, adj, tau, rng);

  const Tensor rec = ops::mean(model.log_likelihood(batch, steps, opts.training, rng));
  const Tensor kl_w = kl_walks_aggregated(q, prior, adj);
  const Tensor kl_g = kl_graphs_logits(logits, model.config().prior_edge_prob);

  ObjectiveTerms t;
  t.reconstruction = rec.item();
  t.kl_walk_aggregated = kl_w.item();
  t.kl_graph = kl_g.item();
  t.beta_walk = t.beta_graph = opts.beta;
  if (!std::isfinite(t.reconstruction) || !std::isfinite(t.kl_walk_aggregated) || !std::isfinite(t.kl_graph)) {
    throw NumericError("non-finite objective term (rec " + std::to_string(t.reconstruction) + ", kl_walk " +
                       std::to_string(t.kl_walk_aggregated) + ", kl_graph " + std::to_string(t.kl_graph) +
                       ", batch " + std::to_string(batch.size()) + ")");
  }

  Tensor loss = ops::neg(rec);
  if (opts.beta > 0.0) {
    const bool thresholded = opts.beta < 1.0;
    const Tensor w = thresholded ? kl_threshold(kl_w, opts.kl_threshold) : kl_w;
    const Tensor g = thresholded ? kl_threshold(kl_g, opts.kl_threshold) : kl_g;
    loss = ops::add(loss, ops::scale(ops::add(w, g), opts.beta));
  }
  t.loss = loss;
  t.loss_value = loss.item();
  if (opts.compute_mi) t.mi_estimate = mutual_information_estimate(q, prior, adj);
  return t;
}

}  // namespace hsn
