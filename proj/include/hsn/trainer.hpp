#pragma once

// Minibatch training loop: one relaxed graph sample and one relaxed walk per
// sequence per step, cyclical KL annealing, Adam, resumable checkpoints.

#include "hsn/adam.hpp"
#include "hsn/checkpoint.hpp"
#include "hsn/model.hpp"
#include "hsn/objective.hpp"
#include "hsn/synthetic.hpp"

#include <filesystem>
#include <map>
#include <string>

namespace hsn {

struct TrainConfig {
  int batch_size = 256;
  double learning_rate = 1e-4;
  int epochs = 200;
  double tau = 0.75;
  double prior_edge_prob = 0.2;
  int anneal_cycles = 4;
  double ramp_fraction = 0.5;
  double kl_threshold = 0.1;
  std::uint64_t seed = 0;

  int embed_dim = 256;
  int n_blocks = 2;
  int n_heads = 2;
  int hidden_dim = 256;
  double dropout = 0.2;
  int scorer_hidden = 256;
  double scorer_input_std = 1.0;
  int symbol_dim = 0;
  bool trainable_prior = false;

  LikelihoodMode likelihood = LikelihoodMode::BagEmission;
  int decoder_layers = 2;
  int decoder_heads = 2;
  int decoder_width = 64;
  int decoder_hidden = 128;
  double word_dropout = 0.3;

  int checkpoint_every = 1;  // epochs

  void validate() const;
  /// Flat `key = value` text, one key per line, in a fixed order.
  std::string to_text() const;
  /// Defaults overlaid with `kv`, validated.
  static TrainConfig from_map(const std::map<std::string, std::string>& kv);
  /// Applies the entries of `kv` on top of this configuration.
  void apply(const std::map<std::string, std::string>& kv);
};

/// Parses `key = value` lines; '#' starts a comment. Errors carry the line number.
std::map<std::string, std::string> parse_key_values(const std::string& text, const std::string& source = "<config>");

ModelConfig make_model_config(const TrainConfig& cfg, int nodes, int vocab_size, int length);

/// Fresh model for `spec`, initialized from stream Rng(cfg.seed).split(1).
HsnModel make_model(const TrainConfig& cfg, const GroundTruthSpec& spec);
/// Copies "param/<name>" tensors into `model`. Throws CheckpointMismatch on
/// missing names or shape differences.
void load_parameters(HsnModel& model, const Checkpoint& ckpt);
/// Rebuilds the model recorded in `ckpt` for `spec` and loads its parameters.
HsnModel model_from_checkpoint(const Checkpoint& ckpt, const GroundTruthSpec& spec);

struct MetricsRow {
  int epoch = 0;
  double rec_nll = 0.0;
  double kl_walk = 0.0;
  double kl_graph = 0.0;
  double mi = 0.0;
  double beta = 0.0;
  double auc = 0.0;
  double frobenius = 0.0;
  std::int64_t edges = 0;
};

std::string metrics_header();
std::string to_csv(const MetricsRow& row);

class Trainer {
 public:
  Trainer(HsnModel& model, const Dataset& data, const TrainConfig& cfg);

  /// One optimizer step on the next minibatch. Throws DivergenceError on a non-finite loss.
  ObjectiveTerms step();
  /// Runs the remaining steps of the current epoch and returns its metrics.
  MetricsRow run_epoch();
  bool finished() const { return epoch_ >= cfg_.epochs; }

  int epoch() const { return epoch_; }
  std::int64_t global_step() const { return global_step_; }
  std::int64_t total_steps() const { return total_steps_; }
  std::int64_t steps_per_epoch() const { return steps_per_epoch_; }

  Checkpoint checkpoint() const;
  /// Throws CheckpointMismatch when names, shapes or model dimensions differ.
  void restore(const Checkpoint& ckpt);

 private:
  void start_epoch();
  MetricsRow finish_epoch();

  HsnModel& model_;
  const Dataset& data_;
  TrainConfig cfg_;
  Adam adam_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  int epoch_ = 0;
  std::int64_t global_step_ = 0;
  std::int64_t total_steps_ = 0;
  std::int64_t steps_per_epoch_ = 0;
  // Running sums for the current epoch: rec_nll, kl_walk, kl_graph, batches, last beta, last mi.
  Matrix accum_ = Matrix::Zero(1, 6);
};

/// Writes metrics.csv (appending) and checkpoint.bin under `run_dir`. When
/// `resume` is set and a checkpoint exists, training continues from it.
std::vector<MetricsRow> train(HsnModel& model, const Dataset& data, const TrainConfig& cfg,
                              const std::filesystem::path& run_dir, bool resume = false, bool verbose = false);

}  // namespace hsn
