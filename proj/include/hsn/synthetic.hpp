#pragma once

// Synthetic languages with a known symbol graph: each node owns a small bag
// of tokens, a sequence is a uniform random walk emitting one token per step.
// The generator is an HMM, so the exact likelihood is available.

#include "hsn/graph.hpp"

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace hsn {

struct TokenBag {
  std::vector<std::pair<int, double>> entries;  // (token, probability)

  double prob(int token) const;
  void validate(int vocab_size) const;
};

struct GroundTruthConfig {
  GraphModelConfig graph;
  int vocab_size = 1000;
  int bag_size = 2;
  int walk_length = 10;
  std::uint64_t seed = 0;

  void validate() const;
};

struct GroundTruthSpec {
  GroundTruthConfig config;
  AdjacencyMatrix graph;
  std::vector<TokenBag> bags;

  int nodes() const { return graph.size(); }
  int vocab_size() const { return config.vocab_size; }
  int walk_length() const { return config.walk_length; }
  /// Dense K x V emission matrix.
  Matrix emission_matrix() const;
  void validate() const;
};

struct SplitRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
};

struct Dataset {
  GroundTruthSpec spec;
  std::vector<std::vector<int>> sequences;
  SplitRange train, valid, test;

  std::size_t size() const { return sequences.size(); }
  /// Contiguous 90/5/5 split of the sequence indices.
  void assign_default_splits();
  void validate() const;
};

GroundTruthSpec build_ground_truth(const GroundTruthConfig& cfg);

/// N uniform-start, uniform-neighbour walks on the ground-truth graph, one token per
/// visited node. Sequence n uses stream rng.split(n). When `walks` is given it
/// receives the visited nodes.
Dataset generate_dataset(const GroundTruthSpec& spec, std::size_t n, const Rng& rng,
                         std::vector<std::vector<int>>* walks = nullptr);

struct ForwardResult {
  double nll = 0.0;
  bool generable = true;
};

/// Exact -log p(x) under the ground-truth HMM via the scaled forward recursion.
/// Non-generable sequences return +inf with generable = false.
ForwardResult hmm_forward(const GroundTruthSpec& spec, const std::vector<int>& sequence);

/// Forward recursion with the transition and emission matrices cached.
class HmmOracle {
 public:
  explicit HmmOracle(const GroundTruthSpec& spec);
  ForwardResult operator()(const std::vector<int>& sequence) const;
  /// Mean NLL over sequences [begin, end) of `data`.
  double mean_nll(const std::vector<std::vector<int>>& data, std::size_t begin, std::size_t end) const;

 private:
  int length_;
  Matrix transition_;  // column-stochastic, K x K
  Matrix emission_t_;  // V x K
};
double hmm_forward_nll(const GroundTruthSpec& spec, const std::vector<int>& sequence);

/// Readable three-letter names for token ids (cosmetic).
std::vector<std::string> vocabulary_names(int vocab_size);

/// Directory layout: meta.json, sequences.txt, adjacency.txt, bags.json, vocab.txt.
void write_dataset(const std::filesystem::path& dir, const Dataset& data);
Dataset read_dataset(const std::filesystem::path& dir);

/// 64-bit FNV-1a over a byte string.
std::uint64_t fnv1a(const std::string& bytes, std::uint64_t h = 1469598103934665603ull);

}  // namespace hsn
