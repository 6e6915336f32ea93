#pragma once

#include <CLI11.hpp>

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace hsn::cli {

/// Process exit codes; stable across releases.
enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kMissingInput = 3,
  kDivergence = 4,
  kCheckpointMismatch = 5,
  kLocked = 6,
};

/// Another live process owns the target directory.
class RunLocked : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GenDataOptions {
  std::string graph;
  int nodes = 0;
  double edge_prob = -1.0;
  int attach = 0;
  int vocab = 1000;
  int length = 10;
  long long sequences = 0;
  int bag_size = 2;
  std::uint64_t seed = 0;
  std::string out;
};

struct TrainOptions {
  std::string data;
  std::string out;
  std::string config_file;
  std::vector<std::string> overrides;          // key=value
  std::map<std::string, std::string> flags;    // named flags already mapped to keys
  bool resume = false;
  bool quiet = false;
};

struct EvalOptions {
  std::string run;
  std::string data;
  std::string checkpoint;
  std::string out;
  std::string split = "test";
  int walks = 100;   // R
  int graphs = 10;   // S
  int samples = 10;
  int stats_samples = 500;
  long long max_sequences = 0;
  std::uint64_t seed = 0;
  bool skip_perplexity = false;
};

struct GraphStatsOptions {
  std::string data;
  std::string adjacency;
  std::string probs;
  std::string graph;
  int nodes = 0;
  double edge_prob = -1.0;
  int attach = 0;
  int samples = 1;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_gen_data(const GenDataOptions& o);
int cmd_train(const TrainOptions& o);
int cmd_eval(const EvalOptions& o);
int cmd_graph_stats(const GraphStatsOptions& o);

/// Version string recorded in manifests.
std::string version();

}  // namespace hsn::cli
