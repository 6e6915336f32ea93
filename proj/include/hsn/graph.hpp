#pragma once

// Random graph models, adjacency representation and topology statistics.

#include "hsn/rng.hpp"
#include "hsn/tensor.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>

namespace hsn {

/// Symmetric binary adjacency matrix with an empty diagonal, stored dense.
class AdjacencyMatrix {
 public:
  AdjacencyMatrix() = default;
  explicit AdjacencyMatrix(int size);
  /// Validates symmetry, zero diagonal and {0,1} entries.
  static AdjacencyMatrix from_matrix(const Matrix& m);

  int size() const { return size_; }
  bool has_edge(int i, int j) const { return bits_[index(i, j)] != 0; }
  void set_edge(int i, int j, bool present);
  int degree(int i) const;
  std::int64_t edge_count() const;
  Matrix to_matrix() const;

  bool operator==(const AdjacencyMatrix&) const = default;

 private:
  std::size_t index(int i, int j) const {
    return static_cast<std::size_t>(i) * static_cast<std::size_t>(size_) + static_cast<std::size_t>(j);
  }
  int size_ = 0;
  std::vector<std::uint8_t> bits_;
};

enum class GraphKind { ErdosRenyi, BarabasiAlbert };

struct GraphModelConfig {
  GraphKind kind = GraphKind::ErdosRenyi;
  int nodes = 0;
  double edge_prob = 0.0;  // Erdos-Renyi only
  int attach = 1;          // Barabasi-Albert only
  std::uint64_t seed = 0;

  void validate() const;
};

std::string to_string(GraphKind kind);
GraphKind parse_graph_kind(const std::string& s);

AdjacencyMatrix sample_erdos_renyi(const GraphModelConfig& cfg, Rng& rng);
AdjacencyMatrix sample_barabasi_albert(const GraphModelConfig& cfg, Rng& rng);
/// Dispatches on cfg.kind.
AdjacencyMatrix sample_graph_model(const GraphModelConfig& cfg, Rng& rng);

struct GraphStatistics {
  int diameter = 0;
  double avg_distance = 0.0;
  double clustering = 0.0;
  int n_components = 0;
  int largest_component = 0;
  std::map<int, int> degree_histogram;
};

/// Distances are measured on the largest connected component; clustering is
/// the mean local coefficient over all nodes (0 for degree < 2).
GraphStatistics graph_statistics(const AdjacencyMatrix& a);

std::map<int, double> degree_distribution(const AdjacencyMatrix& a);

/// K lines of K space-separated 0/1 digits.
void write_adjacency(std::ostream& os, const AdjacencyMatrix& a);
AdjacencyMatrix read_adjacency(std::istream& is, const std::string& source = "<stream>");

/// Same layout with floating point entries printed to 6 decimals.
void write_probability_matrix(std::ostream& os, const Matrix& probs);
Matrix read_probability_matrix(std::istream& is, const std::string& source = "<stream>");

/// "i j" per line for i < j; for external layout tools.
void write_edge_list(std::ostream& os, const AdjacencyMatrix& a);

}  // namespace hsn
