#include "hsn/graph.hpp"

#include "hsn/errors.hpp"

#include <algorithm>
#include <iomanip>
#include <istream>
#include <ostream>
#include <queue>
#include <sstream>

namespace hsn {

AdjacencyMatrix::AdjacencyMatrix(int size) : size_(size) {
  if (size < 0) throw ConfigError("adjacency size must be nonnegative");
  bits_.assign(static_cast<std::size_t>(size) * static_cast<std::size_t>(size), 0);
}

AdjacencyMatrix AdjacencyMatrix::from_matrix(const Matrix& m) {
  if (m.rows() != m.cols()) throw ConfigError("adjacency matrix must be square");
  const int k = static_cast<int>(m.rows());
  AdjacencyMatrix a(k);
  for (int i = 0; i < k; ++i) {
    if (m(i, i) != 0.0) throw ConfigError("adjacency matrix must have a zero diagonal");
    for (int j = 0; j < k; ++j) {
      const double v = m(i, j);
      if (v != 0.0 && v != 1.0) throw ConfigError("adjacency entries must be 0 or 1");
      if (v != m(j, i)) throw ConfigError("adjacency matrix must be symmetric");
      a.bits_[a.index(i, j)] = v != 0.0;
    }
  }
  return a;
}

void AdjacencyMatrix::set_edge(int i, int j, bool present) {
  if (i == j) throw ConfigError("self-loops are not allowed");
  bits_[index(i, j)] = present;
  bits_[index(j, i)] = present;
}

int AdjacencyMatrix::degree(int i) const {
  int d = 0;
  for (int j = 0; j < size_; ++j) d += bits_[index(i, j)];
  return d;
}

std::int64_t AdjacencyMatrix::edge_count() const {
  std::int64_t n = 0;
  for (int i = 0; i < size_; ++i) {
    for (int j = i + 1; j < size_; ++j) n += bits_[index(i, j)];
  }
  return n;
}

Matrix AdjacencyMatrix::to_matrix() const {
  Matrix m(size_, size_);
  for (int i = 0; i < size_; ++i) {
    for (int j = 0; j < size_; ++j) m(i, j) = bits_[index(i, j)];
  }
  return m;
}

void GraphModelConfig::validate() const {
  if (nodes < 1) throw ConfigError("graph model needs at least one node");
  switch (kind) {
    case GraphKind::ErdosRenyi:
      if (!(edge_prob >= 0.0 && edge_prob <= 1.0)) {
        throw ConfigError("Erdos-Renyi edge probability must lie in [0, 1]");
      }
      break;
    case GraphKind::BarabasiAlbert:
      if (attach < 1 || attach >= nodes) {
        throw ConfigError("Barabasi-Albert attachment count must satisfy 1 <= m < K");
      }
      break;
  }
}

std::string to_string(GraphKind kind) {
  return kind == GraphKind::ErdosRenyi ? "erdos" : "barabasi";
}

GraphKind parse_graph_kind(const std::string& s) {
  if (s == "erdos" || s == "erdos_renyi") return GraphKind::ErdosRenyi;
  if (s == "barabasi" || s == "barabasi_albert") return GraphKind::BarabasiAlbert;
  throw ConfigError("unknown graph kind '" + s + "'");
}

AdjacencyMatrix sample_erdos_renyi(const GraphModelConfig& cfg, Rng& rng) {
  if (cfg.kind != GraphKind::ErdosRenyi) throw ConfigError("sample_erdos_renyi: wrong graph kind");
  cfg.validate();
  AdjacencyMatrix a(cfg.nodes);
  for (int i = 0; i < cfg.nodes; ++i) {
    for (int j = i + 1; j < cfg.nodes; ++j) {
      if (rng.bernoulli(cfg.edge_prob)) a.set_edge(i, j, true);
    }
  }
  return a;
}

AdjacencyMatrix sample_barabasi_albert(const GraphModelConfig& cfg, Rng& rng) {
  if (cfg.kind != GraphKind::BarabasiAlbert) throw ConfigError("sample_barabasi_albert: wrong graph kind");
  cfg.validate();
  const int k = cfg.nodes;
  const int m = cfg.attach;
  AdjacencyMatrix a(k);
  std::vector<double> degree(static_cast<std::size_t>(k), 0.0);
  // Seed: m isolated nodes; node m attaches to all of them.
  for (int j = 0; j < m; ++j) {
    a.set_edge(m, j, true);
    degree[j] += 1.0;
  }
  degree[m] = m;
  std::vector<double> w;
  for (int v = m + 1; v < k; ++v) {
    w.assign(static_cast<std::size_t>(v), 0.0);
    for (int u = 0; u < v; ++u) w[u] = degree[u] + 1.0;
    for (int e = 0; e < m; ++e) {
      const auto u = static_cast<int>(rng.categorical(w.data(), w.size()));
      w[u] = 0.0;
      a.set_edge(v, u, true);
      degree[u] += 1.0;
    }
    degree[v] = m;
  }
  return a;
}

AdjacencyMatrix sample_graph_model(const GraphModelConfig& cfg, Rng& rng) {
  return cfg.kind == GraphKind::ErdosRenyi ? sample_erdos_renyi(cfg, rng) : sample_barabasi_albert(cfg, rng);
}

namespace {

std::vector<int> bfs_distances(const AdjacencyMatrix& a, int src) {
  std::vector<int> dist(static_cast<std::size_t>(a.size()), -1);
  std::queue<int> q;
  dist[src] = 0;
  q.push(src);
  while (!q.empty()) {
    const int u = q.front();
    q.pop();
    for (int v = 0; v < a.size(); ++v) {
      if (a.has_edge(u, v) && dist[v] < 0) {
        dist[v] = dist[u] + 1;
        q.push(v);
      }
    }
  }
  return dist;
}

}  // namespace

GraphStatistics graph_statistics(const AdjacencyMatrix& a) {
  GraphStatistics st;
  const int k = a.size();
  for (int i = 0; i < k; ++i) st.degree_histogram[a.degree(i)] += 1;
  if (k == 0) return st;

  // Components.
  std::vector<int> comp(static_cast<std::size_t>(k), -1);
  std::vector<int> comp_size;
  for (int s = 0; s < k; ++s) {
    if (comp[s] >= 0) continue;
    const int id = static_cast<int>(comp_size.size());
    const auto dist = bfs_distances(a, s);
    int n = 0;
    for (int v = 0; v < k; ++v) {
      if (dist[v] >= 0) {
        comp[v] = id;
        ++n;
      }
    }
    comp_size.push_back(n);
  }
  st.n_components = static_cast<int>(comp_size.size());
  const auto largest = static_cast<int>(std::max_element(comp_size.begin(), comp_size.end()) - comp_size.begin());
  st.largest_component = comp_size[largest];

  // Distances on the largest component.
  long long pairs = 0;
  long long total = 0;
  for (int s = 0; s < k; ++s) {
    if (comp[s] != largest) continue;
    const auto dist = bfs_distances(a, s);
    for (int v = 0; v < k; ++v) {
      if (v == s || dist[v] < 0) continue;
      st.diameter = std::max(st.diameter, dist[v]);
      total += dist[v];
      ++pairs;
    }
  }
  st.avg_distance = pairs > 0 ? static_cast<double>(total) / static_cast<double>(pairs) : 0.0;

  // Local clustering.
  double cc = 0.0;
  std::vector<int> nbrs;
  for (int i = 0; i < k; ++i) {
    nbrs.clear();
    for (int j = 0; j < k; ++j) {
      if (a.has_edge(i, j)) nbrs.push_back(j);
    }
    const auto d = static_cast<double>(nbrs.size());
    if (nbrs.size() < 2) continue;
    int closed = 0;
    for (std::size_t x = 0; x < nbrs.size(); ++x) {
      for (std::size_t y = x + 1; y < nbrs.size(); ++y) closed += a.has_edge(nbrs[x], nbrs[y]);
    }
    cc += closed / (d * (d - 1.0) / 2.0);
  }
  st.clustering = cc / k;
  return st;
}

std::map<int, double> degree_distribution(const AdjacencyMatrix& a) {
  std::map<int, double> out;
  if (a.size() == 0) return out;
  for (int i = 0; i < a.size(); ++i) out[a.degree(i)] += 1.0;
  for (auto& [deg, p] : out) p /= a.size();
  return out;
}

void write_adjacency(std::ostream& os, const AdjacencyMatrix& a) {
  for (int i = 0; i < a.size(); ++i) {
    for (int j = 0; j < a.size(); ++j) {
      if (j) os << ' ';
      os << (a.has_edge(i, j) ? '1' : '0');
    }
    os << '\n';
  }
}

namespace {

std::vector<std::vector<double>> read_rows(std::istream& is, const std::string& source) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    std::vector<double> row;
    std::string tok;
    while (ls >> tok) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw ParseError(source, lineno, "not a number: '" + tok + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ParseError(source, lineno, "row has " + std::to_string(row.size()) + " entries, expected " +
                                           std::to_string(rows.front().size()));
    }
    rows.push_back(std::move(row));
  }
  if (!rows.empty() && rows.size() != rows.front().size()) {
    throw ParseError(source, lineno, "matrix is not square (" + std::to_string(rows.size()) + " rows, " +
                                         std::to_string(rows.front().size()) + " columns)");
  }
  return rows;
}

}  // namespace

AdjacencyMatrix read_adjacency(std::istream& is, const std::string& source) {
  const auto rows = read_rows(is, source);
  const int k = static_cast<int>(rows.size());
  Matrix m(k, k);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) m(i, j) = rows[i][j];
  }
  try {
    return AdjacencyMatrix::from_matrix(m);
  } catch (const ConfigError& e) {
    throw ParseError(source, 0, e.what());
  }
}

void write_probability_matrix(std::ostream& os, const Matrix& probs) {
  const auto flags = os.flags();
  os << std::fixed << std::setprecision(6);
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    for (Eigen::Index j = 0; j < probs.cols(); ++j) {
      if (j) os << ' ';
      os << probs(i, j);
    }
    os << '\n';
  }
  os.flags(flags);
}

Matrix read_probability_matrix(std::istream& is, const std::string& source) {
  const auto rows = read_rows(is, source);
  const auto k = static_cast<Eigen::Index>(rows.size());
  Matrix m(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) m(i, j) = rows[i][j];
  }
  return m;
}

void write_edge_list(std::ostream& os, const AdjacencyMatrix& a) {
  for (int i = 0; i < a.size(); ++i) {
    for (int j = i + 1; j < a.size(); ++j) {
      if (a.has_edge(i, j)) os << i << ' ' << j << '\n';
    }
  }
}

}  // namespace hsn
