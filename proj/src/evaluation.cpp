#include "hsn/evaluation.hpp"

#include "hsn/errors.hpp"
#include "hsn/graph_posterior.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

namespace hsn {

double roc_auc_edges(const Matrix& probs, const AdjacencyMatrix& truth) {
  const int k = truth.size();
  if (probs.rows() != k || probs.cols() != k) throw ConfigError("roc_auc_edges: shape mismatch");
  std::vector<std::pair<double, bool>> pairs;
  pairs.reserve(static_cast<std::size_t>(k) * (k - 1) / 2);
  for (int i = 0; i < k; ++i) {
    for (int j = i + 1; j < k; ++j) pairs.emplace_back(probs(i, j), truth.has_edge(i, j));
  }
  const auto pos = std::count_if(pairs.begin(), pairs.end(), [](const auto& p) { return p.second; });
  const auto neg = static_cast<std::int64_t>(pairs.size()) - pos;
  if (pos == 0 || neg == 0) throw ConfigError("roc_auc_edges: truth needs both edges and non-edges");
  std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < pairs.size();) {
    std::size_t j = i;
    while (j < pairs.size() && pairs[j].first == pairs[i].first) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t t = i; t < j; ++t) {
      if (pairs[t].second) rank_sum += mid;
    }
    i = j;
  }
  const double p = static_cast<double>(pos);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

double frobenius_diff(const Matrix& g1, const Matrix& g2) {
  if (g1.rows() != g2.rows() || g1.cols() != g2.cols()) throw ConfigError("frobenius_diff: size mismatch");
  return (g1 - g2).norm();
}

double frobenius_diff(const AdjacencyMatrix& g1, const AdjacencyMatrix& g2) {
  if (g1.size() != g2.size()) throw ConfigError("frobenius_diff: size mismatch");
  std::int64_t diff = 0;
  for (int i = 0; i < g1.size(); ++i) {
    for (int j = 0; j < g1.size(); ++j) diff += g1.has_edge(i, j) != g2.has_edge(i, j);
  }
  return std::sqrt(static_cast<double>(diff));
}

namespace {

double log_sum_exp(const std::vector<double>& xs) {
  const double m = *std::max_element(xs.begin(), xs.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

double log_or_floor(double v) { return v > 0.0 ? std::log(v) : kLogFloor; }

// Column masses sum_m f_m A_mj for every step.
std::vector<RowVector> column_masses(const WalkPosteriorParams& p, const Matrix& a) {
  std::vector<RowVector> out;
  for (const auto& f : p.weights) out.emplace_back(f * a);
  return out;
}

}  // namespace

double mc_log_marginal(const McProblem& pr, int walks, int graphs, Rng& rng) {
  if (walks < 1 || graphs < 1) throw ConfigError("mc_log_marginal: sample counts must be positive");
  const auto k = pr.edge_probs.rows();
  const int len = pr.posterior.length();
  if (pr.prior.length() != len) throw ConfigError("mc_log_marginal: prior and posterior lengths differ");
  const double lp1 = std::log(pr.prior_edge_prob), lp0 = std::log1p(-pr.prior_edge_prob);
  std::vector<double> logw;
  logw.reserve(static_cast<std::size_t>(walks) * graphs);
  std::vector<double> col(static_cast<std::size_t>(k));
  std::vector<int> z(static_cast<std::size_t>(len));
  for (int s = 0; s < graphs; ++s) {
    const AdjacencyMatrix g = sample_graph(pr.edge_probs, rng);
    const Matrix a = g.to_matrix();
    double log_graph = 0.0;  // log p(A) - log q(A)
    for (Eigen::Index i = 0; i < k; ++i) {
      for (Eigen::Index j = i + 1; j < k; ++j) {
        const double q = pr.edge_probs(i, j);
        log_graph += a(i, j) > 0 ? lp1 - log_or_floor(q) : lp0 - log_or_floor(1.0 - q);
      }
    }
    const auto qmass = column_masses(pr.posterior, a);
    const auto pmass = column_masses(pr.prior, a);
    for (int r = 0; r < walks; ++r) {
      z[0] = static_cast<int>(rng.categorical(pr.posterior.rho.data(), static_cast<std::size_t>(k)));
      double log_ratio = log_or_floor(pr.prior.rho(z[0])) - log_or_floor(pr.posterior.rho(z[0]));
      for (int i = 1; i < len; ++i) {
        const int j = z[i - 1];
        const RowVector& f = pr.posterior.weights[i - 1];
        const double qm = qmass[i - 1](j);
        int next;
        double log_q;
        if (qm > 0.0) {
          for (Eigen::Index m = 0; m < k; ++m) col[m] = f(m) * a(m, j);
          next = static_cast<int>(rng.categorical(col.data(), col.size()));
          log_q = std::log(col[next] / qm);
        } else {
          next = static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
          log_q = -std::log(static_cast<double>(k));
        }
        const double pm = pmass[i - 1](j);
        const double log_p =
            pm > 0.0 ? log_or_floor(pr.prior.weights[i - 1](next) * a(next, j) / pm) : -std::log(static_cast<double>(k));
        log_ratio += log_p - log_q;
        z[i] = next;
      }
      logw.push_back(pr.log_likelihood(z) + log_ratio + log_graph);
    }
  }
  return log_sum_exp(logw) - std::log(static_cast<double>(logw.size()));
}

namespace {

std::vector<WalkPosteriorParams> encode_all(const HsnModel& model, const std::vector<std::vector<int>>& seqs) {
  ad::NoGradGuard guard;
  Rng unused(0);
  std::vector<WalkPosteriorParams> out;
  out.reserve(seqs.size());
  constexpr std::size_t kChunk = 256;
  for (std::size_t b = 0; b < seqs.size(); b += kChunk) {
    const std::vector<std::vector<int>> chunk(seqs.begin() + static_cast<std::ptrdiff_t>(b),
                                              seqs.begin() + static_cast<std::ptrdiff_t>(std::min(seqs.size(), b + kChunk)));
    for (auto& p : to_walk_params(model.encoder.encode(chunk, false, unused))) out.push_back(std::move(p));
  }
  return out;
}

WalkPosteriorParams prior_params(const HsnModel& model) {
  ad::NoGradGuard guard;
  const WalkTensors t = model.prior();
  WalkPosteriorParams p;
  p.rho = t.rho.value().row(0);
  for (const auto& w : t.weights) p.weights.emplace_back(w.value().row(0));
  return p;
}

WalkPrior as_prior(const WalkPosteriorParams& p) { return WalkPrior{p.rho, p.weights, false}; }

}  // namespace

PerplexityResult mc_perplexity(const HsnModel& model, const std::vector<std::vector<int>>& sequences, int walks,
                               int graphs, Rng& rng) {
  if (sequences.empty()) throw ConfigError("mc_perplexity: empty evaluation set");
  const Matrix probs = edge_probabilities(model.scorer);
  const auto posteriors = encode_all(model, sequences);
  const WalkPosteriorParams prior = prior_params(model);
  const auto k = model.config().nodes;
  PerplexityResult res;
  double tokens = 0.0;
  double total = 0.0;
  for (std::size_t n = 0; n < sequences.size(); ++n) {
    const auto& x = sequences[n];
    McProblem pr;
    pr.edge_probs = probs;
    pr.prior_edge_prob = model.config().prior_edge_prob;
    pr.posterior = posteriors[n];
    pr.prior = prior;
    if (model.config().mode == LikelihoodMode::BagEmission) {
      const Matrix& e = model.emission();
      pr.log_likelihood = [&e, &x](const std::vector<int>& z) {
        double ll = 0.0;
        for (std::size_t i = 0; i < z.size(); ++i) ll += std::log(e(z[i], x[i]) + kEmissionFloor);
        return ll;
      };
    } else {
      pr.log_likelihood = [&model, &x, k](const std::vector<int>& z) {
        ad::NoGradGuard guard;
        Matrix s = Matrix::Zero(static_cast<Eigen::Index>(z.size()), k);
        for (std::size_t i = 0; i < z.size(); ++i) s(static_cast<Eigen::Index>(i), z[i]) = 1.0;
        Rng unused(0);
        return model.decoder->log_likelihood({x}, Tensor(s), static_cast<int>(z.size()), false, unused).item();
      };
    }
    Rng stream = rng.split(n);
    const double lp = mc_log_marginal(pr, walks, graphs, stream);
    res.log_marginals.push_back(lp);
    total += lp;
    tokens += static_cast<double>(x.size());
  }
  res.mean_nll = -total / static_cast<double>(sequences.size());
  res.perplexity = std::exp(-total / tokens);
  return res;
}

double mutual_information(std::span<const WalkPosteriorParams> posteriors, const WalkPrior& prior, const Matrix& adj) {
  if (posteriors.empty()) throw ConfigError("mutual_information: empty evaluation set");
  ad::NoGradGuard guard;
  double mean_kl = 0.0;
  for (const auto& q : posteriors) mean_kl += kl_walks(q, prior, adj);
  mean_kl /= static_cast<double>(posteriors.size());
  const Tensor a(adj);
  const double agg = kl_walks_aggregated(stack(posteriors), to_tensors(prior, posteriors.front().length()), a).item();
  return mean_kl - agg;
}

double mutual_information(const HsnModel& model, const std::vector<std::vector<int>>& sequences, Rng& rng) {
  const Matrix adj = sample_graph(edge_probabilities(model.scorer), rng).to_matrix();
  const auto posteriors = encode_all(model, sequences);
  return mutual_information(posteriors, as_prior(prior_params(model)), adj);
}

MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd r;
  if (xs.empty()) return r;
  r.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - r.mean) * (x - r.mean);
  r.std = xs.size() > 1 ? std::sqrt(ss / static_cast<double>(xs.size() - 1)) : 0.0;
  return r;
}

RecoveryReport recovery_report(const Matrix& probs, const AdjacencyMatrix& truth, const GraphModelConfig& random_model,
                               int n, Rng& rng) {
  if (n < 1) throw ConfigError("recovery_report: need at least one sample");
  if (random_model.nodes != truth.size()) throw ConfigError("recovery_report: random model size mismatch");
  RecoveryReport r;
  r.roc_auc = roc_auc_edges(probs, truth);
  r.edges_truth = truth.edge_count();
  r.samples = n;
  std::vector<double> to_truth, to_random, edges;
  for (int i = 0; i < n; ++i) {
    const AdjacencyMatrix g = sample_graph(probs, rng);
    GraphModelConfig cfg = random_model;
    cfg.seed = rng.next_u64();
    r.seeds.push_back(cfg.seed);
    Rng grng(cfg.seed);
    const AdjacencyMatrix rand = sample_graph_model(cfg, grng);
    to_truth.push_back(frobenius_diff(truth, g));
    // Both distances are measured from the sampled posterior graph.
    to_random.push_back(frobenius_diff(rand, g));
    edges.push_back(static_cast<double>(g.edge_count()));
    if (!(to_truth.back() < to_random.back())) r.all_closer_to_truth = false;
  }
  r.frobenius_to_truth = mean_std(to_truth);
  r.frobenius_to_random = mean_std(to_random);
  r.edges_inferred = mean_std(edges);
  return r;
}

std::map<int, double> mean_degree_distribution(const Matrix& probs, int samples, Rng& rng) {
  if (samples < 1) throw ConfigError("mean_degree_distribution: need at least one sample");
  std::map<int, double> acc;
  for (int s = 0; s < samples; ++s) {
    for (const auto& [d, p] : degree_distribution(sample_graph(probs, rng))) acc[d] += p / samples;
  }
  return acc;
}

void write_report_json(std::ostream& os, const RecoveryReport& r, const std::map<std::string, double>& extra) {
  nlohmann::json j = {
      {"roc_auc", r.roc_auc},
      {"frobenius_to_truth", {{"mean", r.frobenius_to_truth.mean}, {"std", r.frobenius_to_truth.std}}},
      {"frobenius_to_random", {{"mean", r.frobenius_to_random.mean}, {"std", r.frobenius_to_random.std}}},
      {"edges_inferred", {{"mean", r.edges_inferred.mean}, {"std", r.edges_inferred.std}}},
      {"edges_truth", r.edges_truth},
      {"samples", r.samples},
      {"seeds", r.seeds},
      {"all_closer_to_truth", r.all_closer_to_truth},
      {"conventions",
       {{"auc_pairs", "unordered i<j, diagonal excluded"}, {"frobenius", "full symmetric matrix"}}},
  };
  for (const auto& [k, v] : extra) j[k] = v;
  os << j.dump(2) << '\n';
}

void write_table_csv(std::ostream& os, const std::string& label, const RecoveryReport& r) {
  os << "graph,auc,frob_truth_mean,frob_truth_std,frob_random_mean,frob_random_std,edges_mean,edges_std,edges_truth\n";
  os << label << ',' << r.roc_auc << ',' << r.frobenius_to_truth.mean << ',' << r.frobenius_to_truth.std << ','
     << r.frobenius_to_random.mean << ',' << r.frobenius_to_random.std << ',' << r.edges_inferred.mean << ','
     << r.edges_inferred.std << ',' << r.edges_truth << '\n';
}

void write_degree_csv(std::ostream& os, const std::vector<std::pair<std::string, std::map<int, double>>>& columns) {
  int max_degree = 0;
  for (const auto& c : columns) {
    if (!c.second.empty()) max_degree = std::max(max_degree, c.second.rbegin()->first);
  }
  os << "degree";
  for (const auto& c : columns) os << ',' << c.first;
  os << '\n';
  for (int d = 0; d <= max_degree; ++d) {
    os << d;
    for (const auto& c : columns) {
      const auto it = c.second.find(d);
      os << ',' << (it == c.second.end() ? 0.0 : it->second);
    }
    os << '\n';
  }
}

}  // namespace hsn
