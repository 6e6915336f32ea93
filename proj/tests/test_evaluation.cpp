#include "doctest.h"

#include "hsn/errors.hpp"
#include "hsn/evaluation.hpp"
#include "hsn/graph_posterior.hpp"
#include "test_support.hpp"
#include "tiny_model.hpp"

#include <json.hpp>

#include <cmath>
#include <sstream>

using namespace hsn;
using namespace hsn::testing;

namespace {

AdjacencyMatrix from_edges(int k, const std::vector<std::pair<int, int>>& edges) {
  Matrix m = Matrix::Zero(k, k);
  for (auto [i, j] : edges) m(i, j) = m(j, i) = 1.0;
  return AdjacencyMatrix::from_matrix(m);
}

// Mann-Whitney statistic by direct pair comparison, ties counting one half.
double brute_auc(const Matrix& probs, const AdjacencyMatrix& truth) {
  std::vector<double> pos, neg;
  for (int i = 0; i < truth.size(); ++i)
    for (int j = i + 1; j < truth.size(); ++j) (truth.has_edge(i, j) ? pos : neg).push_back(probs(i, j));
  double wins = 0.0;
  for (double a : pos)
    for (double b : neg) wins += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
  return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

Matrix symmetric_random(int k, std::uint64_t seed) {
  Matrix m = random_matrix(k, k, seed, 0, 1);
  m = (0.5 * (m + m.transpose())).eval();
  m.diagonal().setZero();
  return m;
}

// Transition probability j -> m with the uniform fallback for massless columns.
double step_prob(const RowVector& f, const Matrix& a, int j, int m) {
  double mass = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) mass += f(i) * a(i, j);
  return mass > 0.0 ? f(m) * a(m, j) / mass : 1.0 / static_cast<double>(a.rows());
}

double walk_prob(const WalkPosteriorParams& p, const Matrix& a, const std::vector<int>& z) {
  double pr = p.rho(z[0]);
  for (std::size_t i = 1; i < z.size(); ++i) pr *= step_prob(p.weights[i - 1], a, z[i - 1], z[i]);
  return pr;
}

// Calls fn(A, log q(A), log p(A)) for every graph on k nodes.
template <class Fn>
void for_each_graph(const Matrix& q, double p, Fn fn) {
  const int k = static_cast<int>(q.rows());
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < k; ++i)
    for (int j = i + 1; j < k; ++j) pairs.emplace_back(i, j);
  for (std::uint32_t mask = 0; mask < (1u << pairs.size()); ++mask) {
    Matrix a = Matrix::Zero(k, k);
    double lq = 0.0, lp = 0.0;
    for (std::size_t e = 0; e < pairs.size(); ++e) {
      const auto [i, j] = pairs[e];
      const bool on = mask >> e & 1u;
      if (on) a(i, j) = a(j, i) = 1.0;
      lq += std::log(on ? q(i, j) : 1.0 - q(i, j));
      lp += std::log(on ? p : 1.0 - p);
    }
    fn(a, lq, lp);
  }
}

template <class Fn>
void for_each_walk(int k, int len, Fn fn) {
  std::vector<int> z(static_cast<std::size_t>(len), 0);
  while (true) {
    fn(z);
    int i = 0;
    while (i < len && ++z[i] == k) z[i++] = 0;
    if (i == len) return;
  }
}

WalkPosteriorParams random_walk_params(int k, int len, std::uint64_t seed, double spread = 1.5) {
  Rng rng(seed);
  WalkPosteriorParams p;
  p.rho = RowVector(k);
  for (int i = 0; i < k; ++i) p.rho(i) = std::exp(spread * rng.normal());
  p.rho /= p.rho.sum();
  for (int s = 1; s < len; ++s) {
    RowVector f(k);
    for (int i = 0; i < k; ++i) f(i) = std::exp(spread * rng.normal());
    p.weights.push_back(f);
  }
  return p;
}

struct Enumerated {
  double log_marginal;
  std::vector<double> log_weights;  // every reachable (A, z) importance weight
};

Enumerated enumerate(const McProblem& pr) {
  const int k = static_cast<int>(pr.edge_probs.rows());
  const int len = pr.posterior.length();
  Enumerated out;
  double total = 0.0;
  for_each_graph(pr.edge_probs, pr.prior_edge_prob, [&](const Matrix& a, double lq, double lp) {
    for_each_walk(k, len, [&](const std::vector<int>& z) {
      const double pz = walk_prob(pr.prior, a, z);
      const double qz = walk_prob(pr.posterior, a, z);
      const double ll = pr.log_likelihood(z);
      total += std::exp(lp + ll) * pz;
      if (qz > 0.0) out.log_weights.push_back(ll + std::log(pz) - std::log(qz) + lp - lq);
    });
  });
  out.log_marginal = std::log(total);
  return out;
}

McProblem bag_problem(const Matrix& emission, const std::vector<int>& x, std::uint64_t seed) {
  const int k = static_cast<int>(emission.rows());
  const int len = static_cast<int>(x.size());
  McProblem pr;
  pr.edge_probs = symmetric_random(k, seed);
  pr.edge_probs = (0.1 + 0.8 * pr.edge_probs.array()).matrix();
  pr.edge_probs.diagonal().setZero();
  pr.prior_edge_prob = 0.3;
  pr.posterior = random_walk_params(k, len, seed + 1);
  pr.prior = random_walk_params(k, len, seed + 2, 0.5);
  pr.log_likelihood = [emission, x](const std::vector<int>& z) {
    double ll = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) ll += std::log(emission(z[i], x[i]) + kEmissionFloor);
    return ll;
  };
  return pr;
}

}  // namespace

TEST_CASE("edge AUC") {
  const AdjacencyMatrix truth = from_edges(6, {{0, 1}, {1, 2}, {3, 4}, {2, 5}});
  CHECK(roc_auc_edges(truth.to_matrix(), truth) == 1.0);
  CHECK(roc_auc_edges(Matrix::Ones(6, 6) - truth.to_matrix(), truth) == 0.0);
  CHECK(roc_auc_edges(Matrix::Constant(6, 6, 0.3), truth) == 0.5);

  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Matrix p = symmetric_random(12, seed);
    // Coarse rounding creates ties.
    if (seed % 2) p = (p.array() * 4).round() / 4;
    Rng grng(seed);
    const AdjacencyMatrix g = sample_graph(Matrix::Constant(12, 12, 0.3), grng);
    if (g.edge_count() == 0 || g.edge_count() == 66) continue;
    const double auc = roc_auc_edges(p, g);
    CHECK(auc == doctest::Approx(brute_auc(p, g)).epsilon(1e-12));
    // Strictly increasing transforms leave the ranking unchanged.
    const Matrix logit = (p.array() / (1.0 - p.array() + 1e-3)).log();
    CHECK(roc_auc_edges(logit, g) == doctest::Approx(auc).epsilon(1e-12));
    CHECK(roc_auc_edges(p.array().cube().matrix(), g) == doctest::Approx(auc).epsilon(1e-12));
  }

  // Uninformative scores average one half.
  Rng rng(99);
  const AdjacencyMatrix g = sample_graph(Matrix::Constant(30, 30, 0.2), rng);
  double mean = 0.0;
  for (int t = 0; t < 1000; ++t) {
    Matrix p = Matrix::Zero(30, 30);
    for (int i = 0; i < 30; ++i)
      for (int j = i + 1; j < 30; ++j) p(i, j) = p(j, i) = rng.uniform();
    mean += roc_auc_edges(p, g) / 1000;
  }
  CHECK(std::abs(mean - 0.5) < 0.03);

  CHECK_THROWS_AS(roc_auc_edges(Matrix::Zero(4, 4), AdjacencyMatrix(4)), ConfigError);
  CHECK_THROWS_AS(roc_auc_edges(Matrix::Zero(4, 4), from_edges(3, {{0, 1}})), ConfigError);
}

TEST_CASE("Frobenius distance between graphs") {
  const AdjacencyMatrix a = from_edges(5, {{0, 1}, {1, 2}, {2, 3}});
  const AdjacencyMatrix b = from_edges(5, {{0, 1}, {3, 4}, {0, 4}, {1, 3}});
  // Symmetric difference: {1,2}, {2,3}, {3,4}, {0,4}, {1,3} -> 10 ordered entries.
  CHECK(frobenius_diff(a, b) == doctest::Approx(std::sqrt(10.0)).epsilon(1e-15));
  const AdjacencyMatrix c = from_edges(5, {{0, 1}, {1, 2}, {2, 3}, {0, 2}, {1, 4}, {3, 4}});
  CHECK(frobenius_diff(a, c) == doctest::Approx(std::sqrt(6.0)).epsilon(1e-15));
  CHECK(frobenius_diff(a, a) == 0.0);
  CHECK(frobenius_diff(a.to_matrix(), c.to_matrix()) == doctest::Approx(std::sqrt(6.0)).epsilon(1e-15));
  CHECK_THROWS_AS(frobenius_diff(a, AdjacencyMatrix(4)), ConfigError);
}

TEST_CASE("importance-weighted marginal matches exact enumeration") {
  const int k = 4, v = 6;
  Matrix emission = random_matrix(k, v, 5, 0.05, 1);
  for (int i = 0; i < k; ++i) emission.row(i) /= emission.row(i).sum();
  const std::vector<std::vector<int>> xs = {{0, 3, 5}, {2, 2, 1}, {4, 0, 3}};
  for (std::size_t n = 0; n < xs.size(); ++n) {
    const McProblem pr = bag_problem(emission, xs[n], 10 + n);
    const Enumerated ex = enumerate(pr);
    // Graph support summed exactly: a point-mass q(A) leaves log p(A) as the graph term.
    Rng rng(20 + n);
    std::vector<double> per_graph;
    for_each_graph(pr.edge_probs, pr.prior_edge_prob, [&](const Matrix& a, double, double) {
      McProblem fixed = pr;
      fixed.edge_probs = a;
      per_graph.push_back(mc_log_marginal(fixed, 10000, 1, rng));
    });
    const double m = *std::max_element(per_graph.begin(), per_graph.end());
    double s = 0.0;
    for (double v : per_graph) s += std::exp(v - m);
    const double est = m + std::log(s);
    CAPTURE(ex.log_marginal);
    CHECK(std::abs(std::exp(est - ex.log_marginal) - 1.0) < 0.02);

    // Sampled graphs converge to the same value.
    // The graph ratio has heavy tails here; 2e5 draws keep the error near 1%.
    const double sampled = mc_log_marginal(pr, 10, 200000, rng);
    CHECK(std::abs(std::exp(sampled - ex.log_marginal) - 1.0) < 0.03);

    // One graph and one walk give exactly one reachable importance weight.
    for (int rep = 0; rep < 20; ++rep) {
      const double one = mc_log_marginal(pr, 1, 1, rng);
      double best = std::numeric_limits<double>::infinity();
      for (double w : ex.log_weights) best = std::min(best, std::abs(w - one));
      CHECK(best < 1e-9);
    }
  }
  Rng rng(1);
  CHECK_THROWS_AS(mc_log_marginal(bag_problem(emission, xs[0], 1), 0, 1, rng), ConfigError);
}

TEST_CASE("uninformative model has perplexity equal to the vocabulary size") {
  const auto spec = tiny_spec(5, 12, 4, 3);
  TrainConfig tc = tiny_train_config();
  ModelConfig mc = make_model_config(tc, 5, 12, 4);
  mc.prior_edge_prob = 0.2;
  Rng init(1);
  HsnModel model(mc, Matrix::Constant(5, 12, 1.0 / 12), init);
  model.encoder.zero_readout();
  model.scorer = EdgeScorer::constant(model.scorer.config(), std::log(0.2 / 0.8));
  const Dataset data = generate_dataset(spec, 30, Rng(2));
  Rng rng(3);
  const auto r = mc_perplexity(model, data.sequences, 5, 3, rng);
  const double expected = 1.0 / (1.0 / 12 + kEmissionFloor);
  CHECK(r.perplexity == doctest::Approx(expected).epsilon(1e-12));
  CHECK(r.perplexity == doctest::Approx(12.0).epsilon(1e-8));
  CHECK(r.mean_nll == doctest::Approx(4 * std::log(expected)).epsilon(1e-12));
  CHECK(r.log_marginals.size() == 30);

  // Constant weights: how samples split between walks and graphs does not matter.
  for (auto [walks, graphs] : {std::pair{15, 1}, std::pair{1, 15}, std::pair{1, 1}}) {
    Rng other(walks);
    CHECK(mc_perplexity(model, data.sequences, walks, graphs, other).perplexity ==
          doctest::Approx(r.perplexity).epsilon(1e-12));
  }
}

TEST_CASE("perplexity per sequence agrees with the estimator on its own stream") {
  const auto spec = tiny_spec(4, 8, 3, 4);
  HsnModel model = make_model(tiny_train_config(), spec);
  const Dataset data = generate_dataset(spec, 5, Rng(5));
  Rng rng(6);
  const auto r = mc_perplexity(model, data.sequences, 7, 2, rng);
  const Matrix probs = edge_probabilities(model.scorer);
  Rng base(6);
  for (std::size_t n = 0; n < data.size(); ++n) {
    ad::NoGradGuard guard;
    Rng unused(0);
    McProblem pr;
    pr.edge_probs = probs;
    pr.prior_edge_prob = model.config().prior_edge_prob;
    pr.posterior = to_walk_params(model.encoder.encode({data.sequences[n]}, false, unused)).front();
    pr.prior.rho = RowVector::Constant(4, 0.25);
    pr.prior.weights.assign(2, RowVector::Ones(4));
    const Matrix e = spec.emission_matrix();
    const auto& x = data.sequences[n];
    pr.log_likelihood = [&](const std::vector<int>& z) {
      double ll = 0.0;
      for (std::size_t i = 0; i < z.size(); ++i) ll += std::log(e(z[i], x[i]) + kEmissionFloor);
      return ll;
    };
    Rng stream = base.split(n);
    CHECK(mc_log_marginal(pr, 7, 2, stream) == doctest::Approx(r.log_marginals[n]).epsilon(1e-12));
  }
}

TEST_CASE("mutual information") {
  const int k = 4, len = 3;
  const Matrix adj = from_edges(k, {{0, 1}, {1, 2}, {2, 3}, {0, 3}}).to_matrix();
  const WalkPrior prior = WalkPrior::uniform(k);

  const auto q = random_walk_params(k, len, 1);
  CHECK(std::abs(mutual_information(std::vector{q}, prior, adj)) < 1e-12);
  CHECK(std::abs(mutual_information(std::vector{q, q, q}, prior, adj)) < 1e-12);

  // Two certain, distinct start states and no transitions: one bit.
  WalkPosteriorParams a, b;
  a.rho = RowVector::Zero(2);
  b.rho = RowVector::Zero(2);
  a.rho(0) = 1.0;
  b.rho(1) = 1.0;
  const Matrix two = Matrix::Ones(2, 2) - Matrix::Identity(2, 2);
  CHECK(mutual_information(std::vector{a, b}, WalkPrior::uniform(2), two) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    std::vector<WalkPosteriorParams> qs;
    for (int n = 0; n < 1 + static_cast<int>(seed % 6); ++n) qs.push_back(random_walk_params(k, len, 1000 * seed + n, 2.0));
    Rng rng(seed);
    const Matrix g = sample_graph(Matrix::Constant(k, k, 0.6), rng).to_matrix();
    CHECK(mutual_information(qs, prior, g) >= -1e-6);
  }
  CHECK_THROWS_AS(mutual_information(std::vector<WalkPosteriorParams>{}, prior, adj), ConfigError);

  // Input-independent encoder through the model-level entry point.
  const auto spec = tiny_spec();
  HsnModel model = make_model(tiny_train_config(), spec);
  model.encoder.zero_readout();
  Rng rng(7);
  CHECK(std::abs(mutual_information(model, generate_dataset(spec, 20, Rng(8)).sequences, rng)) < 1e-12);
}

TEST_CASE("recovery report") {
  Rng rng(1);
  GraphModelConfig er{GraphKind::ErdosRenyi, 20, 0.5, 1, 0};
  Rng grng(2);
  const AdjacencyMatrix truth = sample_graph_model(GraphModelConfig{GraphKind::ErdosRenyi, 20, 0.2, 1, 0}, grng);
  // A point-mass posterior on the truth.
  const RecoveryReport r = recovery_report(truth.to_matrix(), truth, er, 10, rng);
  CHECK(r.roc_auc == 1.0);
  CHECK(r.frobenius_to_truth.mean == 0.0);
  CHECK(r.frobenius_to_truth.std == 0.0);
  CHECK(r.edges_inferred.mean == truth.edge_count());
  CHECK(r.edges_truth == truth.edge_count());
  CHECK(r.frobenius_to_random.mean > 0.0);
  CHECK(r.all_closer_to_truth);
  CHECK(r.seeds.size() == 10);
  CHECK(r.samples == 10);

  // Random-graph distances reproduce from the recorded seeds.
  Rng again(1);
  const RecoveryReport r2 = recovery_report(truth.to_matrix(), truth, er, 10, again);
  CHECK(r2.seeds == r.seeds);
  CHECK(r2.frobenius_to_random.mean == r.frobenius_to_random.mean);

  // An uninformative posterior is no closer to the truth than a random graph.
  const RecoveryReport flat = recovery_report(Matrix::Constant(20, 20, 0.5), truth, er, 10, rng);
  CHECK(flat.roc_auc == 0.5);
  CHECK(!flat.all_closer_to_truth);

  CHECK_THROWS_AS(recovery_report(truth.to_matrix(), truth, er, 0, rng), ConfigError);
  er.nodes = 19;
  CHECK_THROWS_AS(recovery_report(truth.to_matrix(), truth, er, 1, rng), ConfigError);

  const MeanStd ms = mean_std({1.0, 2.0, 3.0, 4.0});
  CHECK(ms.mean == 2.5);
  CHECK(ms.std == doctest::Approx(std::sqrt(5.0 / 3.0)).epsilon(1e-15));
}

TEST_CASE("degree distributions and report files") {
  const AdjacencyMatrix star = from_edges(5, {{0, 1}, {0, 2}, {0, 3}, {0, 4}});
  Rng rng(3);
  const auto d = mean_degree_distribution(star.to_matrix(), 4, rng);
  CHECK(d == degree_distribution(star));
  CHECK(d.at(1) == doctest::Approx(0.8).epsilon(1e-15));

  const auto half = mean_degree_distribution(Matrix::Constant(3, 3, 0.5), 20000, rng);
  // Each of 3 nodes has Binomial(2, 1/2) degree.
  CHECK(half.at(0) == doctest::Approx(0.25).epsilon(0.03));
  CHECK(half.at(1) == doctest::Approx(0.5).epsilon(0.03));

  RecoveryReport r;
  r.roc_auc = 0.9;
  r.frobenius_to_truth = {3, 0.5};
  r.seeds = {1, 2};
  std::ostringstream js;
  write_report_json(js, r, {{"perplexity", 12.5}});
  const auto j = nlohmann::json::parse(js.str());
  CHECK(j.at("roc_auc") == 0.9);
  CHECK(j.at("frobenius_to_truth").at("mean") == 3.0);
  CHECK(j.at("perplexity") == 12.5);
  CHECK(j.at("seeds").size() == 2);

  std::ostringstream csv;
  write_degree_csv(csv, {{"a", {{0, 0.5}, {2, 0.5}}}, {"b", {{1, 1.0}}}});
  CHECK(csv.str() == "degree,a,b\n0,0.5,0\n1,0,1\n2,0.5,0\n");
  std::ostringstream tab;
  write_table_csv(tab, "er", r);
  CHECK(tab.str().rfind("graph,auc,", 0) == 0);
  const std::string table = tab.str();
  CHECK(std::count(table.begin(), table.end(), '\n') == 2);
}
