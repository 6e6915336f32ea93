#include "hsn/graph_posterior.hpp"

#include "hsn/errors.hpp"

#include <cmath>

namespace hsn {

void EdgeScorerConfig::validate() const {
  if (nodes < 1) throw ConfigError("edge scorer needs at least one node");
  if (hidden < 1) throw ConfigError("edge scorer hidden width must be positive");
  if (symbol_dim < 0) throw ConfigError("symbol dimension must be nonnegative");
  if (!(input_std >= 0.0)) throw ConfigError("edge scorer init scale must be nonnegative");
}

EdgeScorer::EdgeScorer(const EdgeScorerConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg.validate();
  const Eigen::Index in = cfg.symbol_dim > 0 ? cfg.symbol_dim : cfg.nodes;
  if (cfg.symbol_dim > 0) symbols = nn::normal_param(cfg.nodes, cfg.symbol_dim, 1.0, rng);
  wa = nn::normal_param(in, cfg.hidden, cfg.input_std, rng);
  wb = nn::normal_param(in, cfg.hidden, cfg.input_std, rng);
  b1 = nn::zero_param(1, cfg.hidden);
  w2 = nn::normal_param(1, cfg.hidden, 1.0 / std::sqrt(static_cast<double>(cfg.hidden)), rng);
  b2 = nn::zero_param(1, 1);
}

EdgeScorer EdgeScorer::constant(const EdgeScorerConfig& cfg, double logit) {
  Rng rng(0);
  EdgeScorer s(cfg, rng);
  s.w2.mutable_value().setZero();
  s.b2.mutable_value()(0, 0) = logit;
  return s;
}

Tensor EdgeScorer::logits() const {
  Tensor u = wa, v = wb;
  if (cfg_.symbol_dim > 0) {
    u = ops::matmul(symbols, wa);
    v = ops::matmul(symbols, wb);
  }
  Tensor g = ops::pairwise_mlp(u, v, b1, w2, b2);
  return ops::scale(ops::add(g, ops::transpose(g)), 0.5);
}

void EdgeScorer::collect(const std::string& prefix, nn::ParamList& out) const {
  if (cfg_.symbol_dim > 0) out.push_back({prefix + ".symbols", symbols});
  out.push_back({prefix + ".wa", wa});
  out.push_back({prefix + ".wb", wb});
  out.push_back({prefix + ".b1", b1});
  out.push_back({prefix + ".w2", w2});
  out.push_back({prefix + ".b2", b2});
}

Matrix off_diagonal_mask(int k) { return Matrix::Ones(k, k) - Matrix::Identity(k, k); }

Matrix upper_mask(int k) {
  Matrix m = Matrix::Zero(k, k);
  for (int i = 0; i < k; ++i) {
    for (int j = i + 1; j < k; ++j) m(i, j) = 1.0;
  }
  return m;
}

Tensor edge_probabilities(const Tensor& logits) {
  if (logits.rows() != logits.cols()) throw ConfigError("edge logits must be square");
  return ops::mul(ops::sigmoid(logits), Tensor(off_diagonal_mask(static_cast<int>(logits.rows()))));
}

Matrix edge_probabilities(const EdgeScorer& scorer) {
  ad::NoGradGuard guard;
  return edge_probabilities(scorer.logits()).value();
}

Tensor sample_relaxed_graph(const Tensor& logits, Temperature tau, Rng& rng) {
  const auto k = logits.rows();
  Matrix noise = Matrix::Zero(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = i + 1; j < k; ++j) {
      const double g1 = rng.gumbel();
      const double g2 = rng.gumbel();
      noise(i, j) = noise(j, i) = g1 - g2;
    }
  }
  Tensor edges = binary_concrete_with_noise(logits, noise, tau);
  return ops::mul(edges, Tensor(off_diagonal_mask(static_cast<int>(k))));
}

AdjacencyMatrix sample_graph(const Matrix& probs, Rng& rng) {
  if (probs.rows() != probs.cols()) throw ConfigError("edge probabilities must be square");
  const int k = static_cast<int>(probs.rows());
  AdjacencyMatrix a(k);
  for (int i = 0; i < k; ++i) {
    for (int j = i + 1; j < k; ++j) {
      const double p = probs(i, j);
      if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("edge probability outside [0, 1]");
      if (rng.uniform() < p) a.set_edge(i, j, true);
    }
  }
  return a;
}

namespace {

void check_prior(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("prior edge probability must lie in (0, 1)");
}

}  // namespace

double kl_graphs(const Matrix& q, double p) {
  check_prior(p);
  if (q.rows() != q.cols()) throw ConfigError("edge probabilities must be square");
  double total = 0.0;
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < q.cols(); ++j) {
      const double v = q(i, j);
      if (v > 0.0) total += v * std::log(v / p);
      if (v < 1.0) total += (1.0 - v) * std::log((1.0 - v) / (1.0 - p));
    }
  }
  return total;
}

Tensor kl_graphs(const Tensor& q, double p) {
  check_prior(p);
  const int k = static_cast<int>(q.rows());
  const Tensor mask(upper_mask(k));
  const Tensor one = Tensor::constant(k, k, 1.0);
  Tensor nq = ops::sub(one, q);
  Tensor on = ops::weighted_log_ratio(ops::mul(q, mask), q, Tensor::constant(k, k, p));
  Tensor off = ops::weighted_log_ratio(ops::mul(nq, mask), nq, Tensor::constant(k, k, 1.0 - p));
  return ops::add(on, off);
}

Tensor kl_graphs_logits(const Tensor& logits, double p) {
  check_prior(p);
  return ops::bernoulli_kl_logits(logits, p, upper_mask(static_cast<int>(logits.rows())));
}

}  // namespace hsn
