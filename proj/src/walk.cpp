#include "hsn/walk.hpp"

#include "hsn/errors.hpp"
#include "hsn/ops.hpp"

#include <cmath>

namespace hsn {

namespace {

void check_simplex(const RowVector& v, const char* what) {
  if (v.size() == 0) throw ConfigError(std::string(what) + " is empty");
  if ((v.array() < 0.0).any() || std::abs(v.sum() - 1.0) > 1e-6) {
    throw ConfigError(std::string(what) + " must lie on the simplex");
  }
}

void check_positive(const RowVector& v, Eigen::Index k, const char* what) {
  if (v.size() != k) throw ConfigError(std::string(what) + " has the wrong dimension");
  if (!(v.array() > 0.0).all() || !v.allFinite()) {
    throw ConfigError(std::string(what) + " must be strictly positive and finite");
  }
}

Tensor row_tensor(const RowVector& v) { return Tensor(Matrix(v)); }

}  // namespace

WalkPrior WalkPrior::uniform(int nodes) {
  if (nodes < 1) throw ConfigError("walk prior needs at least one node");
  WalkPrior p;
  p.rho = RowVector::Constant(nodes, 1.0 / nodes);
  p.weights = {RowVector::Ones(nodes)};
  return p;
}

const RowVector& WalkPrior::step_weights(int step) const {
  if (weights.size() == 1) return weights.front();
  return weights.at(static_cast<std::size_t>(step));
}

void WalkPrior::validate() const {
  check_simplex(rho, "prior start distribution");
  if (weights.empty()) throw ConfigError("prior needs at least one weight vector");
  for (const auto& f : weights) check_positive(f, rho.size(), "prior node weights");
}

void WalkPosteriorParams::validate() const {
  check_simplex(rho, "posterior start distribution");
  for (const auto& f : weights) check_positive(f, rho.size(), "posterior node weights");
}

WalkTensors to_tensors(const WalkPrior& prior, int length) {
  WalkTensors t;
  t.rho = row_tensor(prior.rho);
  if (prior.weights.size() == 1) {
    Tensor f = row_tensor(prior.weights.front());
    t.weights.assign(static_cast<std::size_t>(std::max(0, length - 1)), f);
  } else {
    if (static_cast<int>(prior.weights.size()) != length - 1) {
      throw ConfigError("inhomogeneous prior length does not match walk length");
    }
    for (const auto& f : prior.weights) t.weights.push_back(row_tensor(f));
  }
  return t;
}

WalkTensors to_tensors(const WalkPosteriorParams& params) {
  WalkTensors t;
  t.rho = row_tensor(params.rho);
  for (const auto& f : params.weights) t.weights.push_back(row_tensor(f));
  return t;
}

WalkTensors stack(std::span<const WalkPosteriorParams> batch) {
  if (batch.empty()) throw ConfigError("empty batch of walk parameters");
  const auto k = batch.front().rho.size();
  const auto steps = batch.front().weights.size();
  const auto n = static_cast<Eigen::Index>(batch.size());
  Matrix rho(n, k);
  std::vector<Matrix> w(steps, Matrix(n, k));
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& p = batch[static_cast<std::size_t>(r)];
    if (p.rho.size() != k || p.weights.size() != steps) {
      throw ConfigError("inconsistent node count or walk length in batch");
    }
    rho.row(r) = p.rho;
    for (std::size_t i = 0; i < steps; ++i) w[i].row(r) = p.weights[i];
  }
  WalkTensors t;
  t.rho = Tensor(std::move(rho));
  for (auto& m : w) t.weights.emplace_back(std::move(m));
  return t;
}

// ---- Differentiable API -------------------------------------------------

Tensor transition_matrix(const Tensor& f, const Tensor& adj) {
  if (f.rows() != 1) throw ConfigError("transition_matrix: expects a single weight row");
  return ops::batch_transition_mean(f, adj);
}

std::vector<Tensor> step_marginals(const WalkTensors& params, const Tensor& adj) {
  std::vector<Tensor> out{params.rho};
  out.reserve(params.weights.size() + 1);
  for (const auto& w : params.weights) out.push_back(ops::walk_step(out.back(), w, adj));
  return out;
}

namespace {

bool has_unsupported_mass(const Matrix& w, const Matrix& q) {
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (w.data()[i] > 0.0 && !(q.data()[i] > 0.0)) return true;
  }
  return false;
}

}  // namespace

Tensor walk_log_prob(std::span<const Tensor> steps, const WalkTensors& params, const Tensor& adj,
                     WalkDiagnostics* diag) {
  if (static_cast<int>(steps.size()) != params.length()) {
    throw ConfigError("walk_log_prob: schema length does not match parameters");
  }
  const Eigen::Index b = params.batch();
  Tensor log_rho = ops::safe_log(params.rho, kLogFloor);
  Tensor total = ops::row_sum(ops::mul(steps[0], log_rho));
  if (diag && has_unsupported_mass(steps[0].value(), params.rho.value())) diag->clamped = true;
  for (std::size_t i = 0; i + 1 < steps.size(); ++i) {
    std::vector<Tensor> rows;
    rows.reserve(static_cast<std::size_t>(b));
    for (Eigen::Index n = 0; n < b; ++n) {
      Tensor q = transition_matrix(ops::slice_rows(params.weights[i], n, 1), adj);
      Tensor next = ops::slice_rows(steps[i + 1], n, 1);
      Tensor cur = ops::slice_rows(steps[i], n, 1);
      if (diag) {
        Matrix pair = next.value().transpose() * cur.value();
        if (has_unsupported_mass(pair, q.value())) diag->clamped = true;
      }
      rows.push_back(ops::matmul_nt(ops::matmul(next, ops::safe_log(q, kLogFloor)), cur));
    }
    total = ops::add(total, ops::concat_rows(rows));
  }
  return total;
}

Tensor kl_markov_chains(const Tensor& rho_q, std::span<const Tensor> q_steps, const Tensor& rho_p,
                        std::span<const Tensor> p_steps, WalkDiagnostics* diag) {
  if (q_steps.size() != p_steps.size()) throw ConfigError("kl: chains have different lengths");
  Tensor total = ops::weighted_log_ratio(rho_q, rho_q, rho_p);
  if (diag && has_unsupported_mass(rho_q.value(), rho_p.value())) diag->clamped = true;
  Tensor marginal = rho_q;
  for (std::size_t i = 0; i < q_steps.size(); ++i) {
    Tensor joint = ops::mul_row(q_steps[i], marginal);  // Q(k,j) * marginal(j)
    if (diag && has_unsupported_mass(joint.value(), p_steps[i].value())) diag->clamped = true;
    total = ops::add(total, ops::weighted_log_ratio(joint, q_steps[i], p_steps[i]));
    if (i + 1 < q_steps.size()) marginal = ops::matmul_nt(marginal, q_steps[i]);
  }
  return total;
}

Tensor kl_walks(const WalkTensors& q, const WalkTensors& p, const Tensor& adj, WalkDiagnostics* diag) {
  if (q.batch() != 1 || p.batch() != 1) throw ConfigError("kl_walks: expects single-sequence parameters");
  if (q.length() != p.length()) throw ConfigError("kl_walks: walk lengths differ");
  std::vector<Tensor> qs, ps;
  for (int i = 0; i + 1 < q.length(); ++i) {
    qs.push_back(transition_matrix(q.weights[i], adj));
    ps.push_back(transition_matrix(p.weights[i], adj));
  }
  return kl_markov_chains(q.rho, qs, p.rho, ps, diag);
}

Tensor kl_walks_mean_field(std::span<const Tensor> q_marginals, const WalkTensors& p, const Tensor& adj,
                           WalkDiagnostics* diag) {
  if (static_cast<int>(q_marginals.size()) != p.length()) {
    throw ConfigError("kl_walks_mean_field: marginal count does not match walk length");
  }
  const Eigen::Index k = p.nodes();
  Tensor ones_row = Tensor::constant(1, k, 1.0);
  Tensor ones_mat = Tensor::constant(k, k, 1.0);
  // E_q log q(z) - E_q log p(z) with q fully factorized across steps.
  Tensor total = ops::weighted_log_ratio(q_marginals[0], q_marginals[0], p.rho);
  if (diag && has_unsupported_mass(q_marginals[0].value(), p.rho.value())) diag->clamped = true;
  for (std::size_t i = 1; i < q_marginals.size(); ++i) {
    total = ops::add(total, ops::weighted_log_ratio(q_marginals[i], q_marginals[i], ones_row));
    Tensor joint = ops::matmul(ops::transpose(q_marginals[i]), q_marginals[i - 1]);
    Tensor pm = transition_matrix(p.weights[i - 1], adj);
    if (diag && has_unsupported_mass(joint.value(), pm.value())) diag->clamped = true;
    total = ops::add(total, ops::weighted_log_ratio(joint, ones_mat, pm));
  }
  return total;
}

AggregatedPosterior aggregate_posterior(const WalkTensors& batch, const Tensor& adj) {
  if (batch.batch() == 0) throw ConfigError("aggregate_posterior: empty batch");
  AggregatedPosterior out;
  out.rho = ops::col_mean(batch.rho);
  for (const auto& w : batch.weights) out.steps.push_back(ops::batch_transition_mean(w, adj));
  return out;
}

Tensor kl_walks_aggregated(const WalkTensors& batch, const WalkTensors& p, const Tensor& adj,
                           WalkDiagnostics* diag) {
  if (p.batch() != 1) throw ConfigError("kl_walks_aggregated: prior must be a single parameter set");
  AggregatedPosterior agg = aggregate_posterior(batch, adj);
  std::vector<Tensor> ps;
  for (int i = 0; i + 1 < p.length(); ++i) ps.push_back(transition_matrix(p.weights[i], adj));
  return kl_markov_chains(agg.rho, agg.steps, p.rho, ps, diag);
}

std::vector<Tensor> sample_relaxed_walks(const WalkTensors& params, const Tensor& adj, Temperature tau,
                                         Rng& rng) {
  std::vector<Tensor> out;
  out.reserve(params.weights.size() + 1);
  out.push_back(gumbel_softmax_sample(ops::safe_log(params.rho, kLogFloor), tau, rng));
  for (const auto& w : params.weights) {
    Tensor next = ops::walk_step(out.back(), w, adj);
    out.push_back(gumbel_softmax_sample(ops::safe_log(next, kLogFloor), tau, rng));
  }
  return out;
}

// ---- Plain numeric API --------------------------------------------------

Matrix transition_matrix(const RowVector& f, const Matrix& adj) {
  ad::NoGradGuard guard;
  if (f.size() != adj.rows() || adj.rows() != adj.cols()) throw ConfigError("transition_matrix: shape mismatch");
  return transition_matrix(row_tensor(f), Tensor(adj)).value();
}

std::vector<RowVector> step_marginals(const WalkPosteriorParams& params, const Matrix& adj) {
  ad::NoGradGuard guard;
  params.validate();
  std::vector<RowVector> out;
  for (const auto& t : step_marginals(to_tensors(params), Tensor(adj))) out.emplace_back(t.value().row(0));
  return out;
}

namespace {

std::vector<Tensor> schema_steps(const Schema& schema, Eigen::Index k) {
  std::vector<Tensor> steps;
  if (schema.relaxed) {
    const Matrix& r = *schema.relaxed;
    if (r.cols() != k) throw ConfigError("relaxed schema has the wrong width");
    for (Eigen::Index i = 0; i < r.rows(); ++i) steps.emplace_back(Matrix(r.row(i)));
  } else {
    for (int node : schema.nodes) {
      if (node < 0 || node >= k) throw ConfigError("schema node out of range");
      Matrix z = Matrix::Zero(1, k);
      z(0, node) = 1.0;
      steps.emplace_back(std::move(z));
    }
  }
  return steps;
}

}  // namespace

double walk_log_prob(const Schema& schema, const WalkPosteriorParams& params, const Matrix& adj,
                     WalkDiagnostics* diag) {
  ad::NoGradGuard guard;
  const auto steps = schema_steps(schema, params.rho.size());
  return walk_log_prob(steps, to_tensors(params), Tensor(adj), diag).item();
}

double walk_log_prob(const Schema& schema, const WalkPrior& prior, const Matrix& adj, WalkDiagnostics* diag) {
  ad::NoGradGuard guard;
  const auto steps = schema_steps(schema, prior.rho.size());
  return walk_log_prob(steps, to_tensors(prior, static_cast<int>(steps.size())), Tensor(adj), diag).item();
}

double kl_walks(const WalkPosteriorParams& q, const WalkPrior& p, const Matrix& adj, WalkDiagnostics* diag) {
  ad::NoGradGuard guard;
  return kl_walks(to_tensors(q), to_tensors(p, q.length()), Tensor(adj), diag).item();
}

double kl_walks_mean_field(std::span<const RowVector> q_marginals, const WalkPrior& p, const Matrix& adj,
                           WalkDiagnostics* diag) {
  ad::NoGradGuard guard;
  std::vector<Tensor> m;
  for (const auto& r : q_marginals) m.push_back(row_tensor(r));
  return kl_walks_mean_field(m, to_tensors(p, static_cast<int>(m.size())), Tensor(adj), diag).item();
}

AggregatedPosteriorValue aggregate_posterior(std::span<const WalkPosteriorParams> batch, const Matrix& adj) {
  ad::NoGradGuard guard;
  AggregatedPosterior agg = aggregate_posterior(stack(batch), Tensor(adj));
  AggregatedPosteriorValue out;
  out.rho = agg.rho.value().row(0);
  for (const auto& s : agg.steps) out.steps.push_back(s.value());
  return out;
}

WalkPosteriorParams as_params(const WalkPrior& prior, int length) {
  WalkPosteriorParams p;
  p.rho = prior.rho;
  for (int i = 0; i + 1 < length; ++i) p.weights.push_back(prior.step_weights(i));
  return p;
}

Schema sample_walk(const WalkPosteriorParams& params, const Matrix& adj, Rng& rng, bool relaxed, double tau) {
  const Eigen::Index k = params.rho.size();
  if (adj.rows() != k || adj.cols() != k) throw ConfigError("sample_walk: adjacency size mismatch");
  Schema s;
  if (relaxed) {
    ad::NoGradGuard guard;
    const auto steps = sample_relaxed_walks(to_tensors(params), Tensor(adj), Temperature(tau), rng);
    Matrix r(static_cast<Eigen::Index>(steps.size()), k);
    for (std::size_t i = 0; i < steps.size(); ++i) {
      r.row(static_cast<Eigen::Index>(i)) = steps[i].value().row(0);
      s.nodes.push_back(static_cast<int>(harden(r.row(static_cast<Eigen::Index>(i)))));
    }
    s.relaxed = std::move(r);
    return s;
  }
  int cur = static_cast<int>(rng.categorical(params.rho.data(), static_cast<std::size_t>(k)));
  s.nodes.push_back(cur);
  std::vector<double> col(static_cast<std::size_t>(k));
  for (const auto& f : params.weights) {
    double mass = 0.0;
    for (Eigen::Index m = 0; m < k; ++m) {
      col[m] = f(m) * adj(m, cur);
      mass += col[m];
    }
    if (!(mass > 0.0)) std::fill(col.begin(), col.end(), 1.0);
    cur = static_cast<int>(rng.categorical(col.data(), col.size()));
    s.nodes.push_back(cur);
  }
  return s;
}

Schema sample_walk(const WalkPrior& prior, const Matrix& adj, int length, Rng& rng, bool relaxed, double tau) {
  if (length < 1) throw ConfigError("walk length must be at least 1");
  return sample_walk(as_params(prior, length), adj, rng, relaxed, tau);
}

}  // namespace hsn
