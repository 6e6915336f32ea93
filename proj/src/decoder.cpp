#include "hsn/decoder.hpp"

#include "hsn/errors.hpp"

#include <cmath>

namespace hsn {

Tensor bag_log_likelihood(std::span<const Tensor> steps, const Matrix& emission,
                          const std::vector<std::vector<int>>& batch) {
  if (steps.empty()) throw ConfigError("bag likelihood needs at least one step");
  const auto b = static_cast<Eigen::Index>(batch.size());
  const auto k = emission.rows();
  Tensor total;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (steps[i].rows() != b || steps[i].cols() != k) throw ConfigError("schema shape does not match the batch");
    Matrix ex(b, k);
    for (Eigen::Index n = 0; n < b; ++n) {
      if (batch[n].size() != steps.size()) throw ConfigError("sequence length must equal the schema length");
      const int tok = batch[n][i];
      if (tok < 0 || tok >= emission.cols()) throw ConfigError("token id outside the vocabulary");
      ex.row(n) = emission.col(tok).transpose();
    }
    Tensor lik = ops::add_scalar(ops::row_sum(ops::mul(steps[i], Tensor(std::move(ex)))), kEmissionFloor);
    Tensor ll = ops::safe_log(lik);
    total = total.defined() ? ops::add(total, ll) : ll;
  }
  return total;
}

double bag_log_likelihood(const Matrix& schema, const Matrix& emission, const std::vector<int>& sequence) {
  ad::NoGradGuard guard;
  std::vector<Tensor> steps;
  for (Eigen::Index i = 0; i < schema.rows(); ++i) steps.emplace_back(Matrix(schema.row(i)));
  return bag_log_likelihood(steps, emission, {sequence}).item();
}

Tensor psa_attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& schema, const PsaWeights& psa,
                     bool causal, int heads) {
  if (q.cols() != k.cols() || k.cols() != v.cols() || k.rows() != v.rows()) {
    throw ConfigError("psa_attention: width mismatch");
  }
  if (causal && q.rows() != k.rows()) throw ConfigError("psa_attention: causal attention needs T queries and keys");
  ops::AttentionShape shape{1, q.rows(), k.rows(), 0, heads, causal};
  if (!schema.defined() || schema.rows() == 0) return ops::attention(q, k, v, shape);
  if (psa.key.cols() != q.cols() || psa.key.rows() != schema.cols()) throw ConfigError("psa_attention: width mismatch");
  const Tensor pe(nn::sinusoidal_encoding(schema.rows(), q.cols()));
  shape.prefix = schema.rows();
  Tensor pk = ops::add(ops::matmul(schema, psa.key), pe);
  Tensor pv = ops::add(ops::matmul(schema, psa.value), pe);
  return ops::attention(q, k, v, shape, pk, pv);
}

void DecoderConfig::validate() const {
  if (vocab_size < 1 || nodes < 1 || n_layers < 1 || n_heads < 1 || width < 1 || hidden_dim < 1) {
    throw ConfigError("decoder dimensions must be positive");
  }
  if (width % n_heads != 0) throw ConfigError("decoder width must be divisible by the head count");
  if (word_dropout < 0.0 || word_dropout >= 1.0) throw ConfigError("word dropout must lie in [0, 1)");
}

PsaDecoder::PsaDecoder(const DecoderConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg.validate();
  embedding = nn::normal_param(cfg.vocab_size + 2, cfg.width, 0.02, rng);
  for (int l = 0; l < cfg.n_layers; ++l) {
    layers.push_back(Layer{TransformerBlock::create(cfg.width, cfg.hidden_dim, rng),
                           PsaWeights{nn::normal_param(cfg.nodes, cfg.width, 0.02, rng),
                                      nn::normal_param(cfg.nodes, cfg.width, 0.02, rng)}});
  }
  ln_out = nn::LayerNorm::create(cfg.width);
  out = nn::Linear::create(cfg.width, cfg.vocab_size, rng);
}

Tensor interleave_steps(std::span<const Tensor> steps) {
  if (steps.empty()) return Tensor();
  const auto b = steps.front().rows();
  const auto l = static_cast<Eigen::Index>(steps.size());
  std::vector<std::int64_t> order(static_cast<std::size_t>(b * l));
  for (Eigen::Index n = 0; n < b; ++n) {
    for (Eigen::Index i = 0; i < l; ++i) order[n * l + i] = i * b + n;
  }
  return ops::gather_rows(ops::concat_rows(std::vector<Tensor>(steps.begin(), steps.end())), order);
}

Tensor PsaDecoder::logits(const std::vector<std::vector<int>>& batch, const Tensor& schema, int length, bool training,
                          Rng& rng) const {
  if (batch.empty() || batch.front().empty()) throw ConfigError("decoder input must be non-empty");
  const auto b = static_cast<Eigen::Index>(batch.size());
  const auto t = static_cast<Eigen::Index>(batch.front().size());
  if (length > 0 && (!schema.defined() || schema.rows() != b * length || schema.cols() != cfg_.nodes)) {
    throw ConfigError("schema shape does not match the batch");
  }
  std::vector<std::int64_t> ids;
  ids.reserve(static_cast<std::size_t>(b * t));
  for (const auto& s : batch) {
    if (static_cast<Eigen::Index>(s.size()) != t) throw ConfigError("sequences in a batch must share one length");
    ids.push_back(bos());
    for (Eigen::Index i = 0; i + 1 < t; ++i) {
      const int tok = s[i];
      if (tok < 0 || tok >= cfg_.vocab_size) throw ConfigError("token id outside the decoder vocabulary");
      const bool drop = training && cfg_.word_dropout > 0.0 && rng.uniform() < cfg_.word_dropout;
      ids.push_back(drop ? unk() : tok);
    }
  }
  const Tensor pe(nn::sinusoidal_encoding(t, cfg_.width));
  Tensor x = ops::add(ops::gather_rows(embedding, ids), ops::tile_rows(pe, b));
  Tensor sym_pe;
  if (length > 0) sym_pe = ops::tile_rows(Tensor(nn::sinusoidal_encoding(length, cfg_.width)), b);
  for (const auto& layer : layers) {
    const auto& blk = layer.block;
    const Tensor n = blk.ln_attn(x);
    ops::AttentionShape shape{b, t, t, length, cfg_.n_heads, true};
    Tensor a;
    if (length > 0) {
      Tensor pk = ops::add(ops::matmul(schema, layer.psa.key), sym_pe);
      Tensor pv = ops::add(ops::matmul(schema, layer.psa.value), sym_pe);
      a = ops::attention(blk.wq(n), blk.wk(n), blk.wv(n), shape, pk, pv);
    } else {
      a = ops::attention(blk.wq(n), blk.wk(n), blk.wv(n), shape);
    }
    x = ops::add(x, blk.wo(a));
    x = ops::add(x, blk.ff_out(ops::gelu(blk.ff_in(blk.ln_ff(x)))));
  }
  return out(ln_out(x));
}

Tensor PsaDecoder::log_likelihood(const std::vector<std::vector<int>>& batch, const Tensor& schema, int length,
                                  bool training, Rng& rng) const {
  Tensor lp = ops::log_softmax_rows(logits(batch, schema, length, training, rng));
  std::vector<std::int64_t> targets;
  for (const auto& s : batch) targets.insert(targets.end(), s.begin(), s.end());
  Tensor tok = ops::pick(lp, targets);  // (B*T) x 1
  const auto b = static_cast<Eigen::Index>(batch.size());
  const auto t = static_cast<Eigen::Index>(batch.front().size());
  Matrix seg = Matrix::Zero(b, b * t);
  for (Eigen::Index n = 0; n < b; ++n) seg.block(n, n * t, 1, t).setOnes();
  return ops::matmul(Tensor(std::move(seg)), tok);
}

void PsaDecoder::collect(nn::ParamList& out_params) const {
  out_params.push_back({"decoder.embedding", embedding});
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string p = "decoder.layer" + std::to_string(l);
    layers[l].block.collect(p, out_params);
    out_params.push_back({p + ".psa_key", layers[l].psa.key});
    out_params.push_back({p + ".psa_value", layers[l].psa.value});
  }
  ln_out.collect("decoder.ln_out", out_params);
  out.collect("decoder.out", out_params);
}

}  // namespace hsn
