#include "hsn/encoder.hpp"

#include "hsn/errors.hpp"

namespace hsn {

void EncoderConfig::validate() const {
  if (vocab_size < 1 || embed_dim < 1 || n_blocks < 0 || n_heads < 1 || hidden_dim < 1 || length < 1 || nodes < 1) {
    throw ConfigError("encoder dimensions must be positive");
  }
  if (embed_dim % n_heads != 0) throw ConfigError("embedding width must be divisible by the head count");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("encoder dropout must lie in [0, 1)");
}

TransformerBlock TransformerBlock::create(int width, int hidden, Rng& rng) {
  return TransformerBlock{nn::LayerNorm::create(width),
                          nn::LayerNorm::create(width),
                          nn::Linear::create(width, width, rng),
                          nn::Linear::create(width, width, rng),
                          nn::Linear::create(width, width, rng),
                          nn::Linear::create(width, width, rng),
                          nn::Linear::create(width, hidden, rng),
                          nn::Linear::create(hidden, width, rng)};
}

void TransformerBlock::collect(const std::string& prefix, nn::ParamList& out) const {
  ln_attn.collect(prefix + ".ln_attn", out);
  ln_ff.collect(prefix + ".ln_ff", out);
  wq.collect(prefix + ".wq", out);
  wk.collect(prefix + ".wk", out);
  wv.collect(prefix + ".wv", out);
  wo.collect(prefix + ".wo", out);
  ff_in.collect(prefix + ".ff_in", out);
  ff_out.collect(prefix + ".ff_out", out);
}

Encoder::Encoder(const EncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg.validate();
  embedding = nn::normal_param(cfg.vocab_size, cfg.embed_dim, 0.01, rng);
  for (int b = 0; b < cfg.n_blocks; ++b) blocks.push_back(TransformerBlock::create(cfg.embed_dim, cfg.hidden_dim, rng));
  queries = nn::normal_param(cfg.length, cfg.embed_dim, 0.02, rng);
  readout_block = TransformerBlock::create(cfg.embed_dim, cfg.hidden_dim, rng);
  ln_kv = nn::LayerNorm::create(cfg.embed_dim);
  ln_out = nn::LayerNorm::create(cfg.embed_dim);
  readout = nn::Linear::create(cfg.embed_dim, cfg.nodes, rng);
}

void Encoder::zero_readout() {
  readout.weight.mutable_value().setZero();
  readout.bias.mutable_value().setZero();
}

Tensor Encoder::embed(const std::vector<std::vector<int>>& batch) const {
  if (batch.empty() || batch.front().empty()) throw ConfigError("encoder input must be non-empty");
  const auto t = static_cast<Eigen::Index>(batch.front().size());
  std::vector<std::int64_t> ids;
  ids.reserve(batch.size() * static_cast<std::size_t>(t));
  for (const auto& s : batch) {
    if (static_cast<Eigen::Index>(s.size()) != t) throw ConfigError("sequences in a batch must share one length");
    for (int tok : s) {
      if (tok < 0 || tok >= cfg_.vocab_size) throw ConfigError("token id outside the encoder vocabulary");
      ids.push_back(tok);
    }
  }
  const Tensor pe(nn::sinusoidal_encoding(t, cfg_.embed_dim));
  return ops::add(ops::gather_rows(embedding, ids), ops::tile_rows(pe, static_cast<Eigen::Index>(batch.size())));
}

Tensor Encoder::self_block(const TransformerBlock& b, const Tensor& x, Eigen::Index batch, Eigen::Index t,
                           bool training, Rng& rng) const {
  const Tensor n = b.ln_attn(x);
  ops::AttentionShape shape{batch, t, t, 0, cfg_.n_heads, false};
  Tensor a = b.wo(ops::attention(b.wq(n), b.wk(n), b.wv(n), shape));
  Tensor h = ops::add(x, nn::dropout(a, cfg_.dropout, training, rng));
  Tensor f = b.ff_out(ops::gelu(b.ff_in(b.ln_ff(h))));
  return ops::add(h, nn::dropout(f, cfg_.dropout, training, rng));
}

EncoderOutput Encoder::encode(const std::vector<std::vector<int>>& batch, bool training, Rng& rng) const {
  const auto b = static_cast<Eigen::Index>(batch.size());
  Tensor x = nn::dropout(embed(batch), cfg_.dropout, training, rng);
  const auto t = static_cast<Eigen::Index>(batch.front().size());
  for (const auto& blk : blocks) x = self_block(blk, x, b, t, training, rng);

  // Cross-attention: L learnable queries read the token states.
  const TransformerBlock& r = readout_block;
  const Tensor kv = ln_kv(x);
  Tensor q = ops::tile_rows(queries, b);
  ops::AttentionShape shape{b, cfg_.length, t, 0, cfg_.n_heads, false};
  Tensor a = r.wo(ops::attention(r.wq(r.ln_attn(q)), r.wk(kv), r.wv(kv), shape));
  Tensor h = ops::add(q, nn::dropout(a, cfg_.dropout, training, rng));
  Tensor f = r.ff_out(ops::gelu(r.ff_in(r.ln_ff(h))));
  h = ops::add(h, nn::dropout(f, cfg_.dropout, training, rng));
  return EncoderOutput{readout(ln_out(h)), b, cfg_.length};
}

void Encoder::collect(nn::ParamList& out) const {
  out.push_back({"encoder.embedding", embedding});
  for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].collect("encoder.block" + std::to_string(i), out);
  out.push_back({"encoder.queries", queries});
  readout_block.collect("encoder.readout_block", out);
  ln_kv.collect("encoder.ln_kv", out);
  ln_out.collect("encoder.ln_out", out);
  readout.collect("encoder.readout", out);
}

namespace {

std::vector<std::int64_t> step_rows(Eigen::Index batch, int length, int step) {
  std::vector<std::int64_t> idx(static_cast<std::size_t>(batch));
  for (Eigen::Index n = 0; n < batch; ++n) idx[n] = n * length + step;
  return idx;
}

}  // namespace

WalkTensors to_walk_tensors(const EncoderOutput& out) {
  WalkTensors w;
  w.rho = ops::softmax_rows(ops::gather_rows(out.h, step_rows(out.batch, out.length, 0)));
  for (int i = 1; i < out.length; ++i) {
    Tensor h = ops::gather_rows(out.h, step_rows(out.batch, out.length, i));
    const Matrix shift = -h.value().rowwise().maxCoeff();
    w.weights.push_back(ops::exp(ops::add_col(h, Tensor(shift))));
  }
  return w;
}

std::vector<WalkPosteriorParams> to_walk_params(const EncoderOutput& out) {
  ad::NoGradGuard guard;
  const WalkTensors w = to_walk_tensors(out);
  std::vector<WalkPosteriorParams> params(static_cast<std::size_t>(out.batch));
  for (Eigen::Index n = 0; n < out.batch; ++n) {
    params[n].rho = w.rho.value().row(n);
    for (const auto& f : w.weights) params[n].weights.emplace_back(f.value().row(n));
  }
  return params;
}

}  // namespace hsn
