#include "hsn/model.hpp"

#include "hsn/errors.hpp"

namespace hsn {

std::string to_string(LikelihoodMode m) { return m == LikelihoodMode::BagEmission ? "bag" : "psa"; }

LikelihoodMode parse_likelihood_mode(const std::string& s) {
  if (s == "bag" || s == "bag_emission") return LikelihoodMode::BagEmission;
  if (s == "psa" || s == "psa_causal") return LikelihoodMode::PsaCausal;
  throw ConfigError("unknown likelihood mode '" + s + "'");
}

void ModelConfig::validate() const {
  if (nodes < 1 || vocab_size < 1 || length < 1) throw ConfigError("model dimensions must be positive");
  if (!(prior_edge_prob > 0.0 && prior_edge_prob < 1.0)) throw ConfigError("prior edge probability must lie in (0, 1)");
  if (encoder.nodes != nodes || encoder.length != length || encoder.vocab_size != vocab_size) {
    throw ConfigError("encoder dimensions do not match the model");
  }
  encoder.validate();
  if (scorer.nodes != nodes) throw ConfigError("edge scorer size does not match the model");
  scorer.validate();
  if (mode == LikelihoodMode::PsaCausal) {
    if (decoder.nodes != nodes || decoder.vocab_size != vocab_size) {
      throw ConfigError("decoder dimensions do not match the model");
    }
    decoder.validate();
  }
}

HsnModel::HsnModel(const ModelConfig& cfg, Matrix emission, Rng& rng) : cfg_(cfg), emission_(std::move(emission)) {
  cfg.validate();
  if (cfg.mode == LikelihoodMode::BagEmission && (emission_.rows() != cfg.nodes || emission_.cols() != cfg.vocab_size)) {
    throw ConfigError("emission matrix must be K x V in bag-emission mode");
  }
  Rng enc_rng = rng.split(1);
  Rng graph_rng = rng.split(2);
  Rng dec_rng = rng.split(3);
  Rng prior_rng = rng.split(4);
  encoder = Encoder(cfg.encoder, enc_rng);
  scorer = EdgeScorer(cfg.scorer, graph_rng);
  if (cfg.mode == LikelihoodMode::PsaCausal) decoder.emplace(cfg.decoder, dec_rng);
  if (cfg.trainable_prior) {
    prior_rho_logits = nn::normal_param(1, cfg.nodes, 0.01, prior_rng);
    for (int i = 0; i + 1 < cfg.length; ++i) prior_log_weights.push_back(nn::normal_param(1, cfg.nodes, 0.01, prior_rng));
  }
}

WalkTensors HsnModel::prior() const {
  if (!cfg_.trainable_prior) return to_tensors(WalkPrior::uniform(cfg_.nodes), cfg_.length);
  WalkTensors p;
  p.rho = ops::softmax_rows(prior_rho_logits);
  for (const auto& w : prior_log_weights) p.weights.push_back(ops::exp(w));
  return p;
}

Tensor HsnModel::log_likelihood(const std::vector<std::vector<int>>& batch, std::span<const Tensor> steps,
                                bool training, Rng& rng) const {
  if (cfg_.mode == LikelihoodMode::BagEmission) return bag_log_likelihood(steps, emission_, batch);
  return decoder->log_likelihood(batch, interleave_steps(steps), static_cast<int>(steps.size()), training, rng);
}

nn::ParamList HsnModel::parameters() const {
  nn::ParamList out;
  encoder.collect(out);
  scorer.collect("scorer", out);
  if (decoder) decoder->collect(out);
  if (cfg_.trainable_prior) {
    out.push_back({"prior.rho_logits", prior_rho_logits});
    for (std::size_t i = 0; i < prior_log_weights.size(); ++i) {
      out.push_back({"prior.log_weights" + std::to_string(i), prior_log_weights[i]});
    }
  }
  return out;
}

}  // namespace hsn
