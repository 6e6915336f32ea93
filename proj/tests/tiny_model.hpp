#pragma once

#include "hsn/synthetic.hpp"
#include "hsn/trainer.hpp"

namespace hsn::testing {

inline GroundTruthSpec tiny_spec(int nodes = 4, int vocab = 8, int length = 3, std::uint64_t seed = 1) {
  GroundTruthConfig g;
  g.graph.kind = GraphKind::ErdosRenyi;
  g.graph.nodes = nodes;
  g.graph.edge_prob = 0.5;
  g.graph.seed = seed;
  g.vocab_size = vocab;
  g.bag_size = 2;
  g.walk_length = length;
  g.seed = seed;
  return build_ground_truth(g);
}

inline TrainConfig tiny_train_config(LikelihoodMode mode = LikelihoodMode::BagEmission) {
  TrainConfig c;
  c.embed_dim = 8;
  c.n_blocks = 1;
  c.n_heads = 2;
  c.hidden_dim = 8;
  c.dropout = 0.0;
  c.scorer_hidden = 6;
  c.likelihood = mode;
  c.decoder_layers = 1;
  c.decoder_width = 4;
  c.decoder_hidden = 6;
  c.word_dropout = 0.0;
  return c;
}

inline std::vector<Tensor> parameter_tensors(const HsnModel& m) {
  std::vector<Tensor> out;
  for (auto& p : m.parameters()) out.push_back(p.tensor);
  return out;
}

}  // namespace hsn::testing
