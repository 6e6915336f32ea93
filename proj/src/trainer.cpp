#include "hsn/trainer.hpp"

#include "hsn/errors.hpp"
#include "hsn/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

namespace hsn {

namespace {

struct Field {
  const char* key;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&)> set;
};

int to_int(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  long long x = 0;
  try {
    x = std::stoll(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  }
  if (pos != v.size() || x < INT32_MIN || x > INT32_MAX) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return static_cast<int>(x);
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double x = 0;
  try {
    x = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
  if (pos != v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return x;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

#define HSN_INT(name) \
  Field{#name, [](const TrainConfig& c) { return std::to_string(c.name); }, \
        [](TrainConfig& c, const std::string& v) { c.name = to_int(#name, v); }}
#define HSN_DBL(name) \
  Field{#name, [](const TrainConfig& c) { return fmt(c.name); }, \
        [](TrainConfig& c, const std::string& v) { c.name = to_double(#name, v); }}

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      HSN_INT(batch_size),
      HSN_DBL(learning_rate),
      HSN_INT(epochs),
      HSN_DBL(tau),
      HSN_DBL(prior_edge_prob),
      HSN_INT(anneal_cycles),
      HSN_DBL(ramp_fraction),
      HSN_DBL(kl_threshold),
      Field{"seed", [](const TrainConfig& c) { return std::to_string(c.seed); },
            [](TrainConfig& c, const std::string& v) {
              try {
                std::size_t pos = 0;
                c.seed = std::stoull(v, &pos);
                if (pos != v.size() || v.front() == '-') throw std::invalid_argument(v);
              } catch (const std::exception&) {
                throw ConfigError("seed: expected a non-negative integer, got '" + v + "'");
              }
            }},
      HSN_INT(embed_dim),
      HSN_INT(n_blocks),
      HSN_INT(n_heads),
      HSN_INT(hidden_dim),
      HSN_DBL(dropout),
      HSN_INT(scorer_hidden),
      HSN_DBL(scorer_input_std),
      HSN_INT(symbol_dim),
      Field{"trainable_prior", [](const TrainConfig& c) { return std::string(c.trainable_prior ? "true" : "false"); },
            [](TrainConfig& c, const std::string& v) { c.trainable_prior = to_bool("trainable_prior", v); }},
      Field{"likelihood", [](const TrainConfig& c) { return to_string(c.likelihood); },
            [](TrainConfig& c, const std::string& v) {
              try {
                c.likelihood = parse_likelihood_mode(v);
              } catch (const std::exception& e) {
                throw ConfigError(std::string("likelihood: ") + e.what());
              }
            }},
      HSN_INT(decoder_layers),
      HSN_INT(decoder_heads),
      HSN_INT(decoder_width),
      HSN_INT(decoder_hidden),
      HSN_DBL(word_dropout),
      HSN_INT(checkpoint_every),
  };
  return f;
}

#undef HSN_INT
#undef HSN_DBL

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

Matrix to_column(const std::vector<std::size_t>& v) {
  Matrix m(static_cast<Eigen::Index>(v.size()), 1);
  for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = static_cast<double>(v[i]);
  return m;
}

const std::string& meta_at(const Checkpoint& c, const std::string& key) {
  const auto it = c.meta.find(key);
  if (it == c.meta.end()) throw CheckpointMismatch("checkpoint lacks '" + key + "'");
  return it->second;
}

}  // namespace

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  require(batch_size >= 1, "batch_size must be at least 1");
  require(learning_rate > 0.0 && std::isfinite(learning_rate), "learning_rate must be positive");
  require(epochs >= 1, "epochs must be at least 1");
  require(tau > 0.0 && std::isfinite(tau), "tau must be positive");
  require(prior_edge_prob > 0.0 && prior_edge_prob < 1.0, "prior_edge_prob must lie in (0, 1)");
  require(anneal_cycles >= 1, "anneal_cycles must be at least 1");
  require(ramp_fraction > 0.0 && ramp_fraction <= 1.0, "ramp_fraction must lie in (0, 1]");
  require(kl_threshold >= 0.0, "kl_threshold must be non-negative");
  require(embed_dim >= 1 && n_blocks >= 0 && n_heads >= 1 && hidden_dim >= 1, "invalid encoder sizes");
  require(embed_dim % n_heads == 0, "embed_dim must be divisible by n_heads");
  require(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
  require(scorer_hidden >= 1 && scorer_input_std > 0.0 && symbol_dim >= 0, "invalid edge scorer settings");
  require(decoder_layers >= 1 && decoder_heads >= 1 && decoder_width >= 1 && decoder_hidden >= 1,
          "invalid decoder sizes");
  require(decoder_width % decoder_heads == 0, "decoder_width must be divisible by decoder_heads");
  require(word_dropout >= 0.0 && word_dropout < 1.0, "word_dropout must lie in [0, 1)");
  require(checkpoint_every >= 1, "checkpoint_every must be at least 1");
}

std::string TrainConfig::to_text() const {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + " = " + f.get(*this) + "\n";
  return out;
}

void TrainConfig::apply(const std::map<std::string, std::string>& kv) {
  for (const auto& [k, v] : kv) {
    const auto it = std::find_if(fields().begin(), fields().end(), [&k](const Field& f) { return k == f.key; });
    if (it == fields().end()) throw ConfigError("unknown configuration key '" + k + "'");
    it->set(*this, v);
  }
}

TrainConfig TrainConfig::from_map(const std::map<std::string, std::string>& kv) {
  TrainConfig c;
  c.apply(kv);
  c.validate();
  return c;
}

std::map<std::string, std::string> parse_key_values(const std::string& text, const std::string& source) {
  std::map<std::string, std::string> out;
  std::istringstream is(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(source, n, "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) throw ParseError(source, n, "empty key or value");
    if (!out.emplace(key, value).second) throw ParseError(source, n, "duplicate key '" + key + "'");
  }
  return out;
}

ModelConfig make_model_config(const TrainConfig& cfg, int nodes, int vocab_size, int length) {
  ModelConfig m;
  m.nodes = nodes;
  m.vocab_size = vocab_size;
  m.length = length;
  m.prior_edge_prob = cfg.prior_edge_prob;
  m.trainable_prior = cfg.trainable_prior;
  m.mode = cfg.likelihood;
  m.encoder = EncoderConfig{vocab_size, cfg.embed_dim, cfg.n_blocks, cfg.n_heads, cfg.hidden_dim, cfg.dropout, length,
                            nodes};
  m.scorer = EdgeScorerConfig{nodes, cfg.scorer_hidden, cfg.symbol_dim, cfg.scorer_input_std};
  m.decoder = DecoderConfig{vocab_size,         nodes,           cfg.decoder_layers, cfg.decoder_heads,
                            cfg.decoder_width, cfg.decoder_hidden, cfg.word_dropout};
  return m;
}

HsnModel make_model(const TrainConfig& cfg, const GroundTruthSpec& spec) {
  cfg.validate();
  Rng rng = Rng(cfg.seed).split(1);
  return HsnModel(make_model_config(cfg, spec.nodes(), spec.vocab_size(), spec.walk_length()), spec.emission_matrix(),
                  rng);
}

void load_parameters(HsnModel& model, const Checkpoint& ckpt) {
  const auto params = model.parameters();
  for (const auto& p : params) {
    const auto it = ckpt.tensors.find("param/" + p.name);
    if (it == ckpt.tensors.end()) throw CheckpointMismatch("checkpoint lacks parameter '" + p.name + "'");
    if (it->second.rows() != p.tensor.rows() || it->second.cols() != p.tensor.cols()) {
      throw CheckpointMismatch("parameter '" + p.name + "' has a different shape in the checkpoint");
    }
  }
  std::size_t stored = 0;
  for (const auto& [k, v] : ckpt.tensors) stored += k.rfind("param/", 0) == 0;
  if (stored != params.size()) throw CheckpointMismatch("checkpoint holds a different parameter set");
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.mutable_value() = ckpt.tensors.at("param/" + p.name);
  }
}

HsnModel model_from_checkpoint(const Checkpoint& ckpt, const GroundTruthSpec& spec) {
  TrainConfig cfg;
  try {
    cfg = TrainConfig::from_map(parse_key_values(ckpt.config_text, "<checkpoint config>"));
  } catch (const std::exception& e) {
    throw CheckpointMismatch(std::string("unreadable checkpoint configuration: ") + e.what());
  }
  auto expect = [&ckpt](const std::string& key, int want) {
    const std::string& got = meta_at(ckpt, key);
    if (got != std::to_string(want)) {
      throw CheckpointMismatch("checkpoint " + key + " is " + got + ", dataset has " + std::to_string(want));
    }
  };
  expect("nodes", spec.nodes());
  expect("vocab_size", spec.vocab_size());
  expect("length", spec.walk_length());
  HsnModel model = make_model(cfg, spec);
  load_parameters(model, ckpt);
  return model;
}

std::string metrics_header() { return "epoch,rec_nll,kl_walk,kl_graph,mi,beta,auc,frobenius,edges"; }

std::string to_csv(const MetricsRow& r) {
  std::ostringstream os;
  os.precision(10);
  os << r.epoch << ',' << r.rec_nll << ',' << r.kl_walk << ',' << r.kl_graph << ',' << r.mi << ',' << r.beta << ','
     << r.auc << ',' << r.frobenius << ',' << r.edges;
  return os.str();
}

Trainer::Trainer(HsnModel& model, const Dataset& data, const TrainConfig& cfg)
    : model_(model), data_(data), cfg_(cfg), rng_(Rng(cfg.seed).split(7)) {
  cfg_.validate();
  if (data_.train.size() == 0) throw ConfigError("training split is empty");
  adam_ = Adam(model_.parameters(), AdamConfig{cfg_.learning_rate});
  const auto n = static_cast<std::int64_t>(data_.train.size());
  steps_per_epoch_ = (n + cfg_.batch_size - 1) / cfg_.batch_size;
  total_steps_ = steps_per_epoch_ * cfg_.epochs;
  start_epoch();
}

void Trainer::start_epoch() {
  order_.resize(data_.train.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = data_.train.begin + i;
  rng_.shuffle(order_.begin(), order_.end());
  cursor_ = 0;
  accum_.setZero();
}

ObjectiveTerms Trainer::step() {
  if (finished()) throw ConfigError("training already finished");
  const std::size_t end = std::min(order_.size(), cursor_ + static_cast<std::size_t>(cfg_.batch_size));
  std::vector<std::vector<int>> batch;
  batch.reserve(end - cursor_);
  for (std::size_t i = cursor_; i < end; ++i) batch.push_back(data_.sequences[order_[i]]);

  ObjectiveOptions opts;
  opts.tau = cfg_.tau;
  opts.beta = cyclical_beta(std::min(global_step_, total_steps_ - 1), total_steps_, cfg_.anneal_cycles,
                            cfg_.ramp_fraction);
  opts.kl_threshold = cfg_.kl_threshold;
  opts.training = true;
  opts.compute_mi = end == order_.size();  // once per epoch, on its last batch

  adam_.zero_grad();
  ObjectiveTerms t;
  try {
    t = hsn_objective(model_, batch, opts, rng_);
  } catch (const DivergenceError&) {
    throw;
  } catch (const NumericError& e) {
    throw DivergenceError("step " + std::to_string(global_step_) + ": " + e.what());
  }
  if (!std::isfinite(t.loss_value)) throw DivergenceError("step " + std::to_string(global_step_) + ": loss is not finite");
  t.loss.backward();
  for (const auto& p : adam_.params()) {
    if (!p.tensor.grad().allFinite()) {
      throw DivergenceError("step " + std::to_string(global_step_) + ": non-finite gradient for " + p.name);
    }
  }
  adam_.step();

  cursor_ = end;
  ++global_step_;
  accum_(0, 0) += -t.reconstruction;
  accum_(0, 1) += t.kl_walk_aggregated;
  accum_(0, 2) += t.kl_graph;
  accum_(0, 3) += 1.0;
  accum_(0, 4) = opts.beta;
  if (opts.compute_mi) accum_(0, 5) = t.mi_estimate;
  return t;
}

MetricsRow Trainer::run_epoch() {
  while (cursor_ < order_.size()) step();
  return finish_epoch();
}

MetricsRow Trainer::finish_epoch() {
  MetricsRow r;
  r.epoch = epoch_ + 1;
  const double batches = std::max(1.0, accum_(0, 3));
  r.rec_nll = accum_(0, 0) / batches;
  r.kl_walk = accum_(0, 1) / batches;
  r.kl_graph = accum_(0, 2) / batches;
  r.beta = accum_(0, 4);
  r.mi = accum_(0, 5);

  // Graph diagnostics use their own stream so they never perturb training.
  const Matrix probs = edge_probabilities(model_.scorer);
  const AdjacencyMatrix& truth = data_.spec.graph;
  const auto pairs = static_cast<std::int64_t>(truth.size()) * (truth.size() - 1) / 2;
  r.auc = (truth.edge_count() > 0 && truth.edge_count() < pairs) ? roc_auc_edges(probs, truth)
                                                                  : std::numeric_limits<double>::quiet_NaN();
  Rng eval = Rng(cfg_.seed).split(1000000 + static_cast<std::uint64_t>(epoch_));
  const AdjacencyMatrix sample = sample_graph(probs, eval);
  r.frobenius = frobenius_diff(truth, sample);
  r.edges = sample.edge_count();

  ++epoch_;
  if (!finished()) start_epoch();
  return r;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.config_text = cfg_.to_text();
  const auto& mc = model_.config();
  c.meta["nodes"] = std::to_string(mc.nodes);
  c.meta["vocab_size"] = std::to_string(mc.vocab_size);
  c.meta["length"] = std::to_string(mc.length);
  c.meta["likelihood"] = to_string(mc.mode);
  c.meta["adam_t"] = std::to_string(adam_.steps());
  c.meta["global_step"] = std::to_string(global_step_);
  c.meta["epoch"] = std::to_string(epoch_);
  c.meta["cursor"] = std::to_string(cursor_);
  c.meta["rng_state"] = rng_.state();
  const auto& params = adam_.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    c.tensors["param/" + params[i].name] = params[i].tensor.value();
    c.tensors["adam.m/" + params[i].name] = adam_.first_moments()[i];
    c.tensors["adam.v/" + params[i].name] = adam_.second_moments()[i];
  }
  c.tensors["trainer.order"] = to_column(order_);
  c.tensors["trainer.accum"] = accum_;
  return c;
}

void Trainer::restore(const Checkpoint& c) {
  const auto& mc = model_.config();
  auto expect = [&c](const std::string& key, const std::string& want) {
    const std::string& got = meta_at(c, key);
    if (got != want) throw CheckpointMismatch("checkpoint " + key + " is " + got + ", model has " + want);
  };
  expect("nodes", std::to_string(mc.nodes));
  expect("vocab_size", std::to_string(mc.vocab_size));
  expect("length", std::to_string(mc.length));
  expect("likelihood", to_string(mc.mode));

  const auto& params = adam_.params();
  std::size_t expected_tensors = 3 * params.size() + 2;
  if (c.tensors.size() != expected_tensors) throw CheckpointMismatch("checkpoint holds a different parameter set");
  auto fetch = [&c](const std::string& key, Eigen::Index rows, Eigen::Index cols) -> const Matrix& {
    const auto it = c.tensors.find(key);
    if (it == c.tensors.end()) throw CheckpointMismatch("checkpoint lacks tensor '" + key + "'");
    if (it->second.rows() != rows || it->second.cols() != cols) {
      throw CheckpointMismatch("tensor '" + key + "' has shape " + std::to_string(it->second.rows()) + "x" +
                               std::to_string(it->second.cols()) + ", expected " + std::to_string(rows) + "x" +
                               std::to_string(cols));
    }
    return it->second;
  };
  // Validate everything before mutating anything.
  for (const auto& p : params) {
    for (const char* prefix : {"param/", "adam.m/", "adam.v/"}) fetch(prefix + p.name, p.tensor.rows(), p.tensor.cols());
  }
  const Matrix& order = fetch("trainer.order", static_cast<Eigen::Index>(data_.train.size()), 1);
  const Matrix& accum = fetch("trainer.accum", 1, 6);
  const auto cursor = std::stoull(meta_at(c, "cursor"));
  if (cursor > data_.train.size()) throw CheckpointMismatch("checkpoint cursor exceeds the training split");
  for (Eigen::Index i = 0; i < order.rows(); ++i) {
    const auto idx = static_cast<std::size_t>(order(i, 0));
    if (idx < data_.train.begin || idx >= data_.train.end) throw CheckpointMismatch("checkpoint order outside split");
  }

  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor t = params[i].tensor;
    t.mutable_value() = c.tensors.at("param/" + params[i].name);
    adam_.first_moments()[i] = c.tensors.at("adam.m/" + params[i].name);
    adam_.second_moments()[i] = c.tensors.at("adam.v/" + params[i].name);
  }
  adam_.set_steps(std::stoll(meta_at(c, "adam_t")));
  global_step_ = std::stoll(meta_at(c, "global_step"));
  epoch_ = std::stoi(meta_at(c, "epoch"));
  cursor_ = cursor;
  rng_.set_state(meta_at(c, "rng_state"));
  order_.resize(static_cast<std::size_t>(order.rows()));
  for (Eigen::Index i = 0; i < order.rows(); ++i) order_[static_cast<std::size_t>(i)] = static_cast<std::size_t>(order(i, 0));
  accum_ = accum;
  // A final checkpoint stops before the next shuffle; extending `epochs` needs it.
  if (!finished() && cursor_ >= order_.size()) start_epoch();
}

std::vector<MetricsRow> train(HsnModel& model, const Dataset& data, const TrainConfig& cfg,
                              const std::filesystem::path& run_dir, bool resume, bool verbose) {
  namespace fs = std::filesystem;
  fs::create_directories(run_dir);
  const fs::path ckpt_path = run_dir / "checkpoint.bin";
  const fs::path metrics_path = run_dir / "metrics.csv";
  Trainer trainer(model, data, cfg);

  std::vector<std::string> kept;
  if (resume && fs::exists(ckpt_path)) {
    trainer.restore(read_checkpoint(ckpt_path));
    // Drop metric rows written after the checkpoint we resume from.
    std::ifstream in(metrics_path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line == metrics_header()) continue;
      const int ep = std::atoi(line.c_str());
      if (ep >= 1 && ep <= trainer.epoch()) kept.push_back(line);
    }
    if (verbose) std::cerr << "resuming at epoch " << trainer.epoch() << ", step " << trainer.global_step() << '\n';
  }
  {
    std::ofstream out(metrics_path, std::ios::trunc);
    out << metrics_header() << '\n';
    for (const auto& l : kept) out << l << '\n';
  }

  std::vector<MetricsRow> rows;
  while (!trainer.finished()) {
    const MetricsRow r = trainer.run_epoch();
    rows.push_back(r);
    if (trainer.epoch() % cfg.checkpoint_every == 0 || trainer.finished()) {
      write_checkpoint(ckpt_path, trainer.checkpoint());
    }
    std::ofstream out(metrics_path, std::ios::app);
    out << to_csv(r) << '\n';
    if (verbose) {
      std::cerr << "epoch " << r.epoch << "/" << cfg.epochs << " nll " << r.rec_nll << " kl_w " << r.kl_walk
                << " kl_g " << r.kl_graph << " mi " << r.mi << " auc " << r.auc << '\n';
    }
  }
  return rows;
}

}  // namespace hsn
