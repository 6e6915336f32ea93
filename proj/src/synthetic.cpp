#include "hsn/synthetic.hpp"

#include "hsn/errors.hpp"
#include "hsn/walk.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace hsn {

using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

}  // namespace

double TokenBag::prob(int token) const {
  for (const auto& [t, p] : entries) {
    if (t == token) return p;
  }
  return 0.0;
}

void TokenBag::validate(int vocab_size) const {
  if (entries.empty()) throw ConfigError("token bag must not be empty");
  double total = 0.0;
  std::set<int> seen;
  for (const auto& [t, p] : entries) {
    if (t < 0 || t >= vocab_size) throw ConfigError("token id outside the vocabulary");
    if (!(p > 0.0)) throw ConfigError("token bag probabilities must be positive");
    if (!seen.insert(t).second) throw ConfigError("token listed twice in a bag");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("token bag probabilities must sum to 1");
}

void GroundTruthConfig::validate() const {
  graph.validate();
  if (vocab_size < 1) throw ConfigError("vocabulary size must be positive");
  if (bag_size < 1) throw ConfigError("bag size must be positive");
  if (bag_size > vocab_size) throw ConfigError("bag size exceeds the vocabulary size");
  if (walk_length < 1) throw ConfigError("walk length must be positive");
}

Matrix GroundTruthSpec::emission_matrix() const {
  Matrix e = Matrix::Zero(nodes(), vocab_size());
  for (int k = 0; k < nodes(); ++k) {
    for (const auto& [t, p] : bags[k].entries) e(k, t) = p;
  }
  return e;
}

void GroundTruthSpec::validate() const {
  config.validate();
  if (graph.size() != config.graph.nodes) throw ConfigError("graph size does not match the configuration");
  if (static_cast<int>(bags.size()) != graph.size()) throw ConfigError("one token bag per node is required");
  for (const auto& b : bags) b.validate(config.vocab_size);
}

void Dataset::assign_default_splits() {
  const std::size_t n = sequences.size();
  const std::size_t n_train = n * 9 / 10;
  const std::size_t n_valid = (n - n_train) / 2;
  train = {0, n_train};
  valid = {n_train, n_train + n_valid};
  test = {n_train + n_valid, n};
}

void Dataset::validate() const {
  spec.validate();
  const auto len = static_cast<std::size_t>(spec.walk_length());
  for (const auto& s : sequences) {
    if (s.size() != len) throw ConfigError("sequence length does not match the walk length");
    for (int t : s) {
      if (t < 0 || t >= spec.vocab_size()) throw ConfigError("token id outside the vocabulary");
    }
  }
  if (train.begin != 0 || train.end > valid.begin || valid.end > test.begin || test.end != sequences.size() ||
      train.begin > train.end || valid.begin > valid.end || test.begin > test.end) {
    throw ConfigError("dataset splits must be ordered, disjoint and cover the sequences");
  }
}

GroundTruthSpec build_ground_truth(const GroundTruthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  Rng graph_rng = rng.split(1);
  Rng bag_rng = rng.split(2);
  GroundTruthSpec spec;
  spec.config = cfg;
  spec.graph = sample_graph_model(cfg.graph, graph_rng);
  std::vector<int> vocab(static_cast<std::size_t>(cfg.vocab_size));
  for (int i = 0; i < cfg.vocab_size; ++i) vocab[i] = i;
  for (int k = 0; k < cfg.graph.nodes; ++k) {
    // Partial Fisher-Yates: the first bag_size entries become a uniform draw without replacement.
    TokenBag bag;
    for (int b = 0; b < cfg.bag_size; ++b) {
      const auto j = b + static_cast<int>(bag_rng.below(static_cast<std::uint64_t>(cfg.vocab_size - b)));
      std::swap(vocab[b], vocab[j]);
      bag.entries.emplace_back(vocab[b], 1.0 / cfg.bag_size);
    }
    spec.bags.push_back(std::move(bag));
  }
  return spec;
}

Dataset generate_dataset(const GroundTruthSpec& spec, std::size_t n, const Rng& rng,
                         std::vector<std::vector<int>>* walks) {
  spec.validate();
  const int k = spec.nodes();
  const int len = spec.walk_length();
  std::vector<std::vector<int>> nbrs(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      if (spec.graph.has_edge(i, j)) nbrs[i].push_back(j);
    }
  }
  Dataset data;
  data.spec = spec;
  data.sequences.resize(n);
  if (walks) walks->assign(n, {});
  for (std::size_t s = 0; s < n; ++s) {
    Rng stream = rng.split(s);
    std::vector<int> seq(static_cast<std::size_t>(len));
    std::vector<int> path(static_cast<std::size_t>(len));
    int node = static_cast<int>(stream.below(static_cast<std::uint64_t>(k)));
    for (int i = 0; i < len; ++i) {
      if (i > 0) {
        const auto& nb = nbrs[node];
        // Isolated nodes jump uniformly over all nodes, as in the transition-matrix fallback.
        node = nb.empty() ? static_cast<int>(stream.below(static_cast<std::uint64_t>(k)))
                          : nb[stream.below(nb.size())];
      }
      path[i] = node;
      const auto& bag = spec.bags[node].entries;
      std::vector<double> w;
      w.reserve(bag.size());
      for (const auto& e : bag) w.push_back(e.second);
      seq[i] = bag[stream.categorical(w.data(), w.size())].first;
    }
    data.sequences[s] = std::move(seq);
    if (walks) (*walks)[s] = std::move(path);
  }
  data.assign_default_splits();
  return data;
}

HmmOracle::HmmOracle(const GroundTruthSpec& spec) : length_(spec.walk_length()) {
  spec.validate();
  transition_ = transition_matrix(RowVector::Ones(spec.nodes()), spec.graph.to_matrix());
  emission_t_ = spec.emission_matrix().transpose();
}

ForwardResult HmmOracle::operator()(const std::vector<int>& x) const {
  if (static_cast<int>(x.size()) != length_) throw ConfigError("sequence length does not match the walk length");
  const auto k = transition_.rows();
  ForwardResult r;
  Vector alpha = Vector::Constant(k, 1.0 / static_cast<double>(k));
  double log_norm = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] < 0 || x[i] >= emission_t_.rows()) throw ConfigError("token id outside the vocabulary");
    if (i > 0) alpha = transition_ * alpha;
    alpha = alpha.cwiseProduct(emission_t_.row(x[i]).transpose());
    const double c = alpha.sum();
    if (!(c > 0.0)) {
      r.nll = std::numeric_limits<double>::infinity();
      r.generable = false;
      return r;
    }
    alpha /= c;
    log_norm += std::log(c);
  }
  r.nll = -log_norm;
  return r;
}

double HmmOracle::mean_nll(const std::vector<std::vector<int>>& data, std::size_t begin, std::size_t end) const {
  if (end <= begin || end > data.size()) throw ConfigError("empty or invalid sequence range");
  double total = 0.0;
  for (std::size_t i = begin; i < end; ++i) total += (*this)(data[i]).nll;
  return total / static_cast<double>(end - begin);
}

ForwardResult hmm_forward(const GroundTruthSpec& spec, const std::vector<int>& sequence) {
  return HmmOracle(spec)(sequence);
}

double hmm_forward_nll(const GroundTruthSpec& spec, const std::vector<int>& sequence) {
  return hmm_forward(spec, sequence).nll;
}

std::vector<std::string> vocabulary_names(int vocab_size) {
  static const char* const kSyllables[] = {"ba", "ce", "di", "fo", "gu", "ha", "je", "ki", "lo", "mu",
                                           "na", "pe", "qi", "ro", "su", "ta", "ve", "wi", "xo", "zu"};
  constexpr int kN = 20;
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(vocab_size));
  for (int v = 0; v < vocab_size; ++v) {
    std::string w;
    int x = v;
    for (int part = 0; part < 3; ++part) {
      w += kSyllables[x % kN];
      x /= kN;
    }
    if (x > 0) w += std::to_string(x);
    out.push_back(std::move(w));
  }
  return out;
}

std::uint64_t fnv1a(const std::string& bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

namespace {

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ParseError(p.string(), 0, "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << content;
  if (!out) throw std::runtime_error("write failed for " + p.string());
}

std::string sequences_text(const std::vector<std::vector<int>>& seqs) {
  std::ostringstream os;
  for (const auto& s : seqs) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i) os << ' ';
      os << s[i];
    }
    os << '\n';
  }
  return os.str();
}

std::string bags_text(const std::vector<TokenBag>& bags) {
  json j = json::object();
  for (std::size_t k = 0; k < bags.size(); ++k) {
    json entries = json::array();
    for (const auto& [t, p] : bags[k].entries) entries.push_back({t, p});
    j[std::to_string(k)] = entries;
  }
  return j.dump(1) + "\n";
}

std::string adjacency_text(const AdjacencyMatrix& a) {
  std::ostringstream os;
  write_adjacency(os, a);
  return os.str();
}

std::uint64_t content_checksum(const std::string& seqs, const std::string& adj, const std::string& bags) {
  return fnv1a(bags, fnv1a(adj, fnv1a(seqs)));
}

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

json parse_json(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    const auto upto = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + upto, '\n'));
    throw ParseError(source, line, e.what());
  }
}

}  // namespace

void write_dataset(const std::filesystem::path& dir, const Dataset& data) {
  data.validate();
  std::filesystem::create_directories(dir);
  const std::string seqs = sequences_text(data.sequences);
  const std::string adj = adjacency_text(data.spec.graph);
  const std::string bags = bags_text(data.spec.bags);
  const auto& cfg = data.spec.config;
  json meta = {
      {"format_version", kFormatVersion},
      {"V", cfg.vocab_size},
      {"K", cfg.graph.nodes},
      {"L", cfg.walk_length},
      {"N", data.sequences.size()},
      {"bag_size", cfg.bag_size},
      {"graph", {{"kind", to_string(cfg.graph.kind)}, {"p", cfg.graph.edge_prob}, {"m", cfg.graph.attach}}},
      {"seed", cfg.seed},
      {"splits",
       {{"train", {data.train.begin, data.train.end}},
        {"valid", {data.valid.begin, data.valid.end}},
        {"test", {data.test.begin, data.test.end}}}},
      {"checksum", hex(content_checksum(seqs, adj, bags))},
  };
  write_file(dir / "sequences.txt", seqs);
  write_file(dir / "adjacency.txt", adj);
  write_file(dir / "bags.json", bags);
  std::ostringstream vocab;
  for (const auto& w : vocabulary_names(cfg.vocab_size)) vocab << w << '\n';
  write_file(dir / "vocab.txt", vocab.str());
  write_file(dir / "meta.json", meta.dump(2) + "\n");
}

Dataset read_dataset(const std::filesystem::path& dir) {
  const auto meta_path = dir / "meta.json";
  if (!std::filesystem::exists(meta_path)) throw ParseError(meta_path.string(), 0, "missing dataset metadata");
  const json meta = parse_json(read_file(meta_path), meta_path.string());
  Dataset data;
  GroundTruthConfig cfg;
  std::size_t n = 0;
  try {
    if (meta.at("format_version").get<int>() != kFormatVersion) {
      throw IntegrityError("unsupported dataset format version");
    }
    cfg.vocab_size = meta.at("V").get<int>();
    cfg.walk_length = meta.at("L").get<int>();
    cfg.bag_size = meta.at("bag_size").get<int>();
    cfg.seed = meta.at("seed").get<std::uint64_t>();
    cfg.graph.nodes = meta.at("K").get<int>();
    cfg.graph.kind = parse_graph_kind(meta.at("graph").at("kind").get<std::string>());
    cfg.graph.edge_prob = meta.at("graph").at("p").get<double>();
    cfg.graph.attach = meta.at("graph").at("m").get<int>();
    cfg.graph.seed = cfg.seed;
    n = meta.at("N").get<std::size_t>();
    const auto& sp = meta.at("splits");
    auto range = [&](const char* key) {
      return SplitRange{sp.at(key).at(0).get<std::size_t>(), sp.at(key).at(1).get<std::size_t>()};
    };
    data.train = range("train");
    data.valid = range("valid");
    data.test = range("test");
  } catch (const json::exception& e) {
    throw ParseError(meta_path.string(), 0, e.what());
  }

  const std::string seqs = read_file(dir / "sequences.txt");
  const std::string adj = read_file(dir / "adjacency.txt");
  const std::string bags = read_file(dir / "bags.json");

  // Sequences first: structural problems are reported with their line.
  {
    std::istringstream is(seqs);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      std::istringstream ls(line);
      std::vector<int> s;
      std::string tok;
      while (ls >> tok) {
        std::size_t used = 0;
        int v = 0;
        try {
          v = std::stoi(tok, &used);
        } catch (const std::exception&) {
          used = 0;
        }
        if (used != tok.size() || tok.empty()) {
          throw ParseError((dir / "sequences.txt").string(), lineno, "not an integer token id: '" + tok + "'");
        }
        s.push_back(v);
      }
      if (static_cast<int>(s.size()) != cfg.walk_length) {
        throw ParseError((dir / "sequences.txt").string(), lineno,
                         "expected " + std::to_string(cfg.walk_length) + " tokens, found " + std::to_string(s.size()));
      }
      data.sequences.push_back(std::move(s));
    }
    if (data.sequences.size() != n) {
      throw ParseError((dir / "sequences.txt").string(), lineno + 1,
                       "expected " + std::to_string(n) + " sequences, found " + std::to_string(data.sequences.size()));
    }
  }

  const std::string stored = meta.value("checksum", std::string());
  if (stored != hex(content_checksum(seqs, adj, bags))) {
    throw IntegrityError("dataset checksum mismatch in " + dir.string());
  }

  data.spec.config = cfg;
  {
    std::istringstream is(adj);
    data.spec.graph = read_adjacency(is, (dir / "adjacency.txt").string());
  }
  const json bj = parse_json(bags, (dir / "bags.json").string());
  try {
    for (int k = 0; k < cfg.graph.nodes; ++k) {
      TokenBag b;
      for (const auto& e : bj.at(std::to_string(k))) b.entries.emplace_back(e.at(0).get<int>(), e.at(1).get<double>());
      data.spec.bags.push_back(std::move(b));
    }
  } catch (const json::exception& e) {
    throw ParseError((dir / "bags.json").string(), 0, e.what());
  }
  data.validate();
  return data;
}

}  // namespace hsn
