#include "commands.hpp"

#include "hsn/errors.hpp"
#include "hsn/evaluation.hpp"
#include "hsn/trainer.hpp"

#include <json.hpp>

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>

#ifndef HSN_VERSION
#define HSN_VERSION "0.0.0"
#endif

namespace hsn::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string version() { return HSN_VERSION; }

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

bool quiet_env() {
  const char* v = std::getenv("HSN_QUIET");
  return v != nullptr && *v != '\0' && std::string(v) != "0";
}

/// Exclusive ownership of a run directory for the lifetime of the object.
class DirLock {
 public:
  explicit DirLock(const fs::path& dir) : path_(dir / ".lock") {
    fs::create_directories(dir);
    for (int attempt = 0; attempt < 2; ++attempt) {
      const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
      if (fd >= 0) {
        const std::string pid = std::to_string(::getpid()) + "\n";
        [[maybe_unused]] const auto n = ::write(fd, pid.data(), pid.size());
        ::close(fd);
        return;
      }
      // A lock left by a process that no longer exists is taken over.
      std::ifstream in(path_);
      long pid = 0;
      in >> pid;
      if (pid > 0 && ::kill(static_cast<pid_t>(pid), 0) == 0) break;
      fs::remove(path_);
    }
    throw RunLocked("run directory " + dir.string() + " is locked by another process");
  }
  ~DirLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  fs::path path_;
};

void write_manifest(const fs::path& dir, const json& m) {
  const fs::path tmp = dir / "manifest.json.tmp";
  {
    std::ofstream out(tmp);
    out << m.dump(2) << '\n';
  }
  fs::rename(tmp, dir / "manifest.json");
}

json base_manifest(const std::string& command) {
  return json{{"command", command}, {"version", version()}, {"started", utc_now()}, {"finished", nullptr}};
}

std::string dataset_checksum(const fs::path& dir) {
  std::ifstream in(dir / "meta.json");
  const json meta = json::parse(in, nullptr, false);
  return meta.is_object() ? meta.value("checksum", std::string()) : std::string();
}

GraphModelConfig graph_config(const std::string& family, int nodes, double p, int m) {
  GraphModelConfig g;
  g.kind = parse_graph_kind(family);
  g.nodes = nodes;
  if (g.kind == GraphKind::ErdosRenyi) {
    if (p < 0.0) throw ConfigError("--graph erdos requires --p");
    if (m != 0) throw ConfigError("--m applies to --graph barabasi only");
    g.edge_prob = p;
  } else {
    if (m <= 0) throw ConfigError("--graph barabasi requires --m >= 1");
    if (p >= 0.0) throw ConfigError("--p applies to --graph erdos only");
    g.attach = m;
  }
  g.validate();
  return g;
}

Dataset load_dataset_or_exit(const fs::path& dir, int& code) {
  if (!fs::exists(dir / "meta.json")) {
    std::cerr << "error: no dataset at " << dir << '\n';
    code = kMissingInput;
    return {};
  }
  code = kOk;
  return read_dataset(dir);
}

json stats_json(const GraphStatistics& s, std::int64_t edges) {
  json hist = json::object();
  for (const auto& [d, c] : s.degree_histogram) hist[std::to_string(d)] = c;
  return json{{"edges", edges},
              {"diameter", s.diameter},
              {"avg_distance", s.avg_distance},
              {"clustering", s.clustering},
              {"components", s.n_components},
              {"largest_component", s.largest_component},
              {"degree_histogram", hist}};
}

/// Mean of scalar statistics over sampled graphs.
json mean_stats(const std::vector<AdjacencyMatrix>& graphs) {
  std::vector<double> edges, diam, dist, clust, comps;
  for (const auto& g : graphs) {
    const auto s = graph_statistics(g);
    edges.push_back(static_cast<double>(g.edge_count()));
    diam.push_back(s.diameter);
    dist.push_back(s.avg_distance);
    clust.push_back(s.clustering);
    comps.push_back(s.n_components);
  }
  auto ms = [](const std::vector<double>& v) {
    const auto r = mean_std(v);
    return json{{"mean", r.mean}, {"std", r.std}};
  };
  return json{{"samples", graphs.size()}, {"edges", ms(edges)},         {"diameter", ms(diam)},
              {"avg_distance", ms(dist)}, {"clustering", ms(clust)},    {"components", ms(comps)}};
}

std::map<int, double> mean_degrees(const std::vector<AdjacencyMatrix>& graphs) {
  std::map<int, double> acc;
  for (const auto& g : graphs) {
    for (const auto& [d, p] : degree_distribution(g)) acc[d] += p / static_cast<double>(graphs.size());
  }
  return acc;
}

}  // namespace

int cmd_gen_data(const GenDataOptions& o) {
  if (o.sequences < 1) throw ConfigError("--N must be at least 1");
  GroundTruthConfig cfg;
  cfg.graph = graph_config(o.graph, o.nodes, o.edge_prob, o.attach);
  cfg.vocab_size = o.vocab;
  cfg.bag_size = o.bag_size;
  cfg.walk_length = o.length;
  cfg.seed = o.seed;
  cfg.validate();

  const fs::path out(o.out);
  DirLock lock(out);
  json manifest = base_manifest("gen-data");
  manifest["config"] = {{"graph", o.graph}, {"K", o.nodes},  {"p", cfg.graph.edge_prob}, {"m", cfg.graph.attach},
                        {"V", o.vocab},     {"L", o.length}, {"N", o.sequences},        {"bag_size", o.bag_size}};
  manifest["seeds"] = {{"seed", o.seed}};

  const GroundTruthSpec spec = build_ground_truth(cfg);
  Dataset data = generate_dataset(spec, static_cast<std::size_t>(o.sequences), Rng(o.seed).split(3));
  data.assign_default_splits();
  write_dataset(out, data);

  manifest["artifacts"] = {"meta.json", "sequences.txt", "adjacency.txt", "bags.json", "vocab.txt"};
  manifest["dataset_checksum"] = dataset_checksum(out);
  manifest["finished"] = utc_now();
  write_manifest(out, manifest);

  std::cout << "wrote " << data.size() << " sequences (K=" << spec.nodes() << ", edges=" << spec.graph.edge_count()
            << ", V=" << spec.vocab_size() << ", L=" << spec.walk_length() << ") to " << out.string() << '\n';
  return kOk;
}

int cmd_train(const TrainOptions& o) {
  TrainConfig cfg;
  if (!o.config_file.empty()) {
    std::ifstream in(o.config_file);
    if (!in) {
      std::cerr << "error: cannot read config file " << o.config_file << '\n';
      return kMissingInput;
    }
    std::stringstream ss;
    ss << in.rdbuf();
    cfg.apply(parse_key_values(ss.str(), o.config_file));
  }
  std::map<std::string, std::string> extra;
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + kv + "'");
    extra[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  cfg.apply(extra);
  cfg.apply(o.flags);
  cfg.validate();

  int code = kOk;
  const fs::path data_dir = fs::absolute(o.data);
  const Dataset data = load_dataset_or_exit(data_dir, code);
  if (code != kOk) return code;

  const fs::path run(o.out);
  DirLock lock(run);
  json manifest = base_manifest("train");
  manifest["config"] = parse_key_values(cfg.to_text());
  manifest["seeds"] = {{"seed", cfg.seed}};
  manifest["dataset"] = data_dir.string();
  manifest["dataset_checksum"] = dataset_checksum(data_dir);
  manifest["resume"] = o.resume;
  manifest["artifacts"] = {"checkpoint.bin", "metrics.csv", "config.txt"};
  write_manifest(run, manifest);
  {
    std::ofstream out(run / "config.txt");
    out << cfg.to_text();
  }

  HsnModel model = make_model(cfg, data.spec);
  const bool verbose = !o.quiet && !quiet_env();
  std::vector<MetricsRow> rows;
  try {
    rows = train(model, data, cfg, run, o.resume, verbose);
  } catch (const DivergenceError&) {
    manifest["finished"] = utc_now();
    manifest["status"] = "diverged";
    write_manifest(run, manifest);
    throw;
  }
  manifest["finished"] = utc_now();
  manifest["status"] = "completed";
  write_manifest(run, manifest);
  if (!rows.empty()) {
    const auto& r = rows.back();
    std::cout << "epoch " << r.epoch << ": rec_nll " << r.rec_nll << ", kl_walk " << r.kl_walk << ", kl_graph "
              << r.kl_graph << ", mi " << r.mi << ", auc " << r.auc << '\n';
  } else {
    std::cout << "nothing to do: run already complete\n";
  }
  return kOk;
}

int cmd_eval(const EvalOptions& o) {
  const fs::path run(o.run);
  fs::path data_dir = o.data;
  if (data_dir.empty()) {
    std::ifstream in(run / "manifest.json");
    const json m = json::parse(in, nullptr, false);
    if (!m.is_object() || !m.contains("dataset")) {
      std::cerr << "error: no --data given and no dataset recorded in " << (run / "manifest.json") << '\n';
      return kMissingInput;
    }
    data_dir = m["dataset"].get<std::string>();
  }
  const fs::path ckpt_path = o.checkpoint.empty() ? run / "checkpoint.bin" : fs::path(o.checkpoint);
  if (!fs::exists(ckpt_path)) {
    std::cerr << "error: no checkpoint at " << ckpt_path << '\n';
    return kMissingInput;
  }
  int code = kOk;
  const Dataset data = load_dataset_or_exit(data_dir, code);
  if (code != kOk) return code;

  const Checkpoint ckpt = read_checkpoint(ckpt_path);
  const HsnModel model = model_from_checkpoint(ckpt, data.spec);

  const fs::path out = o.out.empty() ? run / "eval" : fs::path(o.out);
  DirLock lock(out);
  json manifest = base_manifest("eval");
  manifest["config"] = {{"R", o.walks},
                        {"S", o.graphs},
                        {"samples", o.samples},
                        {"stats_samples", o.stats_samples},
                        {"split", o.split},
                        {"max_sequences", o.max_sequences},
                        {"perplexity", !o.skip_perplexity}};
  manifest["seeds"] = {{"seed", o.seed}};
  manifest["dataset"] = fs::absolute(data_dir).string();
  manifest["dataset_checksum"] = dataset_checksum(data_dir);
  manifest["checkpoint"] = fs::absolute(ckpt_path).string();
  manifest["artifacts"] = {"report.json", "table.csv", "degrees.csv", "edge_probs.txt"};
  write_manifest(out, manifest);

  const SplitRange range = o.split == "train" ? data.train : o.split == "valid" ? data.valid : data.test;
  std::size_t end = range.end;
  if (o.max_sequences > 0) end = std::min(end, range.begin + static_cast<std::size_t>(o.max_sequences));
  const std::vector<std::vector<int>> seqs(data.sequences.begin() + static_cast<std::ptrdiff_t>(range.begin),
                                           data.sequences.begin() + static_cast<std::ptrdiff_t>(end));
  if (seqs.empty()) throw ConfigError("evaluation split '" + o.split + "' is empty");

  const Rng root(o.seed);
  const Matrix probs = edge_probabilities(model.scorer);
  GraphModelConfig random_model = data.spec.config.graph;
  Rng rec_rng = root.split(1);
  const RecoveryReport report = recovery_report(probs, data.spec.graph, random_model, o.samples, rec_rng);

  std::map<std::string, double> extra;
  const HmmOracle oracle(data.spec);
  extra["oracle_nll"] = oracle.mean_nll(data.sequences, range.begin, end);
  extra["evaluated_sequences"] = static_cast<double>(seqs.size());
  Rng mi_rng = root.split(3);
  extra["mutual_information"] = mutual_information(model, seqs, mi_rng);
  if (!o.skip_perplexity) {
    Rng ppl_rng = root.split(2);
    const PerplexityResult ppl = mc_perplexity(model, seqs, o.walks, o.graphs, ppl_rng);
    extra["perplexity"] = ppl.perplexity;
    extra["test_nll"] = ppl.mean_nll;
  }
  {
    std::ofstream js(out / "report.json");
    write_report_json(js, report, extra);
  }
  {
    std::ofstream csv(out / "table.csv");
    write_table_csv(csv, to_string(random_model.kind), report);
  }
  {
    std::ofstream pm(out / "edge_probs.txt");
    write_probability_matrix(pm, probs);
  }

  Rng stats_rng = root.split(4);
  std::vector<AdjacencyMatrix> posterior_graphs, er_graphs;
  GraphModelConfig er{GraphKind::ErdosRenyi, data.spec.nodes(), 0.5, 1, 0};
  for (int i = 0; i < o.stats_samples; ++i) {
    posterior_graphs.push_back(sample_graph(probs, stats_rng));
    er_graphs.push_back(sample_erdos_renyi(er, stats_rng));
  }
  {
    std::ofstream csv(out / "degrees.csv");
    write_degree_csv(csv, {{"posterior", mean_degrees(posterior_graphs)},
                           {"truth", degree_distribution(data.spec.graph)},
                           {"erdos_p0.5", mean_degrees(er_graphs)}});
  }
  {
    std::ofstream js(out / "graph_stats.json");
    js << json{{"truth", stats_json(graph_statistics(data.spec.graph), data.spec.graph.edge_count())},
               {"posterior", mean_stats(posterior_graphs)},
               {"erdos_p0.5", mean_stats(er_graphs)}}
              .dump(2)
       << '\n';
  }
  manifest["artifacts"].push_back("graph_stats.json");
  manifest["finished"] = utc_now();
  write_manifest(out, manifest);

  std::cout << "roc_auc " << report.roc_auc << "\nfrobenius_to_truth " << report.frobenius_to_truth.mean << " +- "
            << report.frobenius_to_truth.std << "\nfrobenius_to_random " << report.frobenius_to_random.mean << " +- "
            << report.frobenius_to_random.std << "\nedges_inferred " << report.edges_inferred.mean << " (truth "
            << report.edges_truth << ")\n";
  for (const auto& [k, v] : extra) std::cout << k << ' ' << v << '\n';
  return kOk;
}

int cmd_graph_stats(const GraphStatsOptions& o) {
  std::vector<AdjacencyMatrix> graphs;
  Rng rng(o.seed);
  if (!o.data.empty()) {
    int code = kOk;
    const Dataset data = load_dataset_or_exit(o.data, code);
    if (code != kOk) return code;
    graphs.push_back(data.spec.graph);
  } else if (!o.adjacency.empty()) {
    std::ifstream in(o.adjacency);
    if (!in) {
      std::cerr << "error: cannot read " << o.adjacency << '\n';
      return kMissingInput;
    }
    graphs.push_back(read_adjacency(in, o.adjacency));
  } else if (!o.probs.empty()) {
    std::ifstream in(o.probs);
    if (!in) {
      std::cerr << "error: cannot read " << o.probs << '\n';
      return kMissingInput;
    }
    const Matrix probs = read_probability_matrix(in, o.probs);
    for (int i = 0; i < o.samples; ++i) graphs.push_back(sample_graph(probs, rng));
  } else if (!o.graph.empty()) {
    const GraphModelConfig cfg = graph_config(o.graph, o.nodes, o.edge_prob, o.attach);
    for (int i = 0; i < o.samples; ++i) graphs.push_back(sample_graph_model(cfg, rng));
  } else {
    throw ConfigError("graph-stats needs one of --data, --adjacency, --probs or --graph");
  }

  const json summary = graphs.size() == 1 ? stats_json(graph_statistics(graphs[0]), graphs[0].edge_count())
                                          : mean_stats(graphs);
  std::cout << summary.dump(2) << '\n';
  if (!o.out.empty()) {
    std::ofstream csv(o.out);
    write_degree_csv(csv, {{"degree_fraction", mean_degrees(graphs)}});
  }
  return kOk;
}

}  // namespace hsn::cli
