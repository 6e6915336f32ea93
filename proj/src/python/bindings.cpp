// Python bindings: ground-truth languages, the exact oracle, graph metrics,
// training and evaluation of HSN runs. Matrices cross as float64 numpy arrays.

#include "hsn/checkpoint.hpp"
#include "hsn/errors.hpp"
#include "hsn/evaluation.hpp"
#include "hsn/graph_posterior.hpp"
#include "hsn/synthetic.hpp"
#include "hsn/trainer.hpp"
#include "hsn/walk.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace hsn;

namespace {

GraphModelConfig graph_config(const std::string& kind, int nodes, double p, int m) {
  GraphModelConfig g;
  g.kind = parse_graph_kind(kind);
  g.nodes = nodes;
  if (g.kind == GraphKind::ErdosRenyi) g.edge_prob = p;
  else g.attach = m;
  return g;
}

std::map<std::string, std::string> to_strings(const py::dict& d) {
  std::map<std::string, std::string> out;
  for (const auto& [k, v] : d) out[py::str(k)] = py::str(v);
  return out;
}

py::dict row_dict(const MetricsRow& r) {
  py::dict d;
  d["epoch"] = r.epoch;
  d["rec_nll"] = r.rec_nll;
  d["kl_walk"] = r.kl_walk;
  d["kl_graph"] = r.kl_graph;
  d["mi"] = r.mi;
  d["beta"] = r.beta;
  d["auc"] = r.auc;
  d["frobenius"] = r.frobenius;
  d["edges"] = r.edges;
  return d;
}

std::vector<std::vector<int>> split_of(const Dataset& d, const std::string& name) {
  const SplitRange r = name == "train" ? d.train : name == "valid" ? d.valid : name == "test" ? d.test : SplitRange{};
  if (name != "train" && name != "valid" && name != "test") throw ConfigError("split must be train, valid or test");
  return {d.sequences.begin() + static_cast<std::ptrdiff_t>(r.begin),
          d.sequences.begin() + static_cast<std::ptrdiff_t>(r.end)};
}

}  // namespace

PYBIND11_MODULE(_hsn, m) {
  m.doc() = "Hidden Schema Network core";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<IntegrityError>(m, "IntegrityError", PyExc_IOError);

  m.def(
      "sample_graph",
      [](const std::string& kind, int nodes, double p, int m_attach, std::uint64_t seed) {
        Rng rng(seed);
        return sample_graph_model(graph_config(kind, nodes, p, m_attach), rng).to_matrix();
      },
      py::arg("kind"), py::arg("nodes"), py::arg("p") = 0.0, py::arg("m") = 1, py::arg("seed") = 0,
      "Adjacency matrix of an 'erdos' or 'barabasi' random graph.");

  m.def(
      "graph_statistics",
      [](const Matrix& adj) {
        const GraphStatistics s = graph_statistics(AdjacencyMatrix::from_matrix(adj));
        py::dict d;
        d["diameter"] = s.diameter;
        d["avg_distance"] = s.avg_distance;
        d["clustering"] = s.clustering;
        d["n_components"] = s.n_components;
        d["largest_component"] = s.largest_component;
        d["degree_histogram"] = s.degree_histogram;
        return d;
      },
      py::arg("adjacency"));

  m.def(
      "roc_auc_edges",
      [](const Matrix& probs, const Matrix& truth) { return roc_auc_edges(probs, AdjacencyMatrix::from_matrix(truth)); },
      py::arg("probs"), py::arg("truth"));
  m.def("frobenius_diff", py::overload_cast<const Matrix&, const Matrix&>(&frobenius_diff));
  m.def("kl_graphs", py::overload_cast<const Matrix&, double>(&kl_graphs), py::arg("q"), py::arg("p"));
  m.def(
      "kl_walks",
      [](const RowVector& rho_q, const std::vector<RowVector>& f_q, const RowVector& rho_p,
         const std::vector<RowVector>& f_p, const Matrix& adj) {
        return kl_walks(WalkPosteriorParams{rho_q, f_q}, WalkPrior{rho_p, f_p, false}, adj);
      },
      py::arg("rho_q"), py::arg("weights_q"), py::arg("rho_p"), py::arg("weights_p"), py::arg("adjacency"),
      "Exact KL between a biased walk posterior and the walk prior on a graph.");

  py::class_<GroundTruthSpec>(m, "GroundTruth")
      .def_property_readonly("nodes", &GroundTruthSpec::nodes)
      .def_property_readonly("vocab_size", &GroundTruthSpec::vocab_size)
      .def_property_readonly("walk_length", &GroundTruthSpec::walk_length)
      .def_property_readonly("adjacency", [](const GroundTruthSpec& s) { return s.graph.to_matrix(); })
      .def_property_readonly("emission", &GroundTruthSpec::emission_matrix)
      .def("oracle_nll", &hmm_forward_nll, py::arg("sequence"),
           "Exact negative log-likelihood of a sequence (inf when it cannot be generated).");

  m.def(
      "ground_truth",
      [](const std::string& kind, int nodes, double p, int m_attach, int vocab, int bag_size, int length,
         std::uint64_t seed) {
        GroundTruthConfig c;
        c.graph = graph_config(kind, nodes, p, m_attach);
        c.vocab_size = vocab;
        c.bag_size = bag_size;
        c.walk_length = length;
        c.seed = seed;
        return build_ground_truth(c);
      },
      py::arg("kind"), py::arg("nodes"), py::arg("p") = 0.0, py::arg("m") = 1, py::arg("vocab") = 1000,
      py::arg("bag_size") = 2, py::arg("length") = 10, py::arg("seed") = 0);

  py::class_<Dataset>(m, "Dataset")
      .def_readonly("spec", &Dataset::spec)
      .def_readonly("sequences", &Dataset::sequences)
      .def("__len__", &Dataset::size)
      .def("split", &split_of, py::arg("name"))
      .def("save", [](const Dataset& d, const std::filesystem::path& dir) { write_dataset(dir, d); });

  m.def(
      "generate_dataset",
      [](const GroundTruthSpec& spec, std::size_t n, std::uint64_t seed) {
        Dataset d = generate_dataset(spec, n, Rng(seed).split(3));
        d.assign_default_splits();
        return d;
      },
      py::arg("spec"), py::arg("n"), py::arg("seed") = 0,
      "Same sequence stream as the command-line gen-data for the same seed.");
  m.def("load_dataset", &read_dataset, py::arg("directory"));

  m.def(
      "default_config", [] { return parse_key_values(TrainConfig{}.to_text()); },
      "Training configuration keys and their default values.");

  py::class_<HsnModel>(m, "Model")
      .def_property_readonly("edge_probabilities", [](const HsnModel& model) { return edge_probabilities(model.scorer); })
      .def(
          "perplexity",
          [](const HsnModel& model, const std::vector<std::vector<int>>& seqs, int walks, int graphs,
             std::uint64_t seed) {
            Rng rng(seed);
            const PerplexityResult r = mc_perplexity(model, seqs, walks, graphs, rng);
            return py::make_tuple(r.perplexity, r.mean_nll);
          },
          py::arg("sequences"), py::arg("walks") = 100, py::arg("graphs") = 10, py::arg("seed") = 0,
          "(perplexity, mean NLL per sequence) from the importance-weighted estimator.")
      .def(
          "mutual_information",
          [](const HsnModel& model, const std::vector<std::vector<int>>& seqs, std::uint64_t seed) {
            Rng rng(seed);
            return mutual_information(model, seqs, rng);
          },
          py::arg("sequences"), py::arg("seed") = 0);

  m.def(
      "train",
      [](const Dataset& data, const py::dict& config, const std::filesystem::path& run_dir, bool resume) {
        const TrainConfig cfg = TrainConfig::from_map(to_strings(config));
        HsnModel model = make_model(cfg, data.spec);
        std::vector<MetricsRow> rows;
        {
          py::gil_scoped_release release;
          rows = train(model, data, cfg, run_dir, resume, false);
        }
        py::list out;
        for (const auto& r : rows) out.append(row_dict(r));
        return py::make_tuple(std::move(model), out);
      },
      py::arg("dataset"), py::arg("config"), py::arg("run_dir"), py::arg("resume") = false,
      "Trains a model; returns (model, per-epoch metrics). Writes metrics.csv and checkpoint.bin.");

  m.def(
      "load_model",
      [](const std::filesystem::path& checkpoint, const GroundTruthSpec& spec) {
        return model_from_checkpoint(read_checkpoint(checkpoint), spec);
      },
      py::arg("checkpoint"), py::arg("spec"));
}
