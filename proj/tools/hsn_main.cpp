// hsn: dataset generation, training and evaluation of hidden schema networks.

#include "commands.hpp"

#include "hsn/errors.hpp"

#include <iostream>

#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace {

using namespace hsn::cli;

void add_train_flag(CLI::App* cmd, TrainOptions& o, const std::string& flag, const std::string& key,
                    const std::string& help) {
  cmd->add_option_function<std::string>(
      flag, [&o, key](const std::string& v) { o.flags[key] = v; }, help);
}

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
  // Training allocates and frees large temporaries every step; keep them in the heap.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 1 << 28);
#endif
  CLI::App app{"Hidden schema networks: synthetic data, training and evaluation"};
  app.set_version_flag("--version", version());
  app.require_subcommand(1);

  GenDataOptions gen;
  auto* g = app.add_subcommand("gen-data", "Generate a synthetic random-walk language dataset");
  g->add_option("--graph", gen.graph, "Ground-truth graph family")->required()->check(CLI::IsMember({"erdos", "barabasi"}));
  g->add_option("--K", gen.nodes, "Number of symbols (graph nodes)")->required();
  g->add_option("--p", gen.edge_prob, "Edge probability (erdos)");
  g->add_option("--m", gen.attach, "Edges attached per new node (barabasi)");
  g->add_option("--V", gen.vocab, "Vocabulary size")->capture_default_str();
  g->add_option("--L", gen.length, "Sequence length")->capture_default_str();
  g->add_option("--N", gen.sequences, "Number of sequences")->required();
  g->add_option("--bag-size", gen.bag_size, "Tokens per symbol bag")->capture_default_str();
  g->add_option("--seed", gen.seed, "Random seed")->capture_default_str();
  g->add_option("--out", gen.out, "Output dataset directory")->required();

  TrainOptions tr;
  auto* t = app.add_subcommand("train", "Train a model on a dataset");
  t->add_option("--data", tr.data, "Dataset directory")->required();
  t->add_option("--out", tr.out, "Run directory")->required();
  t->add_option("--config", tr.config_file, "File of key = value training settings");
  t->add_option("--set", tr.overrides, "Extra key=value setting (repeatable)");
  add_train_flag(t, tr, "--epochs", "epochs", "Training epochs (default 200)");
  add_train_flag(t, tr, "--batch-size", "batch_size", "Minibatch size (default 256)");
  add_train_flag(t, tr, "--lr", "learning_rate", "Adam learning rate (default 1e-4)");
  add_train_flag(t, tr, "--tau", "tau", "Relaxation temperature (default 0.75)");
  add_train_flag(t, tr, "--prior-p", "prior_edge_prob", "Graph prior edge probability (default 0.2)");
  add_train_flag(t, tr, "--seed", "seed", "Random seed (default 0)");
  add_train_flag(t, tr, "--likelihood", "likelihood", "bag or psa (default bag)");
  add_train_flag(t, tr, "--embed-dim", "embed_dim", "Encoder width (default 256)");
  add_train_flag(t, tr, "--checkpoint-every", "checkpoint_every", "Epochs between checkpoints (default 1)");
  t->add_flag("--resume", tr.resume, "Continue from the run directory checkpoint");
  t->add_flag("--quiet", tr.quiet, "No progress output");

  EvalOptions ev;
  auto* e = app.add_subcommand("eval", "Evaluate a trained run");
  e->add_option("--run", ev.run, "Run directory")->required();
  e->add_option("--data", ev.data, "Dataset directory (default: the one recorded in the run manifest)");
  e->add_option("--checkpoint", ev.checkpoint, "Checkpoint file (default: <run>/checkpoint.bin)");
  e->add_option("--out", ev.out, "Report directory (default: <run>/eval)");
  e->add_option("--split", ev.split, "Evaluation split")->check(CLI::IsMember({"train", "valid", "test"}))->capture_default_str();
  e->add_option("--R", ev.walks, "Walk samples per graph sample")->check(CLI::PositiveNumber)->capture_default_str();
  e->add_option("--S", ev.graphs, "Graph samples per sequence")->check(CLI::PositiveNumber)->capture_default_str();
  e->add_option("--samples", ev.samples, "Posterior graph samples for recovery metrics")->check(CLI::PositiveNumber)->capture_default_str();
  e->add_option("--stats-samples", ev.stats_samples, "Graph samples for degree statistics")->check(CLI::PositiveNumber)->capture_default_str();
  e->add_option("--max-sequences", ev.max_sequences, "Cap on evaluated sequences (0 = all)")->capture_default_str();
  e->add_option("--seed", ev.seed, "Random seed")->capture_default_str();
  e->add_flag("--no-perplexity", ev.skip_perplexity, "Skip the Monte Carlo perplexity estimate");

  GraphStatsOptions gs;
  auto* s = app.add_subcommand("graph-stats", "Topology statistics of a graph or graph distribution");
  auto* src_data = s->add_option("--data", gs.data, "Dataset directory (ground-truth graph)");
  auto* src_adj = s->add_option("--adjacency", gs.adjacency, "Adjacency matrix file");
  auto* src_probs = s->add_option("--probs", gs.probs, "Edge probability matrix file (sampled)");
  auto* src_graph = s->add_option("--graph", gs.graph, "Random graph family (sampled)")->check(CLI::IsMember({"erdos", "barabasi"}));
  src_data->excludes(src_adj, src_probs, src_graph);
  src_adj->excludes(src_probs, src_graph);
  src_probs->excludes(src_graph);
  s->add_option("--K", gs.nodes, "Number of nodes (with --graph)");
  s->add_option("--p", gs.edge_prob, "Edge probability (erdos)");
  s->add_option("--m", gs.attach, "Edges attached per new node (barabasi)");
  s->add_option("--samples", gs.samples, "Samples for random sources")->check(CLI::PositiveNumber)->capture_default_str();
  s->add_option("--seed", gs.seed, "Random seed")->capture_default_str();
  s->add_option("--out", gs.out, "Degree distribution CSV output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::CallForVersion& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return kUsage;
  }

  try {
    if (g->parsed()) return cmd_gen_data(gen);
    if (t->parsed()) return cmd_train(tr);
    if (e->parsed()) return cmd_eval(ev);
    if (s->parsed()) return cmd_graph_stats(gs);
  } catch (const RunLocked& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kLocked;
  } catch (const hsn::CheckpointMismatch& err) {
    std::cerr << "error: checkpoint mismatch: " << err.what() << '\n';
    return kCheckpointMismatch;
  } catch (const hsn::DivergenceError& err) {
    std::cerr << "error: training diverged: " << err.what() << '\n';
    return kDivergence;
  } catch (const hsn::ConfigError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kUsage;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kFailure;
  }
  return kUsage;
}
