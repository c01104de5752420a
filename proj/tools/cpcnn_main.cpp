// cpcnn command-line front end.
//
// Model and training settings come from a key=value file (--config) with
// --set key=value overrides applied on top. The CIFAR-10 directory is read
// from --data or the CPCNN_DATA environment variable.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "cpcnn/checkpoint.hpp"
#include "cpcnn/dag.hpp"
#include "cpcnn/errors.hpp"
#include "cpcnn/gradcheck.hpp"
#include "cpcnn/graph.hpp"
#include "cpcnn/mask.hpp"
#include "cpcnn/sweep.hpp"
#include "cpcnn/train.hpp"

using namespace cpcnn;
namespace fs = std::filesystem;

namespace {

struct SettingsArgs {
  std::string config;
  std::vector<std::string> overrides;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config, "key=value settings file");
    cmd->add_option("--set", overrides, "Override one setting (key=value), repeatable");
  }

  Settings merged() const {
    Settings s;
    if (!config.empty()) s = read_settings_file(config);
    for (const auto& o : overrides) {
      const auto eq = o.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got \"" + o + "\"");
      s[o.substr(0, eq)] = o.substr(eq + 1);
    }
    return s;
  }

  void resolve(ModelConfig& m, TrainConfig& t) const {
    apply_settings(merged(), m, t);
    m.validate();
    t.validate();
  }
};

struct DataArgs {
  std::string source = "cifar10";
  std::string dir;
  std::size_t train_limit = 0;
  std::size_t eval_limit = 0;
  int synth_per_class = 100;

  void attach(CLI::App* cmd) {
    cmd->add_option("--dataset", source, "cifar10 or synth")->check(CLI::IsMember({"cifar10", "synth"}));
    cmd->add_option("--data", dir, "CIFAR-10 binary batch directory (default: $CPCNN_DATA)");
    cmd->add_option("--train-limit", train_limit, "Use only the first N training records (0: all)");
    cmd->add_option("--eval-limit", eval_limit, "Use only the first N evaluation records (0: all)");
    cmd->add_option("--synth-per-class", synth_per_class, "Synthetic images per class");
  }

  // Train and evaluation sets sized for the model's input.
  std::pair<Dataset, Dataset> load(const ModelConfig& m, const TrainConfig& t) const {
    if (source == "synth") {
      Dataset train = synth_dataset(synth_per_class, m.num_classes, m.image_size, split(Seed{t.seed}, 900), m.in_channels);
      Dataset eval = synth_dataset(synth_per_class, m.num_classes, m.image_size, split(Seed{t.seed}, 901), m.in_channels);
      if (train_limit) train = train.head(train_limit);
      if (eval_limit) eval = eval.head(eval_limit);
      return {std::move(train), std::move(eval)};
    }
    std::string root = dir;
    if (root.empty())
      if (const char* env = std::getenv("CPCNN_DATA")) root = env;
    if (root.empty()) throw ConfigError("no CIFAR-10 directory: pass --data or set CPCNN_DATA");
    Cifar10 c = load_cifar10(root, train_limit, eval_limit);
    if (c.train.height != m.image_size) {
      c.train = resize_dataset(c.train, m.image_size);
      c.test = resize_dataset(c.test, m.image_size);
    }
    return {std::move(c.train), std::move(c.test)};
  }
};

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) throw IngestionError("cannot write " + path);
}

std::string format_settings(const Settings& s) {
  std::string out;
  for (const auto& [k, v] : s) out += k + " = " + v + "\n";
  return out;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

void print_stats(const Graph& g, int n_c) {
  const auto st = block_density_stats(g, n_c);
  std::printf("nodes %d\nedges %zu\nn_c %d\ndensity %.6f\nd_cc %.6f\nd_cp %.6f\nd_pp %.6f\n", g.node_count(),
              g.edge_count(), n_c, st.overall, st.d_cc, st.d_cp, st.d_pp);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Core-periphery guided CNN toolkit"};
  app.require_subcommand(1);

  // graph gen | graph stats
  auto* graph = app.add_subcommand("graph", "Generate or inspect undirected graphs");
  graph->require_subcommand(1);
  SettingsArgs gen_settings;
  std::string gen_out;
  auto* gen = graph->add_subcommand("gen", "Sample a graph from the configured family");
  gen_settings.attach(gen);
  gen->add_option("-o,--out", gen_out, "Output file (default: stdout)");
  std::string stats_in;
  auto* stats = graph->add_subcommand("stats", "Edge and block densities of a graph file");
  stats->add_option("graph", stats_in, "Graph file")->required();

  // compile
  std::string compile_in, compile_out;
  std::uint64_t compile_seed = 0;
  auto* compile = app.add_subcommand("compile", "Compile a graph into a block DAG");
  compile->add_option("graph", compile_in, "Graph file")->required();
  compile->add_option("--seed", compile_seed, "Node labelling seed");
  compile->add_option("-o,--out", compile_out, "Output file (default: stdout)");

  // mask dump
  auto* mask = app.add_subcommand("mask", "Channel masks");
  mask->require_subcommand(1);
  std::string mask_in, mask_out;
  int mask_cin = 0, mask_cout = 0;
  auto* dump = mask->add_subcommand("dump", "Channel mask of a graph for a given channel count");
  dump->add_option("graph", mask_in, "Graph file")->required();
  dump->add_option("--in", mask_cin, "Input channels")->required();
  dump->add_option("--out-channels", mask_cout, "Output channels (default: same as --in)");
  dump->add_option("-o,--out", mask_out, "Output file (default: stdout)");

  // train
  SettingsArgs train_settings;
  DataArgs train_data;
  std::string train_dir = "run", resume_path;
  int stop_after = 0;
  auto* trn = app.add_subcommand("train", "Train a model and write run.csv, checkpoint.bin and settings.txt");
  train_settings.attach(trn);
  train_data.attach(trn);
  trn->add_option("--out-dir", train_dir, "Run directory");
  trn->add_option("--resume", resume_path, "Checkpoint of an interrupted run with the same settings");
  trn->add_option("--stop-after", stop_after, "Stop after this epoch (schedule still spans all epochs)");

  // eval
  SettingsArgs eval_settings;
  DataArgs eval_data;
  std::string eval_ckpt;
  auto* evl = app.add_subcommand("eval", "Top-1 accuracy of a checkpoint on the evaluation set");
  eval_settings.attach(evl);
  eval_data.attach(evl);
  evl->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();

  // sweep
  SettingsArgs sweep_settings;
  DataArgs sweep_data;
  std::string families = "cp", cores = "2,4,6,8,10,12,14", seeds = "0,1,2", sweep_dir = "sweep";
  auto* swp = app.add_subcommand("sweep", "Train over graph families, core counts and seeds");
  sweep_settings.attach(swp);
  sweep_data.attach(swp);
  swp->add_option("--families", families, "Comma-separated families (cp,er,ws)");
  swp->add_option("--cores", cores, "Comma-separated core counts");
  swp->add_option("--seeds", seeds, "Comma-separated seeds");
  swp->add_option("--out-dir", sweep_dir, "Directory for sweep.csv and sweep_aggregate.csv");

  // gradcheck
  int gc_trials = 20;
  std::uint64_t gc_seed = 0;
  double gc_tol = 1e-4;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable op");
  gc->add_option("--trials", gc_trials, "Random shapes per op");
  gc->add_option("--seed", gc_seed, "Seed");
  gc->add_option("--tolerance", gc_tol, "Maximum relative error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::fprintf(stderr, "error: kind=usage message=\"%s\"\n", e.what());
    return 2;
  }

  try {
    if (gen->parsed()) {
      ModelConfig mc;
      TrainConfig tc;
      gen_settings.resolve(mc, tc);
      write_text(gen_out, format_graph(make_graph(mc), mc.family == GraphFamily::cp ? mc.graph_params.n_c : 0));
    } else if (stats->parsed()) {
      const auto pg = read_graph_file(stats_in);
      print_stats(pg.graph, pg.n_c);
    } else if (compile->parsed()) {
      const auto pg = read_graph_file(compile_in);
      write_text(compile_out, format_block_graph(compile_block(pg.graph, Seed{compile_seed})));
    } else if (dump->parsed()) {
      const auto pg = read_graph_file(mask_in);
      const auto m = build_channel_mask(relational_bipartite(pg.graph), mask_cin, mask_cout ? mask_cout : mask_cin);
      write_text(mask_out, dump_mask(m));
    } else if (trn->parsed()) {
      ModelConfig mc;
      TrainConfig tc;
      const Settings s = train_settings.merged();
      train_settings.resolve(mc, tc);
      auto [train_set, eval_set] = train_data.load(mc, tc);
      Model model(mc);
      const auto counts = model.param_count();
      std::fprintf(stderr, "model: %lld dense / %lld effective parameters\n", static_cast<long long>(counts.dense),
                   static_cast<long long>(counts.effective));
      NamedTensors resume;
      TrainOptions opts;
      opts.stop_after_epoch = stop_after;
      if (!resume_path.empty()) {
        resume = load_checkpoint(resume_path);
        opts.resume = &resume;
      }
      opts.on_epoch = [](const EpochRow& r) {
        std::fprintf(stderr, "epoch %d loss %.4f train_acc %.4f eval_acc %.4f lr %.3g (%.1f s)\n", r.epoch,
                     r.train_loss, r.train_acc, r.eval_acc, r.lr, r.wall_time_s);
      };
      const auto result = train(model, train_set, &eval_set, tc, opts);
      fs::create_directories(train_dir);
      const fs::path dir(train_dir);
      write_text((dir / "run.csv").string(), format_run_record(result.record));
      save_checkpoint((dir / "checkpoint.bin").string(), result.checkpoint);
      write_text((dir / "settings.txt").string(), format_settings(s));
      std::printf("final eval accuracy %.4f\n", result.record.rows.back().eval_acc);
    } else if (evl->parsed()) {
      ModelConfig mc;
      TrainConfig tc;
      eval_settings.resolve(mc, tc);
      Model model(mc);
      model.load_state(model_state_from_checkpoint(load_checkpoint(eval_ckpt)));
      const auto eval_set = eval_data.load(mc, tc).second;
      std::printf("accuracy %.4f\n", evaluate(model, eval_set));
    } else if (swp->parsed()) {
      ModelConfig mc;
      TrainConfig tc;
      sweep_settings.resolve(mc, tc);
      SweepConfig sc;
      sc.families.clear();
      for (const auto& f : split_list(families)) sc.families.push_back(parse_graph_family(f));
      sc.core_counts.clear();
      for (const auto& c : split_list(cores)) sc.core_counts.push_back(std::stoi(c));
      sc.seeds.clear();
      for (const auto& c : split_list(seeds)) sc.seeds.push_back(std::stoull(c));
      auto [train_set, eval_set] = sweep_data.load(mc, tc);
      const auto rows = run_sweep(mc, tc, sc, train_set, eval_set, [](const SweepRow& r) {
        std::fprintf(stderr, "%s n_c=%d seed=%llu accuracy %.4f\n", to_string(r.family), r.n_c,
                     static_cast<unsigned long long>(r.seed), r.eval_accuracy);
      });
      fs::create_directories(sweep_dir);
      write_text((fs::path(sweep_dir) / "sweep.csv").string(), format_sweep_csv(rows));
      const std::string agg = format_sweep_aggregate_csv(rows);
      write_text((fs::path(sweep_dir) / "sweep_aggregate.csv").string(), agg);
      std::cout << agg;
    } else if (gc->parsed()) {
      bool ok = true;
      for (const auto& r : run_gradient_suite(gc_trials, gc_seed, gc_tol)) {
        std::printf("%-22s trials %d max_rel_error %.3e %s\n", r.op.c_str(), r.trials, r.max_rel_error,
                    r.passed ? "ok" : "FAIL");
        ok = ok && r.passed;
      }
      if (!ok) throw Error("gradcheck", "relative error above tolerance");
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: kind=%s message=\"%s\"\n", e.kind().c_str(), e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: kind=internal message=\"%s\"\n", e.what());
    return 3;
  }
  return 0;
}
