#include "cpcnn/sweep.hpp"

#include <cmath>
#include <cstdio>
#include <map>

#include "cpcnn/errors.hpp"

namespace cpcnn {

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

std::vector<SweepRow> run_sweep(const ModelConfig& base, const TrainConfig& train_cfg, const SweepConfig& sweep,
                                const Dataset& train_set, const Dataset& eval_set,
                                const std::function<void(const SweepRow&)>& on_row) {
  if (sweep.families.empty()) throw ConfigError("sweep needs at least one graph family");
  if (sweep.core_counts.empty() || sweep.seeds.empty()) throw ConfigError("sweep needs core counts and seeds");
  std::vector<SweepRow> rows;
  for (GraphFamily family : sweep.families) {
    for (int nc : sweep.core_counts) {
      for (std::uint64_t seed : sweep.seeds) {
        ModelConfig mc = base;
        mc.family = family;
        mc.graph.reset();
        mc.er_p.reset();
        mc.ws_k.reset();
        mc.graph_params.n_c = nc;
        mc.seed = Seed{seed};
        TrainConfig tc = train_cfg;
        tc.seed = seed;

        Model model(mc);
        const auto result = train(model, train_set, nullptr, tc);
        SweepRow row;
        row.family = family;
        row.n = model.graph().node_count();
        row.n_c = nc;
        row.core_fraction = static_cast<double>(nc) / row.n;
        row.seed = seed;
        row.edges = model.graph().edge_count();
        row.edge_density = block_density_stats(model.graph(), 0).overall;
        row.mask_density = model.constraint().density();
        row.params_effective = model.param_count().effective;
        row.final_train_loss = result.record.rows.back().train_loss;
        row.eval_accuracy = evaluate(model, eval_set);
        rows.push_back(row);
        if (on_row) on_row(row);
      }
    }
  }
  return rows;
}

std::string format_sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out =
      "family,n,n_c,core_fraction,seed,edges,edge_density,mask_density,params_effective,final_train_loss,eval_accuracy\n";
  for (const auto& r : rows) {
    out += std::string(to_string(r.family)) + "," + std::to_string(r.n) + "," + std::to_string(r.n_c) + "," +
           fmt(r.core_fraction) + "," + std::to_string(r.seed) + "," + std::to_string(r.edges) + "," + fmt(r.edge_density) +
           "," + fmt(r.mask_density) + "," + std::to_string(r.params_effective) + "," + fmt(r.final_train_loss) + "," +
           fmt(r.eval_accuracy) + "\n";
  }
  return out;
}

std::string format_sweep_aggregate_csv(const std::vector<SweepRow>& rows) {
  struct Cell {
    const SweepRow* first = nullptr;
    std::vector<double> acc;
    double density_sum = 0.0;
  };
  std::vector<std::pair<GraphFamily, int>> keys;
  std::map<std::pair<GraphFamily, int>, Cell> cells;
  for (const auto& r : rows) {
    const auto key = std::make_pair(r.family, r.n_c);
    auto [it, fresh] = cells.try_emplace(key);
    if (fresh) {
      keys.push_back(key);
      it->second.first = &r;
    }
    it->second.acc.push_back(r.eval_accuracy);
    it->second.density_sum += r.edge_density;
  }
  std::string out = "family,n,n_c,core_fraction,runs,mean_accuracy,std_accuracy,mean_edge_density\n";
  for (const auto& key : keys) {
    const Cell& c = cells.at(key);
    const double k = static_cast<double>(c.acc.size());
    double mean = 0.0;
    for (double a : c.acc) mean += a;
    mean /= k;
    double var = 0.0;
    for (double a : c.acc) var += (a - mean) * (a - mean);
    const double sd = c.acc.size() > 1 ? std::sqrt(var / (k - 1.0)) : 0.0;
    out += std::string(to_string(key.first)) + "," + std::to_string(c.first->n) + "," + std::to_string(key.second) + "," +
           fmt(c.first->core_fraction) + "," + std::to_string(c.acc.size()) + "," + fmt(mean) + "," + fmt(sd) + "," +
           fmt(c.density_sum / k) + "\n";
  }
  return out;
}

}  // namespace cpcnn
