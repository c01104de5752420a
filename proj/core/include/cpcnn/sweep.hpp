#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cpcnn/data.hpp"
#include "cpcnn/model.hpp"
#include "cpcnn/train.hpp"

namespace cpcnn {

struct SweepConfig {
  std::vector<GraphFamily> families{GraphFamily::cp};
  std::vector<int> core_counts{2, 4, 6, 8, 10, 12, 14};
  std::vector<std::uint64_t> seeds{0, 1, 2};
};

/// One (family, core count, seed) run. ER and WS runs use the density
/// matched to the CP generator at the same core count, so `core_fraction`
/// labels the same setting across families.
struct SweepRow {
  GraphFamily family = GraphFamily::cp;
  int n = 0;
  int n_c = 0;
  double core_fraction = 0.0;
  std::uint64_t seed = 0;
  std::size_t edges = 0;
  double edge_density = 0.0;
  double mask_density = 0.0;
  std::int64_t params_effective = 0;
  double final_train_loss = 0.0;
  double eval_accuracy = 0.0;
};

/// The model and data seeds of each run are both the row seed.
std::vector<SweepRow> run_sweep(const ModelConfig& base, const TrainConfig& train_cfg, const SweepConfig& sweep,
                                const Dataset& train_set, const Dataset& eval_set,
                                const std::function<void(const SweepRow&)>& on_row = {});

/// Header: family,n,n_c,core_fraction,seed,edges,edge_density,mask_density,
///         params_effective,final_train_loss,eval_accuracy
std::string format_sweep_csv(const std::vector<SweepRow>& rows);

/// One row per (family, n_c) cell, in first-appearance order. Header:
/// family,n,n_c,core_fraction,runs,mean_accuracy,std_accuracy,mean_edge_density
/// std_accuracy is the sample standard deviation (0 for a single run).
std::string format_sweep_aggregate_csv(const std::vector<SweepRow>& rows);

}  // namespace cpcnn
