#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "cpcnn/checkpoint.hpp"
#include "cpcnn/data.hpp"
#include "cpcnn/model.hpp"

namespace cpcnn {

struct TrainConfig {
  int epochs = 10;
  int batch_size = 128;
  double base_lr = 1e-4;
  int warmup_epochs = 5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
  std::uint64_t seed = 0;  // data order and augmentation
  bool hflip = true;

  void validate() const;
};

struct EpochRow {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_acc = 0.0;
  double eval_acc = 0.0;  // -1 when no evaluation set was given
  double lr = 0.0;        // learning rate of the epoch's last step
  double wall_time_s = 0.0;
};

struct RunRecord {
  std::vector<EpochRow> rows;
};

/// CSV with header `epoch,train_loss,train_acc,eval_acc,lr,wall_time_s`.
/// Without `with_time` the wall-time column is omitted, which leaves only
/// values fixed by the seeds.
std::string format_run_record(const RunRecord& r, bool with_time = true);

struct TrainOptions {
  /// Stop after this epoch (1-based) even if cfg.epochs is larger; 0 means
  /// run to cfg.epochs. The schedule always spans cfg.epochs.
  int stop_after_epoch = 0;
  /// Checkpoint from an earlier, interrupted run of the same configuration.
  const NamedTensors* resume = nullptr;
  std::function<void(const EpochRow&)> on_epoch;
};

struct TrainResult {
  RunRecord record;
  NamedTensors checkpoint;  // model state + optimizer state + "meta.epoch"
};

/// Trains with AdamW under warmup + cosine schedule. Data order and flips
/// for epoch e come from the seed's stream 300 + e, so resuming at any epoch
/// boundary replays the same sequence. Throws DivergenceError on a
/// non-finite loss.
TrainResult train(Model& model, const Dataset& train_set, const Dataset* eval_set, const TrainConfig& cfg,
                  const TrainOptions& options = {});

/// Top-1 accuracy with batch norm in eval mode.
double evaluate(Model& model, const Dataset& data, int batch_size = 256);

/// Model state only (drops optimizer and meta entries).
NamedTensors model_state_from_checkpoint(const NamedTensors& checkpoint);

// Flat key=value settings shared by config files and command-line overrides.
using Settings = std::map<std::string, std::string>;

/// Parses `key = value` lines; blank lines and lines starting with '#' are
/// skipped. Throws ConfigError naming the offending line.
Settings parse_settings(const std::string& text);
Settings read_settings_file(const std::string& path);

/// Applies every recognised key to the configs; unknown keys are an error.
/// Model keys: family n n_c p_cc p_cp p_pp er_p ws_k ws_rewire in_channels
/// stem_width block_widths(4 comma-separated) num_classes image_size model_seed.
/// Train keys: epochs batch_size base_lr warmup_epochs beta1 beta2 eps
/// weight_decay data_seed hflip.
void apply_settings(const Settings& s, ModelConfig& model, TrainConfig& train);

}  // namespace cpcnn
