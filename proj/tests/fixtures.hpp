#pragma once

// Small configurations shared by the unit and acceptance tests.

#include "cpcnn/data.hpp"
#include "cpcnn/model.hpp"
#include "cpcnn/train.hpp"

namespace cpcnn::fixture {

/// Eight-node CP model on 16x16 two-class inputs.
inline ModelConfig sanity_model(std::uint64_t seed = 1) {
  ModelConfig c;
  c.graph_params = CPGraphParams{8, 4, 0.9, 0.5, 0.1};
  c.stem_width = 8;
  c.block_widths = {8, 16, 32, 64};
  c.num_classes = 2;
  c.image_size = 16;
  c.seed = Seed{seed};
  return c;
}

/// 160 images, batch 16, 20 epochs: 200 optimizer steps.
inline TrainConfig sanity_train(std::uint64_t seed = 1) {
  TrainConfig t;
  t.epochs = 20;
  t.batch_size = 16;
  t.base_lr = 1e-2;
  t.warmup_epochs = 1;
  t.seed = seed;
  return t;
}

inline Dataset sanity_data() { return synth_dataset(80, 2, 16, Seed{7}); }

/// Much smaller setting for tests that only need a few quick epochs.
inline ModelConfig tiny_model(std::uint64_t seed = 0, int classes = 2) {
  ModelConfig c;
  c.graph_params = CPGraphParams{4, 2, 0.9, 0.5, 0.1};
  c.stem_width = 4;
  c.block_widths = {4, 8, 16, 32};
  c.num_classes = classes;
  c.image_size = 8;
  c.seed = Seed{seed};
  return c;
}

inline TrainConfig tiny_train(int epochs, std::uint64_t seed = 0) {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = 8;
  t.base_lr = 5e-3;
  t.warmup_epochs = 1;
  t.seed = seed;
  return t;
}

}  // namespace cpcnn::fixture
