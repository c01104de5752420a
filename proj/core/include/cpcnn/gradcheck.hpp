#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cpcnn/rng.hpp"
#include "cpcnn/tensor.hpp"

namespace cpcnn {

/// Builds a computation from the current values of the checked tensors.
/// Called once with a tape (analytic gradients) and repeatedly without one
/// (finite differences).
using GradBuilder = std::function<Tensor<double>(Tape<double>*)>;

struct GradCheckOptions {
  double eps = 1e-4;
  /// Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor).
  double floor = 1e-6;
};

/// Projects the output onto a random direction r (from `seed`) and compares
/// d(r . out)/d(theta) from backward against central differences for every
/// element of every tensor in `wrt`. Returns the largest relative error.
double max_relative_error(const GradBuilder& build, std::vector<Tensor<double>> wrt, Seed seed,
                          const GradCheckOptions& options = {});

struct GradCheckReport {
  std::string op;
  int trials = 0;
  double max_rel_error = 0.0;
  bool passed = false;
};

/// Randomized finite-difference checks for conv2d (masked and unmasked),
/// batch_norm (train and eval), relu, weighted_sum, global_avg_pool, linear
/// and softmax_cross_entropy, `trials` random shapes each.
std::vector<GradCheckReport> run_gradient_suite(int trials, std::uint64_t seed, double tolerance = 1e-4,
                                                const GradCheckOptions& options = {});

}  // namespace cpcnn
