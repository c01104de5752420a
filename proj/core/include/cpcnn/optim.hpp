#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cpcnn/tensor.hpp"

namespace cpcnn {

/// A trainable tensor. `trainable`, when non-empty, has one entry per
/// element; entries equal to 0 are frozen (masked-out convolution weights):
/// they receive neither moment updates nor weight decay.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  std::vector<std::uint8_t> trainable;
};

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

/// Decoupled weight decay Adam. Arithmetic runs in double; moments are
/// stored at parameter precision so checkpoints capture them exactly.
template <typename T>
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

  /// Applies one update to every parameter from its current gradient buffer.
  /// The first call sizes the moment buffers; later calls require the same
  /// parameter list (shapes are checked).
  void step(std::vector<Parameter<T>>& params, double lr);

  std::int64_t steps() const noexcept { return step_; }
  const AdamWConfig& config() const noexcept { return cfg_; }

  // State access for checkpointing.
  std::vector<std::vector<T>>& first_moments() { return m_; }
  std::vector<std::vector<T>>& second_moments() { return v_; }
  const std::vector<std::vector<T>>& first_moments() const { return m_; }
  const std::vector<std::vector<T>>& second_moments() const { return v_; }
  void set_steps(std::int64_t s) { step_ = s; }

 private:
  AdamWConfig cfg_;
  std::int64_t step_ = 0;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
};

/// Linear warmup from 0 to base_lr over warmup_steps, then cosine decay to 0
/// at total_steps.
double lr_schedule(std::int64_t step, std::int64_t total_steps, std::int64_t warmup_steps, double base_lr);

extern template class AdamW<float>;
extern template class AdamW<double>;

}  // namespace cpcnn
