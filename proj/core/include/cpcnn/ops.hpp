#pragma once

#include <span>
#include <vector>

#include "cpcnn/mask.hpp"
#include "cpcnn/tensor.hpp"

namespace cpcnn {

// Differentiable operators. Each takes an optional tape: when `tape` is
// non-null and any input requires a gradient, the output requires a
// gradient and a backward record is appended.

/// Cross-correlation of x [N, I, H, W] with w [O, I, k, k] plus bias b [O]
/// (b may be undefined). When `mask` is given (O x I), w[o][i] contributes
/// only where mask(o, i) holds and its gradient there stays exactly zero.
template <typename T>
Tensor<T> conv2d(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 const ChannelMask* mask, int stride, int padding);

int conv_output_size(int in, int kernel, int stride, int padding);

/// Running statistics for batch_norm; momentum 0.1, unbiased running variance.
template <typename T>
struct BatchNormState {
  Tensor<T> running_mean;
  Tensor<T> running_var;

  explicit BatchNormState(int channels = 0)
      : running_mean(Shape{channels}, T(0)), running_var(Shape{channels}, T(1)) {}
};

enum class Mode { train, eval };

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

/// Per-channel normalization of x [N, C, H, W] followed by gamma * x + beta.
template <typename T>
Tensor<T> batch_norm(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     BatchNormState<T>& state, Mode mode);

template <typename T>
Tensor<T> relu(Tape<T>* tape, const Tensor<T>& x);

/// sum_k sigmoid(raw[k]) * inputs[k]; raw is a 1-D tensor of inputs.size().
template <typename T>
Tensor<T> weighted_sum(Tape<T>* tape, std::span<const Tensor<T>> inputs, const Tensor<T>& raw);

/// [N, C, H, W] -> [N, C]
template <typename T>
Tensor<T> global_avg_pool(Tape<T>* tape, const Tensor<T>& x);

/// x [N, C] * W[K, C]^T + b [K]
template <typename T>
Tensor<T> linear(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

/// Mean over the batch of -log softmax(logits)[label]; output shape [1].
template <typename T>
Tensor<T> softmax_cross_entropy(Tape<T>* tape, const Tensor<T>& logits, std::span<const int> labels);

template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& logits);

}  // namespace cpcnn
