#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "cpcnn/rng.hpp"
#include "cpcnn/tensor.hpp"

namespace cpcnn {

/// Labeled images stored as one contiguous NCHW float buffer.
struct Dataset {
  int channels = 0;
  int height = 0;
  int width = 0;
  int num_classes = 0;
  std::vector<float> images;
  std::vector<int> labels;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t image_floats() const noexcept {
    return static_cast<std::size_t>(channels) * static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  }
  const float* image(std::size_t k) const { return images.data() + k * image_floats(); }

  /// Copies records `indices` into a [N, C, H, W] batch; entries with a
  /// nonzero `flip` are mirrored horizontally.
  Tensor<float> batch(const std::vector<std::size_t>& indices, const std::vector<std::uint8_t>& flip = {}) const;
  std::vector<int> batch_labels(const std::vector<std::size_t>& indices) const;

  /// First `count` records (or all, if fewer).
  Dataset head(std::size_t count) const;
};

/// Per-channel normalization constants for CIFAR-10 (commonly used values
/// of the training-set mean and standard deviation).
inline constexpr std::array<float, 3> kCifarMean{0.4914f, 0.4822f, 0.4465f};
inline constexpr std::array<float, 3> kCifarStd{0.2470f, 0.2435f, 0.2616f};

inline constexpr std::size_t kCifarRecordBytes = 1 + 3 * 32 * 32;

/// Decodes one CIFAR-10 binary batch file (records of 1 label byte + 3072
/// channel-major pixel bytes). `max_records` of 0 reads everything.
/// Pixels become (byte / 255 - mean[c]) / std[c].
Dataset load_cifar10_file(const std::string& path, std::size_t max_records = 0);

struct Cifar10 {
  Dataset train;
  Dataset test;
};

/// Reads data_batch_1..5.bin and test_batch.bin from `dir`. Limits of 0
/// keep every record.
Cifar10 load_cifar10(const std::string& dir, std::size_t max_train = 0, std::size_t max_test = 0);

/// Deterministic synthetic images. Class c is a sinusoidal grating of
/// spatial frequency c + 1 cycles per image along a class-specific
/// orientation with random phase, plus Gaussian noise; labels are balanced
/// and interleaved (record k has label k % classes).
Dataset synth_dataset(int n_per_class, int classes, int size, Seed seed, int channels = 3, double noise = 0.3);

/// Bilinear resize of every image to size x size.
Dataset resize_dataset(const Dataset& d, int size);

}  // namespace cpcnn
