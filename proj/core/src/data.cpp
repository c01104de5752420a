#include "cpcnn/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "cpcnn/errors.hpp"

namespace cpcnn {

Tensor<float> Dataset::batch(const std::vector<std::size_t>& indices, const std::vector<std::uint8_t>& flip) const {
  Tensor<float> out(Shape{static_cast<int>(indices.size()), channels, height, width});
  const std::size_t per = image_floats();
  for (std::size_t b = 0; b < indices.size(); ++b) {
    if (indices[b] >= size()) throw ParameterError("batch index out of range");
    const float* src = image(indices[b]);
    float* dst = out.ptr() + b * per;
    if (flip.empty() || !flip[b]) {
      std::copy(src, src + per, dst);
      continue;
    }
    for (int c = 0; c < channels; ++c)
      for (int y = 0; y < height; ++y) {
        const std::size_t row = (static_cast<std::size_t>(c) * height + y) * width;
        for (int x = 0; x < width; ++x) dst[row + x] = src[row + (width - 1 - x)];
      }
  }
  return out;
}

std::vector<int> Dataset::batch_labels(const std::vector<std::size_t>& indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(labels.at(i));
  return out;
}

Dataset Dataset::head(std::size_t count) const {
  Dataset d = *this;
  count = std::min(count, size());
  d.labels.resize(count);
  d.images.resize(count * image_floats());
  return d;
}

Dataset load_cifar10_file(const std::string& path, std::size_t max_records) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open " + path);
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  if (bytes == 0) throw IngestionError(path + ": empty file at offset 0");
  if (bytes % kCifarRecordBytes != 0) {
    const std::size_t complete = bytes / kCifarRecordBytes;
    throw IngestionError(path + ": truncated record at offset " + std::to_string(complete * kCifarRecordBytes) + " (file is " +
                         std::to_string(bytes) + " bytes, records are " + std::to_string(kCifarRecordBytes) + ")");
  }
  std::size_t records = bytes / kCifarRecordBytes;
  if (max_records > 0) records = std::min(records, max_records);

  Dataset d;
  d.channels = 3;
  d.height = 32;
  d.width = 32;
  d.num_classes = 10;
  d.labels.resize(records);
  d.images.resize(records * d.image_floats());
  std::vector<unsigned char> rec(kCifarRecordBytes);
  for (std::size_t r = 0; r < records; ++r) {
    in.read(reinterpret_cast<char*>(rec.data()), static_cast<std::streamsize>(kCifarRecordBytes));
    if (!in) throw IngestionError(path + ": read failed at offset " + std::to_string(r * kCifarRecordBytes));
    if (rec[0] >= 10)
      throw IngestionError(path + ": label " + std::to_string(rec[0]) + " out of range at offset " +
                           std::to_string(r * kCifarRecordBytes));
    d.labels[r] = rec[0];
    float* dst = d.images.data() + r * d.image_floats();
    for (std::size_t p = 0; p < 3 * 1024; ++p) {
      const std::size_t c = p / 1024;
      dst[p] = (static_cast<float>(rec[1 + p]) / 255.0f - kCifarMean[c]) / kCifarStd[c];
    }
  }
  return d;
}

namespace {

void append(Dataset& into, const Dataset& from) {
  if (into.size() == 0 && into.images.empty()) {
    into = from;
    return;
  }
  into.images.insert(into.images.end(), from.images.begin(), from.images.end());
  into.labels.insert(into.labels.end(), from.labels.begin(), from.labels.end());
}

}  // namespace

Cifar10 load_cifar10(const std::string& dir, std::size_t max_train, std::size_t max_test) {
  Cifar10 out;
  for (int b = 1; b <= 5; ++b) {
    if (max_train > 0 && out.train.size() >= max_train) break;
    const std::size_t remaining = max_train > 0 ? max_train - out.train.size() : 0;
    append(out.train, load_cifar10_file(dir + "/data_batch_" + std::to_string(b) + ".bin", remaining));
  }
  out.test = load_cifar10_file(dir + "/test_batch.bin", max_test);
  return out;
}

Dataset synth_dataset(int n_per_class, int classes, int size, Seed seed, int channels, double noise) {
  if (classes < 2) throw ParameterError("synthetic dataset needs at least two classes");
  if (n_per_class < 0 || size < 1 || channels < 1) throw ParameterError("invalid synthetic dataset dimensions");
  Dataset d;
  d.channels = channels;
  d.height = size;
  d.width = size;
  d.num_classes = classes;
  const std::size_t total = static_cast<std::size_t>(n_per_class) * static_cast<std::size_t>(classes);
  d.labels.resize(total);
  d.images.resize(total * d.image_floats());
  Rng rng(seed);
  for (std::size_t r = 0; r < total; ++r) {
    const int c = static_cast<int>(r % static_cast<std::size_t>(classes));
    d.labels[r] = c;
    const double freq = 1.0 + c;
    const double angle = std::numbers::pi * c / classes;
    const double fx = std::cos(angle) * freq / size;
    const double fy = std::sin(angle) * freq / size;
    const double phase = 2.0 * std::numbers::pi * rng.uniform();
    float* dst = d.images.data() + r * d.image_floats();
    for (int ch = 0; ch < channels; ++ch)
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
          const double v = std::sin(2.0 * std::numbers::pi * (fx * x + fy * y) + phase) + noise * rng.normal();
          dst[(static_cast<std::size_t>(ch) * size + y) * size + x] = static_cast<float>(v);
        }
  }
  return d;
}

Dataset resize_dataset(const Dataset& d, int size) {
  if (size < 1) throw ParameterError("resize target must be positive");
  if (size == d.height && size == d.width) return d;
  Dataset out = d;
  out.height = size;
  out.width = size;
  out.images.assign(d.size() * out.image_floats(), 0.0f);
  const double sy = static_cast<double>(d.height) / size;
  const double sx = static_cast<double>(d.width) / size;
  for (std::size_t r = 0; r < d.size(); ++r)
    for (int c = 0; c < d.channels; ++c) {
      const float* src = d.image(r) + static_cast<std::size_t>(c) * d.height * d.width;
      float* dst = out.images.data() + r * out.image_floats() + static_cast<std::size_t>(c) * size * size;
      for (int y = 0; y < size; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, d.height - 1.0);
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, d.height - 1);
        const double wy = fy - y0;
        for (int x = 0; x < size; ++x) {
          const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, d.width - 1.0);
          const int x0 = static_cast<int>(fx);
          const int x1 = std::min(x0 + 1, d.width - 1);
          const double wx = fx - x0;
          const double top = src[y0 * d.width + x0] * (1 - wx) + src[y0 * d.width + x1] * wx;
          const double bot = src[y1 * d.width + x0] * (1 - wx) + src[y1 * d.width + x1] * wx;
          dst[y * size + x] = static_cast<float>(top * (1 - wy) + bot * wy);
        }
      }
    }
  return out;
}

}  // namespace cpcnn
