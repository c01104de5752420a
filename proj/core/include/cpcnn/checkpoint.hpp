#pragma once

#include <map>
#include <string>

#include "cpcnn/tensor.hpp"

namespace cpcnn {

/// Named float32 tensors, ordered by name.
///
/// Binary layout:
///   "cpcnn-checkpoint 1\n"
///   "tensors <count>\n"
///   "<name> <rank> <d0> ... <dr-1>\n"   one manifest line per tensor, sorted by name
///   "payload\n"
///   raw little-endian float32 values, tensors in manifest order
using NamedTensors = std::map<std::string, Tensor<float>>;

std::string serialize_checkpoint(const NamedTensors& tensors);
NamedTensors deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::string& path, const NamedTensors& tensors);
NamedTensors load_checkpoint(const std::string& path);

}  // namespace cpcnn
