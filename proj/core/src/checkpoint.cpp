#include "cpcnn/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "cpcnn/errors.hpp"

namespace cpcnn {

namespace {

constexpr const char* kMagic = "cpcnn-checkpoint 1";

void put_f32(std::string& out, float v) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFFu));
}

float get_f32(const std::string& in, std::size_t pos) {
  std::uint32_t bits = 0;
  for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + static_cast<std::size_t>(b)])) << (8 * b);
  return std::bit_cast<float>(bits);
}

bool valid_name(const std::string& name) {
  if (name.empty()) return false;
  for (char c : name)
    if (c <= ' ' || c == 0x7F) return false;
  return true;
}

}  // namespace

std::string serialize_checkpoint(const NamedTensors& tensors) {
  std::string out = std::string(kMagic) + "\ntensors " + std::to_string(tensors.size()) + "\n";
  for (const auto& [name, t] : tensors) {
    if (!valid_name(name)) throw FormatError("checkpoint tensor name '" + name + "' is empty or contains whitespace");
    out += name + " " + std::to_string(t.rank());
    for (int d : t.shape()) out += " " + std::to_string(d);
    out += "\n";
  }
  out += "payload\n";
  for (const auto& [name, t] : tensors)
    for (float v : t.data()) put_f32(out, v);
  return out;
}

NamedTensors deserialize_checkpoint(const std::string& bytes) {
  std::size_t pos = 0;
  auto next_line = [&]() {
    const auto end = bytes.find('\n', pos);
    if (end == std::string::npos) throw FormatError("checkpoint header truncated at byte " + std::to_string(pos));
    std::string line = bytes.substr(pos, end - pos);
    pos = end + 1;
    return line;
  };
  if (next_line() != kMagic) throw FormatError("not a cpcnn checkpoint");
  std::istringstream count_line(next_line());
  std::string tag;
  std::size_t count = 0;
  if (!(count_line >> tag >> count) || tag != "tensors") throw FormatError("bad checkpoint tensor count line");

  std::vector<std::pair<std::string, Shape>> manifest;
  for (std::size_t k = 0; k < count; ++k) {
    std::istringstream ls(next_line());
    std::string name;
    std::size_t rank = 0;
    if (!(ls >> name >> rank)) throw FormatError("bad checkpoint manifest line " + std::to_string(k));
    Shape shape(rank);
    for (auto& d : shape)
      if (!(ls >> d) || d < 0) throw FormatError("bad dimension for tensor " + name);
    if (!manifest.empty() && !(manifest.back().first < name)) throw FormatError("checkpoint manifest not sorted at " + name);
    manifest.emplace_back(std::move(name), std::move(shape));
  }
  if (next_line() != "payload") throw FormatError("checkpoint payload marker missing");

  NamedTensors out;
  for (auto& [name, shape] : manifest) {
    const std::size_t n = shape_size(shape);
    if (bytes.size() - pos < 4 * n) throw FormatError("checkpoint payload truncated in tensor " + name);
    std::vector<float> values(n);
    for (std::size_t e = 0; e < n; ++e, pos += 4) values[e] = get_f32(bytes, pos);
    out.emplace(name, Tensor<float>::from(shape, std::move(values)));
  }
  if (pos != bytes.size()) throw FormatError("trailing bytes after checkpoint payload");
  return out;
}

void save_checkpoint(const std::string& path, const NamedTensors& tensors) {
  const std::string bytes = serialize_checkpoint(tensors);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write checkpoint " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("failed writing checkpoint " + path);
}

NamedTensors load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace cpcnn
