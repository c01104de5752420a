#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cpcnn/graph.hpp"

namespace cpcnn {

/// allowed(o, i): output group o may read input group i.
class BipartiteConstraint {
 public:
  BipartiteConstraint() = default;
  explicit BipartiteConstraint(int groups)
      : groups_(groups), allowed_(static_cast<std::size_t>(groups) * static_cast<std::size_t>(groups), 0) {}

  int groups() const noexcept { return groups_; }
  bool allowed(int o, int i) const { return allowed_[index(o, i)] != 0; }
  void set(int o, int i, bool v) { allowed_[index(o, i)] = v ? 1 : 0; }
  double density() const;

  friend bool operator==(const BipartiteConstraint&, const BipartiteConstraint&) = default;

 private:
  std::size_t index(int o, int i) const {
    return static_cast<std::size_t>(o) * static_cast<std::size_t>(groups_) + static_cast<std::size_t>(i);
  }
  int groups_ = 0;
  std::vector<std::uint8_t> allowed_;
};

/// Boolean out_channels x in_channels matrix, row-major.
class ChannelMask {
 public:
  ChannelMask() = default;
  ChannelMask(int out_channels, int in_channels, bool fill = false)
      : out_(out_channels),
        in_(in_channels),
        bits_(static_cast<std::size_t>(out_channels) * static_cast<std::size_t>(in_channels), fill ? 1 : 0) {}

  static ChannelMask all(int out_channels, int in_channels) { return ChannelMask(out_channels, in_channels, true); }

  int out_channels() const noexcept { return out_; }
  int in_channels() const noexcept { return in_; }
  bool at(int o, int i) const { return bits_[static_cast<std::size_t>(o) * static_cast<std::size_t>(in_) + static_cast<std::size_t>(i)] != 0; }
  void set(int o, int i, bool v) {
    bits_[static_cast<std::size_t>(o) * static_cast<std::size_t>(in_) + static_cast<std::size_t>(i)] = v ? 1 : 0;
  }
  const std::uint8_t* row(int o) const { return bits_.data() + static_cast<std::size_t>(o) * static_cast<std::size_t>(in_); }
  std::size_t true_count() const;

  friend bool operator==(const ChannelMask&, const ChannelMask&) = default;

 private:
  int out_ = 0;
  int in_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Relational-graph semantics: a group reads itself and its graph neighbours.
BipartiteConstraint relational_bipartite(const Graph& g);

/// Group of channel `c` when `channels` are split contiguously into `groups`
/// near-equal parts (the first channels % groups parts are one larger).
int channel_group(int c, int channels, int groups);

ChannelMask build_channel_mask(const BipartiteConstraint& bc, int in_channels, int out_channels);

double mask_density(const ChannelMask& m);

/// One line per output channel of '0'/'1' characters.
std::string dump_mask(const ChannelMask& m);
ChannelMask parse_mask_dump(const std::string& text);

}  // namespace cpcnn
