#include "cpcnn/mask.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "cpcnn/errors.hpp"

namespace cpcnn {

double BipartiteConstraint::density() const {
  if (groups_ == 0) return 0.0;
  const auto hits = std::count(allowed_.begin(), allowed_.end(), std::uint8_t{1});
  return static_cast<double>(hits) / static_cast<double>(allowed_.size());
}

std::size_t ChannelMask::true_count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

BipartiteConstraint relational_bipartite(const Graph& g) {
  if (g.node_count() < 1) throw ParameterError("relational graph needs at least one node");
  BipartiteConstraint bc(g.node_count());
  for (int k = 0; k < g.node_count(); ++k) bc.set(k, k, true);
  for (const auto& [a, b] : g.edges()) {
    bc.set(a, b, true);
    bc.set(b, a, true);
  }
  return bc;
}

int channel_group(int c, int channels, int groups) {
  const int base = channels / groups;
  const int extra = channels % groups;
  const int boundary = extra * (base + 1);
  if (c < boundary) return c / (base + 1);
  return extra + (c - boundary) / base;
}

ChannelMask build_channel_mask(const BipartiteConstraint& bc, int in_channels, int out_channels) {
  const int groups = bc.groups();
  if (in_channels < groups || out_channels < groups)
    throw ParameterError("channel count (" + std::to_string(std::min(in_channels, out_channels)) +
                         ") smaller than group count (" + std::to_string(groups) + ")");
  std::vector<int> in_group(static_cast<std::size_t>(in_channels));
  for (int i = 0; i < in_channels; ++i) in_group[static_cast<std::size_t>(i)] = channel_group(i, in_channels, groups);
  ChannelMask m(out_channels, in_channels);
  for (int o = 0; o < out_channels; ++o) {
    const int og = channel_group(o, out_channels, groups);
    for (int i = 0; i < in_channels; ++i) m.set(o, i, bc.allowed(og, in_group[static_cast<std::size_t>(i)]));
  }
  return m;
}

double mask_density(const ChannelMask& m) {
  const double total = static_cast<double>(m.out_channels()) * static_cast<double>(m.in_channels());
  return total > 0.0 ? static_cast<double>(m.true_count()) / total : 0.0;
}

std::string dump_mask(const ChannelMask& m) {
  std::string out;
  out.reserve(static_cast<std::size_t>(m.out_channels()) * static_cast<std::size_t>(m.in_channels() + 1));
  for (int o = 0; o < m.out_channels(); ++o) {
    for (int i = 0; i < m.in_channels(); ++i) out.push_back(m.at(o, i) ? '1' : '0');
    out.push_back('\n');
  }
  return out;
}

ChannelMask parse_mask_dump(const std::string& text) {
  std::vector<std::string> rows;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) rows.push_back(line);
  if (rows.empty() || rows.front().empty()) throw FormatError("empty mask dump");
  if (text.back() != '\n') throw FormatError("mask dump must end with a newline");
  const auto width = rows.front().size();
  ChannelMask m(static_cast<int>(rows.size()), static_cast<int>(width));
  for (std::size_t o = 0; o < rows.size(); ++o) {
    if (rows[o].size() != width) throw FormatError("mask row " + std::to_string(o) + " has wrong width");
    for (std::size_t i = 0; i < width; ++i) {
      const char ch = rows[o][i];
      if (ch != '0' && ch != '1') throw FormatError("mask row " + std::to_string(o) + " has non-binary character");
      m.set(static_cast<int>(o), static_cast<int>(i), ch == '1');
    }
  }
  return m;
}

}  // namespace cpcnn
