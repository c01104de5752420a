#include "cpcnn/dag.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>
#include <queue>
#include <sstream>

#include "cpcnn/errors.hpp"

namespace cpcnn {

const char* to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::input:
      return "input";
    case NodeKind::compute:
      return "compute";
    case NodeKind::output:
      return "output";
  }
  return "?";
}

std::vector<int> BlockGraph::successors(int id) const {
  std::vector<int> out;
  for (const auto& [s, d] : arcs)
    if (s == id) out.push_back(d);
  return out;
}

LabeledGraph assign_labels(const Graph& g, Seed seed) {
  const int n = g.node_count();
  std::vector<int> label(static_cast<std::size_t>(n));
  std::iota(label.begin(), label.end(), 1);
  Rng rng(seed);
  for (int i = n - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(i) + 1));
    std::swap(label[static_cast<std::size_t>(i)], label[j]);
  }
  return LabeledGraph{g, std::move(label)};
}

OrientedGraph orient_edges(const LabeledGraph& lg) {
  OrientedGraph out;
  out.n = lg.base.node_count();
  out.label = lg.label;
  out.arcs.reserve(lg.base.edge_count());
  for (const auto& [a, b] : lg.base.edges()) {
    const bool forward = lg.label[static_cast<std::size_t>(a)] < lg.label[static_cast<std::size_t>(b)];
    out.arcs.emplace_back(forward ? Arc{a, b} : Arc{b, a});
  }
  std::sort(out.arcs.begin(), out.arcs.end());
  return out;
}

BlockGraph augment_io(const OrientedGraph& dag) {
  const int n = dag.n;
  BlockGraph bg;
  bg.input_node = n;
  bg.output_node = n + 1;
  bg.nodes.resize(static_cast<std::size_t>(n + 2));
  for (int v = 0; v < n; ++v)
    bg.nodes[static_cast<std::size_t>(v)] = BlockNode{v, NodeKind::compute, dag.label[static_cast<std::size_t>(v)], {}};
  bg.nodes[static_cast<std::size_t>(n)] = BlockNode{n, NodeKind::input, 0, {}};
  bg.nodes[static_cast<std::size_t>(n + 1)] = BlockNode{n + 1, NodeKind::output, n + 1, {}};

  std::vector<int> in_deg(static_cast<std::size_t>(n), 0), out_deg(static_cast<std::size_t>(n), 0);
  for (const auto& [s, d] : dag.arcs) {
    ++out_deg[static_cast<std::size_t>(s)];
    ++in_deg[static_cast<std::size_t>(d)];
  }
  bg.arcs = dag.arcs;
  for (int v = 0; v < n; ++v) {
    if (in_deg[static_cast<std::size_t>(v)] == 0) bg.arcs.emplace_back(n, v);
    if (out_deg[static_cast<std::size_t>(v)] == 0) bg.arcs.emplace_back(v, n + 1);
  }
  std::sort(bg.arcs.begin(), bg.arcs.end());
  for (const auto& [s, d] : bg.arcs) bg.nodes[static_cast<std::size_t>(d)].inputs.push_back(s);
  for (auto& node : bg.nodes) std::sort(node.inputs.begin(), node.inputs.end());
  bg.order = topo_order(bg);
  return bg;
}

std::vector<int> topo_order(const BlockGraph& bg) {
  const auto count = bg.nodes.size();
  std::vector<int> indeg(count, 0);
  std::vector<std::vector<int>> succ(count);
  for (const auto& [s, d] : bg.arcs) {
    ++indeg[static_cast<std::size_t>(d)];
    succ[static_cast<std::size_t>(s)].push_back(d);
  }
  using Entry = std::pair<int, int>;  // (label, id)
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> ready;
  for (std::size_t v = 0; v < count; ++v)
    if (indeg[v] == 0) ready.emplace(bg.nodes[v].label, static_cast<int>(v));
  std::vector<int> order;
  order.reserve(count);
  while (!ready.empty()) {
    const int v = ready.top().second;
    ready.pop();
    order.push_back(v);
    for (int d : succ[static_cast<std::size_t>(v)])
      if (--indeg[static_cast<std::size_t>(d)] == 0) ready.emplace(bg.nodes[static_cast<std::size_t>(d)].label, d);
  }
  if (order.size() != count) throw InternalError("cycle detected in block graph");
  return order;
}

BlockGraph compile_block(const Graph& g, Seed seed) {
  return augment_io(orient_edges(assign_labels(g, seed)));
}

void write_block_graph(std::ostream& os, const BlockGraph& bg) {
  for (const auto& node : bg.nodes) os << "node " << node.id << ' ' << to_string(node.kind) << ' ' << node.label << '\n';
  for (const auto& [s, d] : bg.arcs) os << "arc " << s << ' ' << d << '\n';
}

std::string format_block_graph(const BlockGraph& bg) {
  std::ostringstream os;
  write_block_graph(os, bg);
  return os.str();
}

BlockGraph parse_block_graph(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  BlockGraph bg;
  bg.input_node = -1;
  bg.output_node = -1;
  bool in_arcs = false;
  auto fail = [&](const std::string& why) {
    throw FormatError("block graph line " + std::to_string(line_no) + ": " + why);
  };
  while (std::getline(is, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tag, extra;
    ls >> tag;
    if (tag == "node" && !in_arcs) {
      int id = 0, label = 0;
      std::string kind;
      if (!(ls >> id >> kind >> label) || (ls >> extra)) fail("malformed node line");
      if (id != static_cast<int>(bg.nodes.size())) fail("node ids must be consecutive from 0");
      NodeKind k;
      if (kind == "input") {
        if (bg.input_node >= 0) fail("second input node");
        k = NodeKind::input;
        bg.input_node = id;
      } else if (kind == "output") {
        if (bg.output_node >= 0) fail("second output node");
        k = NodeKind::output;
        bg.output_node = id;
      } else if (kind == "compute") {
        k = NodeKind::compute;
      } else {
        fail("unknown node kind '" + kind + "'");
      }
      bg.nodes.push_back(BlockNode{id, k, label, {}});
    } else if (tag == "arc") {
      in_arcs = true;
      int s = 0, d = 0;
      if (!(ls >> s >> d) || (ls >> extra)) fail("malformed arc line");
      const int count = static_cast<int>(bg.nodes.size());
      if (s < 0 || d < 0 || s >= count || d >= count || s == d) fail("arc endpoint out of range");
      if (!bg.arcs.empty() && !(bg.arcs.back() < Arc{s, d})) fail("arcs not strictly sorted");
      bg.arcs.emplace_back(s, d);
    } else {
      fail("unexpected '" + line + "'");
    }
  }
  if (bg.input_node < 0 || bg.output_node < 0) throw FormatError("block graph needs one input and one output node");
  for (const auto& [s, d] : bg.arcs) bg.nodes[static_cast<std::size_t>(d)].inputs.push_back(s);
  for (auto& node : bg.nodes) std::sort(node.inputs.begin(), node.inputs.end());
  try {
    bg.order = topo_order(bg);
  } catch (const InternalError& e) {
    throw FormatError(e.what());
  }
  return bg;
}

}  // namespace cpcnn
