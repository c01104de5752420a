#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "cpcnn/graph.hpp"
#include "cpcnn/rng.hpp"

namespace cpcnn {

/// A graph with a random bijection node -> label in [1, n].
struct LabeledGraph {
  Graph base;
  std::vector<int> label;  // label[node]
};

using Arc = std::pair<int, int>;  // src -> dst

/// Undirected graph oriented from smaller to larger label.
struct OrientedGraph {
  int n = 0;
  std::vector<int> label;
  std::vector<Arc> arcs;  // sorted
};

enum class NodeKind { input, compute, output };

const char* to_string(NodeKind kind);

struct BlockNode {
  int id = 0;
  NodeKind kind = NodeKind::compute;
  int label = 0;
  std::vector<int> inputs;  // predecessor ids, ascending; one aggregation weight per entry

  friend bool operator==(const BlockNode&, const BlockNode&) = default;
};

/// Compiled DAG for one block. Compute nodes keep their graph index as id
/// (0..n-1); the input pseudo-node is n (label 0) and the output pseudo-node
/// is n+1 (label n+1). The input node runs the stride-2 convolution; the
/// output node only aggregates.
struct BlockGraph {
  std::vector<BlockNode> nodes;  // indexed by id
  std::vector<Arc> arcs;         // sorted
  int input_node = 0;
  int output_node = 0;
  std::vector<int> order;  // topological execution order

  int compute_count() const { return static_cast<int>(nodes.size()) - 2; }
  std::vector<int> successors(int id) const;

  friend bool operator==(const BlockGraph&, const BlockGraph&) = default;
};

/// Fisher-Yates permutation of 1..n drawn from `seed`.
LabeledGraph assign_labels(const Graph& g, Seed seed);

OrientedGraph orient_edges(const LabeledGraph& lg);

/// Adds the input node (edge to every in-degree-0 node) and the output node
/// (edge from every out-degree-0 node), then computes the execution order.
BlockGraph augment_io(const OrientedGraph& dag);

/// Kahn's algorithm, smallest label first among ready nodes. Throws
/// InternalError on a cycle.
std::vector<int> topo_order(const BlockGraph& bg);

/// assign_labels -> orient_edges -> augment_io.
BlockGraph compile_block(const Graph& g, Seed seed);

/// BlockGraph text format:
///   node <id> <input|compute|output> <label>   (ascending id)
///   arc <src> <dst>                             (sorted)
std::string format_block_graph(const BlockGraph& bg);
void write_block_graph(std::ostream& os, const BlockGraph& bg);
BlockGraph parse_block_graph(const std::string& text);

}  // namespace cpcnn
