#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "cpcnn/rng.hpp"

namespace cpcnn {

struct CPGraphParams {
  int n = 16;
  int n_c = 8;
  double p_cc = 0.9;
  double p_cp = 0.5;
  double p_pp = 0.1;

  /// Throws ParameterError unless n >= 1, 0 <= n_c <= n and all
  /// probabilities lie in [0, 1]. n_c = 0 and n_c = n are accepted (the graph
  /// degenerates to a one-block ER graph).
  void validate() const;
};

/// Undirected simple graph on nodes [0, n). Edges are kept as (i, j) with
/// i < j, sorted lexicographically and unique.
class Graph {
 public:
  using Edge = std::pair<int, int>;

  Graph() = default;
  explicit Graph(int n) : n_(n) {}
  Graph(int n, std::vector<Edge> edges);

  int node_count() const noexcept { return n_; }
  std::size_t edge_count() const noexcept { return edges_.size(); }
  const std::vector<Edge>& edges() const noexcept { return edges_; }

  bool has_edge(int a, int b) const;
  std::vector<int> degrees() const;

  friend bool operator==(const Graph&, const Graph&) = default;

 private:
  int n_ = 0;
  std::vector<Edge> edges_;
};

struct BlockDensityStats {
  double d_cc = 0.0;
  double d_cp = 0.0;
  double d_pp = 0.0;
  double overall = 0.0;
};

struct MatchedDensity {
  double er_p = 0.0;
  int ws_k = 2;
};

/// Core-periphery generator. Nodes [0, n_c) are core, [n_c, n) periphery.
/// Pairs are visited core-core, core-periphery, periphery-periphery, each
/// unordered pair once (i < j); each block draws from its own PRNG stream.
Graph generate_cp_graph(const CPGraphParams& params, Seed seed);

Graph generate_er_graph(int n, double p, Seed seed);

/// Watts-Strogatz: ring lattice with k nearest neighbours, each lattice
/// edge (i, i+j) rewired with probability p_rewire to a uniformly chosen
/// target that is neither i nor already adjacent to i. Edge count stays nk/2.
Graph generate_ws_graph(int n, int k, double p_rewire, Seed seed);

BlockDensityStats block_density_stats(const Graph& g, int n_c);

/// Closed-form expected CP edge density, and the WS degree matching it.
MatchedDensity matched_density_params(const CPGraphParams& params);

/// Graph text format:
///   n <count>
///   core <n_c>
///   e <i> <j>      (i < j, lexicographic order)
std::string format_graph(const Graph& g, int n_c);
void write_graph(std::ostream& os, const Graph& g, int n_c);

struct ParsedGraph {
  Graph graph;
  int n_c = 0;
};
ParsedGraph parse_graph(const std::string& text);
ParsedGraph read_graph_file(const std::string& path);

}  // namespace cpcnn
