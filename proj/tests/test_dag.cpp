#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "cpcnn/dag.hpp"
#include "cpcnn/errors.hpp"
#include "oracles.hpp"

using namespace cpcnn;

namespace {

Graph random_graph(std::uint64_t s) {
  switch (s % 3) {
    case 0:
      return generate_cp_graph({16, static_cast<int>(s % 17), 0.9, 0.5, 0.1}, Seed{s});
    case 1:
      return generate_er_graph(16, 0.5, Seed{s});
    default:
      return generate_ws_graph(16, 4, 0.3, Seed{s});
  }
}

std::vector<int> position_of(const std::vector<int>& order) {
  std::vector<int> pos(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) pos[static_cast<std::size_t>(order[k])] = static_cast<int>(k);
  return pos;
}

}  // namespace

TEST_SUITE("dag_compile") {
  TEST_CASE("labels are a deterministic permutation") {
    const Graph g = generate_cp_graph({16, 8, 0.9, 0.5, 0.1}, Seed{1});
    const auto a = assign_labels(g, Seed{5});
    const auto b = assign_labels(g, Seed{5});
    CHECK(a.label == b.label);
    auto sorted = a.label;
    std::sort(sorted.begin(), sorted.end());
    for (int k = 0; k < 16; ++k) CHECK(sorted[static_cast<std::size_t>(k)] == k + 1);
    CHECK(assign_labels(Graph(1), Seed{3}).label == std::vector<int>{1});
  }

  TEST_CASE("label 1 is uniform over nodes") {
    const Graph g(16);
    std::vector<int> hits(16, 0);
    const int seeds = 1000;
    for (int s = 0; s < seeds; ++s) {
      const auto lg = assign_labels(g, Seed{static_cast<std::uint64_t>(s)});
      for (int v = 0; v < 16; ++v)
        if (lg.label[static_cast<std::size_t>(v)] == 1) ++hits[static_cast<std::size_t>(v)];
    }
    const double p = 1.0 / 16, sigma = std::sqrt(seeds * p * (1 - p));
    for (int h : hits) CHECK(std::abs(h - seeds * p) < 3.5 * sigma);
  }

  TEST_CASE("orientation follows labels") {
    LabeledGraph lg{Graph(3, {{0, 1}, {1, 2}, {0, 2}}), {1, 2, 3}};
    CHECK(orient_edges(lg).arcs == std::vector<Arc>{{0, 1}, {0, 2}, {1, 2}});
    lg.label = {3, 2, 1};
    CHECK(orient_edges(lg).arcs == std::vector<Arc>{{1, 0}, {2, 0}, {2, 1}});
    CHECK(orient_edges(LabeledGraph{Graph(4), {1, 2, 3, 4}}).arcs.empty());
  }

  TEST_CASE("oriented random graphs are acyclic and conserve edges") {
    for (std::uint64_t s = 0; s < 1000; ++s) {
      const Graph g = random_graph(s);
      const auto og = orient_edges(assign_labels(g, Seed{s * 7 + 1}));
      CHECK(og.arcs.size() == g.edge_count());
      CHECK_FALSE(oracle::has_cycle(g.node_count(), og.arcs));
    }
  }

  TEST_CASE("augment chain") {
    OrientedGraph chain{3, {1, 2, 3}, {{0, 1}, {1, 2}}};
    const BlockGraph bg = augment_io(chain);
    CHECK(bg.input_node == 3);
    CHECK(bg.output_node == 4);
    CHECK(bg.arcs == std::vector<Arc>{{0, 1}, {1, 2}, {2, 4}, {3, 0}});
    CHECK(bg.order == std::vector<int>{3, 0, 1, 2, 4});
    CHECK(bg.nodes[3].kind == NodeKind::input);
    CHECK(bg.nodes[4].kind == NodeKind::output);
    CHECK(bg.nodes[4].inputs == std::vector<int>{2});
  }

  TEST_CASE("isolated node is wired to input and output") {
    OrientedGraph g{3, {1, 2, 3}, {{0, 1}}};
    const BlockGraph bg = augment_io(g);
    const auto has = [&](Arc a) { return std::find(bg.arcs.begin(), bg.arcs.end(), a) != bg.arcs.end(); };
    CHECK(has({3, 2}));
    CHECK(has({2, 4}));
  }

  TEST_CASE("parallel nodes run in label order") {
    OrientedGraph g{2, {5, 2}, {}};
    const BlockGraph bg = augment_io(g);
    CHECK(bg.order == std::vector<int>{2, 1, 0, 3});
  }

  TEST_CASE("compiled random blocks satisfy single-io, reachability and schedule invariants") {
    for (std::uint64_t s = 0; s < 1000; ++s) {
      const Graph g = random_graph(s);
      const BlockGraph bg = compile_block(g, Seed{s});
      const int n = g.node_count();
      CHECK(bg.compute_count() == n);
      CHECK(std::count_if(bg.nodes.begin(), bg.nodes.end(), [](const BlockNode& v) { return v.kind == NodeKind::input; }) == 1);
      CHECK(std::count_if(bg.nodes.begin(), bg.nodes.end(), [](const BlockNode& v) { return v.kind == NodeKind::output; }) == 1);
      CHECK_FALSE(oracle::has_cycle(n + 2, bg.arcs));

      REQUIRE(bg.order.size() == static_cast<std::size_t>(n + 2));
      const auto pos = position_of(bg.order);
      for (const auto& [a, b] : bg.arcs) CHECK(pos[static_cast<std::size_t>(a)] < pos[static_cast<std::size_t>(b)]);

      // Forward reachability from input and backward reachability from output.
      std::vector<char> fwd(static_cast<std::size_t>(n + 2), 0), bwd(static_cast<std::size_t>(n + 2), 0);
      fwd[static_cast<std::size_t>(bg.input_node)] = 1;
      for (int v : bg.order)
        if (fwd[static_cast<std::size_t>(v)])
          for (int w : bg.successors(v)) fwd[static_cast<std::size_t>(w)] = 1;
      bwd[static_cast<std::size_t>(bg.output_node)] = 1;
      for (auto it = bg.order.rbegin(); it != bg.order.rend(); ++it)
        for (int w : bg.successors(*it))
          if (bwd[static_cast<std::size_t>(w)]) bwd[static_cast<std::size_t>(*it)] = 1;
      CHECK(std::all_of(fwd.begin(), fwd.end(), [](char c) { return c == 1; }));
      CHECK(std::all_of(bwd.begin(), bwd.end(), [](char c) { return c == 1; }));
    }
  }

  TEST_CASE("pipeline is a pure function of graph and seed") {
    const Graph g = generate_cp_graph({16, 6, 0.9, 0.5, 0.1}, Seed{3});
    CHECK(compile_block(g, Seed{11}) == compile_block(g, Seed{11}));
  }

  TEST_CASE("topo_order reports cycles") {
    BlockGraph bg;
    bg.nodes = {BlockNode{0, NodeKind::compute, 1, {}}, BlockNode{1, NodeKind::compute, 2, {}}};
    bg.arcs = {{0, 1}, {1, 0}};
    CHECK_THROWS_AS(topo_order(bg), InternalError);
  }

  TEST_CASE("block graph text format") {
    const BlockGraph bg = augment_io(OrientedGraph{3, {2, 1, 3}, {{1, 0}, {1, 2}}});
    const std::string text = format_block_graph(bg);
    CHECK(text ==
          "node 0 compute 2\nnode 1 compute 1\nnode 2 compute 3\nnode 3 input 0\nnode 4 output 4\n"
          "arc 0 4\narc 1 0\narc 1 2\narc 2 4\narc 3 1\n");
    const BlockGraph back = parse_block_graph(text);
    CHECK(back == bg);
    CHECK(format_block_graph(back) == text);

    CHECK_THROWS_AS(parse_block_graph("node 0 compute 1\n"), FormatError);
    CHECK_THROWS_AS(parse_block_graph("node 0 input 0\nnode 1 output 1\narc 1 0\narc 0 1\n"), FormatError);
    CHECK_THROWS_AS(parse_block_graph("node 0 input 0\nnode 1 mystery 1\n"), FormatError);
    CHECK_THROWS_AS(parse_block_graph("node 0 input 0\nnode 1 output 1\narc 0 5\n"), FormatError);
  }
}
