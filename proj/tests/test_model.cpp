#include <doctest.h>

#include <cmath>
#include <cstring>
#include <set>

#include "cpcnn/errors.hpp"
#include "cpcnn/model.hpp"
#include "oracles.hpp"

using namespace cpcnn;

namespace {

ModelConfig small_config(int n, std::uint64_t seed, int image = 16) {
  ModelConfig c;
  c.graph_params = CPGraphParams{n, n / 2, 0.9, 0.5, 0.1};
  c.stem_width = std::max(n, 4);
  c.block_widths = {n, 2 * n, 4 * n, 8 * n};
  if (n < 4) c.block_widths = {4, 8, 16, 32};
  c.num_classes = 3;
  c.image_size = image;
  c.seed = Seed{seed};
  return c;
}

Tensor<float> random_batch(Rng& rng, int n, int c, int size) {
  Tensor<float> t(Shape{n, c, size, size});
  for (auto& v : t.data()) v = static_cast<float>(rng.normal());
  return t;
}

bool same_bits(const Tensor<float>& a, const Tensor<float>& b) {
  return a.shape() == b.shape() && std::memcmp(a.ptr(), b.ptr(), 4 * a.size()) == 0;
}

bool same_state(const NamedTensors& a, const NamedTensors& b) {
  if (a.size() != b.size()) return false;
  for (auto ia = a.begin(), ib = b.begin(); ia != a.end(); ++ia, ++ib)
    if (ia->first != ib->first || !same_bits(ia->second, ib->second)) return false;
  return true;
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("feature map schedule halves per block") {
    CHECK(feature_sizes(224) == std::vector<int>{56, 28, 14, 7, 4});
    CHECK(feature_sizes(32) == std::vector<int>{8, 4, 2, 1, 1});
    CHECK(feature_sizes(16) == std::vector<int>{4, 2, 1, 1, 1});
  }

  TEST_CASE("single-node model equals a chain CNN bit for bit") {
    auto cfg = small_config(1, 5);
    cfg.graph_params = CPGraphParams{1, 1, 0.9, 0.5, 0.1};
    Model m(cfg);
    REQUIRE(m.graph().node_count() == 1);
    Rng rng(Seed{77});
    for (Mode mode : {Mode::eval, Mode::train})
      for (int trial = 0; trial < 3; ++trial) {
        const auto batch = random_batch(rng, 3, 3, 16);
        const auto expected = oracle::chain_cnn(m.state(), batch, mode);
        const auto got = m.forward(nullptr, batch, mode);
        CHECK(same_bits(got, expected));
      }
  }

  TEST_CASE("equal configs build identical models") {
    const auto cfg = small_config(4, 3);
    Model a(cfg), b(cfg);
    CHECK(same_state(a.state(), b.state()));
    CHECK(format_model_description(a) == format_model_description(b));
    Model c(small_config(4, 4));
    CHECK_FALSE(same_state(a.state(), c.state()));
  }

  TEST_CASE("every block shares the graph and the trace is topologically sound") {
    for (std::uint64_t s = 0; s < 10; ++s) {
      Model m(small_config(8, s));
      Rng rng(Seed{s});
      ForwardTrace trace;
      m.forward(nullptr, random_batch(rng, 2, 3, 16), Mode::eval, &trace);
      for (const auto& bg : m.blocks()) {
        CHECK(bg.compute_count() == m.graph().node_count());
        std::vector<Graph::Edge> undirected;
        for (const auto& [a, b] : bg.arcs)
          if (a < bg.compute_count() && b < bg.compute_count()) undirected.push_back({std::min(a, b), std::max(a, b)});
        CHECK(Graph(bg.compute_count(), undirected) == m.graph());
      }
      std::vector<std::set<int>> written(4);
      for (const auto& ev : trace.events) {
        for (int r : ev.reads) CHECK(written[static_cast<std::size_t>(ev.block)].count(r) == 1);
        CHECK(written[static_cast<std::size_t>(ev.block)].insert(ev.node).second);
      }
      for (int k = 0; k < 4; ++k) CHECK(written[static_cast<std::size_t>(k)].size() == 10u);
    }
  }

  TEST_CASE("logits are finite and shaped N x K") {
    Model m(small_config(8, 1));
    Rng rng(Seed{1});
    const auto logits = m.forward(nullptr, random_batch(rng, 5, 3, 16), Mode::train);
    CHECK(logits.shape() == Shape{5, 3});
    for (float v : logits.data()) CHECK(std::isfinite(v));
  }

  TEST_CASE("a constant batch gives identical logit rows") {
    Model m(small_config(4, 2));
    for (Mode mode : {Mode::train, Mode::eval})
      for (float value : {0.0f, 0.7f}) {
        const auto logits = m.forward(nullptr, Tensor<float>(Shape{4, 3, 16, 16}, value), mode);
        for (int n = 1; n < 4; ++n)
          for (int k = 0; k < 3; ++k) CHECK(logits[static_cast<std::size_t>(n * 3 + k)] == logits[static_cast<std::size_t>(k)]);
        for (float v : logits.data()) CHECK(std::isfinite(v));
      }
  }

  TEST_CASE("parameter counts of a single convolution") {
    std::vector<Parameter<float>> dense{{"w", Tensor<float>(Shape{8, 8, 3, 3}), {}}, {"b", Tensor<float>(Shape{8}), {}}};
    const auto c = count_params(dense);
    CHECK(c.dense == 584);
    CHECK(c.effective == 584);

    const auto mask = build_channel_mask(relational_bipartite(Graph(4)), 8, 8);
    std::vector<std::uint8_t> trainable(576, 0);
    for (int o = 0; o < 8; ++o)
      for (int i = 0; i < 8; ++i)
        for (int t = 0; t < 9; ++t) trainable[static_cast<std::size_t>((o * 8 + i) * 9 + t)] = mask.at(o, i) ? 1 : 0;
    std::vector<Parameter<float>> masked{{"w", Tensor<float>(Shape{8, 8, 3, 3}), trainable}, {"b", Tensor<float>(Shape{8}), {}}};
    const auto mc = count_params(masked);
    CHECK(mc.dense == 584);
    CHECK(mc.effective == 144 + 8);
  }

  TEST_CASE("model parameter count matches the closed form and the checkpoint size") {
    for (std::uint64_t s = 0; s < 5; ++s) {
      const auto cfg = small_config(8, s);
      Model m(cfg);
      const std::int64_t n = 8, sw = cfg.stem_width, in = cfg.in_channels, K = cfg.num_classes;
      std::int64_t dense = in * sw * 9 + 2 * sw + sw * sw * 9 + 2 * sw;
      std::int64_t effective = dense;
      std::int64_t bn_channels = 2 * sw;
      std::int64_t prev = sw;
      const auto& bc = m.constraint();
      for (int k = 0; k < 4; ++k) {
        const std::int64_t w = cfg.block_widths[static_cast<std::size_t>(k)];
        const auto& bg = m.blocks()[static_cast<std::size_t>(k)];
        const std::int64_t agg = static_cast<std::int64_t>(bg.arcs.size());
        dense += prev * w * 9 + 2 * w + n * (w * w * 9 + 2 * w) + agg;
        const auto in_links = static_cast<std::int64_t>(build_channel_mask(bc, static_cast<int>(prev), static_cast<int>(w)).true_count());
        const auto node_links = static_cast<std::int64_t>(build_channel_mask(bc, static_cast<int>(w), static_cast<int>(w)).true_count());
        effective += in_links * 9 + 2 * w + n * (node_links * 9 + 2 * w) + agg;
        bn_channels += w + n * w;
        prev = w;
      }
      const auto head_links = static_cast<std::int64_t>(build_channel_mask(bc, static_cast<int>(prev), static_cast<int>(prev)).true_count());
      dense += prev * prev + 2 * prev + prev * K + K;
      effective += head_links + 2 * prev + prev * K + K;
      bn_channels += prev;

      const auto counts = m.param_count();
      CHECK(counts.dense == dense);
      CHECK(counts.effective == effective);
      CHECK(counts.effective < counts.dense);

      std::int64_t floats = 0;
      for (const auto& [name, t] : m.state()) floats += static_cast<std::int64_t>(t.size());
      CHECK(floats == dense + 2 * bn_channels);
      const std::string bytes = serialize_checkpoint(m.state());
      const auto payload = bytes.size() - (bytes.find("payload\n") + 8);
      CHECK(static_cast<std::int64_t>(payload) == 4 * floats);
    }
  }

  TEST_CASE("flop counts") {
    auto cfg = small_config(1, 0);
    cfg.graph_params = CPGraphParams{1, 1, 0.9, 0.5, 0.1};
    const auto dense_only = Model(cfg).flop_count(16);
    CHECK(dense_only.dense == dense_only.effective);
    const auto f = Model(small_config(8, 0)).flop_count(16);
    CHECK(f.effective < f.dense);
    // Stem alone on 16x16: 8*8*9*3*8 + 4*4*9*8*8.
    CHECK(f.dense > 8 * 8 * 9 * 3 * 8 + 4 * 4 * 9 * 8 * 8);
  }

  TEST_CASE("model description round trip") {
    for (GraphFamily fam : {GraphFamily::cp, GraphFamily::er, GraphFamily::ws}) {
      auto cfg = small_config(8, 9);
      cfg.family = fam;
      Model m(cfg);
      const std::string text = format_model_description(m);
      const ModelConfig back = parse_model_description(text);
      Model rebuilt(back);
      CHECK(rebuilt.graph() == m.graph());
      CHECK(format_model_description(rebuilt) == text);
      CHECK(same_state(rebuilt.state(), m.state()));
    }
    Model m(small_config(8, 9));
    std::string text = format_model_description(m);
    CHECK_THROWS_AS(parse_model_description("nope\n"), FormatError);
    const auto pos = text.find("section block2");
    CHECK_THROWS_AS(parse_model_description(text.substr(0, pos)), FormatError);
    // Swap the seed so the stored block graphs no longer match a rebuild.
    const auto seed_pos = text.find("seed 9");
    text.replace(seed_pos, 6, "seed 8");
    CHECK_THROWS_AS(parse_model_description(text), FormatError);
  }

  TEST_CASE("checkpoint state loads into a fresh model") {
    Model a(small_config(4, 1)), b(small_config(4, 1));
    for (auto& p : b.parameters())
      for (auto& v : p.value.data()) v += 1.0f;
    CHECK_FALSE(same_state(a.state(), b.state()));
    b.load_state(a.state());
    CHECK(same_state(a.state(), b.state()));
    Model other(small_config(8, 1));
    CHECK_THROWS_AS(other.load_state(a.state()), ShapeError);
  }

  TEST_CASE("config errors") {
    auto cfg = small_config(8, 0);
    cfg.block_widths = {12, 24, 48, 96};
    CHECK_THROWS_AS(Model{cfg}, ConfigError);
    cfg.block_widths = {8, 16, 24, 32};
    CHECK_THROWS_AS(Model{cfg}, ConfigError);
    cfg = small_config(8, 0);
    cfg.stem_width = 4;
    CHECK_THROWS_AS(Model{cfg}, ConfigError);
    cfg = small_config(8, 0);
    cfg.graph_params.n_c = 9;
    CHECK_THROWS_AS(Model{cfg}, ConfigError);
    CHECK_THROWS_AS(parse_graph_family("ba"), ConfigError);
    Model m(small_config(4, 0));
    CHECK_THROWS_AS(m.forward(nullptr, Tensor<float>(Shape{1, 3, 8, 8}), Mode::eval), ShapeError);
  }

  TEST_CASE("masked weights never move during training") {
    Model m(small_config(8, 3, 8));
    const NamedTensors before = m.state();
    std::map<std::string, Tensor<float>> initial;
    for (const auto& [name, t] : before) initial.emplace(name, t.clone());
    AdamW<float> opt;
    Rng rng(Seed{4});
    for (int step = 0; step < 20; ++step) {
      Tape<float> tape;
      m.zero_grad();
      auto logits = m.forward(&tape, random_batch(rng, 4, 3, 8), Mode::train);
      const std::vector<int> labels{0, 1, 2, 0};
      auto loss = softmax_cross_entropy<float>(&tape, logits, labels);
      tape.backward(loss);
      opt.step(m.parameters(), 1e-2);
    }
    std::size_t frozen = 0, moved = 0;
    for (const auto& p : m.parameters()) {
      const auto& init = initial.at(p.name);
      for (std::size_t e = 0; e < p.trainable.size(); ++e) {
        if (!p.trainable[e]) {
          ++frozen;
          CHECK(std::memcmp(&p.value[e], &init[e], 4) == 0);
        } else if (p.value[e] != init[e]) {
          ++moved;
        }
      }
    }
    CHECK(frozen > 0);
    CHECK(moved > 0);
  }
}
