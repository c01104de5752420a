#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cpcnn/checkpoint.hpp"
#include "cpcnn/dag.hpp"
#include "cpcnn/graph.hpp"
#include "cpcnn/mask.hpp"
#include "cpcnn/ops.hpp"
#include "cpcnn/optim.hpp"

namespace cpcnn {

enum class GraphFamily { cp, er, ws };

const char* to_string(GraphFamily f);
GraphFamily parse_graph_family(const std::string& s);

struct ModelConfig {
  GraphFamily family = GraphFamily::cp;
  // n is shared by every family; n_c and the probabilities drive the CP
  // generator and, for ER/WS, the matched density.
  CPGraphParams graph_params;
  std::optional<double> er_p;  // unset: matched to the CP expected density
  std::optional<int> ws_k;     // unset: matched to the CP expected density
  double ws_rewire = 0.25;
  std::optional<Graph> graph;  // pre-supplied graph overrides generation

  int in_channels = 3;
  int stem_width = 32;
  std::array<int, 4> block_widths{64, 128, 256, 512};
  int num_classes = 10;
  int image_size = 32;
  Seed seed{0};

  /// Throws ConfigError on a violated invariant.
  void validate() const;
};

/// Samples the graph a config describes (or returns the supplied one).
Graph make_graph(const ModelConfig& cfg);

/// Spatial size after the stem and after each block, for `image_size`.
std::vector<int> feature_sizes(int image_size);

struct ParamCounts {
  std::int64_t dense = 0;
  std::int64_t effective = 0;  // masked-out weight entries excluded
};

ParamCounts count_params(const std::vector<Parameter<float>>& params);

/// Multiply-accumulate counts of all convolutions and the classifier.
struct FlopCounts {
  std::int64_t dense = 0;
  std::int64_t effective = 0;
};

/// One executed node, recorded when a trace is requested.
struct TraceEvent {
  int block = 0;
  int node = 0;
  std::vector<int> reads;  // node ids whose outputs were consumed
};

struct ForwardTrace {
  std::vector<TraceEvent> events;
};

/// The assembled network: stem (two stride-2 3x3 conv + BN + ReLU), four
/// CP-Blocks compiled from one shared graph, and a head (masked 1x1 conv +
/// BN + ReLU, global average pool, linear classifier).
class Model {
 public:
  explicit Model(ModelConfig cfg);

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  /// batch: [N, in_channels, image_size, image_size] -> logits [N, num_classes].
  Tensor<float> forward(Tape<float>* tape, const Tensor<float>& batch, Mode mode, ForwardTrace* trace = nullptr);

  std::vector<Parameter<float>>& parameters() { return params_; }
  const std::vector<Parameter<float>>& parameters() const { return params_; }
  void zero_grad();

  /// Parameters and batch-norm running statistics by name.
  NamedTensors state() const;
  /// Copies values from `state` into this model; every name must be present
  /// with a matching shape.
  void load_state(const NamedTensors& state);

  const ModelConfig& config() const noexcept { return cfg_; }
  const Graph& graph() const noexcept { return graph_; }
  const BipartiteConstraint& constraint() const noexcept { return constraint_; }
  const std::vector<BlockGraph>& blocks() const noexcept { return block_graphs_; }

  ParamCounts param_count() const;
  FlopCounts flop_count(int image_size) const;

 private:
  struct ConvBn {
    std::size_t weight = 0;  // index into params_
    std::size_t gamma = 0;
    std::size_t beta = 0;
    std::optional<ChannelMask> mask;
    int stride = 1;
    int padding = 1;
    std::string name;
    BatchNormState<float> bn;
  };
  struct BlockParams {
    ConvBn input;
    std::vector<ConvBn> nodes;               // by compute node id
    std::vector<std::size_t> aggregation;    // raw weight param per node id (compute + output)
  };

  std::size_t add_param(std::string name, Tensor<float> value, std::vector<std::uint8_t> trainable = {});
  ConvBn make_conv_bn(const std::string& name, int in, int out, int kernel, int stride, std::optional<ChannelMask> mask,
                      Rng& rng);
  Tensor<float> run_conv_bn(Tape<float>* tape, ConvBn& unit, const Tensor<float>& x, Mode mode);
  Tensor<float> param(std::size_t idx) const { return params_[idx].value; }

  ModelConfig cfg_;
  Graph graph_;
  BipartiteConstraint constraint_;
  std::vector<BlockGraph> block_graphs_;
  std::vector<Parameter<float>> params_;
  std::vector<ConvBn> stem_;
  std::vector<BlockParams> blocks_;
  ConvBn head_conv_;
  std::size_t fc_weight_ = 0;
  std::size_t fc_bias_ = 0;
};

/// Text description of a model: config, shared graph, and each block graph.
std::string format_model_description(const Model& m);
/// Parses a description and returns the config it encodes, with the
/// serialized graph attached. The block graphs are checked against a rebuild.
ModelConfig parse_model_description(const std::string& text);

std::string format_model_config(const ModelConfig& cfg);

}  // namespace cpcnn
