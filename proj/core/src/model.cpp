#include "cpcnn/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <cstdio>
#include <sstream>

#include "cpcnn/errors.hpp"

namespace cpcnn {

namespace {

constexpr int kBlocks = 4;

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

const char* to_string(GraphFamily f) {
  switch (f) {
    case GraphFamily::cp:
      return "cp";
    case GraphFamily::er:
      return "er";
    case GraphFamily::ws:
      return "ws";
  }
  return "?";
}

GraphFamily parse_graph_family(const std::string& s) {
  if (s == "cp") return GraphFamily::cp;
  if (s == "er") return GraphFamily::er;
  if (s == "ws") return GraphFamily::ws;
  throw ConfigError("unknown graph family '" + s + "' (expected cp, er or ws)");
}

void ModelConfig::validate() const {
  try {
    graph_params.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
  const int n = graph ? graph->node_count() : graph_params.n;
  if (n < 1) throw ConfigError("graph must have at least one node");
  if (in_channels < 1 || num_classes < 2 || image_size < 1) throw ConfigError("in_channels, num_classes or image_size invalid");
  if (stem_width < n) throw ConfigError("stem width must be at least the graph node count");
  for (int k = 0; k < kBlocks; ++k) {
    const int w = block_widths[static_cast<std::size_t>(k)];
    if (w <= 0 || w % n != 0)
      throw ConfigError("block width " + std::to_string(w) + " is not a positive multiple of n=" + std::to_string(n));
    if (k > 0 && w != 2 * block_widths[static_cast<std::size_t>(k - 1)])
      throw ConfigError("block widths must double from block to block");
  }
  if (er_p && (*er_p < 0.0 || *er_p > 1.0)) throw ConfigError("er_p must lie in [0, 1]");
  if (ws_rewire < 0.0 || ws_rewire > 1.0) throw ConfigError("ws_rewire must lie in [0, 1]");
}

Graph make_graph(const ModelConfig& cfg) {
  if (cfg.graph) return *cfg.graph;
  const Seed seed = split(cfg.seed, 0);
  const auto matched = matched_density_params(cfg.graph_params);
  switch (cfg.family) {
    case GraphFamily::cp:
      return generate_cp_graph(cfg.graph_params, seed);
    case GraphFamily::er:
      return generate_er_graph(cfg.graph_params.n, cfg.er_p.value_or(matched.er_p), seed);
    case GraphFamily::ws:
      return generate_ws_graph(cfg.graph_params.n, cfg.ws_k.value_or(matched.ws_k), cfg.ws_rewire, seed);
  }
  throw InternalError("unhandled graph family");
}

std::vector<int> feature_sizes(int image_size) {
  std::vector<int> sizes;
  int s = conv_output_size(conv_output_size(image_size, 3, 2, 1), 3, 2, 1);
  sizes.push_back(s);
  for (int k = 0; k < kBlocks; ++k) {
    s = conv_output_size(s, 3, 2, 1);
    sizes.push_back(s);
  }
  return sizes;
}

Model::Model(ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  graph_ = make_graph(cfg_);
  constraint_ = relational_bipartite(graph_);
  Rng rng(split(cfg_.seed, 200));

  stem_.push_back(make_conv_bn("stem.0", cfg_.in_channels, cfg_.stem_width, 3, 2, std::nullopt, rng));
  stem_.push_back(make_conv_bn("stem.1", cfg_.stem_width, cfg_.stem_width, 3, 2, std::nullopt, rng));

  int prev = cfg_.stem_width;
  for (int k = 0; k < kBlocks; ++k) {
    const int w = cfg_.block_widths[static_cast<std::size_t>(k)];
    const std::string prefix = "block" + std::to_string(k);
    block_graphs_.push_back(compile_block(graph_, split(cfg_.seed, 100 + static_cast<std::uint64_t>(k))));
    const BlockGraph& bg = block_graphs_.back();
    BlockParams bp;
    bp.input = make_conv_bn(prefix + ".input", prev, w, 3, 2, build_channel_mask(constraint_, prev, w), rng);
    const ChannelMask node_mask = build_channel_mask(constraint_, w, w);
    bp.aggregation.assign(bg.nodes.size(), 0);
    for (const auto& node : bg.nodes) {
      if (node.kind == NodeKind::input) continue;
      const std::string nm =
          node.kind == NodeKind::output ? prefix + ".output" : prefix + ".node" + std::to_string(node.id);
      bp.aggregation[static_cast<std::size_t>(node.id)] =
          add_param(nm + ".agg", Tensor<float>(Shape{static_cast<int>(node.inputs.size())}, 0.0f, true));
    }
    for (int v = 0; v < bg.compute_count(); ++v)
      bp.nodes.push_back(make_conv_bn(prefix + ".node" + std::to_string(v), w, w, 3, 1, node_mask, rng));
    blocks_.push_back(std::move(bp));
    prev = w;
  }

  head_conv_ = make_conv_bn("head.conv", prev, prev, 1, 1, build_channel_mask(constraint_, prev, prev), rng);
  head_conv_.padding = 0;
  Tensor<float> fc(Shape{cfg_.num_classes, prev}, 0.0f, true);
  const double fc_std = std::sqrt(2.0 / prev);
  for (auto& v : fc.data()) v = static_cast<float>(rng.normal() * fc_std);
  fc_weight_ = add_param("head.fc.weight", fc);
  fc_bias_ = add_param("head.fc.bias", Tensor<float>(Shape{cfg_.num_classes}, 0.0f, true));
}

std::size_t Model::add_param(std::string name, Tensor<float> value, std::vector<std::uint8_t> trainable) {
  value.set_requires_grad(true);
  params_.push_back(Parameter<float>{std::move(name), std::move(value), std::move(trainable)});
  return params_.size() - 1;
}

Model::ConvBn Model::make_conv_bn(const std::string& name, int in, int out, int kernel, int stride,
                                  std::optional<ChannelMask> mask, Rng& rng) {
  ConvBn unit;
  unit.name = name;
  unit.stride = stride;
  unit.padding = kernel / 2;
  const int kk = kernel * kernel;
  Tensor<float> w(Shape{out, in, kernel, kernel}, 0.0f, true);
  std::vector<std::uint8_t> trainable;
  if (mask) trainable.assign(w.size(), 0);
  for (int o = 0; o < out; ++o) {
    int fan_in = 0;
    for (int i = 0; i < in; ++i) fan_in += (!mask || mask->at(o, i)) ? kk : 0;
    const double std_dev = std::sqrt(2.0 / fan_in);
    for (int i = 0; i < in; ++i) {
      if (mask && !mask->at(o, i)) continue;
      for (int t = 0; t < kk; ++t) {
        const std::size_t idx = (static_cast<std::size_t>(o) * in + i) * kk + t;
        w[idx] = static_cast<float>(rng.normal() * std_dev);
        if (mask) trainable[idx] = 1;
      }
    }
  }
  unit.weight = add_param(name + ".weight", w, std::move(trainable));
  unit.gamma = add_param(name + ".bn.gamma", Tensor<float>(Shape{out}, 1.0f, true));
  unit.beta = add_param(name + ".bn.beta", Tensor<float>(Shape{out}, 0.0f, true));
  unit.mask = std::move(mask);
  unit.bn = BatchNormState<float>(out);
  return unit;
}

Tensor<float> Model::run_conv_bn(Tape<float>* tape, ConvBn& unit, const Tensor<float>& x, Mode mode) {
  const Tensor<float> y =
      conv2d(tape, x, param(unit.weight), Tensor<float>(), unit.mask ? &*unit.mask : nullptr, unit.stride, unit.padding);
  return batch_norm(tape, y, param(unit.gamma), param(unit.beta), unit.bn, mode);
}

Tensor<float> Model::forward(Tape<float>* tape, const Tensor<float>& batch, Mode mode, ForwardTrace* trace) {
  if (batch.rank() != 4 || batch.dim(1) != cfg_.in_channels || batch.dim(2) != cfg_.image_size ||
      batch.dim(3) != cfg_.image_size)
    throw ShapeError("model expects [N, " + std::to_string(cfg_.in_channels) + ", " + std::to_string(cfg_.image_size) +
                     ", " + std::to_string(cfg_.image_size) + "], got " + shape_string(batch.shape()));

  Tensor<float> x = batch;
  for (auto& unit : stem_) x = relu(tape, run_conv_bn(tape, unit, x, mode));

  for (std::size_t k = 0; k < blocks_.size(); ++k) {
    const BlockGraph& bg = block_graphs_[k];
    BlockParams& bp = blocks_[k];
    std::vector<Tensor<float>> values(bg.nodes.size());
    for (int id : bg.order) {
      const BlockNode& node = bg.nodes[static_cast<std::size_t>(id)];
      if (trace) trace->events.push_back(TraceEvent{static_cast<int>(k), id, node.inputs});
      if (node.kind == NodeKind::input) {
        values[static_cast<std::size_t>(id)] = run_conv_bn(tape, bp.input, x, mode);
        continue;
      }
      std::vector<Tensor<float>> inputs;
      inputs.reserve(node.inputs.size());
      for (int src : node.inputs) {
        const Tensor<float>& v = values[static_cast<std::size_t>(src)];
        if (!v.defined()) throw InternalError("node " + std::to_string(id) + " read an unwritten output");
        inputs.push_back(v);
      }
      Tensor<float> agg =
          weighted_sum<float>(tape, inputs, param(bp.aggregation[static_cast<std::size_t>(id)]));
      if (node.kind == NodeKind::output) {
        values[static_cast<std::size_t>(id)] = agg;
      } else {
        values[static_cast<std::size_t>(id)] =
            run_conv_bn(tape, bp.nodes[static_cast<std::size_t>(id)], relu(tape, agg), mode);
      }
    }
    x = values[static_cast<std::size_t>(bg.output_node)];
  }

  x = relu(tape, run_conv_bn(tape, head_conv_, x, mode));
  x = global_avg_pool(tape, x);
  return linear(tape, x, param(fc_weight_), param(fc_bias_));
}

void Model::zero_grad() {
  for (auto& p : params_) p.value.zero_grad();
}

NamedTensors Model::state() const {
  NamedTensors out;
  for (const auto& p : params_) out.emplace(p.name, p.value);
  auto add_bn = [&](const ConvBn& u) {
    out.emplace(u.name + ".bn.running_mean", u.bn.running_mean);
    out.emplace(u.name + ".bn.running_var", u.bn.running_var);
  };
  for (const auto& u : stem_) add_bn(u);
  for (const auto& bp : blocks_) {
    add_bn(bp.input);
    for (const auto& u : bp.nodes) add_bn(u);
  }
  add_bn(head_conv_);
  return out;
}

void Model::load_state(const NamedTensors& state) {
  for (auto& [name, dst] : this->state()) {
    const auto it = state.find(name);
    if (it == state.end()) throw ShapeError("checkpoint is missing tensor " + name);
    if (it->second.shape() != dst.shape())
      throw ShapeError("checkpoint tensor " + name + " has shape " + shape_string(it->second.shape()) + ", model needs " +
                       shape_string(dst.shape()));
    std::copy(it->second.data().begin(), it->second.data().end(), dst.data().begin());
  }
}

ParamCounts count_params(const std::vector<Parameter<float>>& params) {
  ParamCounts c;
  for (const auto& p : params) {
    const auto n = static_cast<std::int64_t>(p.value.size());
    c.dense += n;
    if (p.trainable.empty())
      c.effective += n;
    else
      c.effective += static_cast<std::int64_t>(std::count(p.trainable.begin(), p.trainable.end(), std::uint8_t{1}));
  }
  return c;
}

ParamCounts Model::param_count() const { return count_params(params_); }

FlopCounts Model::flop_count(int image_size) const {
  FlopCounts f;
  auto conv = [&](const ConvBn& u, int in_ch, int out_ch, int kernel, int in_size) {
    const int out_size = conv_output_size(in_size, kernel, u.stride, u.padding);
    const std::int64_t pixels = static_cast<std::int64_t>(out_size) * out_size;
    const std::int64_t kk = static_cast<std::int64_t>(kernel) * kernel;
    f.dense += pixels * kk * in_ch * out_ch;
    const std::int64_t links = u.mask ? static_cast<std::int64_t>(u.mask->true_count()) : static_cast<std::int64_t>(in_ch) * out_ch;
    f.effective += pixels * kk * links;
    return out_size;
  };
  int s = conv(stem_[0], cfg_.in_channels, cfg_.stem_width, 3, image_size);
  s = conv(stem_[1], cfg_.stem_width, cfg_.stem_width, 3, s);
  int prev = cfg_.stem_width;
  for (std::size_t k = 0; k < blocks_.size(); ++k) {
    const int w = cfg_.block_widths[k];
    s = conv(blocks_[k].input, prev, w, 3, s);
    for (const auto& u : blocks_[k].nodes) conv(u, w, w, 3, s);
    prev = w;
  }
  conv(head_conv_, prev, prev, 1, s);
  const std::int64_t fc = static_cast<std::int64_t>(prev) * cfg_.num_classes;
  f.dense += fc;
  f.effective += fc;
  return f;
}

std::string format_model_config(const ModelConfig& cfg) {
  std::ostringstream os;
  os << "family " << to_string(cfg.family) << '\n'
     << "n " << cfg.graph_params.n << '\n'
     << "n_c " << cfg.graph_params.n_c << '\n'
     << "p_cc " << format_double(cfg.graph_params.p_cc) << '\n'
     << "p_cp " << format_double(cfg.graph_params.p_cp) << '\n'
     << "p_pp " << format_double(cfg.graph_params.p_pp) << '\n'
     << "er_p " << (cfg.er_p ? format_double(*cfg.er_p) : "auto") << '\n'
     << "ws_k " << (cfg.ws_k ? std::to_string(*cfg.ws_k) : "auto") << '\n'
     << "ws_rewire " << format_double(cfg.ws_rewire) << '\n'
     << "in_channels " << cfg.in_channels << '\n'
     << "stem_width " << cfg.stem_width << '\n'
     << "block_widths";
  for (int w : cfg.block_widths) os << ' ' << w;
  os << '\n'
     << "num_classes " << cfg.num_classes << '\n'
     << "image_size " << cfg.image_size << '\n'
     << "seed " << cfg.seed.value << '\n';
  return os.str();
}

namespace {

std::string section(const std::string& name, const std::string& body) {
  const auto lines = std::count(body.begin(), body.end(), '\n');
  return "section " + name + " " + std::to_string(lines) + "\n" + body;
}

}  // namespace

std::string format_model_description(const Model& m) {
  std::string out = "cpcnn-model 1\n";
  out += section("config", format_model_config(m.config()));
  out += section("graph", format_graph(m.graph(), m.config().graph_params.n_c));
  for (std::size_t k = 0; k < m.blocks().size(); ++k)
    out += section("block" + std::to_string(k), format_block_graph(m.blocks()[k]));
  return out;
}

ModelConfig parse_model_description(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != "cpcnn-model 1") throw FormatError("not a cpcnn model description");
  std::map<std::string, std::string> sections;
  while (std::getline(is, line)) {
    std::istringstream hs(line);
    std::string tag, name;
    long count = -1;
    if (!(hs >> tag >> name >> count) || tag != "section" || count < 0)
      throw FormatError("bad section header '" + line + "'");
    std::string body;
    for (long k = 0; k < count; ++k) {
      if (!std::getline(is, line)) throw FormatError("section " + name + " truncated");
      body += line + "\n";
    }
    sections[name] = body;
  }
  for (const char* required : {"config", "graph", "block0", "block1", "block2", "block3"})
    if (!sections.count(required)) throw FormatError(std::string("model description lacks section ") + required);

  ModelConfig cfg;
  std::istringstream cs(sections["config"]);
  while (std::getline(cs, line)) {
    std::istringstream ls(line);
    std::string key, value;
    ls >> key >> value;
    try {
      if (key == "family") cfg.family = parse_graph_family(value);
      else if (key == "n") cfg.graph_params.n = std::stoi(value);
      else if (key == "n_c") cfg.graph_params.n_c = std::stoi(value);
      else if (key == "p_cc") cfg.graph_params.p_cc = std::stod(value);
      else if (key == "p_cp") cfg.graph_params.p_cp = std::stod(value);
      else if (key == "p_pp") cfg.graph_params.p_pp = std::stod(value);
      else if (key == "er_p") cfg.er_p = value == "auto" ? std::nullopt : std::optional<double>(std::stod(value));
      else if (key == "ws_k") cfg.ws_k = value == "auto" ? std::nullopt : std::optional<int>(std::stoi(value));
      else if (key == "ws_rewire") cfg.ws_rewire = std::stod(value);
      else if (key == "in_channels") cfg.in_channels = std::stoi(value);
      else if (key == "stem_width") cfg.stem_width = std::stoi(value);
      else if (key == "block_widths") {
        cfg.block_widths[0] = std::stoi(value);
        for (std::size_t k = 1; k < 4; ++k)
          if (!(ls >> cfg.block_widths[k])) throw FormatError("block_widths needs four values");
      } else if (key == "num_classes") cfg.num_classes = std::stoi(value);
      else if (key == "image_size") cfg.image_size = std::stoi(value);
      else if (key == "seed") cfg.seed.value = std::stoull(value);
      else throw FormatError("unknown model config key '" + key + "'");
    } catch (const std::logic_error&) {
      throw FormatError("bad value for model config key '" + key + "'");
    }
  }
  auto parsed = parse_graph(sections["graph"]);
  cfg.graph = parsed.graph;
  if (parsed.n_c != cfg.graph_params.n_c) throw FormatError("graph core count disagrees with config");

  for (int k = 0; k < 4; ++k) {
    const BlockGraph stored = parse_block_graph(sections["block" + std::to_string(k)]);
    const BlockGraph rebuilt = compile_block(*cfg.graph, split(cfg.seed, 100 + static_cast<std::uint64_t>(k)));
    if (!(stored == rebuilt)) throw FormatError("block" + std::to_string(k) + " does not match the graph and seed");
  }
  return cfg;
}

}  // namespace cpcnn
