#include "cpcnn/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "cpcnn/errors.hpp"

namespace cpcnn {

namespace {

const std::string kMomentPrefix1 = "optim.m.";
const std::string kMomentPrefix2 = "optim.v.";
const std::string kStepKey = "optim.step";
const std::string kEpochKey = "meta.epoch";

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

Tensor<float> scalar(double v) { return Tensor<float>(Shape{1}, static_cast<float>(v)); }

NamedTensors capture(const Model& model, const AdamW<float>& opt, int epoch) {
  NamedTensors out = model.state();
  const auto& params = model.parameters();
  for (std::size_t p = 0; p < params.size(); ++p) {
    const Shape& shape = params[p].value.shape();
    std::vector<float> m = opt.first_moments().empty() ? std::vector<float>(params[p].value.size(), 0.0f) : opt.first_moments()[p];
    std::vector<float> v = opt.second_moments().empty() ? std::vector<float>(params[p].value.size(), 0.0f) : opt.second_moments()[p];
    out.emplace(kMomentPrefix1 + params[p].name, Tensor<float>::from(shape, std::move(m)));
    out.emplace(kMomentPrefix2 + params[p].name, Tensor<float>::from(shape, std::move(v)));
  }
  out.emplace(kStepKey, scalar(static_cast<double>(opt.steps())));
  out.emplace(kEpochKey, scalar(epoch));
  return out;
}

int restore(Model& model, AdamW<float>& opt, const NamedTensors& ck) {
  model.load_state(model_state_from_checkpoint(ck));
  auto& params = model.parameters();
  auto& m = opt.first_moments();
  auto& v = opt.second_moments();
  m.assign(params.size(), {});
  v.assign(params.size(), {});
  for (std::size_t p = 0; p < params.size(); ++p) {
    const auto mi = ck.find(kMomentPrefix1 + params[p].name);
    const auto vi = ck.find(kMomentPrefix2 + params[p].name);
    if (mi == ck.end() || vi == ck.end()) throw ShapeError("checkpoint lacks optimizer state for " + params[p].name);
    m[p].assign(mi->second.data().begin(), mi->second.data().end());
    v[p].assign(vi->second.data().begin(), vi->second.data().end());
  }
  const auto si = ck.find(kStepKey);
  const auto ei = ck.find(kEpochKey);
  if (si == ck.end() || ei == ck.end()) throw ShapeError("checkpoint lacks optimizer step or epoch");
  opt.set_steps(static_cast<std::int64_t>(si->second[0]));
  return static_cast<int>(ei->second[0]);
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (warmup_epochs < 0 || warmup_epochs >= epochs) throw ConfigError("warmup_epochs must lie in [0, epochs)");
  if (!(base_lr > 0.0)) throw ConfigError("base_lr must be positive");
}

std::string format_run_record(const RunRecord& r, bool with_time) {
  std::string out = with_time ? "epoch,train_loss,train_acc,eval_acc,lr,wall_time_s\n" : "epoch,train_loss,train_acc,eval_acc,lr\n";
  for (const auto& row : r.rows) {
    out += std::to_string(row.epoch) + "," + fmt(row.train_loss) + "," + fmt(row.train_acc) + "," + fmt(row.eval_acc) + "," +
           fmt(row.lr);
    if (with_time) out += "," + fmt(row.wall_time_s);
    out += "\n";
  }
  return out;
}

TrainResult train(Model& model, const Dataset& train_set, const Dataset* eval_set, const TrainConfig& cfg,
                  const TrainOptions& options) {
  cfg.validate();
  if (train_set.size() == 0) throw ParameterError("training set is empty");
  const auto& mc = model.config();
  if (train_set.channels != mc.in_channels || train_set.height != mc.image_size || train_set.width != mc.image_size)
    throw ShapeError("training images do not match the model input size");

  const std::size_t n = train_set.size();
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  const std::int64_t steps_per_epoch = static_cast<std::int64_t>((n + bs - 1) / bs);
  const std::int64_t total_steps = steps_per_epoch * cfg.epochs;
  const std::int64_t warmup_steps = steps_per_epoch * cfg.warmup_epochs;
  const int last_epoch = options.stop_after_epoch > 0 ? std::min(options.stop_after_epoch, cfg.epochs) : cfg.epochs;

  AdamW<float> opt(AdamWConfig{cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay});
  int start_epoch = 0;
  if (options.resume) start_epoch = restore(model, opt, *options.resume);

  TrainResult result;
  std::vector<std::size_t> order(n);
  for (int epoch = start_epoch + 1; epoch <= last_epoch; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(split(Seed{cfg.seed}, 300 + static_cast<std::uint64_t>(epoch)));
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
    std::vector<std::uint8_t> flips(n, 0);
    if (cfg.hflip)
      for (auto& f : flips) f = rng.uniform() < 0.5 ? 1 : 0;

    double loss_sum = 0.0;
    std::size_t correct = 0;
    double lr = 0.0;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t end = std::min(n, start + bs);
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
      std::vector<std::uint8_t> flip;
      for (auto i : idx) flip.push_back(flips[i]);
      const Tensor<float> x = train_set.batch(idx, flip);
      const std::vector<int> y = train_set.batch_labels(idx);

      Tape<float> tape;
      model.zero_grad();
      const Tensor<float> logits = model.forward(&tape, x, Mode::train);
      Tensor<float> loss = softmax_cross_entropy<float>(&tape, logits, y);
      const double lv = static_cast<double>(loss[0]);
      if (!std::isfinite(lv))
        throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + ", step " + std::to_string(opt.steps()) +
                              " (lr " + fmt(lr) + ")");
      tape.backward(loss);
      lr = lr_schedule(opt.steps() + 1, total_steps, warmup_steps, cfg.base_lr);
      opt.step(model.parameters(), lr);

      loss_sum += lv * static_cast<double>(idx.size());
      const auto pred = argmax_rows(logits);
      for (std::size_t k = 0; k < y.size(); ++k) correct += pred[k] == y[k] ? 1 : 0;
    }

    EpochRow row;
    row.epoch = epoch;
    row.train_loss = loss_sum / static_cast<double>(n);
    row.train_acc = static_cast<double>(correct) / static_cast<double>(n);
    row.eval_acc = eval_set ? evaluate(model, *eval_set) : -1.0;
    row.lr = lr;
    row.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.record.rows.push_back(row);
    if (options.on_epoch) options.on_epoch(row);
  }
  result.checkpoint = capture(model, opt, std::max(start_epoch, last_epoch));
  return result;
}

double evaluate(Model& model, const Dataset& data, int batch_size) {
  if (data.size() == 0) throw ParameterError("cannot evaluate on an empty dataset");
  if (batch_size < 1) throw ParameterError("batch size must be positive");
  std::size_t correct = 0;
  const auto bs = static_cast<std::size_t>(batch_size);
  for (std::size_t start = 0; start < data.size(); start += bs) {
    std::vector<std::size_t> idx;
    for (std::size_t k = start; k < std::min(data.size(), start + bs); ++k) idx.push_back(k);
    const auto pred = argmax_rows(model.forward(nullptr, data.batch(idx), Mode::eval));
    const auto y = data.batch_labels(idx);
    for (std::size_t k = 0; k < y.size(); ++k) correct += pred[k] == y[k] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

NamedTensors model_state_from_checkpoint(const NamedTensors& checkpoint) {
  NamedTensors out;
  for (const auto& [name, t] : checkpoint)
    if (name.rfind("optim.", 0) != 0 && name.rfind("meta.", 0) != 0) out.emplace(name, t);
  return out;
}

Settings parse_settings(const std::string& text) {
  Settings out;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(is, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    out[key] = trim(t.substr(eq + 1));
  }
  return out;
}

Settings read_settings_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_settings(ss.str());
}

void apply_settings(const Settings& s, ModelConfig& model, TrainConfig& train) {
  for (const auto& [key, value] : s) {
    try {
      std::size_t used = 0;
      auto as_int = [&] {
        const int v = std::stoi(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
      };
      auto as_double = [&] {
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
      };
      auto as_u64 = [&] {
        const auto v = std::stoull(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return static_cast<std::uint64_t>(v);
      };
      auto as_bool = [&] {
        if (value == "true" || value == "1") return true;
        if (value == "false" || value == "0") return false;
        throw std::invalid_argument(value);
      };
      if (key == "family") model.family = parse_graph_family(value);
      else if (key == "n") model.graph_params.n = as_int();
      else if (key == "n_c") model.graph_params.n_c = as_int();
      else if (key == "p_cc") model.graph_params.p_cc = as_double();
      else if (key == "p_cp") model.graph_params.p_cp = as_double();
      else if (key == "p_pp") model.graph_params.p_pp = as_double();
      else if (key == "er_p") model.er_p = value == "auto" ? std::nullopt : std::optional<double>(as_double());
      else if (key == "ws_k") model.ws_k = value == "auto" ? std::nullopt : std::optional<int>(as_int());
      else if (key == "ws_rewire") model.ws_rewire = as_double();
      else if (key == "in_channels") model.in_channels = as_int();
      else if (key == "stem_width") model.stem_width = as_int();
      else if (key == "block_widths") {
        std::istringstream ws(value);
        std::string part;
        std::size_t k = 0;
        while (std::getline(ws, part, ',')) {
          if (k >= 4) throw std::invalid_argument(value);
          model.block_widths[k++] = std::stoi(part);
        }
        if (k != 4) throw std::invalid_argument(value);
      } else if (key == "num_classes") model.num_classes = as_int();
      else if (key == "image_size") model.image_size = as_int();
      else if (key == "model_seed") model.seed.value = as_u64();
      else if (key == "epochs") train.epochs = as_int();
      else if (key == "batch_size") train.batch_size = as_int();
      else if (key == "base_lr") train.base_lr = as_double();
      else if (key == "warmup_epochs") train.warmup_epochs = as_int();
      else if (key == "beta1") train.beta1 = as_double();
      else if (key == "beta2") train.beta2 = as_double();
      else if (key == "eps") train.eps = as_double();
      else if (key == "weight_decay") train.weight_decay = as_double();
      else if (key == "data_seed") train.seed = as_u64();
      else if (key == "hflip") train.hflip = as_bool();
      else throw ConfigError("unknown setting '" + key + "'");
    } catch (const std::logic_error&) {
      throw ConfigError("bad value '" + value + "' for setting '" + key + "'");
    }
  }
}

}  // namespace cpcnn
