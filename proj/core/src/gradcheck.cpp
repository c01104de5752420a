#include "cpcnn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "cpcnn/graph.hpp"
#include "cpcnn/mask.hpp"
#include "cpcnn/ops.hpp"

namespace cpcnn {

namespace {

double project(const Tensor<double>& out, const std::vector<double>& r) {
  double s = 0.0;
  for (std::size_t k = 0; k < r.size(); ++k) s += r[k] * out[k];
  return s;
}

Tensor<double> random_tensor(Rng& rng, Shape shape, bool requires_grad = true) {
  Tensor<double> t(std::move(shape), 0.0, requires_grad);
  for (auto& v : t.data()) v = rng.normal();
  return t;
}

// Values with magnitude in [0.1, 1.1] so ReLU kinks stay out of reach of eps.
Tensor<double> away_from_zero(Rng& rng, Shape shape) {
  Tensor<double> t(std::move(shape), 0.0, true);
  for (auto& v : t.data()) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * (0.1 + rng.uniform());
  return t;
}

int pick(Rng& rng, int lo, int hi) { return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1))); }

}  // namespace

double max_relative_error(const GradBuilder& build, std::vector<Tensor<double>> wrt, Seed seed,
                          const GradCheckOptions& options) {
  for (auto& t : wrt) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  Tape<double> tape;
  Tensor<double> out = build(&tape);
  Rng rng(seed);
  std::vector<double> r(out.size());
  for (auto& v : r) v = rng.normal();
  tape.backward(out, r);

  double worst = 0.0;
  for (auto& t : wrt) {
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    for (std::size_t e = 0; e < t.size(); ++e) {
      const double saved = t[e];
      t[e] = saved + options.eps;
      const double fp = project(build(nullptr), r);
      t[e] = saved - options.eps;
      const double fm = project(build(nullptr), r);
      t[e] = saved;
      const double numeric = (fp - fm) / (2.0 * options.eps);
      const double denom = std::max({std::abs(analytic[e]), std::abs(numeric), options.floor});
      worst = std::max(worst, std::abs(analytic[e] - numeric) / denom);
    }
  }
  return worst;
}

std::vector<GradCheckReport> run_gradient_suite(int trials, std::uint64_t seed, double tolerance,
                                                const GradCheckOptions& options) {
  std::vector<GradCheckReport> reports;
  Rng rng(Seed{seed});
  auto run = [&](const std::string& name, const std::function<double(int)>& trial) {
    GradCheckReport rep;
    rep.op = name;
    for (int t = 0; t < trials; ++t) rep.max_rel_error = std::max(rep.max_rel_error, trial(t));
    rep.trials = trials;
    rep.passed = rep.max_rel_error < tolerance;
    reports.push_back(rep);
  };

  run("conv2d_masked", [&](int t) {
    const int groups = pick(rng, 2, 4);
    const int N = pick(rng, 1, 2), I = groups * pick(rng, 1, 2), O = groups * pick(rng, 1, 2);
    const int K = rng.uniform() < 0.5 ? 3 : 1, stride = pick(rng, 1, 2), H = pick(rng, 3, 6), W = pick(rng, 3, 6);
    const Graph g = generate_er_graph(groups, 0.5, Seed{seed + 1000 + static_cast<std::uint64_t>(t)});
    const ChannelMask mask = build_channel_mask(relational_bipartite(g), I, O);
    auto x = random_tensor(rng, {N, I, H, W});
    auto w = random_tensor(rng, {O, I, K, K});
    auto b = random_tensor(rng, {O});
    return max_relative_error(
        [&](Tape<double>* tp) { return conv2d(tp, x, w, b, &mask, stride, K / 2); }, {x, w, b},
        Seed{rng.next_u64()}, options);
  });

  run("conv2d_dense", [&](int) {
    const int N = pick(rng, 1, 2), I = pick(rng, 1, 4), O = pick(rng, 1, 4);
    const int K = rng.uniform() < 0.5 ? 3 : 1, stride = pick(rng, 1, 2), H = pick(rng, 3, 6), W = pick(rng, 3, 6);
    auto x = random_tensor(rng, {N, I, H, W});
    auto w = random_tensor(rng, {O, I, K, K});
    auto b = random_tensor(rng, {O});
    return max_relative_error(
        [&](Tape<double>* tp) { return conv2d(tp, x, w, b, nullptr, stride, K / 2); }, {x, w, b},
        Seed{rng.next_u64()}, options);
  });

  run("batch_norm_train", [&](int) {
    const int N = pick(rng, 2, 3), C = pick(rng, 1, 3), H = pick(rng, 1, 3), W = pick(rng, 2, 3);
    auto x = random_tensor(rng, {N, C, H, W});
    auto gamma = random_tensor(rng, {C});
    auto beta = random_tensor(rng, {C});
    BatchNormState<double> st(C);
    return max_relative_error(
        [&](Tape<double>* tp) { return batch_norm(tp, x, gamma, beta, st, Mode::train); }, {x, gamma, beta},
        Seed{rng.next_u64()}, options);
  });

  run("batch_norm_eval", [&](int) {
    const int N = pick(rng, 1, 3), C = pick(rng, 1, 3), H = pick(rng, 1, 3), W = pick(rng, 1, 3);
    auto x = random_tensor(rng, {N, C, H, W});
    auto gamma = random_tensor(rng, {C});
    auto beta = random_tensor(rng, {C});
    BatchNormState<double> st(C);
    for (auto& v : st.running_mean.data()) v = rng.normal();
    for (auto& v : st.running_var.data()) v = 0.5 + rng.uniform();
    return max_relative_error(
        [&](Tape<double>* tp) { return batch_norm(tp, x, gamma, beta, st, Mode::eval); }, {x, gamma, beta},
        Seed{rng.next_u64()}, options);
  });

  run("relu", [&](int) {
    auto x = away_from_zero(rng, {pick(rng, 1, 3), pick(rng, 1, 3), pick(rng, 1, 4), pick(rng, 1, 4)});
    return max_relative_error([&](Tape<double>* tp) { return relu(tp, x); }, {x}, Seed{rng.next_u64()}, options);
  });

  run("weighted_sum", [&](int) {
    const int K = pick(rng, 1, 4);
    const Shape shape{pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 1, 3), pick(rng, 1, 3)};
    std::vector<Tensor<double>> xs;
    for (int k = 0; k < K; ++k) xs.push_back(random_tensor(rng, shape));
    auto raw = random_tensor(rng, {K});
    std::vector<Tensor<double>> wrt = xs;
    wrt.push_back(raw);
    return max_relative_error(
        [&](Tape<double>* tp) { return weighted_sum<double>(tp, xs, raw); }, wrt, Seed{rng.next_u64()}, options);
  });

  run("global_avg_pool", [&](int) {
    auto x = random_tensor(rng, {pick(rng, 1, 3), pick(rng, 1, 3), pick(rng, 1, 4), pick(rng, 1, 4)});
    return max_relative_error([&](Tape<double>* tp) { return global_avg_pool(tp, x); }, {x}, Seed{rng.next_u64()},
                              options);
  });

  run("linear", [&](int) {
    const int N = pick(rng, 1, 4), C = pick(rng, 1, 5), K = pick(rng, 1, 5);
    auto x = random_tensor(rng, {N, C});
    auto w = random_tensor(rng, {K, C});
    auto b = random_tensor(rng, {K});
    return max_relative_error([&](Tape<double>* tp) { return linear(tp, x, w, b); }, {x, w, b}, Seed{rng.next_u64()},
                              options);
  });

  run("softmax_cross_entropy", [&](int) {
    const int N = pick(rng, 1, 4), K = pick(rng, 2, 6);
    auto logits = random_tensor(rng, {N, K});
    std::vector<int> labels;
    for (int n = 0; n < N; ++n) labels.push_back(pick(rng, 0, K - 1));
    return max_relative_error(
        [&](Tape<double>* tp) { return softmax_cross_entropy<double>(tp, logits, labels); }, {logits},
        Seed{rng.next_u64()}, options);
  });

  return reports;
}

}  // namespace cpcnn
