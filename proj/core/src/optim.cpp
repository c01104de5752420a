#include "cpcnn/optim.hpp"

#include <cmath>
#include <numbers>

#include "cpcnn/errors.hpp"

namespace cpcnn {

template <typename T>
void AdamW<T>::step(std::vector<Parameter<T>>& params, double lr) {
  if (m_.empty() && step_ == 0) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (std::size_t p = 0; p < params.size(); ++p) {
      m_[p].assign(params[p].value.size(), T(0));
      v_[p].assign(params[p].value.size(), T(0));
    }
  }
  if (m_.size() != params.size()) throw ShapeError("AdamW parameter list changed between steps");
  ++step_;
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& param = params[p];
    const std::size_t n = param.value.size();
    if (m_[p].size() != n) throw ShapeError("AdamW moment shape mismatch for " + param.name);
    if (!param.trainable.empty() && param.trainable.size() != n)
      throw ShapeError("trainable mask size mismatch for " + param.name);
    auto theta = param.value.data();
    auto grad = param.value.grad();
    auto& m = m_[p];
    auto& v = v_[p];
    for (std::size_t e = 0; e < n; ++e) {
      if (!param.trainable.empty() && !param.trainable[e]) continue;
      const double g = static_cast<double>(grad[e]);
      double t = static_cast<double>(theta[e]);
      t -= lr * cfg_.weight_decay * t;
      const double mt = b1 * static_cast<double>(m[e]) + (1.0 - b1) * g;
      const double vt = b2 * static_cast<double>(v[e]) + (1.0 - b2) * g * g;
      m[e] = static_cast<T>(mt);
      v[e] = static_cast<T>(vt);
      const double mhat = mt / c1;
      const double vhat = vt / c2;
      t -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      theta[e] = static_cast<T>(t);
    }
  }
}

double lr_schedule(std::int64_t step, std::int64_t total_steps, std::int64_t warmup_steps, double base_lr) {
  if (warmup_steps < 0 || warmup_steps >= total_steps)
    throw ParameterError("warmup steps (" + std::to_string(warmup_steps) + ") must lie in [0, total steps (" +
                         std::to_string(total_steps) + "))");
  if (step < 0 || step > total_steps) throw ParameterError("schedule step out of range");
  if (step < warmup_steps) return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  const double progress = static_cast<double>(step - warmup_steps) / static_cast<double>(total_steps - warmup_steps);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace cpcnn
