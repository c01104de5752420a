#include "cpcnn/tensor.hpp"

#include <algorithm>

#include "cpcnn/errors.hpp"

namespace cpcnn {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeError("negative dimension in " + shape_string(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill, bool requires_grad) : s_(std::make_shared<Storage>()) {
  s_->data.assign(shape_size(shape), fill);
  s_->shape = std::move(shape);
  s_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values, bool requires_grad) {
  if (values.size() != shape_size(shape))
    throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " + shape_string(shape));
  Tensor t;
  t.s_ = std::make_shared<Storage>();
  t.s_->shape = std::move(shape);
  t.s_->data = std::move(values);
  t.s_->requires_grad = requires_grad;
  return t;
}

template <typename T>
std::span<T> Tensor<T>::grad() const {
  if (s_->grad.size() != s_->data.size()) s_->grad.assign(s_->data.size(), T(0));
  return s_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() const {
  if (s_) std::fill(s_->grad.begin(), s_->grad.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  Tensor t;
  if (!s_) return t;
  t.s_ = std::make_shared<Storage>(*s_);
  return t;
}

template <typename T>
void Tape<T>::backward(Tensor<T>& output) {
  if (output.size() != 1) throw ShapeError("backward() without a seed needs a single-element output");
  const T one(1);
  backward(output, std::span<const T>(&one, 1));
}

template <typename T>
void Tape<T>::backward(Tensor<T>& output, std::span<const T> seed) {
  if (seed.size() != output.size()) throw ShapeError("backward seed length mismatch");
  auto g = output.grad();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];
  replay();
}

template <typename T>
void Tape<T>::replay() {
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
  records_.clear();
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace cpcnn
