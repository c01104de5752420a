#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace cpcnn {

using Shape = std::vector<int>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major tensor with an optional gradient buffer.
///
/// Tensor is a handle: copies share storage, so a parameter stored in a
/// model and the same parameter captured by a tape refer to one buffer.
/// Use clone() for a deep copy.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0), bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false);

  bool defined() const noexcept { return static_cast<bool>(s_); }
  const Shape& shape() const { return s_->shape; }
  int dim(std::size_t axis) const { return s_->shape.at(axis); }
  std::size_t rank() const { return s_->shape.size(); }
  std::size_t size() const { return s_->data.size(); }

  std::span<T> data() { return s_->data; }
  std::span<const T> data() const { return s_->data; }
  T* ptr() { return s_->data.data(); }
  const T* ptr() const { return s_->data.data(); }
  T& operator[](std::size_t i) { return s_->data[i]; }
  const T& operator[](std::size_t i) const { return s_->data[i]; }

  bool requires_grad() const noexcept { return s_ && s_->requires_grad; }
  void set_requires_grad(bool v) const { s_->requires_grad = v; }

  /// Gradient buffer, allocated (zero-filled) on first access. Const
  /// because it touches shared storage, not the handle.
  std::span<T> grad() const;
  bool has_grad() const noexcept { return s_ && !s_->grad.empty(); }
  void zero_grad() const;

  Tensor clone() const;
  bool shares_storage(const Tensor& other) const noexcept { return s_ == other.s_; }

 private:
  struct Storage {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Storage> s_;
};

/// Records backward closures in execution order; backward() replays them
/// in exact reverse order.
template <typename T>
class Tape {
 public:
  void record(std::function<void()> backward_fn) { records_.push_back(std::move(backward_fn)); }
  std::size_t size() const noexcept { return records_.size(); }

  /// Seeds the gradient of a single-element `output` with 1 and replays.
  void backward(Tensor<T>& output);
  /// Seeds the gradient of `output` with `seed` (same length) and replays.
  void backward(Tensor<T>& output, std::span<const T> seed);

 private:
  void replay();
  std::vector<std::function<void()>> records_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace cpcnn
