#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "aceseg/error.hpp"

namespace aceseg {

/// NCHW extent. Every tensor in the library is rank 4; per-channel vectors
/// use 1xCx1x1 and scalars 1x1x1x1.
struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  constexpr std::size_t numel() const noexcept {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) *
           static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }
  constexpr std::size_t plane() const noexcept {
    return static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }
  constexpr bool is_scalar() const noexcept {
    return n == 1 && c == 1 && h == 1 && w == 1;
  }
  constexpr bool valid() const noexcept { return n > 0 && c > 0 && h > 0 && w > 0; }
  friend constexpr bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& s);
std::ostream& operator<<(std::ostream& os, const Shape& s);

template <typename T>
class Tape;

namespace detail {

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool leaf = true;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }
};

}  // namespace detail

/// Shared handle to a dense NCHW buffer with an optional gradient.
///
/// Copies alias the same storage. Values produced by operators are treated
/// as immutable; only leaves (parameters, inputs) are written in place, and
/// only by their single owner.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return full(shape, T(0), requires_grad);
  }
  static Tensor full(Shape shape, T value, bool requires_grad = false) {
    check_shape(shape);
    auto node = std::make_shared<detail::TensorNode<T>>();
    node->shape = shape;
    node->data.assign(shape.numel(), value);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }
  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false) {
    check_shape(shape);
    if (values.size() != shape.numel())
      throw ShapeError("tensor data length " + std::to_string(values.size()) +
                       " does not match shape " + to_string(shape));
    auto node = std::make_shared<detail::TensorNode<T>>();
    node->shape = shape;
    node->data = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }
  static Tensor scalar(T value, bool requires_grad = false) {
    return full(Shape{}, value, requires_grad);
  }

  bool defined() const noexcept { return node_ != nullptr; }
  explicit operator bool() const noexcept { return defined(); }

  const Shape& shape() const { return node_->shape; }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const T> data() const { return node_->data; }
  /// In-place access; reserved for leaves (initialisation, optimiser).
  std::span<T> mutable_data() { return node_->data; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }
  bool is_leaf() const { return node_->leaf; }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  // Gradient storage belongs to the graph, not the value, so const handles may write it.
  std::span<T> mutable_grad() const {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
  }
  void release_grad() { node_->grad.clear(); node_->grad.shrink_to_fit(); }

  T item() const {
    if (!shape().is_scalar()) throw ContractViolation("item() on non-scalar tensor " + to_string(shape()));
    return node_->data[0];
  }

  std::size_t offset(int n, int c, int h, int w) const {
    const Shape& s = shape();
    return ((static_cast<std::size_t>(n) * s.c + c) * s.h + h) * s.w + w;
  }
  T at(int n, int c, int h, int w) const { return node_->data[offset(n, c, h, w)]; }

  /// Deep copy of values into a fresh leaf.
  Tensor clone(bool requires_grad = false) const {
    return from(shape(), node_->data, requires_grad);
  }

  bool same_node(const Tensor& other) const noexcept { return node_ == other.node_; }

 private:
  friend class Tape<T>;
  explicit Tensor(std::shared_ptr<detail::TensorNode<T>> node) : node_(std::move(node)) {}

  static void check_shape(const Shape& s) {
    if (!s.valid()) throw ShapeError("non-positive tensor extent " + to_string(s));
  }

  std::shared_ptr<detail::TensorNode<T>> node_;
};

/// Converts between element precisions (used to lift float models into the
/// double-precision gradient checker).
template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& t, bool requires_grad = false) {
  std::vector<To> v(t.data().begin(), t.data().end());
  return Tensor<To>::from(t.shape(), std::move(v), requires_grad);
}

}  // namespace aceseg
