#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <utility>
#include <vector>

#include "aceseg/tensor.hpp"

namespace aceseg {

/// Reverse-mode differentiation tape.
///
/// Operators allocate their result with make(), fill it, and call record()
/// with a closure that reads the output gradient and adds into the input
/// gradients. Entries are appended in execution order, so the vector is
/// already a topological order. A disabled tape records nothing (inference).
///
/// Single writer: a tape must not be mutated from two threads at once.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  explicit Tape(bool enabled = true) : enabled_(enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape() { clear(); }

  bool enabled() const noexcept { return enabled_; }
  std::size_t size() const noexcept { return entries_.size(); }

  /// Fresh non-leaf output. It requires grad iff recording is on and at
  /// least one input requires grad.
  Tensor<T> make(Shape shape, std::initializer_list<const Tensor<T>*> inputs) {
    bool rg = false;
    if (enabled_)
      for (const Tensor<T>* in : inputs)
        if (in != nullptr && in->defined() && in->requires_grad()) {
          rg = true;
          note_leaf(*in);
        }
    return make_with(shape, rg);
  }
  Tensor<T> make(Shape shape, const std::vector<Tensor<T>>& inputs) {
    bool rg = false;
    if (enabled_)
      for (const auto& in : inputs)
        if (in.defined() && in.requires_grad()) {
          rg = true;
          note_leaf(in);
        }
    return make_with(shape, rg);
  }

  /// Appends a node. No-op when the output does not require grad.
  void record(const Tensor<T>& output, BackwardFn fn) {
    if (!enabled_ || !output.requires_grad()) return;
    entries_.push_back(Entry{output.node_, std::move(fn)});
  }

  /// Populates ∂loss/∂leaf for every reachable leaf with requires_grad.
  /// Leaf gradients accumulate across calls; intermediate gradients are
  /// reset first so a repeated call adds exactly one more copy.
  void backward(const Tensor<T>& loss) {
    if (!loss.defined() || !loss.shape().is_scalar())
      throw ContractViolation("backward expects a 1x1x1x1 loss, got " +
                              (loss.defined() ? to_string(loss.shape()) : std::string("undefined")));
    std::size_t end = 0;
    for (std::size_t i = 0; i < entries_.size(); ++i)
      if (entries_[i].output == loss.node_) end = i + 1;
    if (end == 0) throw UnknownNodeError("loss tensor was not produced on this tape");

    for (auto& e : entries_) e.output->grad.clear();
    loss.node_->ensure_grad();
    loss.node_->grad[0] = T(1);

    // Leaves start this pass from zero and the previous total is added back
    // afterwards, so a repeated pass contributes a bit-identical copy.
    std::vector<std::vector<T>> prior(leaves_.size());
    for (std::size_t i = 0; i < leaves_.size(); ++i) prior[i] = std::exchange(leaves_[i]->grad, {});

    for (std::size_t i = end; i-- > 0;) {
      Entry& e = entries_[i];
      if (e.output->grad.empty()) continue;
      e.backward();
    }

    for (std::size_t i = 0; i < leaves_.size(); ++i) {
      auto& g = leaves_[i]->grad;
      if (prior[i].empty()) continue;
      if (g.empty()) {
        g = std::move(prior[i]);
      } else {
        for (std::size_t j = 0; j < g.size(); ++j) g[j] = prior[i][j] + g[j];
      }
    }
  }

  /// Drops every recorded node and releases intermediate gradients.
  void clear() {
    for (auto& e : entries_) {
      e.output->grad.clear();
      e.output->grad.shrink_to_fit();
    }
    entries_.clear();
    leaves_.clear();
  }

 private:
  struct Entry {
    std::shared_ptr<detail::TensorNode<T>> output;
    BackwardFn backward;
  };

  Tensor<T> make_with(Shape shape, bool requires_grad) {
    Tensor<T> t = Tensor<T>::zeros(shape, requires_grad);
    t.node_->leaf = false;
    return t;
  }

  void note_leaf(const Tensor<T>& t) {
    if (!t.node_->leaf) return;
    for (const auto& l : leaves_)
      if (l == t.node_) return;
    leaves_.push_back(t.node_);
  }

  bool enabled_;
  std::vector<Entry> entries_;
  std::vector<std::shared_ptr<detail::TensorNode<T>>> leaves_;
};

}  // namespace aceseg
