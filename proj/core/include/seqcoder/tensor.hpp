// SPDX-License-Identifier: Apache-2.0
//
// Dense rank-2 tensors and the reverse-mode differentiation tape.
//
// A Tensor is a cheap handle onto shared storage. Parameters are leaves
// created with requires_grad; every operation on a tracked input appends one
// entry to the calling thread's Tape and returns a tracked output. backward()
// walks the tape in reverse, accumulates gradients into the leaves and then
// clears the tape, so one tape spans exactly one forward/backward pass.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace seqcoder {

struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return rows * cols; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

/// 64-byte aligned storage. Vectorized kernels then take the same code path
/// for every buffer, which keeps results bit-reproducible across runs.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

struct TensorNode {
  Shape shape;
  Buffer value;
  Buffer grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
  std::uint64_t tape_id = 0;  // 0 for leaves; the producing tape otherwise

  void accumulate(std::size_t i, double g) {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    grad[i] += g;
  }
  double* grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad.data();
  }
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  /// A 1×n row vector.
  static Tensor row(std::vector<double> values, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rows() const { return node_->shape.rows; }
  std::size_t cols() const { return node_->shape.cols; }
  std::size_t size() const { return node_->value.size(); }

  std::span<const double> values() const { return node_->value; }
  std::span<double> mutable_values() { return node_->value; }
  double operator()(std::size_t r, std::size_t c) const {
    return node_->value[r * node_->shape.cols + c];
  }
  /// Value of a 1×1 tensor.
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  /// Gradient buffer; zeros when nothing has been accumulated yet.
  std::vector<double> grad() const;
  std::span<const double> grad_view() const { return node_->grad; }
  std::span<double> mutable_grad() { return {node_->grad_buffer(), node_->value.size()}; }
  void zero_grad() { node_->grad.clear(); }

  std::uint64_t tape_id() const { return node_->tape_id; }
  bool is_leaf() const { return node_->tape_id == 0; }

  /// Deep copy of the values as an untracked leaf.
  Tensor detach() const;
  /// Deep copy including the requires_grad flag (gradient not copied).
  Tensor clone() const;

  bool all_finite() const;

  const std::shared_ptr<TensorNode>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}
  friend Tensor make_result(Shape, Buffer, bool tracked);

  std::shared_ptr<TensorNode> node_;
};

/// Per-thread record of operations since the last backward().
class Tape {
 public:
  using NodePtr = std::shared_ptr<TensorNode>;

  struct Entry {
    std::vector<NodePtr> inputs;
    NodePtr output;
    std::function<void()> backward;
  };

  /// The tape of the calling thread.
  static Tape& current();

  std::uint64_t id() const { return id_; }
  std::size_t size() const { return entries_.size(); }
  bool recording() const { return enabled_; }

  void record(std::vector<NodePtr> inputs, NodePtr output, std::function<void()> backward);

  /// Reverse traversal from a 1×1 loss produced on this tape.
  void backward(const Tensor& loss);

  /// Drops all entries and starts a new tape id.
  void clear();

  const std::vector<Entry>& entries() const { return entries_; }

 private:
  friend class NoGradGuard;
  Tape();

  std::uint64_t id_;
  bool enabled_ = true;
  std::vector<Entry> entries_;
};

/// Disables recording on the calling thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Runs backward on the current thread's tape.
void backward(const Tensor& loss);

/// Creates an op output; tracked outputs are stamped with the current tape id.
Tensor make_result(Shape shape, Buffer values, bool tracked);

/// True when an operation on these inputs must be recorded.
bool needs_tape(std::initializer_list<const Tensor*> inputs);

}  // namespace seqcoder
