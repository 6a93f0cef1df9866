// SPDX-License-Identifier: Apache-2.0
#include "seqcoder/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

#include "seqcoder/errors.hpp"
#include "seqcoder/rng.hpp"

namespace seqcoder {

namespace {
std::atomic<std::uint64_t> next_tape_id{1};
}  // namespace

std::string Shape::str() const {
  return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(shape, 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  return from(shape, std::vector<double>(shape.size(), v), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (values.size() != shape.size()) {
    throw DimensionError("tensor values length " + std::to_string(values.size()) +
                         " does not match shape " + shape.str());
  }
  auto node = std::make_shared<TensorNode>();
  node->shape = shape;
  node->value.assign(values.begin(), values.end());
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from({1, 1}, {v}, requires_grad);
}

Tensor Tensor::row(std::vector<double> values, bool requires_grad) {
  const std::size_t n = values.size();
  return from({1, n}, std::move(values), requires_grad);
}

double Tensor::item() const {
  if (node_->shape.size() != 1) {
    throw ContractError("item() on non-scalar tensor " + node_->shape.str());
  }
  return node_->value[0];
}

std::vector<double> Tensor::grad() const {
  if (node_->grad.empty()) return std::vector<double>(node_->value.size(), 0.0);
  return {node_->grad.begin(), node_->grad.end()};
}

Tensor Tensor::detach() const { return make_result(node_->shape, node_->value, false); }

Tensor Tensor::clone() const {
  Tensor out = make_result(node_->shape, node_->value, false);
  out.node_->requires_grad = node_->requires_grad;
  return out;
}

bool Tensor::all_finite() const {
  for (double v : node_->value) {
    if (!std::isfinite(v)) return false;
  }
  for (double g : node_->grad) {
    if (!std::isfinite(g)) return false;
  }
  return true;
}

Tape::Tape() : id_(next_tape_id.fetch_add(1)) {}

Tape& Tape::current() {
  thread_local Tape tape;
  return tape;
}

void Tape::record(std::vector<NodePtr> inputs, NodePtr output, std::function<void()> backward) {
  entries_.push_back({std::move(inputs), std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.shape().size() != 1) {
    throw ContractError("backward() needs a scalar loss, got " +
                        (loss.defined() ? loss.shape().str() : std::string("undefined")));
  }
  if (!std::isfinite(loss.item())) {
    clear();
    throw NumericError("loss is not finite");
  }
  if (loss.is_leaf()) {
    // A bare leaf: d loss / d loss = 1.
    if (loss.requires_grad()) loss.node()->accumulate(0, 1.0);
    clear();
    return;
  }
  if (loss.tape_id() != id_) {
    throw ContractError("backward() on a tensor that is not on the live tape");
  }
  loss.node()->accumulate(0, 1.0);
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->output->grad.empty()) continue;
    it->backward();
  }
  clear();
}

void Tape::clear() {
  entries_.clear();
  entries_.shrink_to_fit();
  id_ = next_tape_id.fetch_add(1);
}

NoGradGuard::NoGradGuard() : previous_(Tape::current().enabled_) {
  Tape::current().enabled_ = false;
}

NoGradGuard::~NoGradGuard() { Tape::current().enabled_ = previous_; }

void backward(const Tensor& loss) { Tape::current().backward(loss); }

Tensor make_result(Shape shape, Buffer values, bool tracked) {
  auto node = std::make_shared<TensorNode>();
  node->shape = shape;
  node->value = std::move(values);
  node->requires_grad = tracked;
  node->tape_id = tracked ? Tape::current().id() : 0;
  return Tensor(std::move(node));
}

bool needs_tape(std::initializer_list<const Tensor*> inputs) {
  if (!Tape::current().recording()) return false;
  for (const Tensor* t : inputs) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

std::string serialize_rng(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

void deserialize_rng(const std::string& text, Rng& rng) {
  std::istringstream is(text);
  is >> rng;
  if (!is) throw FormatError("corrupt rng state");
}

}  // namespace seqcoder
