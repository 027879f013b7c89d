#pragma once

// Tape-free reverse-mode differentiation: every op returns a Var whose node
// remembers its parents and a closure that pushes the node's gradient back
// to them. `backward` walks the graph in reverse topological order.
//
// Only the operations the contour encoder and its objectives need are here.

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "dualglob/tensor.hpp"

namespace dualglob::nn {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // allocated on first accumulation
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  bool requires_grad = false;

  Tensor<T>& grad_buffer() {
    if (grad.size() != value.size()) grad = Tensor<T>(value.shape(), T(0));
    return grad;
  }
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Var parameter(Tensor<T> value) { return Var(std::move(value), true); }

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }

  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  // Gradient, or zeros when nothing has flowed into this node.
  Tensor<T> grad() const {
    return has_grad() ? node_->grad : Tensor<T>(node_->value.shape(), T(0));
  }
  void zero_grad() { node_->grad = Tensor<T>(); }

  T item() const;

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& ptr() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

// While alive on a thread, ops record no parents or closures.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

  static bool active();

 private:
  bool previous_;
};

// Builds an op node; the closure is dropped when no parent needs a gradient.
template <typename T>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> parents,
               std::function<void(Node<T>&)> backward_fn);

// Seeds d(loss)/d(loss) = 1 and accumulates into every reachable leaf that
// requires a gradient. Intermediate gradients are reset on each call, leaf
// gradients are not. Throws ContractError for a non-scalar loss.
template <typename T>
void backward(const Var<T>& loss);

// Per-row frame validity for a [batch, length] signal.
struct FrameMask {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<std::uint8_t> bits;

  FrameMask() = default;
  FrameMask(std::size_t b, std::size_t l, std::uint8_t fill = 1)
      : batch(b), length(l), bits(b * l, fill) {}
  std::uint8_t at(std::size_t b, std::size_t t) const { return bits[b * length + t]; }

  FrameMask downsample(std::size_t stride) const;
};

// x [B, Cin, L], w [Cout, Cin, K], b [Cout] -> [B, Cout, ceil(L / stride)]
template <typename T>
Var<T> conv1d(const Var<T>& x, const Var<T>& w, const Var<T>& b, std::size_t stride);

template <typename T>
Var<T> relu(const Var<T>& x);

// x [B, C, L] -> [B, C]; mean over valid frames, zeros for an empty row.
template <typename T>
Var<T> masked_gap(const Var<T>& x, const FrameMask& mask);

// x [B, In], w [Out, In], b [Out] -> [B, Out]
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b);

template <typename T>
Var<T> l2_normalize_rows(const Var<T>& x, double eps = 1e-12);

// Stacks along the leading dimension.
template <typename T>
Var<T> concat_rows(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> gather_rows(const Var<T>& x, std::span<const std::size_t> rows);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> scale(const Var<T>& x, double c);
template <typename T>
Var<T> sum(const Var<T>& x);

// Masked supervised-contrastive kernel shared by every loss in the zoo.
// anchors [M, d], candidates [N, d]; logits = anchors . candidates^T / tau.
// For anchor i with positive set P(i) and denominator set D(i):
//   term_i = -1/|P(i)| * sum_{j in P(i)} (l_ij - log sum_{k in D(i)} exp l_ik)
// The result is the mean of term_i over anchors with non-empty P(i), or 0
// when there are none. `positive` and `denominator` are row-major [M, N]
// and every positive must also be in the denominator.
template <typename T>
Var<T> supcon(const Var<T>& anchors, const Var<T>& candidates,
              std::span<const std::uint8_t> positive, std::span<const std::uint8_t> denominator,
              double tau);

}  // namespace dualglob::nn
