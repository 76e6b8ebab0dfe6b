#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "adcorda/error.hpp"
#include "adcorda/tensor.hpp"

namespace adcorda {

// Handle to a node recorded on a Tape.
struct Var {
  std::size_t index = 0;
};

/// Reverse-mode automatic differentiation over a linear record of ops.
///
/// A tape is built by one forward pass and consumed by exactly one call to
/// backward(); a second call throws ContractError. Callers rebuild the tape
/// for every forward pass. Nodes are appended in evaluation order, so the
/// record is always topologically sorted and backward() visits each node
/// once, in reverse.
///
/// Leaves come in three flavours:
///   - leaf(Tensor&)   : external parameter, referenced not copied; gradients
///                       accumulate into the tensor's own grad buffer when
///                       requires_grad() is set.
///   - constant_ref()  : external tensor, referenced, never differentiated.
///   - variable(Tensor): owned value whose gradient is read back via grad().
///   - constant(Tensor): owned value, never differentiated.
///
/// A tape is not thread-safe; use one tape per thread.
template <typename Scalar>
class Tape {
 public:
  using TensorT = BasicTensor<Scalar>;
  using BackwardFn = std::function<void(Tape&, std::span<const Scalar>)>;

  Var leaf(TensorT& t) {
    Node n;
    n.external = &t;
    n.leaf = &t;
    n.needs_grad = t.requires_grad();
    return push(std::move(n));
  }

  Var variable(TensorT t) {
    Node n;
    n.value = std::move(t);
    n.needs_grad = true;
    return push(std::move(n));
  }

  Var constant(TensorT t) {
    Node n;
    n.value = std::move(t);
    return push(std::move(n));
  }

  // Non-differentiable view of an external tensor; it must outlive the tape.
  Var constant_ref(const TensorT& t) {
    Node n;
    n.external = &t;
    return push(std::move(n));
  }

  /// Records an op whose value was computed by the caller. The backward
  /// function receives the upstream gradient of this node and must add its
  /// contribution to each differentiable input via grad_buffer().
  Var custom(TensorT value, std::vector<Var> inputs, BackwardFn backward) {
    Node n;
    n.value = std::move(value);
    for (auto v : inputs) {
      check(v);
      n.needs_grad = n.needs_grad || nodes_[v.index].needs_grad;
    }
    if (n.needs_grad) n.backward = std::move(backward);
    return push(std::move(n));
  }

  const TensorT& value(Var v) const {
    check(v);
    return nodes_[v.index].get();
  }

  bool needs_grad(Var v) const {
    check(v);
    return nodes_[v.index].needs_grad;
  }

  /// Gradient of the loss w.r.t. a node; valid after backward(). Nodes that
  /// do not require gradients report an empty span.
  std::span<const Scalar> grad(Var v) const {
    check(v);
    return nodes_[v.index].grad;
  }

  /// Mutable gradient accumulator for backward functions. Empty when the
  /// node does not require a gradient.
  std::span<Scalar> grad_buffer(Var v) {
    check(v);
    return nodes_[v.index].grad;
  }

  std::size_t size() const noexcept { return nodes_.size(); }
  bool consumed() const noexcept { return consumed_; }

  // ---- primitives -------------------------------------------------------

  Var matmul(Var a, Var b) {
    const auto& av = value(a);
    const auto& bv = value(b);
    if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows()) {
      throw ShapeError("matmul shape mismatch: " + shape_string(av.shape()) + " x " + shape_string(bv.shape()));
    }
    const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
    TensorT out(Shape{m, n});
    kernels::gemm<Scalar>(av.data(), bv.data(), out.data(), m, k, n);
    return custom(std::move(out), {a, b}, [a, b, m, k, n](Tape& t, std::span<const Scalar> g) {
      if (t.needs_grad(a)) kernels::gemm_grad_a<Scalar>(g, t.value(b).data(), t.grad_buffer(a), m, k, n);
      if (t.needs_grad(b)) kernels::gemm_grad_b<Scalar>(t.value(a).data(), g, t.grad_buffer(b), m, k, n);
    });
  }

  // x[m x n] + bias[n], the bias broadcast over rows.
  Var add_bias(Var x, Var bias) {
    const auto& xv = value(x);
    const auto& bv = value(bias);
    if (xv.rank() != 2 || bv.size() != xv.cols()) {
      throw ShapeError("add_bias shape mismatch: " + shape_string(xv.shape()) + " + " + shape_string(bv.shape()));
    }
    const std::size_t m = xv.rows(), n = xv.cols();
    TensorT out = xv;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
    return custom(std::move(out), {x, bias}, [x, bias, m, n](Tape& t, std::span<const Scalar> g) {
      if (t.needs_grad(x)) {
        auto gx = t.grad_buffer(x);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
      if (t.needs_grad(bias)) {
        auto gb = t.grad_buffer(bias);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
      }
    });
  }

  Var add(Var a, Var b) { return elementwise(a, b, "add", [](Scalar x, Scalar y) { return x + y; }, Scalar(1), Scalar(1)); }
  Var sub(Var a, Var b) { return elementwise(a, b, "sub", [](Scalar x, Scalar y) { return x - y; }, Scalar(1), Scalar(-1)); }

  Var mul(Var a, Var b) {
    same_shape(a, b, "mul");
    const auto& av = value(a);
    const auto& bv = value(b);
    TensorT out(av.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    return custom(std::move(out), {a, b}, [a, b](Tape& t, std::span<const Scalar> g) {
      if (t.needs_grad(a)) {
        auto ga = t.grad_buffer(a);
        const auto& bv = t.value(b);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
      }
      if (t.needs_grad(b)) {
        auto gb = t.grad_buffer(b);
        const auto& av = t.value(a);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
      }
    });
  }

  Var relu(Var x) {
    const auto& xv = value(x);
    TensorT out(xv.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > Scalar(0) ? xv[i] : Scalar(0);
    return custom(std::move(out), {x}, [x](Tape& t, std::span<const Scalar> g) {
      auto gx = t.grad_buffer(x);
      const auto& xv = t.value(x);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (xv[i] > Scalar(0)) gx[i] += g[i];
    });
  }

  Var scale(Var x, Scalar c) {
    TensorT out = value(x);
    for (auto& v : out.data()) v *= c;
    return custom(std::move(out), {x}, [x, c](Tape& t, std::span<const Scalar> g) {
      auto gx = t.grad_buffer(x);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += c * g[i];
    });
  }

  Var sum(Var x) {
    Scalar s = Scalar(0);
    for (auto v : value(x).data()) s += v;
    return custom(TensorT::scalar(s), {x}, [x](Tape& t, std::span<const Scalar> g) {
      for (auto& v : t.grad_buffer(x)) v += g[0];
    });
  }

  Var mean(Var x) {
    const auto n = static_cast<Scalar>(value(x).size());
    Scalar s = Scalar(0);
    for (auto v : value(x).data()) s += v;
    return custom(TensorT::scalar(s / n), {x}, [x, n](Tape& t, std::span<const Scalar> g) {
      for (auto& v : t.grad_buffer(x)) v += g[0] / n;
    });
  }

  /// Mean over the batch of -log softmax(logits)[label].
  Var softmax_cross_entropy(Var logits, std::span<const int> labels) {
    const auto& lv = value(logits);
    if (lv.rank() != 2) throw ShapeError("softmax_cross_entropy expects [B x K] logits, got " + shape_string(lv.shape()));
    const std::size_t batch = lv.rows(), classes = lv.cols();
    if (labels.size() != batch) {
      throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                       std::to_string(batch));
    }
    std::vector<Scalar> probs(lv.size());
    std::vector<int> targets(labels.begin(), labels.end());
    Scalar total = Scalar(0);
    for (std::size_t i = 0; i < batch; ++i) {
      const int y = labels[i];
      if (y < 0 || static_cast<std::size_t>(y) >= classes) {
        throw InputError("label " + std::to_string(y) + " out of range [0, " + std::to_string(classes) + ")");
      }
      auto row = lv.row(i);
      const Scalar lse = kernels::log_sum_exp(row);
      for (std::size_t j = 0; j < classes; ++j) probs[i * classes + j] = std::exp(row[j] - lse);
      total += lse - row[static_cast<std::size_t>(y)];
    }
    const Scalar inv_batch = Scalar(1) / static_cast<Scalar>(batch);
    return custom(TensorT::scalar(total * inv_batch), {logits},
                  [logits, probs = std::move(probs), targets = std::move(targets), classes, inv_batch](
                      Tape& t, std::span<const Scalar> g) {
                    auto gl = t.grad_buffer(logits);
                    for (std::size_t i = 0; i < targets.size(); ++i) {
                      for (std::size_t j = 0; j < classes; ++j) {
                        Scalar d = probs[i * classes + j];
                        if (static_cast<int>(j) == targets[i]) d -= Scalar(1);
                        gl[i * classes + j] += g[0] * d * inv_batch;
                      }
                    }
                  });
  }

  /// Populates gradients of a scalar loss. The tape is consumed afterwards.
  void backward(Var loss) {
    check(loss);
    if (consumed_) throw ContractError("backward called twice on the same tape; re-run the forward pass");
    if (nodes_[loss.index].get().size() != 1) {
      throw ContractError("backward requires a scalar loss, got shape " + shape_string(nodes_[loss.index].get().shape()));
    }
    consumed_ = true;
    for (std::size_t i = 0; i <= loss.index; ++i) {
      auto& n = nodes_[i];
      if (n.needs_grad) n.grad.assign(n.get().size(), Scalar(0));
    }
    if (!nodes_[loss.index].needs_grad) return;
    nodes_[loss.index].grad[0] = Scalar(1);
    for (std::size_t i = loss.index + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (!n.needs_grad) continue;
      if (n.backward) {
        // Copy: backward may touch other nodes' buffers but never this one.
        const std::vector<Scalar> g = n.grad;
        n.backward(*this, g);
      }
      if (n.leaf != nullptr) n.leaf->accumulate_grad(n.grad);
    }
  }

 private:
  struct Node {
    const TensorT& get() const { return external ? *external : value; }

    TensorT value;
    const TensorT* external = nullptr;
    std::vector<Scalar> grad;
    BackwardFn backward;
    TensorT* leaf = nullptr;
    bool needs_grad = false;
  };

  Var push(Node n) {
    if (consumed_) throw ContractError("tape already consumed by backward; start a new tape");
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  void check(Var v) const {
    if (v.index >= nodes_.size()) throw ContractError("Var does not belong to this tape");
  }

  void same_shape(Var a, Var b, const char* op) const {
    if (value(a).shape() != value(b).shape()) {
      throw ShapeError(std::string(op) + " shape mismatch: " + shape_string(value(a).shape()) + " vs " +
                       shape_string(value(b).shape()));
    }
  }

  template <typename F>
  Var elementwise(Var a, Var b, const char* op, F f, Scalar da, Scalar db) {
    same_shape(a, b, op);
    const auto& av = value(a);
    const auto& bv = value(b);
    TensorT out(av.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i], bv[i]);
    return custom(std::move(out), {a, b}, [a, b, da, db](Tape& t, std::span<const Scalar> g) {
      if (t.needs_grad(a)) {
        auto ga = t.grad_buffer(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += da * g[i];
      }
      if (t.needs_grad(b)) {
        auto gb = t.grad_buffer(b);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += db * g[i];
      }
    });
  }

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

}  // namespace adcorda
