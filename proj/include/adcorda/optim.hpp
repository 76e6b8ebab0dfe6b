#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "adcorda/error.hpp"
#include "adcorda/tensor.hpp"

namespace adcorda {

/// SGD with heavy-ball momentum and L2 weight decay:
///   v <- momentum * v + grad + weight_decay * param
///   param <- param - lr * v
/// Velocity buffers are keyed by parameter position and start at zero.
template <typename Scalar>
class Sgd {
 public:
  Sgd(Scalar lr, Scalar momentum, Scalar weight_decay) : lr_(lr), momentum_(momentum), weight_decay_(weight_decay) {
    if (!(lr >= Scalar(0))) throw InputError("sgd learning rate must be non-negative");
  }

  void step(std::span<BasicTensor<Scalar>* const> params) {
    if (velocity_.empty()) {
      velocity_.resize(params.size());
      for (std::size_t i = 0; i < params.size(); ++i) velocity_[i].assign(params[i]->size(), Scalar(0));
    }
    if (velocity_.size() != params.size()) throw ContractError("sgd parameter set changed between steps");
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = *params[i];
      if (!p.has_grad()) throw ContractError("sgd step on parameter " + std::to_string(i) + " without a gradient");
      auto& v = velocity_[i];
      if (v.size() != p.size()) throw ContractError("sgd parameter " + std::to_string(i) + " changed size");
      auto data = p.data();
      auto grad = p.grad();
      for (std::size_t j = 0; j < v.size(); ++j) {
        v[j] = momentum_ * v[j] + grad[j] + weight_decay_ * data[j];
        data[j] -= lr_ * v[j];
      }
    }
  }

  const std::vector<std::vector<Scalar>>& velocity() const noexcept { return velocity_; }
  Scalar lr() const noexcept { return lr_; }

 private:
  Scalar lr_;
  Scalar momentum_;
  Scalar weight_decay_;
  std::vector<std::vector<Scalar>> velocity_;
};

}  // namespace adcorda
