#pragma once

#include <concepts>
#include <cstddef>
#include <span>
#include <vector>

#include "adcorda/tensor.hpp"

namespace adcorda {

// Cross-entropy at one input and its gradient w.r.t. that input.
struct InputGradient {
  float loss = 0.0f;
  std::vector<float> grad;
};

// Anything that maps a [B x input_dim] batch to [B x num_classes] logits.
template <class C>
concept BatchClassifier = requires(const C& c, const Tensor& batch) {
  { c.input_dim() } -> std::convertible_to<std::size_t>;
  { c.num_classes() } -> std::convertible_to<std::size_t>;
  { c.batch_logits(batch) } -> std::same_as<Tensor>;
};

// A classifier that attacks can drive: single-sample logits plus the input
// gradient of the cross-entropy for a chosen label.
template <class C>
concept DifferentiableClassifier = BatchClassifier<C> && requires(const C& c, std::span<const float> x, int label) {
  { c.predict_logits(x) } -> std::same_as<std::vector<float>>;
  { c.input_gradient(x, label) } -> std::same_as<InputGradient>;
};

template <DifferentiableClassifier C>
int predict_label(const C& model, std::span<const float> x) {
  const auto logits = model.predict_logits(x);
  return static_cast<int>(kernels::argmax<float>(logits));
}

}  // namespace adcorda
