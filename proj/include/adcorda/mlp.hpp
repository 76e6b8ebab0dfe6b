#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "adcorda/classifier.hpp"
#include "adcorda/error.hpp"
#include "adcorda/rng.hpp"
#include "adcorda/tape.hpp"
#include "adcorda/tensor.hpp"

namespace adcorda {

struct MlpSpec {
  std::size_t input_dim = 64;
  std::vector<std::size_t> hidden_dims{128, 64};
  std::size_t num_classes = 10;
  std::uint64_t seed = 1;

  void validate() const {
    if (input_dim == 0) throw InputError("mlp input_dim must be positive");
    for (auto h : hidden_dims)
      if (h == 0) throw InputError("mlp hidden layer width must be positive");
    if (num_classes < 2) throw InputError("mlp needs at least two classes");
  }

  // input_dim, hidden..., num_classes
  std::vector<std::size_t> layer_sizes() const {
    std::vector<std::size_t> s{input_dim};
    s.insert(s.end(), hidden_dims.begin(), hidden_dims.end());
    s.push_back(num_classes);
    return s;
  }

  std::string name() const {
    std::string n = "mlp";
    for (auto s : layer_sizes()) n += "-" + std::to_string(s);
    return n;
  }
};

/// Fully connected ReLU network producing logits. Layer l computes
/// x * W_l + b_l with W_l stored [in x out]; every layer but the last is
/// followed by a ReLU.
template <typename Scalar>
class Mlp {
 public:
  using TensorT = BasicTensor<Scalar>;

  struct Layer {
    TensorT weight;  // [in x out]
    TensorT bias;    // [out]
  };

  // All-zero parameters.
  explicit Mlp(MlpSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    const auto sizes = spec_.layer_sizes();
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      layers_.push_back(Layer{TensorT(Shape{sizes[l], sizes[l + 1]}), TensorT(Shape{sizes[l + 1]})});
    }
  }

  Mlp(MlpSpec spec, std::vector<Layer> layers) : spec_(std::move(spec)), layers_(std::move(layers)) {
    spec_.validate();
    const auto sizes = spec_.layer_sizes();
    if (layers_.size() + 1 != sizes.size()) throw ShapeError("mlp layer count does not match its spec");
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      if (layers_[l].weight.shape() != Shape{sizes[l], sizes[l + 1]} || layers_[l].bias.size() != sizes[l + 1]) {
        throw ShapeError("mlp layer " + std::to_string(l) + " has shape " + shape_string(layers_[l].weight.shape()) +
                         ", expected [" + std::to_string(sizes[l]) + "x" + std::to_string(sizes[l + 1]) + "]");
      }
    }
  }

  const MlpSpec& spec() const noexcept { return spec_; }
  std::size_t input_dim() const noexcept { return spec_.input_dim; }
  std::size_t num_classes() const noexcept { return spec_.num_classes; }
  std::size_t num_layers() const noexcept { return layers_.size(); }
  std::vector<Layer>& layers() noexcept { return layers_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }

  // Weight and bias of every layer, in order: fc0.weight, fc0.bias, ...
  std::vector<TensorT*> parameters() {
    std::vector<TensorT*> out;
    for (auto& l : layers_) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
    return out;
  }

  std::vector<std::pair<std::string, const TensorT*>> named_parameters() const {
    std::vector<std::pair<std::string, const TensorT*>> out;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      out.emplace_back("fc" + std::to_string(l) + ".weight", &layers_[l].weight);
      out.emplace_back("fc" + std::to_string(l) + ".bias", &layers_[l].bias);
    }
    return out;
  }

  void set_requires_grad(bool on) {
    for (auto* p : parameters()) p->set_requires_grad(on);
  }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }

  /// Plain (untaped) forward pass. Row results are independent of batch size
  /// and bit-identical to the taped path.
  TensorT batch_logits(const TensorT& batch) const {
    check_batch(batch);
    TensorT x = batch;
    for (std::size_t l = 0; l < layers_.size(); ++l) x = apply_layer(l, x);
    return x;
  }

  // Input followed by the output of every layer (post-ReLU for hidden layers).
  std::vector<TensorT> activations(const TensorT& batch) const {
    check_batch(batch);
    std::vector<TensorT> sites{batch};
    for (std::size_t l = 0; l < layers_.size(); ++l) sites.push_back(apply_layer(l, sites.back()));
    return sites;
  }

  std::vector<Scalar> predict_logits(std::span<const Scalar> x) const {
    TensorT b(Shape{1, x.size()}, std::vector<Scalar>(x.begin(), x.end()));
    return batch_logits(b).storage();
  }

  /// Taped forward with the parameters registered as leaves, so backward()
  /// accumulates into their grad buffers (requires_grad must be set).
  Var forward_trainable(Tape<Scalar>& tape, Var input) {
    check_batch(tape.value(input));
    Var x = input;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const Var w = tape.leaf(layers_[l].weight);
      const Var b = tape.leaf(layers_[l].bias);
      x = tape.add_bias(tape.matmul(x, w), b);
      if (l + 1 < layers_.size()) x = tape.relu(x);
    }
    return x;
  }

  /// Taped forward with the parameters as constants (input gradients only).
  Var forward(Tape<Scalar>& tape, Var input) const {
    check_batch(tape.value(input));
    Var x = input;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const Var w = tape.constant_ref(layers_[l].weight);
      const Var b = tape.constant_ref(layers_[l].bias);
      x = tape.add_bias(tape.matmul(x, w), b);
      if (l + 1 < layers_.size()) x = tape.relu(x);
    }
    return x;
  }

  /// Cross-entropy of a single input against `label` and its input gradient.
  InputGradient input_gradient(std::span<const float> x, int label) const
    requires std::same_as<Scalar, float>
  {
    Tape<Scalar> tape;
    const Var in = tape.variable(TensorT(Shape{1, x.size()}, std::vector<Scalar>(x.begin(), x.end())));
    const Var logits = forward(tape, in);
    const int labels[1] = {label};
    const Var loss = tape.softmax_cross_entropy(logits, labels);
    tape.backward(loss);
    const auto g = tape.grad(in);
    return InputGradient{tape.value(loss)[0], std::vector<float>(g.begin(), g.end())};
  }

  template <typename Other>
  Mlp<Other> cast() const {
    std::vector<typename Mlp<Other>::Layer> out;
    for (const auto& l : layers_) {
      out.push_back({BasicTensor<Other>(l.weight.shape(), std::vector<Other>(l.weight.storage().begin(), l.weight.storage().end())),
                     BasicTensor<Other>(l.bias.shape(), std::vector<Other>(l.bias.storage().begin(), l.bias.storage().end()))});
    }
    return Mlp<Other>(spec_, std::move(out));
  }

  // Parameter values only.
  friend bool operator==(const Mlp& a, const Mlp& b) {
    if (a.layers_.size() != b.layers_.size()) return false;
    for (std::size_t l = 0; l < a.layers_.size(); ++l) {
      if (!(a.layers_[l].weight == b.layers_[l].weight) || !(a.layers_[l].bias == b.layers_[l].bias)) return false;
    }
    return true;
  }

 private:
  void check_batch(const TensorT& batch) const {
    if (batch.rank() != 2 || batch.cols() != spec_.input_dim) {
      throw ShapeError("mlp expects [B x " + std::to_string(spec_.input_dim) + "] input, got " +
                       shape_string(batch.shape()));
    }
  }

  // Same arithmetic, in the same order, as matmul -> add_bias -> relu on a tape.
  TensorT apply_layer(std::size_t l, const TensorT& x) const {
    const auto& layer = layers_[l];
    const std::size_t m = x.rows(), k = x.cols(), n = layer.weight.cols();
    TensorT out(Shape{m, n});
    kernels::gemm<Scalar>(x.data(), layer.weight.data(), out.data(), m, k, n);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += layer.bias[j];
    if (l + 1 < layers_.size())
      for (auto& v : out.data()) v = v > Scalar(0) ? v : Scalar(0);
    return out;
  }

  MlpSpec spec_;
  std::vector<Layer> layers_;
};

using Model = Mlp<float>;

/// He-normal weights (std = sqrt(2 / fan_in)) from MlpSpec::seed; zero biases.
template <typename Scalar = float>
Mlp<Scalar> init_mlp(const MlpSpec& spec) {
  Mlp<Scalar> model(spec);
  auto rng = make_rng(spec.seed, stream::kInit);
  for (auto& layer : model.layers()) {
    const auto fan_in = static_cast<double>(layer.weight.rows());
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    for (auto& w : layer.weight.data()) w = static_cast<Scalar>(dist(rng));
  }
  return model;
}

inline Tensor forward_logits(const Model& model, const Tensor& batch) { return model.batch_logits(batch); }

}  // namespace adcorda
