#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "adcorda/binary_io.hpp"
#include "adcorda/checkpoint.hpp"
#include "adcorda/classifier.hpp"
#include "adcorda/dataset.hpp"
#include "adcorda/error.hpp"
#include "adcorda/mlp.hpp"

namespace adcorda {

/// Affine mapping between floats in [min, max] and integers in [qmin, qmax].
struct QuantParams {
  float scale = 1.0f;
  std::int32_t zero_point = 0;
  std::int32_t qmin = -128;
  std::int32_t qmax = 127;
  float min = 0.0f;  // observed float range
  float max = 1.0f;

  friend bool operator==(const QuantParams&, const QuantParams&) = default;
};

struct BitWidth {
  std::int32_t qmin;
  std::int32_t qmax;
};

// Signed range of a bit width: [-2^(b-1), 2^(b-1) - 1].
inline BitWidth signed_range(int bits) {
  if (bits < 2 || bits > 16) throw InputError("bit width must lie in [2, 16]");
  return {-(1 << (bits - 1)), (1 << (bits - 1)) - 1};
}

// Round half to even, independent of the current floating-point rounding mode.
inline double round_half_even(double v) {
  const double f = std::floor(v);
  const double diff = v - f;
  if (diff < 0.5) return f;
  if (diff > 0.5) return f + 1.0;
  return std::fmod(f, 2.0) == 0.0 ? f : f + 1.0;
}

/// s = (max - min) / (qmax - qmin),
/// z = round((max * qmin - min * qmax) / (max - min)), clamped to [qmin, qmax].
inline QuantParams make_quant_params(float min, float max, std::int32_t qmin = -128, std::int32_t qmax = 127) {
  if (!(max > min) || !std::isfinite(min) || !std::isfinite(max)) {
    throw InputError("quantization range needs max > min, got [" + std::to_string(min) + ", " + std::to_string(max) + "]");
  }
  if (!(qmax > qmin)) throw InputError("quantization needs qmax > qmin");
  const double a = min, b = max;
  QuantParams p;
  p.scale = static_cast<float>((b - a) / (static_cast<double>(qmax) - qmin));
  const double z = round_half_even((b * qmin - a * qmax) / (b - a));
  p.zero_point = static_cast<std::int32_t>(std::clamp(z, static_cast<double>(qmin), static_cast<double>(qmax)));
  p.qmin = qmin;
  p.qmax = qmax;
  p.min = min;
  p.max = max;
  return p;
}

// Parameters for an observed range, widened to contain 0 so that the zero
// point lies inside [qmin, qmax] without clamping.
inline QuantParams params_for_range(float min, float max, BitWidth bits) {
  return make_quant_params(std::min(min, 0.0f), std::max(max, 0.0f), bits.qmin, bits.qmax);
}

// clamp(round(w / s + z), qmin, qmax)
inline std::int32_t quantize(float w, const QuantParams& p) {
  const double q = round_half_even(static_cast<double>(w) / p.scale + p.zero_point);
  return static_cast<std::int32_t>(std::clamp(q, static_cast<double>(p.qmin), static_cast<double>(p.qmax)));
}

// s * (q - z)
inline float dequantize(std::int32_t q, const QuantParams& p) {
  return p.scale * static_cast<float>(q - p.zero_point);
}

inline float fake_quantize(float w, const QuantParams& p) { return dequantize(quantize(w, p), p); }

inline std::vector<std::int32_t> quantize_tensor(std::span<const float> w, const QuantParams& p) {
  std::vector<std::int32_t> q(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) q[i] = quantize(w[i], p);
  return q;
}

inline std::vector<float> dequantize_tensor(std::span<const std::int32_t> q, const QuantParams& p) {
  std::vector<float> w(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) w[i] = dequantize(q[i], p);
  return w;
}

struct ActivationRange {
  float min = std::numeric_limits<float>::infinity();
  float max = -std::numeric_limits<float>::infinity();

  void observe(std::span<const float> v) {
    for (float x : v) {
      min = std::min(min, x);
      max = std::max(max, x);
    }
  }

  // Widened by 1e-6 when degenerate.
  ActivationRange finalized() const {
    ActivationRange r = *this;
    if (!(r.max > r.min)) r.max = r.min + 1e-6f;
    return r;
  }

  friend bool operator==(const ActivationRange&, const ActivationRange&) = default;
};

/// Min/max of every activation site (input, then each layer output) over
/// the calibration set, degenerate ranges widened by 1e-6.
inline std::vector<ActivationRange> calibrate(const Model& model, const LabeledDataset& calib, std::size_t chunk = 256) {
  if (calib.empty()) throw InputError("calibration set is empty");
  check_compatible(model.input_dim(), model.num_classes(), calib);
  std::vector<ActivationRange> ranges(model.num_layers() + 1);
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < calib.size(); start += chunk) {
    const std::size_t end = std::min(calib.size(), start + chunk);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const auto sites = model.activations(calib.batch(idx));
    for (std::size_t s = 0; s < sites.size(); ++s) ranges[s].observe(sites[s].data());
  }
  for (auto& r : ranges) r = r.finalized();
  return ranges;
}

struct QuantizedTensor {
  Shape shape;
  QuantParams params;
  std::vector<std::int32_t> values;

  friend bool operator==(const QuantizedTensor&, const QuantizedTensor&) = default;
};

inline QuantizedTensor quantize_weights(const Tensor& w, BitWidth bits) {
  float lo = std::numeric_limits<float>::infinity(), hi = -lo;
  for (float v : w.data()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (!(hi > lo)) hi = lo + 1e-6f;
  QuantizedTensor q{w.shape(), params_for_range(lo, hi, bits), {}};
  q.values = quantize_tensor(w.data(), q.params);
  return q;
}

/// Simulated integer inference: weights and biases are stored quantized,
/// and the input plus every layer output pass through quantize/dequantize
/// with calibrated per-site parameters. Arithmetic is float. Input
/// gradients come from the full-precision companion model.
class QuantizedModel {
 public:
  QuantizedModel(std::shared_ptr<const Model> companion, MlpSpec spec, std::vector<QuantizedTensor> weights,
                 std::vector<QuantParams> sites)
      : companion_(std::move(companion)), spec_(std::move(spec)), weights_(std::move(weights)), sites_(std::move(sites)) {
    spec_.validate();
    const auto sizes = spec_.layer_sizes();
    if (weights_.size() != 2 * (sizes.size() - 1)) throw ShapeError("quantized model needs a weight and bias per layer");
    std::vector<Model::Layer> layers;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      const auto& w = weights_[2 * l];
      const auto& b = weights_[2 * l + 1];
      layers.push_back({Tensor(w.shape, dequantize_tensor(w.values, w.params)), Tensor(b.shape, dequantize_tensor(b.values, b.params))});
    }
    dequantized_ = std::make_shared<const Model>(spec_, std::move(layers));
    if (companion_ && !(companion_->spec().layer_sizes() == sizes)) throw ShapeError("companion model does not match the quantized spec");
  }

  std::size_t input_dim() const noexcept { return spec_.input_dim; }
  std::size_t num_classes() const noexcept { return spec_.num_classes; }
  const MlpSpec& spec() const noexcept { return spec_; }
  const std::vector<QuantizedTensor>& weights() const noexcept { return weights_; }
  const std::vector<QuantParams>& sites() const noexcept { return sites_; }
  bool has_companion() const noexcept { return companion_ != nullptr; }

  const Model& companion() const {
    if (!companion_) throw ContractError("quantized model has no full-precision companion");
    return *companion_;
  }

  // Float model holding the dequantized weights.
  const Model& dequantized() const noexcept { return *dequantized_; }

  Tensor batch_logits(const Tensor& batch) const {
    const auto& layers = dequantized_->layers();
    if (sites_.size() != layers.size() + 1) throw ContractError("quantized model is not calibrated");
    if (batch.rank() != 2 || batch.cols() != spec_.input_dim) {
      throw ShapeError("quantized model expects [B x " + std::to_string(spec_.input_dim) + "] input, got " +
                       shape_string(batch.shape()));
    }
    Tensor x = batch;
    fake_quantize_inplace(x, sites_[0]);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::size_t m = x.rows(), k = x.cols(), n = layers[l].weight.cols();
      Tensor out(Shape{m, n});
      kernels::gemm<float>(x.data(), layers[l].weight.data(), out.data(), m, k, n);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] += layers[l].bias[j];
      if (l + 1 < layers.size())
        for (auto& v : out.data()) v = v > 0.0f ? v : 0.0f;
      fake_quantize_inplace(out, sites_[l + 1]);
      x = std::move(out);
    }
    return x;
  }

  std::vector<float> predict_logits(std::span<const float> x) const {
    return batch_logits(Tensor(Shape{1, x.size()}, std::vector<float>(x.begin(), x.end()))).storage();
  }

  // Full-precision proxy: loss and gradient of the companion.
  InputGradient input_gradient(std::span<const float> x, int label) const { return companion().input_gradient(x, label); }

  friend bool operator==(const QuantizedModel& a, const QuantizedModel& b) {
    return a.spec_.layer_sizes() == b.spec_.layer_sizes() && a.weights_ == b.weights_ && a.sites_ == b.sites_;
  }

 private:
  static void fake_quantize_inplace(Tensor& t, const QuantParams& p) {
    for (auto& v : t.data()) v = fake_quantize(v, p);
  }

  std::shared_ptr<const Model> companion_;
  MlpSpec spec_;
  std::vector<QuantizedTensor> weights_;  // fc0.weight, fc0.bias, ...
  std::vector<QuantParams> sites_;
  std::shared_ptr<const Model> dequantized_;
};

/// Per-tensor min/max quantization of every parameter plus calibrated
/// activation sites. The returned model keeps `model` as its companion.
inline QuantizedModel quantize_model(const Model& model, const LabeledDataset& calib, BitWidth bits = signed_range(8)) {
  std::vector<QuantizedTensor> weights;
  for (const auto& [name, t] : model.named_parameters()) weights.push_back(quantize_weights(*t, bits));
  std::vector<QuantParams> sites;
  for (const auto& r : calibrate(model, calib)) sites.push_back(params_for_range(r.min, r.max, bits));
  return QuantizedModel(std::make_shared<const Model>(model), model.spec(), std::move(weights), std::move(sites));
}

struct ProxyGradient {
  float loss = 0.0f;              // mean cross-entropy of the quantized forward pass
  Tensor input_grad;              // [B x d], from the companion
  std::vector<Tensor> param_grads;  // companion parameter order
};

/// Predictions and loss from the quantized path; input and parameter
/// gradients from the full-precision companion at its own parameters.
inline ProxyGradient fp_gradient_proxy(const QuantizedModel& qmodel, const Tensor& batch, std::span<const int> labels) {
  Model fp = qmodel.companion();
  ProxyGradient out;
  {
    const Tensor logits = qmodel.batch_logits(batch);
    Tape<float> tape;
    out.loss = tape.value(tape.softmax_cross_entropy(tape.constant_ref(logits), labels))[0];
  }
  fp.set_requires_grad(true);
  fp.zero_grad();
  Tape<float> tape;
  const Var x = tape.variable(batch);
  const Var loss = tape.softmax_cross_entropy(fp.forward_trainable(tape, x), labels);
  tape.backward(loss);
  const auto g = tape.grad(x);
  out.input_grad = Tensor(batch.shape(), std::vector<float>(g.begin(), g.end()));
  for (auto* p : fp.parameters()) {
    const auto pg = p->grad();
    out.param_grads.push_back(Tensor(p->shape(), std::vector<float>(pg.begin(), pg.end())));
  }
  return out;
}

// ---- QNT1 persistence -------------------------------------------------------
//
// An ADCD checkpoint of the companion, followed by
//   "QNT1" | u32 tensor count |
//   per tensor: u16 name length, name, u8 rank, rank x u32 dims,
//               f32 s, i32 z, i32 qmin, i32 qmax, f32 min, f32 max,
//               raw values (i8 when [qmin, qmax] fits in 8 bits, else i16 LE)
//   | u32 site count | per site: f32 s, i32 z, i32 qmin, i32 qmax, f32 min, f32 max

namespace detail {

inline void write_qparams(io::Writer& w, const QuantParams& p) {
  w.f32(p.scale);
  w.i32(p.zero_point);
  w.i32(p.qmin);
  w.i32(p.qmax);
  w.f32(p.min);
  w.f32(p.max);
}

inline QuantParams read_qparams(io::Reader& r) {
  QuantParams p;
  p.scale = r.f32();
  p.zero_point = r.i32();
  p.qmin = r.i32();
  p.qmax = r.i32();
  p.min = r.f32();
  p.max = r.f32();
  if (!(p.scale > 0.0f) || p.qmax <= p.qmin || p.qmin < -32768 || p.qmax > 32767 || p.zero_point < p.qmin ||
      p.zero_point > p.qmax) {
    throw FormatError(FormatError::Kind::kHeader, "invalid quantization parameters");
  }
  return p;
}

inline bool fits_int8(const QuantParams& p) { return p.qmin >= -128 && p.qmax <= 127; }

}  // namespace detail

inline void save_quantized(const QuantizedModel& q, const std::string& path) {
  io::Writer w;
  encode_checkpoint(w, q.companion());
  w.tag("QNT1");
  const auto names = q.companion().named_parameters();
  w.u32(static_cast<std::uint32_t>(q.weights().size()));
  for (std::size_t i = 0; i < q.weights().size(); ++i) {
    const auto& t = q.weights()[i];
    const auto& name = names[i].first;
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.bytes(name);
    w.u8(static_cast<std::uint8_t>(t.shape.size()));
    for (auto d : t.shape) w.u32(static_cast<std::uint32_t>(d));
    detail::write_qparams(w, t.params);
    const bool narrow = detail::fits_int8(t.params);
    for (auto v : t.values) {
      if (narrow) {
        w.i8(static_cast<std::int8_t>(v));
      } else {
        w.u16(static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
      }
    }
  }
  w.u32(static_cast<std::uint32_t>(q.sites().size()));
  for (const auto& p : q.sites()) detail::write_qparams(w, p);
  w.save(path);
}

inline QuantizedModel load_quantized(const std::string& path) {
  io::Reader r(io::read_file(path), "quantized checkpoint '" + path + "'");
  auto ckpt = decode_checkpoint(r);
  if (!r.peek_tag("QNT1")) throw FormatError(FormatError::Kind::kBadMagic, "missing QNT1 section in '" + path + "'");
  r.bytes(4);
  const auto count = r.u32();
  const auto names = ckpt.model.named_parameters();
  if (count != names.size()) throw FormatError(FormatError::Kind::kHeader, "QNT1 tensor count does not match the model");
  std::vector<QuantizedTensor> weights;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.bytes(r.u16());
    if (name != names[i].first) throw FormatError(FormatError::Kind::kHeader, "QNT1 tensor '" + name + "' out of order");
    QuantizedTensor t;
    t.shape.resize(r.u8());
    for (auto& d : t.shape) d = r.u32();
    if (t.shape != names[i].second->shape()) throw FormatError(FormatError::Kind::kHeader, "QNT1 tensor '" + name + "' has the wrong shape");
    t.params = detail::read_qparams(r);
    const bool narrow = detail::fits_int8(t.params);
    t.values.resize(shape_numel(t.shape));
    for (auto& v : t.values) {
      v = narrow ? r.i8() : static_cast<std::int16_t>(r.u16());
      if (v < t.params.qmin || v > t.params.qmax) throw FormatError(FormatError::Kind::kRange, "QNT1 value outside its range");
    }
    weights.push_back(std::move(t));
  }
  std::vector<QuantParams> sites(r.u32());
  for (auto& p : sites) p = detail::read_qparams(r);
  if (!r.at_end()) throw FormatError(FormatError::Kind::kHeader, "quantized checkpoint '" + path + "' has trailing bytes");
  auto spec = ckpt.model.spec();
  return QuantizedModel(std::make_shared<const Model>(std::move(ckpt.model)), std::move(spec), std::move(weights),
                        std::move(sites));
}

}  // namespace adcorda
