#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "adcorda/binary_io.hpp"
#include "adcorda/error.hpp"
#include "adcorda/mlp.hpp"

namespace adcorda {

// Checkpoint layout (little-endian):
//   "ADCD" | u32 version=1 | u32 tensor count |
//   per tensor: u16 name length, UTF-8 name, u8 rank, rank x u32 dims, f32 data
// Besides fc<l>.weight / fc<l>.bias the file carries metadata tensors:
//   meta.layer_sizes  [L+1]  input, hidden..., classes
//   meta.seed         [4]    init seed as four 16-bit chunks, low first
//   meta.epochs_run   [1]
//   meta.best_valid_accuracy [1]
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  std::size_t epochs_run = 0;
  float best_valid_accuracy = 0.0f;
};

struct Checkpoint {
  Model model;
  CheckpointMeta meta;
};

namespace detail {

inline void write_tensor(io::Writer& w, const std::string& name, const Tensor& t) {
  if (name.size() > 0xffff) throw InputError("tensor name too long: " + name);
  w.u16(static_cast<std::uint16_t>(name.size()));
  w.bytes(name);
  w.u8(static_cast<std::uint8_t>(t.rank()));
  for (auto d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
  for (float v : t.data()) w.f32(v);
}

inline std::pair<std::string, Tensor> read_tensor(io::Reader& r) {
  const auto len = r.u16();
  std::string name = r.bytes(len);
  const auto rank = r.u8();
  if (rank == 0) throw FormatError(FormatError::Kind::kHeader, "tensor '" + name + "' has rank 0");
  Shape shape(rank);
  for (auto& d : shape) {
    d = r.u32();
    if (d == 0) throw FormatError(FormatError::Kind::kHeader, "tensor '" + name + "' has a zero dimension");
  }
  const std::size_t n = shape_numel(shape);
  if (n > r.remaining() / 4) throw FormatError(FormatError::Kind::kTruncated, "tensor '" + name + "' data truncated");
  std::vector<float> data(n);
  for (auto& v : data) v = r.f32();
  return {std::move(name), Tensor(std::move(shape), std::move(data))};
}

}  // namespace detail

inline void encode_checkpoint(io::Writer& w, const Model& model, const CheckpointMeta& meta = {}) {
  const auto named = model.named_parameters();
  w.tag("ADCD");
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(named.size() + 4));
  const auto sizes = model.spec().layer_sizes();
  std::vector<float> sizes_f(sizes.begin(), sizes.end());
  detail::write_tensor(w, "meta.layer_sizes", Tensor(Shape{sizes_f.size()}, sizes_f));
  std::vector<float> seed_chunks(4);
  for (int i = 0; i < 4; ++i) seed_chunks[static_cast<std::size_t>(i)] = static_cast<float>((model.spec().seed >> (16 * i)) & 0xffff);
  detail::write_tensor(w, "meta.seed", Tensor(Shape{4}, seed_chunks));
  detail::write_tensor(w, "meta.epochs_run", Tensor::scalar(static_cast<float>(meta.epochs_run)));
  detail::write_tensor(w, "meta.best_valid_accuracy", Tensor::scalar(meta.best_valid_accuracy));
  for (const auto& [name, t] : named) detail::write_tensor(w, name, *t);
}

inline Checkpoint decode_checkpoint(io::Reader& r) {
  if (!r.peek_tag("ADCD")) {
    if (r.remaining() < 4) throw FormatError(FormatError::Kind::kTruncated, "checkpoint shorter than its magic");
    throw FormatError(FormatError::Kind::kBadMagic, "checkpoint magic is not ADCD");
  }
  r.bytes(4);
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError(FormatError::Kind::kVersion, "unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = r.u32();
  std::map<std::string, Tensor> tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    auto [name, t] = detail::read_tensor(r);
    if (!tensors.emplace(name, std::move(t)).second) {
      throw FormatError(FormatError::Kind::kHeader, "duplicate tensor '" + name + "' in checkpoint");
    }
  }
  auto take = [&](const std::string& name) -> Tensor& {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw FormatError(FormatError::Kind::kHeader, "checkpoint lacks tensor '" + name + "'");
    return it->second;
  };
  const Tensor& sizes_t = take("meta.layer_sizes");
  if (sizes_t.size() < 2) throw FormatError(FormatError::Kind::kHeader, "checkpoint layer_sizes too short");
  MlpSpec spec;
  spec.input_dim = static_cast<std::size_t>(sizes_t[0]);
  spec.hidden_dims.clear();
  for (std::size_t i = 1; i + 1 < sizes_t.size(); ++i) spec.hidden_dims.push_back(static_cast<std::size_t>(sizes_t[i]));
  spec.num_classes = static_cast<std::size_t>(sizes_t[sizes_t.size() - 1]);
  const Tensor& seed_t = take("meta.seed");
  if (seed_t.size() != 4) throw FormatError(FormatError::Kind::kHeader, "checkpoint seed must have four chunks");
  spec.seed = 0;
  for (int i = 0; i < 4; ++i) spec.seed |= static_cast<std::uint64_t>(seed_t[static_cast<std::size_t>(i)]) << (16 * i);

  std::vector<Model::Layer> layers;
  for (std::size_t l = 0; l + 1 < sizes_t.size(); ++l) {
    const std::string base = "fc" + std::to_string(l);
    layers.push_back({take(base + ".weight"), take(base + ".bias")});
  }
  CheckpointMeta meta;
  meta.epochs_run = static_cast<std::size_t>(take("meta.epochs_run")[0]);
  meta.best_valid_accuracy = take("meta.best_valid_accuracy")[0];
  try {
    return Checkpoint{Model(spec, std::move(layers)), meta};
  } catch (const Error& e) {
    throw FormatError(FormatError::Kind::kHeader, std::string("inconsistent checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const Model& model, const std::string& path, const CheckpointMeta& meta = {}) {
  io::Writer w;
  encode_checkpoint(w, model, meta);
  w.save(path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  io::Reader r(io::read_file(path), "checkpoint '" + path + "'");
  auto ckpt = decode_checkpoint(r);
  if (!r.at_end()) throw FormatError(FormatError::Kind::kHeader, "checkpoint '" + path + "' has trailing bytes");
  return ckpt;
}

}  // namespace adcorda
