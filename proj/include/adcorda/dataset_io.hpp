#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "adcorda/binary_io.hpp"
#include "adcorda/dataset.hpp"
#include "adcorda/text.hpp"

namespace adcorda {

// Binary dataset layout (little-endian):
//   "ADDS" | u32 version=1 | u32 N | u32 d | u32 K | N x (d x f32, u32 label)
inline constexpr std::uint32_t kDatasetVersion = 1;

inline io::Writer encode_dataset(const LabeledDataset& ds) {
  io::Writer w;
  w.tag("ADDS");
  w.u32(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(ds.size()));
  w.u32(static_cast<std::uint32_t>(ds.dim()));
  w.u32(static_cast<std::uint32_t>(ds.num_classes()));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (float v : ds.input(i)) w.f32(v);
    w.u32(static_cast<std::uint32_t>(ds.label(i)));
  }
  return w;
}

inline void save_dataset(const LabeledDataset& ds, const std::string& path) { encode_dataset(ds).save(path); }

inline void save_dataset_csv(const LabeledDataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::kIo, "cannot open '" + path + "' for writing");
  out << "label";
  for (std::size_t j = 0; j < ds.dim(); ++j) out << ",p" << j;
  out << '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out << ds.label(i);
    for (float v : ds.input(i)) out << ',' << text::to_text(v);
    out << '\n';
  }
  if (!out) throw FormatError(FormatError::Kind::kIo, "write to '" + path + "' failed");
}

namespace detail {

inline void check_pixel(float v, std::size_t sample) {
  if (!(v >= 0.0f && v <= 1.0f)) {
    throw FormatError(FormatError::Kind::kRange,
                      "sample " + std::to_string(sample) + " has pixel " + text::to_text(v) + " outside [0, 1]");
  }
}

inline void check_label(long long label, std::size_t k, std::size_t sample) {
  if (label < 0 || static_cast<unsigned long long>(label) >= k) {
    throw FormatError(FormatError::Kind::kLabel, "sample " + std::to_string(sample) + " has label " +
                                                     std::to_string(label) + " outside [0, " + std::to_string(k) + ")");
  }
}

inline LabeledDataset decode_binary_dataset(std::vector<std::uint8_t> bytes) {
  io::Reader r(std::move(bytes), "dataset");
  if (!r.peek_tag("ADDS")) throw FormatError(FormatError::Kind::kBadMagic, "dataset magic is not ADDS");
  r.bytes(4);
  const auto version = r.u32();
  if (version != kDatasetVersion) {
    throw FormatError(FormatError::Kind::kVersion, "unsupported dataset version " + std::to_string(version));
  }
  const std::size_t n = r.u32(), d = r.u32(), k = r.u32();
  if (d == 0 || k < 2) throw FormatError(FormatError::Kind::kHeader, "dataset header has d=0 or K<2");
  if (n > r.remaining() / 4 / (d + 1)) {
    throw FormatError(FormatError::Kind::kTruncated, "dataset declares " + std::to_string(n) + " records but is truncated");
  }
  std::vector<float> inputs;
  std::vector<int> labels;
  inputs.reserve(n * d);
  labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const float v = r.f32();
      check_pixel(v, i);
      inputs.push_back(v);
    }
    const auto label = r.u32();
    check_label(label, k, i);
    labels.push_back(static_cast<int>(label));
  }
  if (!r.at_end()) throw FormatError(FormatError::Kind::kHeader, "dataset has trailing bytes after the last record");
  return LabeledDataset(d, k, std::move(inputs), std::move(labels));
}

inline LabeledDataset decode_csv_dataset(const std::string& content, std::optional<std::size_t> num_classes) {
  std::istringstream in(content);
  std::string line;
  if (!std::getline(in, line)) throw FormatError(FormatError::Kind::kHeader, "CSV dataset is empty");
  const auto header = text::split(text::trim(line), ',');
  if (header.size() < 2 || header[0] != "label") {
    throw FormatError(FormatError::Kind::kHeader, "CSV header must start with 'label,p0'");
  }
  const std::size_t d = header.size() - 1;
  for (std::size_t j = 0; j < d; ++j) {
    if (header[j + 1] != "p" + std::to_string(j)) {
      throw FormatError(FormatError::Kind::kHeader, "CSV header column " + std::to_string(j + 1) + " must be p" +
                                                        std::to_string(j));
    }
  }
  std::vector<float> inputs;
  std::vector<long long> raw_labels;
  std::size_t sample = 0;
  while (std::getline(in, line)) {
    const auto t = text::trim(line);
    if (t.empty()) continue;
    const auto cells = text::split(t, ',');
    if (cells.size() != d + 1) {
      throw FormatError(FormatError::Kind::kHeader, "CSV row " + std::to_string(sample) + " has " +
                                                        std::to_string(cells.size()) + " fields, expected " +
                                                        std::to_string(d + 1));
    }
    const auto label = text::parse_number<long long>(text::trim(cells[0]));
    if (!label) throw FormatError(FormatError::Kind::kLabel, "CSV row " + std::to_string(sample) + " has a non-integer label");
    raw_labels.push_back(*label);
    for (std::size_t j = 0; j < d; ++j) {
      const auto v = text::parse_number<float>(text::trim(cells[j + 1]));
      if (!v) throw FormatError(FormatError::Kind::kRange, "CSV row " + std::to_string(sample) + " has a non-numeric pixel");
      check_pixel(*v, sample);
      inputs.push_back(*v);
    }
    ++sample;
  }
  std::size_t k = 2;
  if (num_classes) {
    k = *num_classes;
  } else {
    for (auto l : raw_labels)
      if (l >= 0) k = std::max<std::size_t>(k, static_cast<std::size_t>(l) + 1);
  }
  std::vector<int> labels;
  labels.reserve(raw_labels.size());
  for (std::size_t i = 0; i < raw_labels.size(); ++i) {
    check_label(raw_labels[i], k, i);
    labels.push_back(static_cast<int>(raw_labels[i]));
  }
  return LabeledDataset(d, k, std::move(inputs), std::move(labels));
}

}  // namespace detail

/// Loads a binary (ADDS) or CSV dataset, detected from the leading bytes.
/// For CSV input the class count is `num_classes` when given, otherwise
/// max(label) + 1 (at least 2). For binary input a given `num_classes` must
/// match the header.
inline LabeledDataset load_dataset(const std::string& path, std::optional<std::size_t> num_classes = std::nullopt) {
  auto bytes = io::read_file(path);
  if (bytes.empty()) throw FormatError(FormatError::Kind::kHeader, "dataset file '" + path + "' is empty");
  const std::string_view head(reinterpret_cast<const char*>(bytes.data()), std::min<std::size_t>(bytes.size(), 5));
  if (head.starts_with("label")) {
    return detail::decode_csv_dataset(std::string(bytes.begin(), bytes.end()), num_classes);
  }
  if (bytes.size() < 4 || !head.starts_with("ADDS")) {
    throw FormatError(FormatError::Kind::kBadMagic, "'" + path + "' is neither an ADDS dataset nor a CSV dataset");
  }
  auto ds = detail::decode_binary_dataset(std::move(bytes));
  if (num_classes && *num_classes != ds.num_classes()) {
    throw FormatError(FormatError::Kind::kHeader, "dataset declares " + std::to_string(ds.num_classes()) +
                                                      " classes, expected " + std::to_string(*num_classes));
  }
  return ds;
}

}  // namespace adcorda
