#pragma once

#include <cstdint>
#include <random>

namespace adcorda {

using Rng = std::mt19937_64;

// Independent stream for (seed, stream) pairs, e.g. one per sample index.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

// Stream tags keep unrelated consumers of one seed decorrelated.
namespace stream {
inline constexpr std::uint64_t kInit = 0x696e6974;
inline constexpr std::uint64_t kBatches = 0x62617463;
inline constexpr std::uint64_t kSplit = 0x73706c74;
inline constexpr std::uint64_t kShuffle = 0x73687566;
inline constexpr std::uint64_t kPrototypes = 0x70726f74;
inline constexpr std::uint64_t kNoise = 0x6e6f6973;
inline constexpr std::uint64_t kLabels = 0x6c61626c;
}  // namespace stream

}  // namespace adcorda
