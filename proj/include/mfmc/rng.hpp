#pragma once

// Reproducible random streams.
//
// Every random number used by the library is drawn from a Philox4x32-10
// counter-based generator. The 64-bit master seed is the Philox key and the
// 128-bit counter packs the full stream identity:
//
//   word 0  block index inside the stream (each block yields two doubles)
//   word 1  particle index q
//   word 2  sample index m
//   word 3  bits 28..31 method tag
//           bits 24..27 purpose (x0, theta, wiener)
//           bits 16..23 batch id
//           bits  8..15 first level / multi-index component
//           bits  0..7  second multi-index component
//
// Philox is a bijection of the counter for a fixed key, so distinct
// (method, purpose, batch, index, sample, particle, block) tuples never share
// a draw. Results are identical on every platform whose libm agrees on
// log/sqrt/cos (used by the Box-Muller transform).

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

#include "mfmc/errors.hpp"

namespace mfmc {

/// Philox4x32-10 block function (Salmon et al., Random123).
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                               std::array<std::uint32_t, 2> key) {
  constexpr std::uint32_t kMul0 = 0xD2511F53u;
  constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
    const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  }
  return ctr;
}

enum class MethodTag : std::uint8_t {
  test = 0,
  mc = 1,
  mlmc_time = 2,
  mlmc_particle = 3,
  mlmc_joint = 4,
  mimc = 5,
  rates = 6,
  ladder = 7,
};

enum class Purpose : std::uint8_t { x0 = 0, theta = 1, wiener = 2 };

/// Identity of one sample of a level/index difference. Extended with a
/// particle index and a purpose, it names one random stream.
struct SampleKey {
  std::uint64_t master_seed = 0;
  MethodTag method = MethodTag::test;
  std::uint8_t batch = 0;
  std::uint8_t index1 = 0;
  std::uint8_t index2 = 0;
  std::uint32_t sample = 0;

  friend bool operator==(const SampleKey&, const SampleKey&) = default;
};

/// Builds a key, rejecting components outside the packed counter layout.
inline SampleKey make_sample_key(std::uint64_t master_seed, MethodTag method, int index1, int index2,
                                 std::int64_t sample, int batch = 0) {
  if (index1 < 0 || index1 > 255 || index2 < 0 || index2 > 255) {
    throw invalid_input("level/index component outside [0, 255]");
  }
  if (batch < 0 || batch > 255) throw invalid_input("batch id outside [0, 255]");
  if (sample < 0 || sample > static_cast<std::int64_t>(UINT32_MAX)) {
    throw invalid_input("sample index outside [0, 2^32)");
  }
  return SampleKey{master_seed, method, static_cast<std::uint8_t>(batch),
                   static_cast<std::uint8_t>(index1), static_cast<std::uint8_t>(index2),
                   static_cast<std::uint32_t>(sample)};
}

class CounterStream {
 public:
  CounterStream(const SampleKey& key, std::uint32_t particle, Purpose purpose)
      : key_{static_cast<std::uint32_t>(key.master_seed),
             static_cast<std::uint32_t>(key.master_seed >> 32)},
        particle_(particle),
        sample_(key.sample),
        tag_((std::uint32_t{static_cast<std::uint8_t>(key.method)} & 0xFu) << 28 |
             (std::uint32_t{static_cast<std::uint8_t>(purpose)} & 0xFu) << 24 |
             std::uint32_t{key.batch} << 16 | std::uint32_t{key.index1} << 8 |
             std::uint32_t{key.index2}) {}

  /// Raw 64-bit output.
  std::uint64_t next_u64() {
    if (pending_ == 0) {
      const auto out = philox4x32({block_++, particle_, sample_, tag_}, key_);
      buffer_[0] = std::uint64_t{out[0]} | std::uint64_t{out[1]} << 32;
      buffer_[1] = std::uint64_t{out[2]} | std::uint64_t{out[3]} << 32;
      pending_ = 2;
    }
    return buffer_[2 - pending_--];
  }

  /// Uniform on the open interval (0, 1).
  double uniform() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1p-53; }

  /// Standard normal via Box-Muller; the second variate of each pair is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  std::array<std::uint32_t, 2> key_;
  std::uint32_t particle_;
  std::uint32_t sample_;
  std::uint32_t tag_;
  std::uint32_t block_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
  int pending_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace mfmc
