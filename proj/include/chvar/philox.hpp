#pragma once

// Philox4x32-10 counter-based random streams.
//
// Every Gaussian draw is addressed by (seed; step, stream_id, realization):
// independent runs that share (seed, stream_id) see identical increments,
// which is what lets two basis truncations be driven by the same noise.
// Streams are keyed by wave vector and component, so enlarging the basis
// never perturbs the draws of the modes already present.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>

#include "chvar/torus.hpp"

namespace chvar {

namespace detail {

inline void philox_round(std::array<uint32_t, 4>& ctr,
                         std::array<uint32_t, 2>& key) {
  constexpr uint32_t kMul0 = 0xD2511F53u, kMul1 = 0xCD9E8D57u;
  constexpr uint32_t kWeyl0 = 0x9E3779B9u, kWeyl1 = 0xBB67AE85u;
  uint64_t p0 = static_cast<uint64_t>(kMul0) * ctr[0];
  uint64_t p1 = static_cast<uint64_t>(kMul1) * ctr[2];
  std::array<uint32_t, 4> out;
  out[0] = static_cast<uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0];
  out[1] = static_cast<uint32_t>(p1);
  out[2] = static_cast<uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1];
  out[3] = static_cast<uint32_t>(p0);
  ctr = out;
  key[0] += kWeyl0;
  key[1] += kWeyl1;
}

inline std::array<uint32_t, 4> philox4x32(std::array<uint32_t, 4> ctr,
                                          std::array<uint32_t, 2> key) {
  for (int r = 0; r < 10; ++r) philox_round(ctr, key);
  return ctr;
}

// Uniform in (0, 1): 53 mantissa bits plus a half-ulp offset to avoid 0.
inline double to_unit_open(uint32_t hi, uint32_t lo) {
  uint64_t v = (static_cast<uint64_t>(hi) << 32) | lo;
  return static_cast<double>(v >> 11) * 0x1.0p-53 + 0x1.0p-54;
}

}  // namespace detail

// Stream identifiers. Rotating modes pack the wave vector (12 bits per
// component, offset by 2048) and the frame index alpha; the translation
// noise gets its own tag so ids never collide.
inline constexpr uint64_t kStreamTagTranslation = 1ull << 56;

inline uint64_t mode_stream_id(const SmallIVec& k, int d, int alpha) {
  uint64_t id = 0;
  for (int i = 0; i < d; ++i) {
    if (k[i] <= -2048 || k[i] >= 2048)
      throw std::invalid_argument("wave vector component out of stream range");
    id |= static_cast<uint64_t>(static_cast<uint32_t>(k[i] + 2048) & 0xFFFu)
          << (12 * i);
  }
  if (alpha < 0 || alpha >= 15)
    throw std::invalid_argument("alpha out of stream range");
  id |= static_cast<uint64_t>(alpha) << 48;
  return id;
}

inline uint64_t translation_stream_id(int pair_index) {
  return kStreamTagTranslation | static_cast<uint64_t>(pair_index);
}

// A pair of independent N(0,1) draws for the addressed counter.
class GaussianStream {
 public:
  explicit GaussianStream(uint64_t seed)
      : key_{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32)} {}

  std::array<double, 2> normal_pair(uint32_t step, uint64_t stream_id,
                                    uint32_t realization) const {
    std::array<uint32_t, 4> ctr{step, static_cast<uint32_t>(stream_id),
                                static_cast<uint32_t>(stream_id >> 32),
                                realization};
    auto w = detail::philox4x32(ctr, key_);
    double u1 = detail::to_unit_open(w[0], w[1]);
    double u2 = detail::to_unit_open(w[2], w[3]);
    double rr = std::sqrt(-2.0 * std::log(u1));
    return {rr * std::cos(kTwoPi * u2), rr * std::sin(kTwoPi * u2)};
  }

 private:
  std::array<uint32_t, 2> key_;
};

}  // namespace chvar
