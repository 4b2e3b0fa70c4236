#pragma once

// Small shared utilities for fields and flows on the flat d-torus
// [0, 2*pi)^d, d <= kMaxDim.

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>

namespace chvar {

inline constexpr int kMaxDim = 4;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Fixed-capacity vector; entries beyond the active dimension stay zero.
using SmallVec = std::array<double, kMaxDim>;
using SmallIVec = std::array<int, kMaxDim>;

inline SmallVec zero_vec() { return SmallVec{0.0, 0.0, 0.0, 0.0}; }

// Wrap a coordinate into [0, 2*pi).
inline double wrap_angle(double x) {
  double y = std::fmod(x, kTwoPi);
  if (y < 0.0) y += kTwoPi;
  return y;
}

// Signed minimal representative of x modulo 2*pi, in [-pi, pi).
inline double wrap_signed(double x) {
  double y = std::fmod(x + std::numbers::pi, kTwoPi);
  if (y < 0.0) y += kTwoPi;
  return y - std::numbers::pi;
}

// Componentwise minimal-image displacement a - b on the torus.
inline SmallVec torus_displacement(std::span<const double> a,
                                   std::span<const double> b, int d) {
  SmallVec out = zero_vec();
  for (int i = 0; i < d; ++i) out[i] = wrap_signed(a[i] - b[i]);
  return out;
}

inline double torus_distance(std::span<const double> a,
                             std::span<const double> b, int d) {
  double s = 0.0;
  for (int i = 0; i < d; ++i) {
    double u = wrap_signed(a[i] - b[i]);
    s += u * u;
  }
  return std::sqrt(s);
}

inline double dot(const SmallVec& a, const SmallVec& b, int d) {
  double s = 0.0;
  for (int i = 0; i < d; ++i) s += a[i] * b[i];
  return s;
}

inline double norm(const SmallVec& a, int d) { return std::sqrt(dot(a, a, d)); }

}  // namespace chvar
