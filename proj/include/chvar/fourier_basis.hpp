#pragma once

// Divergence-free Fourier basis on the flat d-torus.
//
// Wave vectors k and -k span the same real modes; every class is stored once
// through a canonical representative (first nonzero component positive) and
// summed with multiplicity 2 where the full lattice is meant. Each class
// carries d-1 unit vectors eps orthogonal to k, so every basis field
// eps * cos(k.theta), eps * sin(k.theta) is divergence free. Mode weights
// 1/alpha_k with alpha_k^2 = (|k|^2 + 1)^(r/2) make the expansion summable
// for r >= d + 1.

#include <cstdint>
#include <span>
#include <vector>

#include "chvar/torus.hpp"

namespace chvar {

struct WaveVector {
  SmallIVec k{0, 0, 0, 0};
  int d = 0;

  double norm_sq() const {
    double s = 0.0;
    for (int i = 0; i < d; ++i) s += static_cast<double>(k[i]) * k[i];
    return s;
  }
};

// Canonical representative of the class {k, -k}; rejects k = 0.
WaveVector canonical_representative(std::span<const int> k);

// alpha_k^2 = (|k|^2 + 1)^(r/2).
double alpha_k_squared(const WaveVector& k, double r);

struct BasisMode {
  WaveVector k;
  int alpha = 0;        // frame index within the class, 0 .. d-2
  SmallVec eps{};       // unit vector, eps . k = 0
  double weight = 0.0;  // 1/alpha_k
  uint64_t stream = 0;  // RNG stream id, stable under truncation changes
};

struct BasisSet {
  int d = 0;
  int N = 0;  // truncation radius, classes with 0 < |k| <= N
  double r = 0.0;
  bool include_translation = true;
  std::vector<BasisMode> modes;
};

// Enumerates all canonical classes with 0 < |k| <= N and attaches frames:
// d=2 uses eps = (-k2, k1)/|k|; d>=3 completes k/|k| to an orthonormal
// frame by the Householder reflection taking e1 to k/|k|.
BasisSet build_basis(int d, int N, double r, bool include_translation = true);

enum class ModePhase { kCos, kSin };

// Unit-amplitude field value eps * cos(k.theta) or eps * sin(k.theta).
SmallVec eval_mode(const BasisMode& mode, ModePhase phase,
                   std::span<const double> theta);

struct GeneratorConstants {
  SmallVec a{};  // a_i = (1/2) sum_modes (2/alpha_k^2) eps_i^2
  SmallVec c{};  // c_i = a_i (+ 1/2 with translation noise)
  // Full second-order coefficient matrix of the generator, translation
  // included on the diagonal; off-diagonals cancel by lattice parity.
  std::array<std::array<double, kMaxDim>, kMaxDim> second_order{};
  double max_offdiag = 0.0;
};

GeneratorConstants generator_constants(const BasisSet& basis);

// Rigorous upper bound for sum_{|k| > K} |k|^(-s) over the integer lattice,
// by comparison with the integral over unit cubes offset by sqrt(d)/2.
double lattice_tail_bound(int d, double s, double K);

struct VBound {
  double value = 0.0;       // truncated sum over 0 < |k| <= k_max
  double tail_bound = 0.0;  // rigorous bound on the discarded tail
};

// V(theta) = sum_{k != 0} sin^2(k.theta) / |k|^(d+3), truncated at |k| <=
// k_max, with an enclosure of the tail (sin^2 <= 1 termwise).
VBound V_function(std::span<const double> theta, int d, int k_max);

}  // namespace chvar
