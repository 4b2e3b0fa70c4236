#include "chvar/fourier_basis.hpp"

#include <cmath>
#include <stdexcept>

#include "chvar/philox.hpp"

namespace chvar {

// ==== wave vector classes ====

WaveVector canonical_representative(std::span<const int> k) {
  int d = static_cast<int>(k.size());
  if (d < 1 || d > kMaxDim)
    throw std::invalid_argument("dimension must be between 1 and 4");
  int first = 0;
  for (int i = 0; i < d; ++i) {
    if (k[i] != 0) {
      first = k[i];
      break;
    }
  }
  if (first == 0) throw std::invalid_argument("zero wave vector has no class");
  WaveVector out;
  out.d = d;
  int sign = first > 0 ? 1 : -1;
  for (int i = 0; i < d; ++i) out.k[i] = sign * k[i];
  return out;
}

double alpha_k_squared(const WaveVector& k, double r) {
  return std::pow(k.norm_sq() + 1.0, 0.5 * r);
}

// ==== basis construction ====

namespace {

// Orthonormal frame of the plane k-perp: column j of the Householder
// reflection H = I - 2 w w^T / |w|^2 with w = e1 - k/|k| maps e_{1+j} to a
// unit vector orthogonal to H e1 = k/|k|.
void householder_frame(const WaveVector& k, int alpha, SmallVec& eps) {
  int d = k.d;
  double nrm = std::sqrt(k.norm_sq());
  SmallVec w = zero_vec();
  double wsq = 0.0;
  for (int i = 0; i < d; ++i) {
    w[i] = (i == 0 ? 1.0 : 0.0) - k.k[i] / nrm;
    wsq += w[i] * w[i];
  }
  int j = 1 + alpha;  // basis column to reflect
  eps = zero_vec();
  if (wsq < 1e-24) {  // k parallel to e1, reflection degenerates to identity
    eps[j] = 1.0;
    return;
  }
  double f = 2.0 * w[j] / wsq;
  for (int i = 0; i < d; ++i) eps[i] = (i == j ? 1.0 : 0.0) - f * w[i];
}

}  // namespace

BasisSet build_basis(int d, int N, double r, bool include_translation) {
  if (d < 1 || d > kMaxDim)
    throw std::invalid_argument("dimension must be between 1 and 4");
  if (N < 0) throw std::invalid_argument("truncation radius must be >= 0");
  if (N >= 2048) throw std::invalid_argument("truncation radius too large");
  if (r < d + 1)
    throw std::invalid_argument("weight exponent r must be at least d + 1");

  BasisSet basis;
  basis.d = d;
  basis.N = N;
  basis.r = r;
  basis.include_translation = include_translation;

  // Enumerate canonical representatives: first nonzero component positive.
  SmallIVec k{0, 0, 0, 0};
  long nsq = static_cast<long>(N) * N;
  auto emit = [&](const SmallIVec& kk) {
    WaveVector wv;
    wv.d = d;
    wv.k = kk;
    double w = std::pow(alpha_k_squared(wv, r), -0.5);
    int frames = d - 1;
    for (int alpha = 0; alpha < frames; ++alpha) {
      BasisMode m;
      m.k = wv;
      m.alpha = alpha;
      if (d == 2) {
        double nrm = std::sqrt(wv.norm_sq());
        m.eps = {-kk[1] / nrm, kk[0] / nrm, 0.0, 0.0};
      } else {
        householder_frame(wv, alpha, m.eps);
      }
      m.weight = w;
      m.stream = mode_stream_id(kk, d, alpha);
      basis.modes.push_back(m);
    }
  };

  // Nested ranges: the leading axis only needs non-negative values; a leading
  // zero defers the sign decision to the next axis.
  auto sq = [](int v) { return static_cast<long>(v) * v; };
  for (int k0 = 0; k0 <= N; ++k0) {
    k[0] = k0;
    if (d == 1) {
      if (k0 >= 1) emit(k);
      continue;
    }
    int lo1 = (k0 > 0) ? -N : 0;
    for (int k1 = lo1; k1 <= N; ++k1) {
      k[1] = k1;
      if (sq(k0) + sq(k1) > nsq) continue;
      if (d == 2) {
        if (k0 > 0 || k1 > 0) emit(k);
        continue;
      }
      int lo2 = (k0 > 0 || k1 > 0) ? -N : 0;
      for (int k2 = lo2; k2 <= N; ++k2) {
        k[2] = k2;
        if (sq(k0) + sq(k1) + sq(k2) > nsq) continue;
        if (d == 3) {
          if (k0 > 0 || k1 > 0 || k2 > 0) emit(k);
          continue;
        }
        int lo3 = (k0 > 0 || k1 > 0 || k2 > 0) ? -N : 0;
        for (int k3 = lo3; k3 <= N; ++k3) {
          k[3] = k3;
          if (sq(k0) + sq(k1) + sq(k2) + sq(k3) > nsq) continue;
          if (k0 > 0 || k1 > 0 || k2 > 0 || k3 > 0) emit(k);
        }
        k[3] = 0;
      }
      k[2] = 0;
    }
    k[1] = 0;
  }
  return basis;
}

SmallVec eval_mode(const BasisMode& mode, ModePhase phase,
                   std::span<const double> theta) {
  double kth = 0.0;
  for (int i = 0; i < mode.k.d; ++i) kth += mode.k.k[i] * theta[i];
  double amp = (phase == ModePhase::kCos) ? std::cos(kth) : std::sin(kth);
  SmallVec out = zero_vec();
  for (int i = 0; i < mode.k.d; ++i) out[i] = amp * mode.eps[i];
  return out;
}

// ==== generator constants ====

GeneratorConstants generator_constants(const BasisSet& basis) {
  GeneratorConstants gc;
  int d = basis.d;
  // Each stored class stands for k and -k: multiplicity 2. The quadratic
  // variation of axis i per unit time is sum (2/alpha_k^2) eps_i^2 (+1 for
  // translation), and the generator is (1/2) of it.
  for (const BasisMode& m : basis.modes) {
    double w2 = m.weight * m.weight;  // 1/alpha_k^2
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        gc.second_order[i][j] += w2 * m.eps[i] * m.eps[j];
  }
  for (int i = 0; i < d; ++i) {
    gc.a[i] = gc.second_order[i][i];  // = (1/2) * 2 * sum (1/alpha^2) eps_i^2
    gc.c[i] = gc.a[i] + (basis.include_translation ? 0.5 : 0.0);
    gc.second_order[i][i] = gc.c[i];
  }
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      if (i != j) {
        double v = std::abs(gc.second_order[i][j]);
        if (v > gc.max_offdiag) gc.max_offdiag = v;
      }
  return gc;
}

// ==== lattice tail bounds ====

double lattice_tail_bound(int d, double s, double K) {
  if (d < 1 || d > 4) throw std::invalid_argument("tail bound needs d in 1..4");
  if (s <= d) throw std::invalid_argument("tail bound needs s > d");
  double a = 0.5 * std::sqrt(static_cast<double>(d));
  double t0 = K - 2.0 * a;
  if (t0 <= 0.0)
    throw std::invalid_argument("tail bound needs K > sqrt(d)");
  // Unit cubes around lattice points |k| > K are disjoint, lie in
  // {|x| > K - a}, and |k|^-s <= (|x| - a)^-s on each cube. In polar form
  // with t = rho - a the tail is bounded by
  //   S_d * integral_{t0}^inf t^-s (t + a)^(d-1) dt.
  auto mono = [&](double p) {  // integral_{t0}^inf t^(p - s) dt
    return std::pow(t0, p + 1.0 - s) / (s - 1.0 - p);
  };
  switch (d) {
    case 1:
      return 2.0 * mono(0.0);
    case 2:
      return kTwoPi * (mono(1.0) + a * mono(0.0));
    case 3:
      return 2.0 * kTwoPi *
             (mono(2.0) + 2.0 * a * mono(1.0) + a * a * mono(0.0));
    default: {
      double pi2 = 0.5 * kTwoPi * kTwoPi;  // surface of the unit 3-sphere
      return pi2 * (mono(3.0) + 3.0 * a * mono(2.0) + 3.0 * a * a * mono(1.0) +
                    a * a * a * mono(0.0));
    }
  }
}

VBound V_function(std::span<const double> theta, int d, int k_max) {
  if (d < 1 || d > 3) throw std::invalid_argument("V_function needs d in 1..3");
  if (k_max < 4) throw std::invalid_argument("V_function needs k_max >= 4");
  VBound out;
  long nsq = static_cast<long>(k_max) * k_max;
  double s = static_cast<double>(d) + 3.0;
  SmallIVec k{0, 0, 0, 0};
  int lo1 = (d >= 2) ? -k_max : 0, hi1 = (d >= 2) ? k_max : 0;
  int lo2 = (d >= 3) ? -k_max : 0, hi2 = (d >= 3) ? k_max : 0;
  auto sq = [](int v) { return static_cast<long>(v) * v; };
  for (int k0 = -k_max; k0 <= k_max; ++k0) {
    k[0] = k0;
    for (int k1 = lo1; k1 <= hi1; ++k1) {
      k[1] = k1;
      for (int k2 = lo2; k2 <= hi2; ++k2) {
        k[2] = k2;
        long knsq = sq(k0) + sq(k1) + sq(k2);
        if (knsq == 0 || knsq > nsq) continue;
        double kth = k0 * theta[0];
        if (d >= 2) kth += k1 * theta[1];
        if (d >= 3) kth += k2 * theta[2];
        double sn = std::sin(kth);
        out.value += sn * sn * std::pow(static_cast<double>(knsq), -0.5 * s);
      }
    }
  }
  out.tail_bound = lattice_tail_bound(d, s, static_cast<double>(k_max));
  return out;
}

}  // namespace chvar
