#pragma once

// Periodic vector fields on [0, 2*pi)^d held as full complex Fourier spectra,
// one grid^d block per component. Wavenumbers follow the usual FFT layout
// (index i maps to k = i for i <= grid/2, else i - grid); the Nyquist plane
// is kept at zero so every field is a clean trigonometric polynomial.
// Convention: u(theta) = sum_k uhat_k exp(i k.theta), uhat_{-k} = conj(uhat_k).

#include <complex>
#include <cstdint>
#include <span>
#include <vector>

#include "chvar/torus.hpp"

namespace chvar {

using Complex = std::complex<double>;

class SpectralField {
 public:
  SpectralField() = default;
  SpectralField(int dim, int grid);  // zero field

  int dim() const { return dim_; }
  int grid() const { return grid_; }
  double time() const { return time_; }
  void set_time(double t) { time_ = t; }
  std::size_t points() const { return points_; }
  bool empty() const { return coef_.empty(); }

  Complex* component(int c) { return coef_.data() + c * points_; }
  const Complex* component(int c) const { return coef_.data() + c * points_; }

  // Coefficient addressed by signed wavenumbers, |k_i| < grid/2.
  Complex& at(int c, std::span<const int> k);
  Complex at(int c, std::span<const int> k) const;

  std::vector<Complex>& raw() { return coef_; }
  const std::vector<Complex>& raw() const { return coef_; }

 private:
  int dim_ = 0, grid_ = 0;
  std::size_t points_ = 0;
  double time_ = 0.0;
  std::vector<Complex> coef_;
};

// ==== transforms ====

// Real-space samples on the uniform grid, component-major, axes row-major
// (first axis slowest). synthesize undoes analyze exactly up to roundoff.
std::vector<double> synthesize(const SpectralField& f);
SpectralField analyze(int dim, int grid, std::span<const double> values,
                      double time = 0.0);

// ==== calculus ====

SpectralField derivative(const SpectralField& f, int axis);
SpectralField laplacian(const SpectralField& f);
SpectralField helmholtz_apply(const SpectralField& f);   // (1 - Lap) f
SpectralField helmholtz_invert(const SpectralField& f);  // (1 - Lap)^-1 f
SpectralField leray_project(const SpectralField& f);

// Zero all modes with any |k_i| > fraction * (grid/2); the Nyquist plane is
// always zeroed. In-place.
void dealias(SpectralField& f, double fraction = 2.0 / 3.0);
void zero_nyquist(SpectralField& f);

double hermitian_defect(const SpectralField& f);
void enforce_hermitian(SpectralField& f);

// ==== quadratures and diagnostics ====

double l2_inner(const SpectralField& a, const SpectralField& b);
double h1_inner(const SpectralField& a, const SpectralField& b);
double l2_norm_sq(const SpectralField& a);
double h1_norm_sq(const SpectralField& a);
double grad_norm_sq(const SpectralField& a);  // sum |k|^2 weighting
double lap_norm_sq(const SpectralField& a);   // sum |k|^4 weighting

// Max over grid points of |div u| (synthesized) and of |u|.
double max_divergence(const SpectralField& f);
double max_abs(const SpectralField& f);

// Zero-mean divergence-free field with modes |k_i| <= kmax, rescaled so the
// H1 norm equals amplitude. Deterministic in seed. Needs dim >= 2.
SpectralField random_divfree_field(int dim, int grid, int kmax,
                                   double amplitude, uint64_t seed);

// ==== trigonometric evaluation away from the grid ====

// Real cos/sin form of a band-limited field, for exact pointwise evaluation
// at arbitrary particle positions.
struct TrigPoly {
  struct Term {
    SmallIVec k{};
    SmallVec coef_cos{};
    SmallVec coef_sin{};
  };
  int dim = 0;
  SmallVec mean{};
  std::vector<Term> terms;

  SmallVec eval(std::span<const double> theta) const;
  static TrigPoly from_field(const SpectralField& f, double drop_tol = 1e-14);
  static TrigPoly constant(int dim, const SmallVec& value);
};

// ==== time-indexed drift paths ====

struct DriftPath {
  std::vector<double> times;  // uniform, ascending
  std::vector<SpectralField> fields;

  double t0() const { return times.front(); }
  double t1() const { return times.back(); }
  double dt() const;
  void validate() const;  // uniform spacing, matching shapes
};

// Drift evaluator for flows: trig summation in space (exact), linear
// interpolation in time between snapshots.
class DriftSampler {
 public:
  explicit DriftSampler(const DriftPath& path, double drop_tol = 1e-14);
  explicit DriftSampler(TrigPoly constant_field);

  SmallVec eval(double t, std::span<const double> theta) const;
  int dim() const { return dim_; }

 private:
  int dim_ = 0;
  double t0_ = 0.0, dt_ = 0.0;
  std::vector<TrigPoly> polys_;
};

}  // namespace chvar
