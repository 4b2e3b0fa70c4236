#pragma once

// Group-valued Brownian motion on the torus, truncated to the divergence-free
// mode basis, with drifted Lagrangian flows, pathwise inverse flows, Monte
// Carlo generator estimation, and the dyadic-coupling / Hoelder diagnostics.
//
// Each stored wave-vector class {k, -k} owns one cos channel and one sin
// channel: the lattice pair k, -k drives identical fields (up to sign) with
// independent Brownian motions, and two independent equal-law channels sum
// to one channel of sqrt(2) the amplitude. Steps are exact in the Ito form;
// the Stratonovich correction vanishes because eps . k = 0 for every mode.

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "chvar/fourier_basis.hpp"
#include "chvar/philox.hpp"
#include "chvar/spectral_field.hpp"
#include "chvar/torus.hpp"

namespace chvar {

// Number of threads Monte Carlo loops may use: hardware concurrency, capped
// by the CHVAR_WORKERS environment variable when set. Results never depend
// on the worker count (per-realization slots, sequential reduction).
int worker_count();

// ==== noise ====

// Gaussian increments for one Euler step: a (dx1, dx2) pair per mode class
// for the cos and sin channels, plus the translation vector dy. Every entry
// is N(0, dt), addressed by (seed; step, stream, realization).
struct NoiseIncrement {
  double dt = 0.0;
  std::vector<std::array<double, 2>> mode;
  SmallVec dy = zero_vec();
  bool has_translation = false;
};

struct NoiseRecord {
  double dt = 0.0;
  std::vector<NoiseIncrement> steps;
};

NoiseIncrement sample_increments(const BasisSet& basis, double dt,
                                 const GaussianStream& stream, uint32_t step,
                                 uint32_t realization = 0);

// ==== ensembles and flow configuration ====

struct ParticleEnsemble {
  int dim = 0;
  double time = 0.0;
  std::vector<SmallVec> positions;     // reduced mod 2*pi
  std::vector<SmallVec> displacement;  // unwrapped motion since time 0

  static ParticleEnsemble from_points(int dim,
                                      const std::vector<SmallVec>& points);
  int size() const { return static_cast<int>(positions.size()); }
};

// Pair layout for the Hoelder diagnostic: particle 2j sits at base, particle
// 2j+1 at base + coarsest * 2^-j * direction, j = 0 .. scales-1.
ParticleEnsemble pair_separation_ensemble(int dim, const SmallVec& base,
                                          const SmallVec& direction,
                                          int scales, double coarsest);

// noise_scaling is applied per axis to every noise channel including dy.
// The bare flow uses scaling 1 (generator sum_i c_i d2_ii); the calibrated
// flow uses sqrt(nu / c_i) so the generator becomes nu * Laplacian.
struct FlowConfig {
  BasisSet basis;
  double nu = 0.0;
  SmallVec noise_scaling{};
  double dt = 0.0;
  uint64_t seed = 0;
  uint32_t realization = 0;

  static FlowConfig unscaled(BasisSet basis, double dt, uint64_t seed);
  static FlowConfig nu_scaled(BasisSet basis, double nu, double dt,
                              uint64_t seed);
  void validate() const;
};

// ==== flows ====

// One Euler-Maruyama step, in place:
//   g += u(t, g) dt + s . [sum_m sqrt(2) w_m eps_m (cos(k.g) dx1 + sin(k.g)
//        dx2) + dy]
// with per-axis scaling s; drift may be null. Positions wrap mod 2*pi, the
// displacement accumulator does not.
void euler_step(ParticleEnsemble& ens, const DriftSampler* drift,
                const NoiseIncrement& inc, const FlowConfig& config);

struct FlowResult {
  std::vector<ParticleEnsemble> trajectory;  // steps + 1 snapshots
  NoiseRecord noise;                         // filled iff record_noise
};

// T must be an integer multiple of config.dt. Identical (seed, realization,
// config, drift) give bitwise-identical trajectories.
FlowResult simulate_flow(const FlowConfig& config, const DriftSampler* drift,
                         double T, const ParticleEnsemble& start,
                         bool record_noise = false);

// Pathwise inverse: replays the recorded increments in reverse order with
// negated signs and drift -u. Composed with the forward flow it returns the
// start up to O(dt) when the noise is off.
std::vector<ParticleEnsemble> simulate_inverse_flow(const FlowConfig& config,
                                                    const DriftSampler* drift,
                                                    double T,
                                                    const NoiseRecord& noise,
                                                    const ParticleEnsemble& end);

// ==== generator estimation ====

// Test function with the analytic derivatives the comparison needs.
struct GeneratorTestFunction {
  std::function<double(const SmallVec&)> value;
  std::function<SmallVec(const SmallVec&)> gradient;
  std::function<SmallVec(const SmallVec&)> hessian_diag;
};

struct GeneratorEstimate {
  std::vector<SmallVec> points;
  std::vector<double> estimate;   // (E f(g(dt)) - f) / dt per point
  std::vector<double> std_error;  // CLT standard error per point
};

// Single-step Monte Carlo over M realizations; every grid point shares each
// realization's increments (one flow map per realization). dt overrides
// config.dt. M < 100 is refused as statistically meaningless.
GeneratorEstimate estimate_generator(const FlowConfig& config,
                                     const GeneratorTestFunction& f,
                                     const std::vector<SmallVec>& grid,
                                     double dt, int M,
                                     const DriftSampler* drift = nullptr);

// Analytic target: sum_i s_i^2 c_i d2_ii f + u(0, theta) . grad f.
double generator_prediction(const FlowConfig& config,
                            const GeneratorTestFunction& f,
                            const SmallVec& theta,
                            const DriftSampler* drift = nullptr);

// ==== diagnostics ====

// Max over modes and sample points of the analytic Ito contraction
// w (k . eps) sin(k.theta) cos(k.theta); zero whenever eps is orthogonal
// to its wave vector.
double ito_stratonovich_gap(const BasisSet& basis,
                            const std::vector<SmallVec>& sample_points);

struct DyadicResult {
  int n = 0;
  double moment = 0.0;  // E sup_{t <= T} |g_n(t) - g_{n+1}(t)|^2
  double std_error = 0.0;
};

// Couples the |k| <= 2^n and |k| <= 2^(n+1) truncations through shared mode
// streams and reports the sup-distance second moment over M realizations.
// Refuses n whose fine truncation exceeds the mode-count cap.
DyadicResult dyadic_coupling_test(int d, double r, int n, double T, int M,
                                  double dt, uint64_t seed);

struct HoelderEstimate {
  double exponent = 0.0;
  double band = 0.0;  // standard error of the fitted slope
};

// Least-squares slope of log pair distance at time t against the initial
// pair separation, over the (2j, 2j+1) pairs of the trajectory. Needs at
// least 3 distinct separation scales.
HoelderEstimate hoelder_exponent_estimate(
    const std::vector<ParticleEnsemble>& trajectory, double t, int pair_count);

}  // namespace chvar
