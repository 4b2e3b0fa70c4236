#include "chvar/group_brownian.hpp"

#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"

using namespace chvar;

namespace {

// Deterministic uniforms in [0, 2*pi) from raw mt19937_64 bits; the standard
// distribution objects are implementation-defined, raw bits are not.
std::vector<SmallVec> uniform_points(int count, int dim, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<SmallVec> pts(count, zero_vec());
  for (auto& p : pts)
    for (int i = 0; i < dim; ++i)
      p[i] = static_cast<double>(rng() >> 11) * 0x1.0p-53 * kTwoPi;
  return pts;
}

NoiseIncrement zero_increment(const BasisSet& basis, double dt) {
  NoiseIncrement inc;
  inc.dt = dt;
  inc.mode.assign(basis.modes.size(), {0.0, 0.0});
  inc.has_translation = basis.include_translation;
  return inc;
}

GeneratorTestFunction cos1_function() {
  GeneratorTestFunction f;
  f.value = [](const SmallVec& th) { return std::cos(th[0]); };
  f.gradient = [](const SmallVec& th) {
    SmallVec g = zero_vec();
    g[0] = -std::sin(th[0]);
    return g;
  };
  f.hessian_diag = [](const SmallVec& th) {
    SmallVec h = zero_vec();
    h[0] = -std::cos(th[0]);
    return h;
  };
  return f;
}

}  // namespace

// ==== noise sampling ====

TEST_CASE("sample_increments: deterministic, Gaussian, guarded") {
  BasisSet basis = build_basis(2, 4, 5.0);
  GaussianStream stream(42);

  NoiseIncrement a = sample_increments(basis, 0.25, stream, 3, 7);
  NoiseIncrement b = sample_increments(basis, 0.25, stream, 3, 7);
  REQUIRE(a.mode.size() == basis.modes.size());
  CHECK(a.has_translation);
  for (std::size_t m = 0; m < a.mode.size(); ++m) {
    CHECK(a.mode[m][0] == b.mode[m][0]);
    CHECK(a.mode[m][1] == b.mode[m][1]);
  }
  CHECK(a.dy[0] == b.dy[0]);
  CHECK(a.dy[1] == b.dy[1]);

  NoiseIncrement c = sample_increments(basis, 0.25, stream, 4, 7);
  NoiseIncrement d = sample_increments(basis, 0.25, stream, 3, 8);
  CHECK(a.mode[0][0] != c.mode[0][0]);
  CHECK(a.mode[0][0] != d.mode[0][0]);

  CHECK_THROWS_AS(sample_increments(basis, 0.0, stream, 0, 0),
                  std::invalid_argument);
  CHECK_THROWS_AS(sample_increments(basis, -1.0, stream, 0, 0),
                  std::invalid_argument);

  BasisSet bare = build_basis(2, 2, 5.0, false);
  NoiseIncrement e = sample_increments(bare, 1.0, stream, 0, 0);
  CHECK_FALSE(e.has_translation);
  CHECK(e.dy[0] == 0.0);

  // CLT: mean within 4/sqrt(M), variance within 5 percent, at dt = 1.
  const int M = 100000;
  double sum = 0.0, sumsq = 0.0;
  for (int r = 0; r < M; ++r) {
    NoiseIncrement inc = sample_increments(bare, 1.0, stream, 0, r);
    sum += inc.mode[0][0];
    sumsq += inc.mode[0][0] * inc.mode[0][0];
  }
  double mean = sum / M;
  double var = sumsq / M - mean * mean;
  CHECK(std::abs(mean) < 4.0 / std::sqrt(static_cast<double>(M)));
  CHECK(std::abs(var - 1.0) < 0.05);
}

// ==== single steps ====

TEST_CASE("euler_step: identity, drift translation, wrap, guards") {
  BasisSet basis = build_basis(2, 2, 5.0);
  FlowConfig cfg = FlowConfig::unscaled(basis, 0.1, 9);
  ParticleEnsemble ens =
      ParticleEnsemble::from_points(2, {{0.5, 1.5, 0.0, 0.0},
                                        {kTwoPi - 0.04, 3.0, 0.0, 0.0}});
  NoiseIncrement zero = zero_increment(basis, 0.1);

  ParticleEnsemble still = ens;
  euler_step(still, nullptr, zero, cfg);
  CHECK(still.positions[0][0] == ens.positions[0][0]);
  CHECK(still.positions[1][1] == ens.positions[1][1]);
  CHECK(still.time == doctest::Approx(0.1));

  SmallVec one = zero_vec();
  one[0] = 1.0;
  DriftSampler drift(TrigPoly::constant(2, one));
  ParticleEnsemble moved = ens;
  euler_step(moved, &drift, zero, cfg);
  CHECK(moved.positions[0][0] == doctest::Approx(0.6));
  CHECK(moved.positions[0][1] == doctest::Approx(1.5));
  // the second particle crosses 2*pi and wraps
  CHECK(moved.positions[1][0] == doctest::Approx(0.06));
  CHECK(moved.displacement[1][0] == doctest::Approx(0.1));

  NoiseIncrement wrong = zero_increment(basis, 0.2);
  CHECK_THROWS_AS(euler_step(moved, nullptr, wrong, cfg),
                  std::invalid_argument);
  ParticleEnsemble bad = ParticleEnsemble::from_points(3, {{0, 0, 0, 0}});
  CHECK_THROWS_AS(euler_step(bad, nullptr, zero, cfg), std::invalid_argument);
}

TEST_CASE("one-step ensemble mean displacement is a martingale") {
  BasisSet basis = build_basis(2, 4, 5.0);
  double dt = 0.01;
  FlowConfig cfg = FlowConfig::unscaled(basis, dt, 777);
  GaussianStream stream(cfg.seed);
  const int M = 10000;
  SmallVec start{2.2, 0.7, 0.0, 0.0};
  double sum[2] = {0, 0}, sumsq[2] = {0, 0};
  for (int r = 0; r < M; ++r) {
    ParticleEnsemble ens = ParticleEnsemble::from_points(2, {start});
    NoiseIncrement inc =
        sample_increments(basis, dt, stream, 0, static_cast<uint32_t>(r));
    euler_step(ens, nullptr, inc, cfg);
    for (int i = 0; i < 2; ++i) {
      sum[i] += ens.displacement[0][i];
      sumsq[i] += ens.displacement[0][i] * ens.displacement[0][i];
    }
  }
  for (int i = 0; i < 2; ++i) {
    double mean = sum[i] / M;
    double sigma = std::sqrt(sumsq[i] / M - mean * mean);
    CHECK(std::abs(mean) < 4.0 * sigma / std::sqrt(static_cast<double>(M)));
  }
}

// ==== flow trajectories ====

TEST_CASE("axis variance grows like 2 nu t for the calibrated flow") {
  BasisSet basis = build_basis(2, 4, 5.0);
  double nu = 0.25, dt = 5e-3, T = 0.5;
  FlowConfig cfg = FlowConfig::nu_scaled(basis, nu, dt, 31);
  GaussianStream stream(cfg.seed);
  int steps = static_cast<int>(std::lround(T / dt));
  const int M = 10000;
  SmallVec start{1.0, 4.0, 0.0, 0.0};
  double sum[2] = {0, 0}, sumsq[2] = {0, 0};
  for (int r = 0; r < M; ++r) {
    ParticleEnsemble ens = ParticleEnsemble::from_points(2, {start});
    for (int s = 0; s < steps; ++s) {
      NoiseIncrement inc = sample_increments(
          basis, dt, stream, static_cast<uint32_t>(s), static_cast<uint32_t>(r));
      euler_step(ens, nullptr, inc, cfg);
    }
    for (int i = 0; i < 2; ++i) {
      sum[i] += ens.displacement[0][i];
      sumsq[i] += ens.displacement[0][i] * ens.displacement[0][i];
    }
  }
  // martingale increments with constant conditional variance make the
  // displacement variance exactly 2 nu T at any dt; only CLT noise remains.
  double target = 2.0 * nu * T;
  double tol = 4.0 * target * std::sqrt(2.0 / (M - 1.0));
  for (int i = 0; i < 2; ++i) {
    double mean = sum[i] / M;
    double var = sumsq[i] / M - mean * mean;
    CHECK(std::abs(var - target) < tol);
  }
}

TEST_CASE("common noise gives a common flow, and seeds reproduce it") {
  BasisSet basis = build_basis(2, 4, 5.0);
  FlowConfig cfg = FlowConfig::unscaled(basis, 0.01, 2024);
  SmallVec p{0.8, 5.1, 0.0, 0.0};
  ParticleEnsemble two = ParticleEnsemble::from_points(2, {p, p});
  FlowResult run = simulate_flow(cfg, nullptr, 0.2, two);
  REQUIRE(run.trajectory.size() == 21);
  for (const auto& snap : run.trajectory) {
    CHECK(snap.positions[0][0] == snap.positions[1][0]);
    CHECK(snap.positions[0][1] == snap.positions[1][1]);
  }
  // particles moved at all
  CHECK(torus_distance(run.trajectory.back().positions[0], p, 2) > 1e-4);

  FlowResult again = simulate_flow(cfg, nullptr, 0.2, two);
  CHECK(again.trajectory.back().positions[0][0] ==
        run.trajectory.back().positions[0][0]);

  FlowConfig other = cfg;
  other.realization = 1;
  FlowResult diff = simulate_flow(other, nullptr, 0.2, two);
  CHECK(diff.trajectory.back().positions[0][0] !=
        run.trajectory.back().positions[0][0]);

  // nu = 0 calibrated flow freezes every particle
  FlowConfig frozen = FlowConfig::nu_scaled(basis, 0.0, 0.01, 2024);
  FlowResult still = simulate_flow(frozen, nullptr, 0.2, two);
  CHECK(still.trajectory.back().positions[0][0] == p[0]);
  CHECK(still.trajectory.back().positions[0][1] == p[1]);
}

TEST_CASE("round trip through the inverse flow") {
  BasisSet basis = build_basis(2, 2, 5.0);
  SpectralField field = random_divfree_field(2, 32, 2, 0.8, 55);
  TrigPoly poly = TrigPoly::from_field(field);
  DriftSampler drift(poly);
  std::vector<SmallVec> starts = uniform_points(16, 2, 99);
  ParticleEnsemble start = ParticleEnsemble::from_points(2, starts);

  // nu = 0: a pure ODE flow; the backward pass undoes it to O(dt).
  double errs[2];
  double dts[2] = {1e-2, 5e-3};
  for (int which = 0; which < 2; ++which) {
    FlowConfig cfg = FlowConfig::nu_scaled(basis, 0.0, dts[which], 5);
    FlowResult fwd = simulate_flow(cfg, &drift, 0.5, start, true);
    auto back = simulate_inverse_flow(cfg, &drift, 0.5, fwd.noise,
                                      fwd.trajectory.back());
    double worst = 0.0;
    for (int p = 0; p < start.size(); ++p)
      worst = std::max(worst, torus_distance(back.back().positions[p],
                                             start.positions[p], 2));
    errs[which] = worst;
  }
  CHECK(errs[0] < 0.02);
  double ratio = errs[0] / errs[1];
  CHECK(ratio > 1.5);
  CHECK(ratio < 2.6);

  // with the noise active the composition still lands near the start
  FlowConfig noisy = FlowConfig::unscaled(basis, 5e-3, 5);
  FlowResult fwd = simulate_flow(noisy, &drift, 0.5, start, true);
  auto back =
      simulate_inverse_flow(noisy, &drift, 0.5, fwd.noise, fwd.trajectory.back());
  double worst = 0.0;
  for (int p = 0; p < start.size(); ++p)
    worst = std::max(worst, torus_distance(back.back().positions[p],
                                           start.positions[p], 2));
  CHECK(worst < 0.2);

  NoiseRecord empty;
  empty.dt = 5e-3;
  CHECK_THROWS_AS(
      simulate_inverse_flow(noisy, &drift, 0.5, empty, fwd.trajectory.back()),
      std::invalid_argument);
}

TEST_CASE("volume is preserved: a uniform ensemble stays uniform") {
  BasisSet basis = build_basis(2, 4, 5.0);
  FlowConfig cfg = FlowConfig::nu_scaled(basis, 0.3, 5e-3, 608);
  const int M = 10000;
  ParticleEnsemble start =
      ParticleEnsemble::from_points(2, uniform_points(M, 2, 4242));
  FlowResult run = simulate_flow(cfg, nullptr, 0.3, start);
  const ParticleEnsemble& end = run.trajectory.back();

  // chi-square over an 8 x 8 binning; df = 63, 1 percent critical 92.01
  const int B = 8;
  std::vector<double> counts(B * B, 0.0);
  for (const auto& p : end.positions) {
    int bx = std::min(B - 1, static_cast<int>(p[0] / kTwoPi * B));
    int by = std::min(B - 1, static_cast<int>(p[1] / kTwoPi * B));
    counts[bx * B + by] += 1.0;
  }
  double expect = static_cast<double>(M) / (B * B);
  double chi2 = 0.0;
  for (double cnt : counts) chi2 += (cnt - expect) * (cnt - expect) / expect;
  CHECK(chi2 < 92.01);
}

// ==== generator ====

TEST_CASE("generator estimate matches the analytic constant") {
  BasisSet basis = build_basis(2, 4, 5.0);
  FlowConfig cfg = FlowConfig::unscaled(basis, 1e-3, 314);
  GeneratorTestFunction f = cos1_function();
  std::vector<SmallVec> grid = {{0.3, 0.9, 0.0, 0.0},
                                {2.1, 4.4, 0.0, 0.0},
                                {5.0, 1.7, 0.0, 0.0},
                                {3.9, 5.8, 0.0, 0.0}};
  GeneratorEstimate est = estimate_generator(cfg, f, grid, 2e-3, 50000);
  REQUIRE(est.estimate.size() == grid.size());
  for (std::size_t p = 0; p < grid.size(); ++p) {
    double pred = generator_prediction(cfg, f, grid[p]);
    CHECK(est.std_error[p] > 0.0);
    CHECK(std::abs(est.estimate[p] - pred) <
          4.0 * est.std_error[p] + 5e-3 * (1.0 + std::abs(pred)));
  }

  // deterministic reruns
  GeneratorEstimate twin = estimate_generator(cfg, f, grid, 2e-3, 50000);
  CHECK(twin.estimate[0] == est.estimate[0]);

  // constants map to zero with zero spread
  GeneratorTestFunction constf;
  constf.value = [](const SmallVec&) { return 1.25; };
  constf.gradient = [](const SmallVec&) { return zero_vec(); };
  constf.hessian_diag = [](const SmallVec&) { return zero_vec(); };
  GeneratorEstimate flat = estimate_generator(cfg, constf, grid, 2e-3, 200);
  CHECK(flat.estimate[0] == 0.0);
  CHECK(flat.std_error[0] == 0.0);

  CHECK_THROWS_AS(estimate_generator(cfg, f, grid, 2e-3, 50),
                  std::invalid_argument);
}

TEST_CASE("drifted generator picks up the transport term") {
  BasisSet basis = build_basis(2, 4, 5.0);
  double nu = 0.5;
  FlowConfig cfg = FlowConfig::nu_scaled(basis, nu, 1e-3, 2718);
  SmallVec one = zero_vec();
  one[0] = 1.0;
  DriftSampler drift(TrigPoly::constant(2, one));
  GeneratorTestFunction f;
  f.value = [](const SmallVec& th) { return std::sin(th[0]); };
  f.gradient = [](const SmallVec& th) {
    SmallVec g = zero_vec();
    g[0] = std::cos(th[0]);
    return g;
  };
  f.hessian_diag = [](const SmallVec& th) {
    SmallVec h = zero_vec();
    h[0] = -std::sin(th[0]);
    return h;
  };
  std::vector<SmallVec> grid = {{0.7, 2.0, 0.0, 0.0}, {4.2, 0.4, 0.0, 0.0}};
  GeneratorEstimate est = estimate_generator(cfg, f, grid, 2e-3, 50000, &drift);
  for (std::size_t p = 0; p < grid.size(); ++p) {
    // target cos(theta1) - nu sin(theta1)
    double pred = std::cos(grid[p][0]) - nu * std::sin(grid[p][0]);
    CHECK(generator_prediction(cfg, f, grid[p], &drift) ==
          doctest::Approx(pred).epsilon(1e-12));
    CHECK(std::abs(est.estimate[p] - pred) <
          4.0 * est.std_error[p] + 5e-3 * (1.0 + std::abs(pred)));
  }
}

// ==== diagnostics ====

TEST_CASE("stochastic contraction vanishes on every basis") {
  std::vector<SmallVec> pts = uniform_points(100, 3, 11);
  for (int d : {2, 3}) {
    BasisSet basis = build_basis(d, d == 2 ? 16 : 8, static_cast<double>(d) + 3);
    CHECK(ito_stratonovich_gap(basis, pts) <= 1e-12);
  }

  // negative control: push eps off its orthogonal frame
  BasisSet bent = build_basis(2, 4, 5.0);
  for (auto& mode : bent.modes) {
    double kn = std::sqrt(mode.k.norm_sq());
    for (int i = 0; i < 2; ++i) mode.eps[i] += 0.01 * mode.k.k[i] / kn;
  }
  CHECK(ito_stratonovich_gap(bent, pts) > 1e-4);
}

TEST_CASE("coupled truncations contract dyadically") {
  DyadicResult r1 = dyadic_coupling_test(2, 5.0, 1, 0.25, 200, 5e-3, 90);
  DyadicResult r2 = dyadic_coupling_test(2, 5.0, 2, 0.25, 200, 5e-3, 90);
  CHECK(r1.moment > 0.0);
  CHECK(r2.moment > 0.0);
  CHECK(r2.moment < r1.moment);

  CHECK_THROWS_AS(dyadic_coupling_test(2, 5.0, 8, 0.25, 10, 5e-3, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(dyadic_coupling_test(2, 5.0, 0, 0.25, 10, 5e-3, 1),
                  std::invalid_argument);

  // identical truncations stepped on the same draws never separate
  BasisSet basis = build_basis(2, 4, 5.0);
  FlowConfig cfg = FlowConfig::unscaled(basis, 5e-3, 90);
  GaussianStream stream(cfg.seed);
  ParticleEnsemble a = ParticleEnsemble::from_points(2, {{0.9, 0.73, 0, 0}});
  ParticleEnsemble b = a;
  for (int s = 0; s < 50; ++s) {
    NoiseIncrement inc =
        sample_increments(basis, 5e-3, stream, static_cast<uint32_t>(s), 0);
    euler_step(a, nullptr, inc, cfg);
    euler_step(b, nullptr, inc, cfg);
  }
  CHECK(torus_distance(a.positions[0], b.positions[0], 2) == 0.0);
}

TEST_CASE("pair separations at t = 0 give exponent one") {
  SmallVec base{1.0, 2.0, 0.0, 0.0};
  SmallVec dir{1.0, 1.0, 0.0, 0.0};
  ParticleEnsemble pairs = pair_separation_ensemble(2, base, dir, 4, 0.25);
  REQUIRE(pairs.size() == 8);

  std::vector<ParticleEnsemble> still = {pairs};
  HoelderEstimate at0 = hoelder_exponent_estimate(still, 0.0, 4);
  CHECK(at0.exponent == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(at0.band < 1e-9);

  // frozen flow keeps the exponent at one for all t
  BasisSet basis = build_basis(2, 4, 5.0);
  FlowConfig frozen = FlowConfig::nu_scaled(basis, 0.0, 5e-3, 3);
  FlowResult run = simulate_flow(frozen, nullptr, 0.25, pairs);
  HoelderEstimate later = hoelder_exponent_estimate(run.trajectory, 0.25, 4);
  CHECK(later.exponent == doctest::Approx(1.0).epsilon(1e-9));

  ParticleEnsemble two = pair_separation_ensemble(2, base, dir, 2, 0.25);
  std::vector<ParticleEnsemble> short_traj = {two};
  CHECK_THROWS_AS(hoelder_exponent_estimate(short_traj, 0.0, 2),
                  std::invalid_argument);
}

TEST_CASE("hoelder exponent does not grow with time") {
  BasisSet basis = build_basis(2, 8, 5.0);
  SmallVec base{2.4, 1.1, 0.0, 0.0};
  SmallVec dir{0.6, -0.8, 0.0, 0.0};
  ParticleEnsemble pairs = pair_separation_ensemble(2, base, dir, 4, 0.5);
  const int R = 40;
  double early_sum = 0.0, late_sum = 0.0, early_sq = 0.0, late_sq = 0.0;
  for (int rr = 0; rr < R; ++rr) {
    FlowConfig cfg = FlowConfig::unscaled(basis, 5e-3, 1234);
    cfg.realization = static_cast<uint32_t>(rr);
    FlowResult run = simulate_flow(cfg, nullptr, 1.0, pairs);
    double e = hoelder_exponent_estimate(run.trajectory, 0.25, 4).exponent;
    double l = hoelder_exponent_estimate(run.trajectory, 1.0, 4).exponent;
    early_sum += e;
    late_sum += l;
    early_sq += e * e;
    late_sq += l * l;
  }
  double early = early_sum / R, late = late_sum / R;
  double band = std::sqrt((early_sq / R - early * early) / R) +
                std::sqrt((late_sq / R - late * late) / R);
  CHECK(early > 0.0);
  CHECK(early < 1.4);
  CHECK(late <= early + 3.0 * band);
}
