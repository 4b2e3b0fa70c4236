#include "chvar/group_brownian.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <thread>

namespace chvar {

namespace {

constexpr double kSqrt2 = 1.4142135623730951;

// Runs body(begin, end) over a partition of [0, count); slots written per
// index keep the result independent of the worker count.
void parallel_blocks(int count, const std::function<void(int, int)>& body) {
  int workers = std::min(worker_count(), count);
  if (workers <= 1) {
    body(0, count);
    return;
  }
  int chunk = (count + workers - 1) / workers;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    int b = w * chunk, e = std::min(count, b + chunk);
    if (b >= e) break;
    pool.emplace_back(body, b, e);
  }
  for (auto& th : pool) th.join();
}

int steps_for(double T, double dt) {
  if (dt <= 0.0) throw std::invalid_argument("time step must be positive");
  if (T <= 0.0) throw std::invalid_argument("horizon must be positive");
  int steps = static_cast<int>(std::llround(T / dt));
  if (steps < 1 || std::abs(steps * dt - T) > 1e-9 * std::max(1.0, T))
    throw std::invalid_argument("horizon must be an integer multiple of dt");
  return steps;
}

// Advances every particle by one Euler step. teval is the drift evaluation
// time, drift_sign -1 for the backward pass. Increments arrive pre-signed.
void step_particles(ParticleEnsemble& ens, const DriftSampler* drift,
                    double teval, double drift_sign, const NoiseIncrement& inc,
                    const FlowConfig& config) {
  const int d = ens.dim;
  const auto& modes = config.basis.modes;
  if (inc.mode.size() != modes.size())
    throw std::invalid_argument("increment does not match the basis");
  for (int p = 0; p < ens.size(); ++p) {
    SmallVec& pos = ens.positions[p];
    SmallVec noise = zero_vec();
    for (std::size_t m = 0; m < modes.size(); ++m) {
      const BasisMode& mode = modes[m];
      double phase = 0.0;
      for (int i = 0; i < d; ++i) phase += mode.k.k[i] * pos[i];
      double amp = kSqrt2 * mode.weight *
                   (std::cos(phase) * inc.mode[m][0] +
                    std::sin(phase) * inc.mode[m][1]);
      for (int i = 0; i < d; ++i) noise[i] += amp * mode.eps[i];
    }
    if (inc.has_translation)
      for (int i = 0; i < d; ++i) noise[i] += inc.dy[i];
    SmallVec delta = zero_vec();
    for (int i = 0; i < d; ++i) delta[i] = config.noise_scaling[i] * noise[i];
    if (drift) {
      SmallVec u = drift->eval(teval, std::span<const double>(pos.data(), d));
      for (int i = 0; i < d; ++i) delta[i] += drift_sign * u[i] * inc.dt;
    }
    for (int i = 0; i < d; ++i) {
      ens.displacement[p][i] += delta[i];
      pos[i] = wrap_angle(pos[i] + delta[i]);
    }
  }
}

NoiseIncrement negate(const NoiseIncrement& inc) {
  NoiseIncrement out = inc;
  for (auto& pair : out.mode) {
    pair[0] = -pair[0];
    pair[1] = -pair[1];
  }
  for (double& v : out.dy) v = -v;
  return out;
}

}  // namespace

int worker_count() {
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  int count = static_cast<int>(hw);
  if (const char* env = std::getenv("CHVAR_WORKERS")) {
    char* tail = nullptr;
    long v = std::strtol(env, &tail, 10);
    if (tail != env && v >= 1 && v < count) count = static_cast<int>(v);
  }
  return count;
}

// ==== noise ====

NoiseIncrement sample_increments(const BasisSet& basis, double dt,
                                 const GaussianStream& stream, uint32_t step,
                                 uint32_t realization) {
  if (dt <= 0.0) throw std::invalid_argument("time step must be positive");
  NoiseIncrement inc;
  inc.dt = dt;
  double root = std::sqrt(dt);
  inc.mode.resize(basis.modes.size());
  for (std::size_t m = 0; m < basis.modes.size(); ++m) {
    auto pair = stream.normal_pair(step, basis.modes[m].stream, realization);
    inc.mode[m] = {pair[0] * root, pair[1] * root};
  }
  inc.has_translation = basis.include_translation;
  if (inc.has_translation) {
    for (int c = 0; 2 * c < basis.d; ++c) {
      auto pair = stream.normal_pair(step, translation_stream_id(c),
                                     realization);
      inc.dy[2 * c] = pair[0] * root;
      if (2 * c + 1 < basis.d) inc.dy[2 * c + 1] = pair[1] * root;
    }
  }
  return inc;
}

// ==== ensembles and flow configuration ====

ParticleEnsemble ParticleEnsemble::from_points(
    int dim, const std::vector<SmallVec>& points) {
  if (dim < 1 || dim > kMaxDim) throw std::invalid_argument("bad dimension");
  ParticleEnsemble ens;
  ens.dim = dim;
  ens.positions = points;
  for (auto& p : ens.positions)
    for (int i = 0; i < dim; ++i) p[i] = wrap_angle(p[i]);
  ens.displacement.assign(points.size(), zero_vec());
  return ens;
}

ParticleEnsemble pair_separation_ensemble(int dim, const SmallVec& base,
                                          const SmallVec& direction,
                                          int scales, double coarsest) {
  if (scales < 1) throw std::invalid_argument("need at least one scale");
  if (coarsest <= 0.0) throw std::invalid_argument("separation must be positive");
  double len = 0.0;
  for (int i = 0; i < dim; ++i) len += direction[i] * direction[i];
  len = std::sqrt(len);
  if (len == 0.0) throw std::invalid_argument("direction must be nonzero");
  std::vector<SmallVec> pts;
  double sep = coarsest;
  for (int j = 0; j < scales; ++j, sep *= 0.5) {
    pts.push_back(base);
    SmallVec off = base;
    for (int i = 0; i < dim; ++i) off[i] += sep * direction[i] / len;
    pts.push_back(off);
  }
  return ParticleEnsemble::from_points(dim, pts);
}

FlowConfig FlowConfig::unscaled(BasisSet basis, double dt, uint64_t seed) {
  FlowConfig cfg;
  cfg.basis = std::move(basis);
  cfg.nu = 0.0;
  for (int i = 0; i < cfg.basis.d; ++i) cfg.noise_scaling[i] = 1.0;
  cfg.dt = dt;
  cfg.seed = seed;
  cfg.validate();
  return cfg;
}

FlowConfig FlowConfig::nu_scaled(BasisSet basis, double nu, double dt,
                                 uint64_t seed) {
  if (nu < 0.0) throw std::invalid_argument("viscosity must be nonnegative");
  FlowConfig cfg;
  cfg.basis = std::move(basis);
  cfg.nu = nu;
  GeneratorConstants gc = generator_constants(cfg.basis);
  for (int i = 0; i < cfg.basis.d; ++i)
    cfg.noise_scaling[i] = std::sqrt(nu / gc.c[i]);
  cfg.dt = dt;
  cfg.seed = seed;
  cfg.validate();
  return cfg;
}

void FlowConfig::validate() const {
  if (basis.d < 1 || basis.d > kMaxDim)
    throw std::invalid_argument("bad basis dimension");
  if (dt <= 0.0) throw std::invalid_argument("time step must be positive");
  for (int i = 0; i < basis.d; ++i)
    if (!(noise_scaling[i] >= 0.0))
      throw std::invalid_argument("noise scaling must be nonnegative");
}

// ==== flows ====

void euler_step(ParticleEnsemble& ens, const DriftSampler* drift,
                const NoiseIncrement& inc, const FlowConfig& config) {
  if (inc.dt != config.dt)
    throw std::invalid_argument("increment dt does not match the flow dt");
  if (ens.dim != config.basis.d)
    throw std::invalid_argument("ensemble dimension does not match the basis");
  step_particles(ens, drift, ens.time, 1.0, inc, config);
  ens.time += config.dt;
}

FlowResult simulate_flow(const FlowConfig& config, const DriftSampler* drift,
                         double T, const ParticleEnsemble& start,
                         bool record_noise) {
  config.validate();
  int steps = steps_for(T, config.dt);
  GaussianStream stream(config.seed);
  FlowResult out;
  out.noise.dt = config.dt;
  out.trajectory.reserve(steps + 1);
  ParticleEnsemble ens = start;
  ens.time = 0.0;
  ens.displacement.assign(ens.positions.size(), zero_vec());
  out.trajectory.push_back(ens);
  for (int n = 0; n < steps; ++n) {
    NoiseIncrement inc = sample_increments(config.basis, config.dt, stream,
                                           static_cast<uint32_t>(n),
                                           config.realization);
    euler_step(ens, drift, inc, config);
    if (record_noise) out.noise.steps.push_back(std::move(inc));
    out.trajectory.push_back(ens);
  }
  return out;
}

std::vector<ParticleEnsemble> simulate_inverse_flow(
    const FlowConfig& config, const DriftSampler* drift, double T,
    const NoiseRecord& noise, const ParticleEnsemble& end) {
  config.validate();
  int steps = steps_for(T, config.dt);
  if (static_cast<int>(noise.steps.size()) != steps)
    throw std::invalid_argument("noise record does not cover the horizon");
  if (noise.dt != config.dt)
    throw std::invalid_argument("noise record dt does not match the flow dt");
  std::vector<ParticleEnsemble> traj;
  traj.reserve(steps + 1);
  ParticleEnsemble ens = end;
  ens.time = T;
  ens.displacement.assign(ens.positions.size(), zero_vec());
  traj.push_back(ens);
  for (int m = 0; m < steps; ++m) {
    int n = steps - 1 - m;
    NoiseIncrement inc = negate(noise.steps[n]);
    step_particles(ens, drift, n * config.dt, -1.0, inc, config);
    ens.time = n * config.dt;
    traj.push_back(ens);
  }
  return traj;
}

// ==== generator estimation ====

GeneratorEstimate estimate_generator(const FlowConfig& config,
                                     const GeneratorTestFunction& f,
                                     const std::vector<SmallVec>& grid,
                                     double dt, int M,
                                     const DriftSampler* drift) {
  if (M < 100)
    throw std::invalid_argument(
        "generator estimate needs at least 100 realizations");
  if (grid.empty()) throw std::invalid_argument("empty evaluation grid");
  FlowConfig cfg = config;
  cfg.dt = dt;
  cfg.validate();
  const int P = static_cast<int>(grid.size());
  ParticleEnsemble base = ParticleEnsemble::from_points(cfg.basis.d, grid);
  std::vector<double> f0(P);
  for (int p = 0; p < P; ++p) f0[p] = f.value(base.positions[p]);

  // samples[p * M + r]: one-step difference quotient per point and path.
  std::vector<double> samples(static_cast<std::size_t>(P) * M);
  GaussianStream stream(cfg.seed);
  parallel_blocks(M, [&](int r0, int r1) {
    ParticleEnsemble ens = base;
    for (int r = r0; r < r1; ++r) {
      ens.positions = base.positions;
      ens.time = 0.0;
      NoiseIncrement inc = sample_increments(
          cfg.basis, dt, stream, 0, static_cast<uint32_t>(r));
      step_particles(ens, drift, 0.0, 1.0, inc, cfg);
      for (int p = 0; p < P; ++p)
        samples[static_cast<std::size_t>(p) * M + r] =
            (f.value(ens.positions[p]) - f0[p]) / dt;
    }
  });

  GeneratorEstimate out;
  out.points = grid;
  out.estimate.resize(P);
  out.std_error.resize(P);
  for (int p = 0; p < P; ++p) {
    const double* row = samples.data() + static_cast<std::size_t>(p) * M;
    double mean = 0.0;
    for (int r = 0; r < M; ++r) mean += row[r];
    mean /= M;
    double var = 0.0;
    for (int r = 0; r < M; ++r) var += (row[r] - mean) * (row[r] - mean);
    var /= (M - 1);
    out.estimate[p] = mean;
    out.std_error[p] = std::sqrt(var / M);
  }
  return out;
}

double generator_prediction(const FlowConfig& config,
                            const GeneratorTestFunction& f,
                            const SmallVec& theta,
                            const DriftSampler* drift) {
  GeneratorConstants gc = generator_constants(config.basis);
  SmallVec hess = f.hessian_diag(theta);
  double pred = 0.0;
  for (int i = 0; i < config.basis.d; ++i)
    pred += config.noise_scaling[i] * config.noise_scaling[i] * gc.c[i] *
            hess[i];
  if (drift) {
    SmallVec u =
        drift->eval(0.0, std::span<const double>(theta.data(), config.basis.d));
    SmallVec grad = f.gradient(theta);
    for (int i = 0; i < config.basis.d; ++i) pred += u[i] * grad[i];
  }
  return pred;
}

// ==== diagnostics ====

double ito_stratonovich_gap(const BasisSet& basis,
                            const std::vector<SmallVec>& sample_points) {
  double worst = 0.0;
  for (const auto& theta : sample_points) {
    for (const BasisMode& mode : basis.modes) {
      double phase = 0.0, keps = 0.0;
      for (int i = 0; i < basis.d; ++i) {
        phase += mode.k.k[i] * theta[i];
        keps += mode.k.k[i] * mode.eps[i];
      }
      double term =
          mode.weight * keps * std::sin(phase) * std::cos(phase);
      worst = std::max(worst, std::abs(term));
    }
  }
  return worst;
}

DyadicResult dyadic_coupling_test(int d, double r, int n, double T, int M,
                                  double dt, uint64_t seed) {
  if (d < 2 || d > kMaxDim)
    throw std::invalid_argument("dyadic test needs 2 <= d <= 4");
  if (n < 1) throw std::invalid_argument("dyadic level must be >= 1");
  if (M < 1) throw std::invalid_argument("need at least one realization");
  constexpr double kModeCap = 200000.0;
  double fineN = std::ldexp(1.0, n + 1);
  double lattice = std::pow(2.0 * fineN + 1.0, d);
  double est_modes = 0.5 * (lattice - 1.0) * (d - 1);
  if (est_modes > kModeCap)
    throw std::invalid_argument(
        "dyadic level needs about " + std::to_string(est_modes) +
        " mode classes; the cap is " + std::to_string(kModeCap));
  int steps = steps_for(T, dt);
  BasisSet coarse = build_basis(d, 1 << n, r);
  BasisSet fine = build_basis(d, 1 << (n + 1), r);
  FlowConfig cfg_c = FlowConfig::unscaled(coarse, dt, seed);
  FlowConfig cfg_f = FlowConfig::unscaled(fine, dt, seed);
  SmallVec theta0 = zero_vec();
  for (int i = 0; i < d; ++i) theta0[i] = 0.9 - 0.17 * i;

  std::vector<double> sups(M);
  GaussianStream stream(seed);
  parallel_blocks(M, [&](int r0, int r1) {
    for (int rr = r0; rr < r1; ++rr) {
      ParticleEnsemble pc = ParticleEnsemble::from_points(d, {theta0});
      ParticleEnsemble pf = pc;
      double sup = 0.0;
      for (int s = 0; s < steps; ++s) {
        auto step_u = static_cast<uint32_t>(s);
        auto real_u = static_cast<uint32_t>(rr);
        NoiseIncrement ic =
            sample_increments(coarse, dt, stream, step_u, real_u);
        NoiseIncrement iff = sample_increments(fine, dt, stream, step_u,
                                               real_u);
        step_particles(pc, nullptr, s * dt, 1.0, ic, cfg_c);
        step_particles(pf, nullptr, s * dt, 1.0, iff, cfg_f);
        double dist = torus_distance(pc.positions[0], pf.positions[0], d);
        sup = std::max(sup, dist * dist);
      }
      sups[rr] = sup;
    }
  });

  DyadicResult out;
  out.n = n;
  double mean = 0.0;
  for (double v : sups) mean += v;
  mean /= M;
  double var = 0.0;
  for (double v : sups) var += (v - mean) * (v - mean);
  var /= std::max(1, M - 1);
  out.moment = mean;
  out.std_error = std::sqrt(var / M);
  return out;
}

HoelderEstimate hoelder_exponent_estimate(
    const std::vector<ParticleEnsemble>& trajectory, double t,
    int pair_count) {
  if (trajectory.empty()) throw std::invalid_argument("empty trajectory");
  const ParticleEnsemble& start = trajectory.front();
  if (start.size() != 2 * pair_count)
    throw std::invalid_argument("trajectory does not hold the declared pairs");
  const ParticleEnsemble* snap = &trajectory.front();
  double best = std::abs(snap->time - t);
  for (const auto& ens : trajectory) {
    double gap = std::abs(ens.time - t);
    if (gap < best) {
      best = gap;
      snap = &ens;
    }
  }
  const int d = start.dim;
  std::vector<double> x(pair_count), y(pair_count);
  for (int j = 0; j < pair_count; ++j) {
    double d0 =
        torus_distance(start.positions[2 * j], start.positions[2 * j + 1], d);
    double dt_ =
        torus_distance(snap->positions[2 * j], snap->positions[2 * j + 1], d);
    if (d0 <= 0.0 || dt_ <= 0.0)
      throw std::invalid_argument("degenerate pair separation");
    x[j] = std::log(d0);
    y[j] = std::log(dt_);
  }
  std::vector<double> scales = x;
  std::sort(scales.begin(), scales.end());
  int distinct = 1;
  for (std::size_t j = 1; j < scales.size(); ++j)
    if (scales[j] - scales[j - 1] > 1e-9) ++distinct;
  if (distinct < 3)
    throw std::invalid_argument("need at least 3 separation scales");

  double xm = 0.0, ym = 0.0;
  for (int j = 0; j < pair_count; ++j) {
    xm += x[j];
    ym += y[j];
  }
  xm /= pair_count;
  ym /= pair_count;
  double sxx = 0.0, sxy = 0.0;
  for (int j = 0; j < pair_count; ++j) {
    sxx += (x[j] - xm) * (x[j] - xm);
    sxy += (x[j] - xm) * (y[j] - ym);
  }
  HoelderEstimate out;
  out.exponent = sxy / sxx;
  double rss = 0.0;
  for (int j = 0; j < pair_count; ++j) {
    double resid = y[j] - ym - out.exponent * (x[j] - xm);
    rss += resid * resid;
  }
  int dof = std::max(1, pair_count - 2);
  out.band = std::sqrt(rss / dof / sxx);
  return out;
}

}  // namespace chvar
