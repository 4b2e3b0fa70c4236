// Command line front end: wires configs, seeds, and experiment recipes to the
// basis, flow, PDE, and variational modules, writing reproducible artifacts
// (JSON diagnostics, CSV time series, binary field and noise payloads) plus a
// run manifest. Same config and seed give byte-identical numeric artifacts;
// only the manifest's wall time differs between reruns.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "chvar/fourier_basis.hpp"
#include "chvar/group_brownian.hpp"
#include "chvar/io.hpp"
#include "chvar/spectral_field.hpp"
#include "chvar/spectral_pde.hpp"
#include "chvar/variational.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace chvar;

namespace {

// ==== run bookkeeping ====

struct RunContext {
  std::string command;
  std::string out_dir;
  uint64_t seed = 0;
  json config;
  std::chrono::steady_clock::time_point start;
};

RunContext begin_run(const std::string& command, const std::string& out_dir,
                     uint64_t seed, json config) {
  fs::create_directories(out_dir);
  config["command"] = command;
  config["seed"] = seed;
  RunContext ctx{command, out_dir, seed, std::move(config),
                 std::chrono::steady_clock::now()};
  write_text_file(out_dir + "/config.json", ctx.config.dump(2) + "\n");
  return ctx;
}

// Writes the manifest and maps the declared-checks verdict to the exit code.
int finish_run(const RunContext& ctx, bool pass) {
  double wall = std::chrono::duration<double>(
                    std::chrono::steady_clock::now() - ctx.start)
                    .count();
  write_manifest(ctx.out_dir + "/manifest.json", ctx.command,
                 ctx.config.dump(2) + "\n", ctx.seed, wall);
  return pass ? 0 : 1;
}

void write_report(const RunContext& ctx, const std::string& name,
                  const json& report) {
  write_text_file(ctx.out_dir + "/" + name, report.dump(2) + "\n");
}

// ==== shared parameter block ====

struct Params {
  std::string out = "out";
  std::string config_path;
  uint64_t seed = 12345;

  int dim = 2;
  int trunc = 8;
  double reg = 5.0;
  bool no_translation = false;

  double nu = 0.25;
  double dt = 1e-3;
  double T = 1.0;
  int particles = 16;
  bool record_noise = false;
  bool unscaled = false;

  int samples = 10000;
  std::string function = "cos1";
  int points = 4;

  int levels = 3;
  int pairs = 8;
  int realizations = 20;

  std::string equation = "ch";
  int grid = 64;
  int kmax = 2;
  double amplitude = 0.4;
  int snapshots = 3;
  std::string init = "random";

  int steps = 2000;
  int fd_steps = 200;
  int battery = 2;
  double tol = 1e-6;
  double eps1 = 0.08;
  double eps2 = 0.04;
  bool refine = false;
  bool no_control = false;

  double c = 2.0;
  std::string target = "random";
  int max_iterations = 500;

  int bound_points = 24;
  double theta_min = 1e-3;
  double theta_max = 0.7853981633974483;
  double direction = 0.7;
};

// ==== small helpers ====

Equation parse_equation(const std::string& name) {
  if (name == "ch") return Equation::kCamassaHolm;
  if (name == "leray") return Equation::kLerayAlpha;
  throw std::invalid_argument("equation must be 'ch' or 'leray'");
}

WhichEquation parse_which(const std::string& name) {
  return parse_equation(name) == Equation::kCamassaHolm
             ? WhichEquation::kCamassaHolm
             : WhichEquation::kLerayAlpha;
}

std::vector<double> uniform_times(double T, int steps) {
  std::vector<double> t(steps + 1);
  for (int n = 0; n <= steps; ++n) t[n] = T * n / steps;
  return t;
}

// Low-discrepancy start points: the d-dimensional Kronecker sequence of the
// generalized golden ratio, mapped onto the torus.
std::vector<SmallVec> kronecker_points(int dim, int count) {
  double g = 1.0;
  for (int it = 0; it < 40; ++it) g = std::pow(1.0 + g, 1.0 / (dim + 1));
  SmallVec alpha = zero_vec();
  double a = 1.0;
  for (int i = 0; i < dim; ++i) {
    a /= g;
    alpha[i] = a;
  }
  std::vector<SmallVec> pts(count, zero_vec());
  for (int p = 0; p < count; ++p)
    for (int i = 0; i < dim; ++i) {
      double frac = std::fmod((p + 0.5) * alpha[i], 1.0);
      pts[p][i] = wrap_angle(kTwoPi * frac);
    }
  return pts;
}

GeneratorTestFunction named_test_function(const std::string& name) {
  GeneratorTestFunction f;
  if (name == "cos1") {
    f.value = [](const SmallVec& t) { return std::cos(t[0]); };
    f.gradient = [](const SmallVec& t) {
      SmallVec g = zero_vec();
      g[0] = -std::sin(t[0]);
      return g;
    };
    f.hessian_diag = [](const SmallVec& t) {
      SmallVec h = zero_vec();
      h[0] = -std::cos(t[0]);
      return h;
    };
  } else if (name == "sin12") {
    f.value = [](const SmallVec& t) { return std::sin(t[0] + t[1]); };
    f.gradient = [](const SmallVec& t) {
      SmallVec g = zero_vec();
      g[0] = g[1] = std::cos(t[0] + t[1]);
      return g;
    };
    f.hessian_diag = [](const SmallVec& t) {
      SmallVec h = zero_vec();
      h[0] = h[1] = -std::sin(t[0] + t[1]);
      return h;
    };
  } else if (name == "const") {
    f.value = [](const SmallVec&) { return 1.0; };
    f.gradient = [](const SmallVec&) { return zero_vec(); };
    f.hessian_diag = [](const SmallVec&) { return zero_vec(); };
  } else {
    throw std::invalid_argument("function must be cos1, sin12, or const");
  }
  return f;
}

// cos(t) A + sin(2t) B drift from two random divergence-free shapes.
DriftPath synthetic_drift(int dim, int grid, int kmax, double T, int steps,
                          uint64_t seed) {
  SpectralField A = random_divfree_field(dim, grid, kmax, 0.8, seed);
  SpectralField B = random_divfree_field(dim, grid, kmax, 0.5, seed + 7);
  DriftPath u;
  u.times = uniform_times(T, steps);
  for (int n = 0; n <= steps; ++n) {
    double t = u.times[n];
    SpectralField f = A;
    for (auto& c : f.raw()) c *= std::cos(t);
    const auto& rb = B.raw();
    for (std::size_t i = 0; i < f.raw().size(); ++i)
      f.raw()[i] += std::sin(2.0 * t) * rb[i];
    f.set_time(t);
    u.fields.push_back(f);
  }
  return u;
}

SpectralField sine_profile_1d(int grid, double amplitude) {
  SpectralField u(1, grid);
  std::vector<int> k1{1}, m1{-1}, k2{2}, m2{-2};
  u.at(0, k1) = Complex(0.0, -0.5 * amplitude);
  u.at(0, m1) = Complex(0.0, 0.5 * amplitude);
  u.at(0, k2) = Complex(0.25 * amplitude, 0.0);
  u.at(0, m2) = Complex(0.25 * amplitude, 0.0);
  return u;
}

double max_path_h1_gap(const DriftPath& a, const DriftPath& b) {
  double worst = 0.0;
  for (std::size_t n = 0; n < a.fields.size(); ++n) {
    SpectralField d = a.fields[n];
    const auto& rb = b.fields[n].raw();
    for (std::size_t i = 0; i < d.raw().size(); ++i) d.raw()[i] -= rb[i];
    worst = std::max(worst, std::sqrt(h1_norm_sq(d)));
  }
  return worst;
}

json vec_json(const SmallVec& v, int dim) {
  json out = json::array();
  for (int i = 0; i < dim; ++i) out.push_back(v[i]);
  return out;
}

// ==== command handlers ====

int run_basis_report(const Params& p) {
  if (p.reg < p.dim + 1) throw std::invalid_argument("r below d+1");
  json cfg{{"dim", p.dim},
           {"trunc", p.trunc},
           {"reg", p.reg},
           {"translation", !p.no_translation},
           };
  RunContext ctx = begin_run("basis-report", p.out, p.seed, cfg);

  BasisSet basis = build_basis(p.dim, p.trunc, p.reg, !p.no_translation);
  GeneratorConstants gc = generator_constants(basis);

  json report;
  report["dim"] = p.dim;
  report["trunc"] = p.trunc;
  report["reg"] = p.reg;
  report["translation"] = !p.no_translation;
  report["mode_count"] = basis.modes.size();
  report["a"] = vec_json(gc.a, p.dim);
  report["c"] = vec_json(gc.c, p.dim);
  json so = json::array();
  for (int i = 0; i < p.dim; ++i) {
    json row = json::array();
    for (int j = 0; j < p.dim; ++j) row.push_back(gc.second_order[i][j]);
    so.push_back(row);
  }
  report["second_order"] = so;
  report["max_offdiag"] = gc.max_offdiag;
  bool pass = p.dim != 2 || gc.max_offdiag <= 1e-10;
  report["pass"] = pass;
  write_report(ctx, "basis.json", report);
  return finish_run(ctx, pass);
}

int run_simulate_flow(const Params& p) {
  json cfg{{"dim", p.dim},         {"trunc", p.trunc},
           {"reg", p.reg},         {"nu", p.nu},
           {"dt", p.dt},           {"T", p.T},
           {"particles", p.particles}, {"record-noise", p.record_noise},
           {"unscaled", p.unscaled}};
  RunContext ctx = begin_run("simulate-flow", p.out, p.seed, cfg);

  BasisSet basis = build_basis(p.dim, p.trunc, p.reg);
  GeneratorConstants gc = generator_constants(basis);
  FlowConfig flow = p.unscaled
                        ? FlowConfig::unscaled(basis, p.dt, p.seed)
                        : FlowConfig::nu_scaled(basis, p.nu, p.dt, p.seed);
  ParticleEnsemble start =
      ParticleEnsemble::from_points(p.dim, kronecker_points(p.dim, p.particles));
  FlowResult res = simulate_flow(flow, nullptr, p.T, start, p.record_noise);

  write_trajectory_csv(ctx.out_dir + "/trajectory.csv", res.trajectory);
  if (p.record_noise)
    write_noise_record(ctx.out_dir + "/noise", res.noise, p.dim, p.seed);

  const ParticleEnsemble& last = res.trajectory.back();
  SmallVec msd = zero_vec();
  for (const SmallVec& d : last.displacement)
    for (int i = 0; i < p.dim; ++i) msd[i] += d[i] * d[i] / last.size();
  json report;
  report["steps"] = res.trajectory.size() - 1;
  report["particles"] = last.size();
  report["mean_square_displacement"] = vec_json(msd, p.dim);
  SmallVec expect = zero_vec();
  for (int i = 0; i < p.dim; ++i)
    expect[i] = p.unscaled ? 2.0 * gc.c[i] * p.T : 2.0 * p.nu * p.T;
  report["expected_per_axis"] = vec_json(expect, p.dim);
  report["pass"] = true;
  write_report(ctx, "diagnostics.json", report);
  return finish_run(ctx, true);
}

int run_estimate_generator(const Params& p) {
  json cfg{{"dim", p.dim},     {"trunc", p.trunc},   {"reg", p.reg},
           {"dt", p.dt},       {"samples", p.samples}, {"function", p.function},
           {"points", p.points}};
  RunContext ctx = begin_run("estimate-generator", p.out, p.seed, cfg);

  BasisSet basis = build_basis(p.dim, p.trunc, p.reg);
  FlowConfig flow = FlowConfig::unscaled(basis, p.dt, p.seed);
  GeneratorTestFunction f = named_test_function(p.function);

  // rectangular grid over the first two axes, the rest held at the offset
  std::vector<SmallVec> grid;
  const double offset = 0.3;
  for (int i = 0; i < p.points; ++i)
    for (int j = 0; j < (p.dim >= 2 ? p.points : 1); ++j) {
      SmallVec t = zero_vec();
      for (int a = 0; a < p.dim; ++a) t[a] = offset;
      t[0] = offset + kTwoPi * i / p.points;
      if (p.dim >= 2) t[1] = offset + kTwoPi * j / p.points;
      grid.push_back(t);
    }

  GeneratorEstimate est =
      estimate_generator(flow, f, grid, p.dt, p.samples);
  GeneratorConstants gc = generator_constants(basis);

  json rows = json::array();
  bool pass = true;
  for (std::size_t q = 0; q < grid.size(); ++q) {
    double pred = generator_prediction(flow, f, grid[q]);
    double gap = std::abs(est.estimate[q] - pred);
    double allow = 4.0 * est.std_error[q] + 1e-3 * (1.0 + std::abs(pred));
    bool ok = gap <= allow;
    pass = pass && ok;
    json row;
    row["theta"] = vec_json(grid[q], p.dim);
    row["estimate"] = est.estimate[q];
    row["std_error"] = est.std_error[q];
    row["prediction"] = pred;
    row["pass"] = ok;
    rows.push_back(row);
  }
  json report;
  report["c"] = vec_json(gc.c, p.dim);
  report["dt"] = p.dt;
  report["samples"] = p.samples;
  report["function"] = p.function;
  report["rows"] = rows;
  report["pass"] = pass;
  write_report(ctx, "generator.json", report);
  return finish_run(ctx, pass);
}

int run_dyadic_test(const Params& p) {
  if (p.levels < 2)
    throw std::invalid_argument("dyadic test needs at least two levels");
  json cfg{{"dim", p.dim}, {"reg", p.reg},       {"levels", p.levels},
           {"T", p.T},     {"samples", p.samples}, {"dt", p.dt},
           };
  RunContext ctx = begin_run("dyadic-test", p.out, p.seed, cfg);

  json rows = json::array();
  std::vector<double> log2m;
  bool decreasing = true;
  double prev = 0.0;
  for (int n = 1; n <= p.levels; ++n) {
    DyadicResult r = dyadic_coupling_test(p.dim, p.reg, n, p.T, p.samples,
                                          p.dt, p.seed);
    if (n > 1 && r.moment >= prev) decreasing = false;
    prev = r.moment;
    log2m.push_back(std::log2(r.moment));
    json row;
    row["n"] = r.n;
    row["moment"] = r.moment;
    row["std_error"] = r.std_error;
    rows.push_back(row);
  }
  // least squares slope of log2 moment against the level
  double sn = 0.0, sy = 0.0, snn = 0.0, sny = 0.0;
  for (int i = 0; i < p.levels; ++i) {
    double n = i + 1.0;
    sn += n;
    sy += log2m[i];
    snn += n * n;
    sny += n * log2m[i];
  }
  double slope = (p.levels * sny - sn * sy) / (p.levels * snn - sn * sn);

  bool pass = decreasing && slope < 0.0;
  json report;
  report["rows"] = rows;
  report["slope_log2"] = slope;
  report["strictly_decreasing"] = decreasing;
  report["pass"] = pass;
  write_report(ctx, "dyadic.json", report);
  return finish_run(ctx, pass);
}

int run_hoelder_test(const Params& p) {
  json cfg{{"dim", p.dim},     {"trunc", p.trunc},
           {"reg", p.reg},     {"T", p.T},
           {"dt", p.dt},       {"pairs", p.pairs},
           {"realizations", p.realizations}};
  RunContext ctx = begin_run("hoelder-test", p.out, p.seed, cfg);

  BasisSet basis = build_basis(p.dim, p.trunc, p.reg);
  SmallVec base = zero_vec(), dir = zero_vec();
  for (int i = 0; i < p.dim; ++i) base[i] = 1.0 + 0.3 * i;
  dir[0] = 1.0;
  ParticleEnsemble ens =
      pair_separation_ensemble(p.dim, base, dir, p.pairs, 0.5);

  std::vector<double> eval_times{0.25 * p.T, p.T};
  std::vector<double> mean_exp(eval_times.size(), 0.0);
  std::vector<double> mean_band(eval_times.size(), 0.0);
  for (int r = 0; r < p.realizations; ++r) {
    FlowConfig flow = FlowConfig::unscaled(basis, p.dt, p.seed);
    flow.realization = static_cast<uint32_t>(r);
    FlowResult res = simulate_flow(flow, nullptr, p.T, ens);
    for (std::size_t q = 0; q < eval_times.size(); ++q) {
      HoelderEstimate h =
          hoelder_exponent_estimate(res.trajectory, eval_times[q], p.pairs);
      mean_exp[q] += h.exponent / p.realizations;
      mean_band[q] += h.band / p.realizations;
    }
  }
  json rows = json::array();
  bool finite = true;
  for (std::size_t q = 0; q < eval_times.size(); ++q) {
    finite = finite && std::isfinite(mean_exp[q]);
    json row;
    row["t"] = eval_times[q];
    row["mean_exponent"] = mean_exp[q];
    row["mean_band"] = mean_band[q];
    rows.push_back(row);
  }
  json report;
  report["rows"] = rows;
  report["realizations"] = p.realizations;
  report["pairs"] = p.pairs;
  report["pass"] = finite;
  write_report(ctx, "hoelder.json", report);
  return finish_run(ctx, finite);
}

DriftPath solve_from_params(const Params& p) {
  SolverConfig cfg;
  cfg.equation = parse_equation(p.equation);
  cfg.nu = p.nu;
  cfg.dt = p.dt;
  SpectralField u0 =
      (p.dim == 1 || p.init == "sine")
          ? sine_profile_1d(p.grid, p.amplitude)
          : random_divfree_field(p.dim, p.grid, p.kmax, p.amplitude, p.seed);
  if (p.dim == 1 && p.init != "sine" && p.init != "random")
    throw std::invalid_argument("init must be 'random' or 'sine'");
  if (p.dim >= 2 && p.init == "sine")
    throw std::invalid_argument("sine initial data is one-dimensional");
  if (p.init != "sine" && p.init != "random")
    throw std::invalid_argument("init must be 'random' or 'sine'");
  return solve(u0, cfg, p.T);
}

int run_solve_pde(const Params& p) {
  json cfg{{"equation", p.equation}, {"dim", p.dim},
           {"grid", p.grid},         {"nu", p.nu},
           {"dt", p.dt},             {"T", p.T},
           {"kmax", p.kmax},         {"amplitude", p.amplitude},
           {"snapshots", p.snapshots}, {"init", p.init},
           };
  RunContext ctx = begin_run("solve-pde", p.out, p.seed, cfg);

  DriftPath path = solve_from_params(p);
  int count = std::max(2, p.snapshots);
  double max_div = 0.0;
  for (int s = 0; s < count; ++s) {
    std::size_t idx = static_cast<std::size_t>(
        std::llround(double(s) * (path.fields.size() - 1) / (count - 1)));
    char name[32];
    std::snprintf(name, sizeof(name), "field_%03d", s);
    write_field_snapshot(ctx.out_dir + "/" + name, path.fields[idx],
                         {p.equation, p.nu});
    if (p.dim >= 2)
      max_div = std::max(max_div, max_divergence(path.fields[idx]));
  }
  std::vector<EnergyRow> energy = energy_report(path, p.nu);
  write_energy_csv(ctx.out_dir + "/energy.csv", energy);

  bool pass = p.dim < 2 || max_div <= 1e-12;
  json report;
  report["initial_energy"] = energy.front().energy;
  report["final_energy"] = energy.back().energy;
  report["max_divergence"] = max_div;
  report["snapshots"] = count;
  report["pass"] = pass;
  write_report(ctx, "diagnostics.json", report);
  return finish_run(ctx, pass);
}

int run_energy_report(const Params& p) {
  json cfg{{"equation", p.equation}, {"dim", p.dim},  {"grid", p.grid},
           {"nu", p.nu},             {"dt", p.dt},    {"T", p.T},
           {"kmax", p.kmax},         {"amplitude", p.amplitude},
           {"init", p.init}};
  RunContext ctx = begin_run("energy-report", p.out, p.seed, cfg);

  DriftPath path = solve_from_params(p);
  std::vector<EnergyRow> energy = energy_report(path, p.nu);
  write_energy_csv(ctx.out_dir + "/energy.csv", energy);

  double e0 = energy.front().energy, e1 = energy.back().energy;
  // viscous runs must dissipate; inviscid runs must hold energy closely
  bool pass = p.nu > 0.0 ? e1 <= e0 + 1e-12 * e0
                         : std::abs(e1 - e0) <= 1e-5 * e0;
  json report;
  report["initial_energy"] = e0;
  report["final_energy"] = e1;
  double worst = 0.0;
  for (std::size_t n = 1; n + 1 < energy.size(); ++n)
    worst = std::max(worst, std::abs(energy[n].residual));
  report["max_interior_residual"] = worst;
  report["pass"] = pass;
  write_report(ctx, "energy_report.json", report);
  return finish_run(ctx, pass);
}

int run_check_variation(const Params& p) {
  json cfg{{"equation", p.equation}, {"dim", p.dim},   {"grid", p.grid},
           {"kmax", p.kmax},         {"steps", p.steps}, {"fd-steps", p.fd_steps},
           {"T", p.T},               {"nu", p.nu},     {"battery", p.battery},
           {"eps1", p.eps1},         {"eps2", p.eps2}, {"tol", p.tol},
           };
  RunContext ctx = begin_run("check-variation", p.out, p.seed, cfg);

  const bool leray = parse_which(p.equation) == WhichEquation::kLerayAlpha;
  DriftPath u = synthetic_drift(p.dim, p.grid, p.kmax, p.T, p.steps, p.seed);
  auto battery =
      variation_battery(p.dim, p.grid, p.kmax, p.battery, u.times, p.seed + 99);
  DriftPath u_fd =
      synthetic_drift(p.dim, p.grid, p.kmax, p.T, p.fd_steps, p.seed);
  auto battery_fd = variation_battery(p.dim, p.grid, p.kmax, p.battery,
                                      u_fd.times, p.seed + 99);

  json rows = json::array();
  bool pass = true;
  for (int b = 0; b < p.battery; ++b) {
    double fv = leray ? first_variation_leray(u, battery[b], p.nu)
                      : first_variation_ch(u, battery[b], p.nu);
    double wp = leray ? weak_pairing_leray(u, battery[b], p.nu)
                      : weak_pairing_ch(u, battery[b], p.nu);
    double rel = std::abs(fv - wp) / std::max(1e-300, std::abs(fv));
    pass = pass && rel <= p.tol;

    double fv_fd = leray ? first_variation_leray(u_fd, battery_fd[b], p.nu)
                         : first_variation_ch(u_fd, battery_fd[b], p.nu);
    json fd_rows = json::array();
    double err1 = 0.0, err2 = 0.0;
    for (double eps : {p.eps1, p.eps2}) {
      double fd = fd_action_derivative(u_fd, battery_fd[b], p.nu, eps);
      double err = std::abs(fd - fv_fd);
      (eps == p.eps1 ? err1 : err2) = err;
      json fr;
      fr["eps"] = eps;
      fr["value"] = fd;
      fr["abs_err"] = err;
      fd_rows.push_back(fr);
    }
    double order = std::log(err1 / err2) / std::log(p.eps1 / p.eps2);
    json row;
    row["first_variation"] = fv;
    row["weak_pairing"] = wp;
    row["rel_gap"] = rel;
    row["fd"] = fd_rows;
    row["observed_order"] = order;
    rows.push_back(row);
  }
  json report;
  report["rows"] = rows;
  report["tol"] = p.tol;
  report["pass"] = pass;
  write_report(ctx, "variation.json", report);
  return finish_run(ctx, pass);
}

int run_criticality(const Params& p) {
  json cfg{{"equation", p.equation}, {"dim", p.dim},
           {"grid", p.grid},         {"dt", p.dt},
           {"T", p.T},               {"nu", p.nu},
           {"kmax", p.kmax},         {"amplitude", p.amplitude},
           {"battery", p.battery},   {"tol", p.tol},
           {"refine", p.refine},     {"control", !p.no_control},
           };
  RunContext ctx = begin_run("criticality", p.out, p.seed, cfg);

  WhichEquation which = parse_which(p.equation);
  auto residual_at = [&](int grid, double dt, bool perturb) {
    SpectralField u0 =
        random_divfree_field(p.dim, grid, p.kmax, p.amplitude, p.seed);
    SolverConfig scfg;
    scfg.equation = parse_equation(p.equation);
    scfg.nu = p.nu;
    scfg.dt = dt;
    DriftPath path = solve(u0, scfg, p.T);
    if (perturb) {
      SpectralField bump =
          random_divfree_field(p.dim, grid, p.kmax + 1, 0.05, p.seed + 55);
      for (auto& f : path.fields)
        for (std::size_t i = 0; i < f.raw().size(); ++i)
          f.raw()[i] += bump.raw()[i];
    }
    auto battery = variation_battery(p.dim, grid, p.kmax, p.battery,
                                     path.times, p.seed + 99);
    return criticality_check(path, battery, p.nu, which);
  };

  double base = residual_at(p.grid, p.dt, false);
  bool pass = base <= p.tol;
  json report;
  report["base_residual"] = base;
  report["tol"] = p.tol;
  if (p.refine) {
    double refined = residual_at(2 * p.grid, 0.5 * p.dt, false);
    report["refined_residual"] = refined;
    pass = pass && refined <= 0.5 * p.tol;
  }
  if (!p.no_control) {
    double control = residual_at(p.grid, p.dt, true);
    report["control_residual"] = control;
    pass = pass && control > 10.0 * p.tol;
  }
  report["pass"] = pass;
  write_report(ctx, "criticality.json", report);
  return finish_run(ctx, pass);
}

int run_minimize_action(const Params& p) {
  json cfg{{"grid", p.grid},       {"steps", p.steps}, {"T", p.T},
           {"c", p.c},             {"target", p.target},
           {"max-iterations", p.max_iterations}};
  RunContext ctx = begin_run("minimize-action", p.out, p.seed, cfg);

  DriftPath z;
  z.times = uniform_times(p.T, p.steps);
  if (p.target == "random") {
    std::vector<int> kp{1, 0}, km{-1, 0};
    for (int n = 0; n <= p.steps; ++n) {
      SpectralField f = random_divfree_field(2, p.grid, 3, 1.0, p.seed + n);
      f.at(0, kp) += Complex(0.2, 0.1);
      f.at(0, km) += Complex(0.2, -0.1);
      f.set_time(z.times[n]);
      z.fields.push_back(f);
    }
  } else if (p.target == "single-mode") {
    SpectralField f(2, p.grid);
    std::vector<int> kp{1, 0}, km{-1, 0};
    f.at(1, kp) = Complex(0.5, 0.0);
    f.at(1, km) = Complex(0.5, 0.0);
    for (int n = 0; n <= p.steps; ++n) {
      SpectralField g = f;
      g.set_time(z.times[n]);
      z.fields.push_back(g);
    }
  } else {
    throw std::invalid_argument("target must be 'random' or 'single-mode'");
  }

  MinimizeResult res = constrained_minimize(z, p.c, p.max_iterations);
  DriftPath oracle = minimizer_oracle(z, p.c);
  double h1_gap = max_path_h1_gap(res.u, oracle);
  bool pass = res.kkt_residual <= 1e-10 && h1_gap <= 1e-8 &&
              std::abs(res.constraint_value - p.c) <=
                  1e-10 * (1.0 + std::abs(p.c));

  write_field_snapshot(ctx.out_dir + "/minimizer_mid",
                       res.u.fields[res.u.fields.size() / 2],
                       {"minimizer", 0.0});
  json report;
  report["c"] = p.c;
  report["lambda"] = res.lambda;
  report["iterations"] = res.iterations;
  report["kkt_residual"] = res.kkt_residual;
  report["constraint_value"] = res.constraint_value;
  report["action"] = res.action;
  report["oracle_action"] = action(oracle);
  report["h1_gap"] = h1_gap;
  report["pass"] = pass;
  write_report(ctx, "minimize.json", report);
  return finish_run(ctx, pass);
}

int run_v_bound(const Params& p) {
  if (p.theta_max >= 1.0 || p.theta_min <= 0.0 || p.theta_min >= p.theta_max)
    throw std::invalid_argument(
        "need 0 < theta-min < theta-max < 1 for the log factor");
  json cfg{{"dim", p.dim},           {"points", p.bound_points},
           {"theta-min", p.theta_min}, {"theta-max", p.theta_max},
           {"direction", p.direction}};
  RunContext ctx = begin_run("v-bound", p.out, p.seed, cfg);

  json rows = json::array();
  double c1 = 0.0;
  bool finite = true;
  std::vector<double> ratio(p.bound_points), denom(p.bound_points),
      enclosed(p.bound_points);
  for (int j = 0; j < p.bound_points; ++j) {
    double f = p.bound_points == 1 ? 0.0 : double(j) / (p.bound_points - 1);
    double r = std::exp(std::log(p.theta_min) +
                        f * (std::log(p.theta_max) - std::log(p.theta_min)));
    SmallVec theta = zero_vec();
    theta[0] = r * std::cos(p.direction);
    if (p.dim >= 2) theta[1] = r * std::sin(p.direction);
    int kcap = std::clamp(static_cast<int>(std::ceil(8.0 / r)), 50, 600);
    VBound vb = V_function(std::span<const double>(theta.data(), p.dim),
                           p.dim, kcap);
    denom[j] = r * r * std::log(1.0 / r);
    enclosed[j] = vb.value + vb.tail_bound;
    ratio[j] = enclosed[j] / denom[j];
    finite = finite && std::isfinite(ratio[j]);
    c1 = std::max(c1, ratio[j]);
    json row;
    row["abs_theta"] = r;
    row["value"] = vb.value;
    row["tail_bound"] = vb.tail_bound;
    row["bound_denominator"] = denom[j];
    row["ratio"] = ratio[j];
    rows.push_back(row);
  }
  bool pass = finite && c1 > 0.0;
  for (int j = 0; j < p.bound_points; ++j)
    pass = pass && enclosed[j] <= c1 * denom[j] * (1.0 + 1e-12);
  json report;
  report["rows"] = rows;
  report["C1"] = c1;
  report["pass"] = pass;
  write_report(ctx, "vbound.json", report);
  return finish_run(ctx, pass);
}

// ==== option registration and config splicing ====

struct CommandSpec {
  CLI::App* sub = nullptr;
  std::set<std::string> flags;  // long names that take no value
};

void add_common(CommandSpec& cs, Params& p) {
  cs.sub->add_option("--out", p.out, "output directory");
  cs.sub->add_option("--seed", p.seed, "RNG seed");
  cs.sub->add_option("--config", p.config_path,
                     "flat key-value JSON config; explicit flags override");
}

void add_flag_of(CommandSpec& cs, const std::string& name, bool& target,
                 const std::string& help) {
  cs.sub->add_flag(name, target, help);
  cs.flags.insert(name.substr(2));
}

std::map<std::string, CommandSpec> build_commands(CLI::App& app, Params& p) {
  std::map<std::string, CommandSpec> specs;
  auto make = [&](const std::string& name, const std::string& help) {
    CommandSpec cs;
    cs.sub = app.add_subcommand(name, help);
    add_common(cs, p);
    return cs;
  };

  {
    CommandSpec cs = make("basis-report",
                          "divergence-free basis and generator constants");
    cs.sub->add_option("--dim", p.dim, "torus dimension");
    cs.sub->add_option("--trunc", p.trunc, "truncation radius N");
    cs.sub->add_option("--reg", p.reg, "weight exponent r (needs r >= d+1)");
    add_flag_of(cs, "--no-translation", p.no_translation,
                "drop the translation noise channel");
    specs["basis-report"] = cs;
  }
  {
    CommandSpec cs = make("simulate-flow",
                          "group Brownian particle flow on the torus");
    cs.sub->add_option("--dim", p.dim, "torus dimension");
    cs.sub->add_option("--trunc", p.trunc, "truncation radius N");
    cs.sub->add_option("--reg", p.reg, "weight exponent r");
    cs.sub->add_option("--nu", p.nu, "viscosity for the calibrated flow");
    cs.sub->add_option("--dt", p.dt, "time step");
    cs.sub->add_option("--T", p.T, "final time (integer multiple of dt)");
    cs.sub->add_option("--particles", p.particles, "ensemble size");
    add_flag_of(cs, "--record-noise", p.record_noise,
                "persist the noise record");
    add_flag_of(cs, "--unscaled", p.unscaled, "use the bare flow (scaling 1)");
    specs["simulate-flow"] = cs;
  }
  {
    CommandSpec cs = make("estimate-generator",
                          "one-step Monte Carlo generator estimate");
    cs.sub->add_option("--dim", p.dim, "torus dimension");
    cs.sub->add_option("--trunc", p.trunc, "truncation radius N");
    cs.sub->add_option("--reg", p.reg, "weight exponent r");
    cs.sub->add_option("--dt", p.dt, "time step");
    cs.sub->add_option("--samples", p.samples, "Monte Carlo realizations");
    cs.sub->add_option("--function", p.function,
                       "test function: cos1, sin12, const");
    cs.sub->add_option("--points", p.points, "grid points per axis");
    specs["estimate-generator"] = cs;
  }
  {
    CommandSpec cs = make("dyadic-test",
                          "coupled truncation comparison across levels");
    cs.sub->add_option("--dim", p.dim, "torus dimension");
    cs.sub->add_option("--reg", p.reg, "weight exponent r");
    cs.sub->add_option("--levels", p.levels, "levels n = 1..levels");
    cs.sub->add_option("--T", p.T, "final time");
    cs.sub->add_option("--samples", p.samples, "Monte Carlo realizations");
    cs.sub->add_option("--dt", p.dt, "time step");
    specs["dyadic-test"] = cs;
  }
  {
    CommandSpec cs = make("hoelder-test",
                          "pair separation exponent diagnostics");
    cs.sub->add_option("--dim", p.dim, "torus dimension");
    cs.sub->add_option("--trunc", p.trunc, "truncation radius N");
    cs.sub->add_option("--reg", p.reg, "weight exponent r");
    cs.sub->add_option("--T", p.T, "final time");
    cs.sub->add_option("--dt", p.dt, "time step");
    cs.sub->add_option("--pairs", p.pairs, "dyadic separation pairs");
    cs.sub->add_option("--realizations", p.realizations,
                       "independent flow realizations");
    specs["hoelder-test"] = cs;
  }
  {
    CommandSpec cs = make("solve-pde", "pseudo-spectral PDE solve");
    cs.sub->add_option("--equation", p.equation, "ch or leray");
    cs.sub->add_option("--dim", p.dim, "spatial dimension");
    cs.sub->add_option("--grid", p.grid, "grid points per axis");
    cs.sub->add_option("--nu", p.nu, "viscosity");
    cs.sub->add_option("--dt", p.dt, "time step");
    cs.sub->add_option("--T", p.T, "final time");
    cs.sub->add_option("--kmax", p.kmax, "initial data bandwidth");
    cs.sub->add_option("--amplitude", p.amplitude, "initial data amplitude");
    cs.sub->add_option("--snapshots", p.snapshots, "field snapshots to write");
    cs.sub->add_option("--init", p.init, "initial data: random or sine");
    specs["solve-pde"] = cs;
  }
  {
    CommandSpec cs = make("energy-report", "energy balance along a solve");
    cs.sub->add_option("--equation", p.equation, "ch or leray");
    cs.sub->add_option("--dim", p.dim, "spatial dimension");
    cs.sub->add_option("--grid", p.grid, "grid points per axis");
    cs.sub->add_option("--nu", p.nu, "viscosity");
    cs.sub->add_option("--dt", p.dt, "time step");
    cs.sub->add_option("--T", p.T, "final time");
    cs.sub->add_option("--kmax", p.kmax, "initial data bandwidth");
    cs.sub->add_option("--amplitude", p.amplitude, "initial data amplitude");
    cs.sub->add_option("--init", p.init, "initial data: random or sine");
    specs["energy-report"] = cs;
  }
  {
    CommandSpec cs = make("check-variation",
                          "first variation against the weak form");
    cs.sub->add_option("--equation", p.equation, "ch or leray");
    cs.sub->add_option("--dim", p.dim, "spatial dimension");
    cs.sub->add_option("--grid", p.grid, "grid points per axis");
    cs.sub->add_option("--kmax", p.kmax, "drift and variation bandwidth");
    cs.sub->add_option("--steps", p.steps, "time slices for the identity");
    cs.sub->add_option("--fd-steps", p.fd_steps,
                       "time slices for the epsilon ladder");
    cs.sub->add_option("--T", p.T, "final time");
    cs.sub->add_option("--nu", p.nu, "viscosity");
    cs.sub->add_option("--battery", p.battery, "variation battery size");
    cs.sub->add_option("--eps1", p.eps1, "coarse epsilon");
    cs.sub->add_option("--eps2", p.eps2, "fine epsilon");
    cs.sub->add_option("--tol", p.tol, "relative identity tolerance");
    specs["check-variation"] = cs;
  }
  {
    CommandSpec cs = make("criticality",
                          "solver trajectories against the variation battery");
    cs.sub->add_option("--equation", p.equation, "ch or leray");
    cs.sub->add_option("--dim", p.dim, "spatial dimension");
    cs.sub->add_option("--grid", p.grid, "grid points per axis");
    cs.sub->add_option("--dt", p.dt, "time step");
    cs.sub->add_option("--T", p.T, "final time");
    cs.sub->add_option("--nu", p.nu, "viscosity");
    cs.sub->add_option("--kmax", p.kmax, "initial data bandwidth");
    cs.sub->add_option("--amplitude", p.amplitude, "initial data amplitude");
    cs.sub->add_option("--battery", p.battery, "variation battery size");
    cs.sub->add_option("--tol", p.tol, "residual tolerance");
    add_flag_of(cs, "--refine", p.refine,
                "also check the halved-dt doubled-grid run");
    add_flag_of(cs, "--no-control", p.no_control,
                "skip the perturbed negative control");
    specs["criticality"] = cs;
  }
  {
    CommandSpec cs = make("minimize-action",
                          "constrained action minimization with oracle");
    cs.sub->add_option("--grid", p.grid, "grid points per axis");
    cs.sub->add_option("--steps", p.steps, "time slices");
    cs.sub->add_option("--T", p.T, "final time");
    cs.sub->add_option("--c", p.c, "constraint level");
    cs.sub->add_option("--target", p.target, "random or single-mode");
    cs.sub->add_option("--max-iterations", p.max_iterations,
                       "iteration cap for the solver");
    specs["minimize-action"] = cs;
  }
  {
    CommandSpec cs = make("v-bound",
                          "small-angle bound of the variance function");
    cs.sub->add_option("--dim", p.dim, "torus dimension");
    cs.sub->add_option("--points", p.bound_points, "log-spaced angle samples");
    cs.sub->add_option("--theta-min", p.theta_min, "smallest |theta|");
    cs.sub->add_option("--theta-max", p.theta_max, "largest |theta| (< 1)");
    cs.sub->add_option("--direction", p.direction, "angle of theta in plane");
    specs["v-bound"] = cs;
  }
  // config-derived arguments precede explicit flags, so last-wins gives the
  // command line priority over the config file
  for (auto& [name, cs] : specs)
    for (CLI::Option* opt : cs.sub->get_options())
      opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  return specs;
}

// Per-command protocol defaults for the fields whose baseline differs;
// applied before parsing, so config values and explicit flags still win.
void apply_command_defaults(Params& p, const std::string& command) {
  if (command == "simulate-flow") {
    p.trunc = 4;
    p.dt = 1e-2;
  } else if (command == "dyadic-test") {
    p.T = 0.5;
    p.samples = 200;
    p.dt = 2e-3;
  } else if (command == "hoelder-test") {
    p.dt = 2e-3;
  } else if (command == "solve-pde" || command == "energy-report") {
    p.nu = 0.05;
    p.dt = 2e-3;
    p.T = 0.25;
  } else if (command == "criticality") {
    p.nu = 0.05;
    p.dt = 2e-3;
    p.T = 0.25;
    p.battery = 4;
  } else if (command == "check-variation") {
    p.grid = 32;
    p.nu = 0.2;
    p.steps = 3000;
  } else if (command == "minimize-action") {
    p.grid = 16;
    p.steps = 40;
    p.T = 0.5;
  }
}

// Turns a flat config into synthetic argv entries placed before the explicit
// flags, so anything typed on the command line wins.
std::vector<std::string> config_args(const CommandSpec& cs,
                                     const std::map<std::string, std::string>& kv) {
  std::vector<std::string> args;
  for (const auto& [key, value] : kv) {
    if (key == "config" || key == "command") continue;
    if (cs.sub->get_option_no_throw("--" + key) == nullptr)
      throw std::invalid_argument("unknown config key '" + key + "'");
    if (cs.flags.count(key)) {
      if (value == "true" || value == "1")
        args.push_back("--" + key);
      else if (value != "false" && value != "0")
        throw std::invalid_argument("config key '" + key +
                                    "' must be true or false");
    } else {
      args.push_back("--" + key);
      args.push_back(value);
    }
  }
  return args;
}

int emit_error(const std::string& command, const std::string& message) {
  json err;
  err["command"] = command.empty() ? "none" : command;
  err["error"] = message;
  std::fprintf(stderr, "%s\n", err.dump().c_str());
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  Params p;
  CLI::App app{
      "Stochastic flows, spectral PDE solvers, and variational checks on the "
      "flat torus. CHVAR_WORKERS caps internal parallelism."};
  app.require_subcommand(1);
  std::map<std::string, CommandSpec> specs = build_commands(app, p);

  // Locate the subcommand and an optional --config before the real parse,
  // then splice the config-derived arguments in right after the subcommand.
  std::vector<std::string> args(argv + 1, argv + argc);
  std::string command;
  for (const std::string& a : args)
    if (!a.empty() && a[0] != '-') {
      command = a;
      break;
    }
  std::string config_path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0)
      config_path = args[i].substr(std::string("--config=").size());
  }

  try {
    apply_command_defaults(p, command);
    if (!config_path.empty()) {
      auto it = specs.find(command);
      if (it == specs.end())
        throw std::invalid_argument("config requires a known subcommand");
      std::vector<std::string> extra =
          config_args(it->second, load_flat_config(config_path));
      auto pos = std::find(args.begin(), args.end(), command);
      args.insert(pos + 1, extra.begin(), extra.end());
    }

    std::vector<const char*> cargv{argv[0]};
    for (const std::string& a : args) cargv.push_back(a.c_str());
    try {
      app.parse(static_cast<int>(cargv.size()),
                const_cast<char**>(cargv.data()));
    } catch (const CLI::CallForHelp& e) {
      return app.exit(e);
    } catch (const CLI::ParseError& e) {
      return emit_error(command, e.what());
    }

    command = app.get_subcommands().front()->get_name();
    if (command == "basis-report") return run_basis_report(p);
    if (command == "simulate-flow") return run_simulate_flow(p);
    if (command == "estimate-generator") return run_estimate_generator(p);
    if (command == "dyadic-test") return run_dyadic_test(p);
    if (command == "hoelder-test") return run_hoelder_test(p);
    if (command == "solve-pde") return run_solve_pde(p);
    if (command == "energy-report") return run_energy_report(p);
    if (command == "check-variation") return run_check_variation(p);
    if (command == "criticality") return run_criticality(p);
    if (command == "minimize-action") return run_minimize_action(p);
    if (command == "v-bound") return run_v_bound(p);
    return emit_error(command, "unknown command");
  } catch (const std::exception& e) {
    return emit_error(command, e.what());
  }
}
