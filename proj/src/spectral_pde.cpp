#include "chvar/spectral_pde.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace chvar {

namespace {

// Nonlinear momentum tendency only (no viscosity), dealiased.
SpectralField nonlinear_ch_1d(const SpectralField& u, double fraction) {
  std::vector<double> ru = synthesize(u);
  std::vector<double> r1 = synthesize(derivative(u, 0));
  std::vector<double> r2 = synthesize(laplacian(u));
  std::vector<double> r3 = synthesize(derivative(laplacian(u), 0));
  std::vector<double> w(ru.size());
  for (std::size_t i = 0; i < ru.size(); ++i)
    w[i] = -3.0 * ru[i] * r1[i] + 2.0 * r1[i] * r2[i] + ru[i] * r3[i];
  SpectralField out = analyze(1, u.grid(), w, u.time());
  dealias(out, fraction);
  return out;
}

void require_solenoidal(const SpectralField& u) {
  if (max_divergence(u) > 1e-8 * std::max(1.0, max_abs(u)))
    throw std::invalid_argument("velocity field must be divergence free");
}

// -(u . grad) m + include_stretch * sum_j (grad u^j) Lap u^j, dealiased and
// Leray projected (the grad p term is exactly the non-solenoidal residue).
SpectralField nonlinear_nd(const SpectralField& u, double fraction,
                           bool include_stretch) {
  int d = u.dim();
  SpectralField m = helmholtz_apply(u);
  std::vector<double> ru = synthesize(u);
  std::vector<std::vector<double>> dm(d);  // dm[a] = all comps of d_a m
  std::vector<std::vector<double>> du(d);  // du[a] = all comps of d_a u
  for (int a = 0; a < d; ++a) {
    dm[a] = synthesize(derivative(m, a));
    if (include_stretch) du[a] = synthesize(derivative(u, a));
  }
  std::vector<double> lap;
  if (include_stretch) lap = synthesize(laplacian(u));

  std::size_t n = u.points();
  std::vector<double> w(static_cast<std::size_t>(d) * n, 0.0);
  for (int i = 0; i < d; ++i)
    for (std::size_t p = 0; p < n; ++p) {
      double acc = 0.0;
      for (int a = 0; a < d; ++a) acc -= ru[a * n + p] * dm[a][i * n + p];
      if (include_stretch)
        for (int j = 0; j < d; ++j)
          acc += du[i][j * n + p] * lap[j * n + p];
      w[i * n + p] = acc;
    }
  SpectralField out = analyze(d, u.grid(), w, u.time());
  dealias(out, fraction);
  return leray_project(out);
}

SpectralField nonlinear_rhs(const SpectralField& u, const SolverConfig& cfg) {
  if (u.dim() == 1) {
    if (cfg.equation != Equation::kCamassaHolm)
      throw std::invalid_argument("leray-alpha needs dimension >= 2");
    return nonlinear_ch_1d(u, cfg.dealias_fraction);
  }
  return nonlinear_nd(u, cfg.dealias_fraction,
                      cfg.equation == Equation::kCamassaHolm);
}

// exp(-nu |k|^2 dt) multiplier applied in place.
void apply_heat_factor(SpectralField& f, double nu_dt) {
  if (nu_dt == 0.0) return;
  int d = f.dim(), g = f.grid(), half = g / 2;
  std::size_t n = f.points();
  for (std::size_t flat = 0; flat < n; ++flat) {
    double ksq = 0.0;
    std::size_t rem = flat;
    for (int ax = d - 1; ax >= 0; --ax) {
      int i = static_cast<int>(rem % g);
      rem /= g;
      int k = i <= half ? i : i - g;
      ksq += static_cast<double>(k) * k;
    }
    double e = std::exp(-nu_dt * ksq);
    for (int c = 0; c < d; ++c) f.component(c)[flat] *= e;
  }
}

void check_cfl(const SpectralField& u, const SolverConfig& cfg) {
  double speed = max_abs(u);
  int cutoff = static_cast<int>(cfg.dealias_fraction * (u.grid() / 2));
  double cfl = cfg.dt * speed * cutoff;
  if (cfl > cfg.cfl_limit)
    throw std::runtime_error(
        "CFL violation: dt * max|u| * k_cut = " + std::to_string(cfl) +
        " exceeds limit " + std::to_string(cfg.cfl_limit));
}

}  // namespace

SpectralField ch_rhs_1d(const SpectralField& u, double nu) {
  if (u.dim() != 1)
    throw std::invalid_argument("ch_rhs_1d needs a one-dimensional field");
  SpectralField out = nonlinear_ch_1d(u, 2.0 / 3.0);
  if (nu != 0.0) {
    SpectralField visc = laplacian(helmholtz_apply(u));
    for (std::size_t i = 0; i < out.raw().size(); ++i)
      out.raw()[i] += nu * visc.raw()[i];
  }
  return out;
}

SpectralField ch_rhs_nd(const SpectralField& u, double nu,
                        double dealias_fraction) {
  if (u.dim() < 2)
    throw std::invalid_argument("ch_rhs_nd needs dimension >= 2");
  require_solenoidal(u);
  SpectralField out = nonlinear_nd(u, dealias_fraction, true);
  if (nu != 0.0) {
    SpectralField visc = laplacian(helmholtz_apply(u));
    for (std::size_t i = 0; i < out.raw().size(); ++i)
      out.raw()[i] += nu * visc.raw()[i];
  }
  return out;
}

SpectralField leray_alpha_rhs(const SpectralField& u, double nu,
                              double dealias_fraction) {
  if (u.dim() < 2)
    throw std::invalid_argument("leray_alpha_rhs needs dimension >= 2");
  require_solenoidal(u);
  SpectralField out = nonlinear_nd(u, dealias_fraction, false);
  if (nu != 0.0) {
    SpectralField visc = laplacian(helmholtz_apply(u));
    for (std::size_t i = 0; i < out.raw().size(); ++i)
      out.raw()[i] += nu * visc.raw()[i];
  }
  return out;
}

SpectralField step(const SpectralField& u, const SolverConfig& cfg) {
  if (cfg.dt <= 0.0) throw std::invalid_argument("dt must be positive");
  if (cfg.nu < 0.0) throw std::invalid_argument("nu must be >= 0");
  check_cfl(u, cfg);

  double nudt = cfg.nu * cfg.dt;
  SpectralField n1 = nonlinear_rhs(u, cfg);
  SpectralField m = helmholtz_apply(u);

  // predictor: m* = E (m + dt N1)
  SpectralField mstar = m;
  for (std::size_t i = 0; i < mstar.raw().size(); ++i)
    mstar.raw()[i] += cfg.dt * n1.raw()[i];
  apply_heat_factor(mstar, nudt);
  SpectralField ustar = helmholtz_invert(mstar);
  ustar.set_time(u.time() + cfg.dt);

  // corrector: m_{n+1} = E m + (dt/2)(E N1 + N2)
  SpectralField n2 = nonlinear_rhs(ustar, cfg);
  SpectralField out = m;
  apply_heat_factor(out, nudt);
  apply_heat_factor(n1, nudt);
  for (std::size_t i = 0; i < out.raw().size(); ++i)
    out.raw()[i] += 0.5 * cfg.dt * (n1.raw()[i] + n2.raw()[i]);
  out = helmholtz_invert(out);
  dealias(out, cfg.dealias_fraction);
  out.set_time(u.time() + cfg.dt);
  return out;
}

DriftPath solve(const SpectralField& u0, const SolverConfig& cfg, double T) {
  if (T <= 0.0) throw std::invalid_argument("horizon T must be positive");
  double steps_real = T / cfg.dt;
  long steps = std::lround(steps_real);
  if (steps < 1 || std::abs(steps_real - static_cast<double>(steps)) > 1e-9)
    throw std::invalid_argument("dt must divide T");
  if (u0.dim() >= 2) require_solenoidal(u0);

  SpectralField u = u0;
  dealias(u, cfg.dealias_fraction);
  u.set_time(0.0);

  DriftPath path;
  path.times.reserve(steps + 1);
  path.fields.reserve(steps + 1);
  path.times.push_back(0.0);
  path.fields.push_back(u);
  for (long s = 0; s < steps; ++s) {
    u = step(u, cfg);
    u.set_time(cfg.dt * static_cast<double>(s + 1));
    path.times.push_back(u.time());
    path.fields.push_back(u);
  }
  return path;
}

std::vector<EnergyRow> energy_report(const DriftPath& path, double nu) {
  path.validate();
  std::size_t n = path.times.size();
  std::vector<EnergyRow> rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    rows[i].t = path.times[i];
    rows[i].energy = 0.5 * h1_norm_sq(path.fields[i]);
    rows[i].dissipation =
        nu * (grad_norm_sq(path.fields[i]) + lap_norm_sq(path.fields[i]));
  }
  if (n == 1) return rows;
  double dt = path.dt();
  for (std::size_t i = 0; i < n; ++i) {
    double dEdt;
    if (i == 0)
      dEdt = (rows[1].energy - rows[0].energy) / dt;
    else if (i == n - 1)
      dEdt = (rows[n - 1].energy - rows[n - 2].energy) / dt;
    else
      dEdt = (rows[i + 1].energy - rows[i - 1].energy) / (2.0 * dt);
    rows[i].residual = dEdt + rows[i].dissipation;
  }
  return rows;
}

}  // namespace chvar
