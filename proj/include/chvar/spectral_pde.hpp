#pragma once

// Pseudo-spectral solvers for the viscous Camassa-Holm equation (1-D and
// d-D incompressible form) and the Leray-alpha model, evolved in momentum
// variables m = (1 - Lap) u with 2/3-rule dealiasing. Time stepping is Heun
// (order 2) with the viscous semigroup applied as an exact integrating
// factor, so pure diffusion is integrated without time error.

#include <vector>

#include "chvar/spectral_field.hpp"

namespace chvar {

enum class Equation { kCamassaHolm, kLerayAlpha };

struct SolverConfig {
  Equation equation = Equation::kCamassaHolm;
  double nu = 0.0;
  double dt = 1e-3;
  double dealias_fraction = 2.0 / 3.0;
  // Step rejection threshold on dt * max|u| * k_cutoff.
  double cfl_limit = 0.5;
};

// Full momentum tendency dm/dt, viscosity included, returned in m-units.
// 1-D: dm/dt = nu m'' - 3 u u' + 2 u' u'' + u u''', m = u - u''.
SpectralField ch_rhs_1d(const SpectralField& u, double nu);

// d-D (solenoidal u required):
// dm/dt = nu Lap m - (u . grad) m + sum_j (grad u^j) Lap u^j - grad p.
SpectralField ch_rhs_nd(const SpectralField& u, double nu,
                        double dealias_fraction = 2.0 / 3.0);

// Same with the sum_j term absent.
SpectralField leray_alpha_rhs(const SpectralField& u, double nu,
                              double dealias_fraction = 2.0 / 3.0);

// One step of size cfg.dt from u; throws on CFL violation.
SpectralField step(const SpectralField& u, const SolverConfig& cfg);

// March to time T (dt must divide T), recording every snapshot.
DriftPath solve(const SpectralField& u0, const SolverConfig& cfg, double T);

struct EnergyRow {
  double t = 0.0;
  double energy = 0.0;       // (1/2) ||u||_H1^2
  double dissipation = 0.0;  // nu (||grad u||^2 + ||Lap u||^2)
  double residual = 0.0;     // d/dt energy + dissipation (finite differences)
};

// Energy balance along a path: centered differences inside, one-sided at the
// ends (the end rows are first-order accurate only).
std::vector<EnergyRow> energy_report(const DriftPath& path, double nu);

}  // namespace chvar
