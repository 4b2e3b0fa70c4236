#pragma once

// The H1 action on drift paths, admissible variations and their flows, the
// first-variation / weak-pairing identity for both equations, criticality
// checks of solver trajectories, and the linearly constrained action
// minimization with its per-mode closed form.
//
// All identity checks are exact in space when the fields are band-limited
// to kmax <= grid/6: products then stay below the representable band and
// the grid quadrature of cubic terms is alias-free. Time integrals use the
// trapezoid rule; time derivatives of a path use centered differences with
// second-order one-sided ends.

#include <cstdint>
#include <vector>

#include "chvar/spectral_field.hpp"

namespace chvar {

// ==== action ====

// (1/2) integral over [t0, t1] of |u|^2 + |grad u|^2, trapezoid in time.
double action(const DriftPath& u);

// ==== variations ====

// v(t) on the same time grid as the drift it perturbs, with the analytic
// time derivative stored alongside. Separable variations carry their shape
// so flows can evaluate vdot exactly between grid times.
struct VariationField {
  std::vector<double> times;
  std::vector<SpectralField> fields;  // v(t_n), zero at both ends
  std::vector<SpectralField> rates;   // dv/dt (t_n)
  bool separable = false;             // v = sin(pi t / T) * shape
  SpectralField shape;

  void validate() const;
};

// sin(pi t / T) envelope times a random low-mode divergence-free shape.
VariationField sine_envelope_variation(const SpectralField& shape,
                                       const std::vector<double>& times);

std::vector<VariationField> variation_battery(int dim, int grid, int kmax,
                                              int count,
                                              const std::vector<double>& times,
                                              uint64_t seed);

// ==== variation flows ====

// e_t = id + eta_t and its inverse id + psi_t, sampled as periodic
// displacement fields on the reference grid. eta solves the particle ODE
// d/dt e = eps vdot(t, e) by RK4; psi solves the transport equation
// d/dt psi + eps vdot . grad psi = -eps vdot on the grid.
struct VariationFlow {
  double epsilon = 0.0;
  int dim = 0, grid = 0;
  std::vector<double> times;
  std::vector<SpectralField> forward;
  std::vector<SpectralField> inverse;
};

VariationFlow variation_flow(const VariationField& v, double epsilon, int grid,
                             int substeps = 1);

// Max over times and grid points of |det grad e - 1| (volume defect) and of
// |e^-1(e(theta)) - theta| (composition defect).
double jacobian_defect(const VariationFlow& flow);
double composition_defect(const VariationFlow& flow);

// ==== first variation and weak pairing ====

// integral of < dw, u >_H1 dt with dw = dv/dt + (u.grad) v - (v.grad) u
// + nu Lap v; the Leray variant drops the (v.grad) u term.
double first_variation_ch(const DriftPath& u, const VariationField& v,
                          double nu);
double first_variation_leray(const DriftPath& u, const VariationField& v,
                             double nu);

// minus integral of < d/dt m - nu Lap m + (u.grad) m - stretch, v > dt with
// m = (1 - Lap) u and stretch = sum_j grad u^j Lap u^j; the Leray variant
// has no stretch term. Gradient parts pair to zero against div-free v.
double weak_pairing_ch(const DriftPath& u, const VariationField& v, double nu);
double weak_pairing_leray(const DriftPath& u, const VariationField& v,
                          double nu);

enum class WhichEquation { kCamassaHolm, kLerayAlpha };

// Max |first variation| over the battery.
double criticality_check(const DriftPath& u,
                         const std::vector<VariationField>& battery, double nu,
                         WhichEquation which);

// ==== action along the perturbed path ====

// Action of the drift transported by e_eps: with w = eps vdot(t, e) + u +
// (u.grad) eta + nu Lap eta evaluated in flow coordinates, the action is
// integrated by change of variables with det grad e and (grad e)^-1, so no
// inverse map enters.
double perturbed_action(const DriftPath& u, const VariationField& v, double nu,
                        double epsilon, int substeps = 1);

// Central difference (J(+eps) - J(-eps)) / (2 eps); converges to the first
// variation at order eps^2.
double fd_action_derivative(const DriftPath& u, const VariationField& v,
                            double nu, double epsilon, int substeps = 1);

// ==== constrained minimization ====

struct MinimizeResult {
  DriftPath u;
  double action = 0.0;
  double lambda = 0.0;            // multiplier of the active constraint
  double constraint_value = 0.0;  // integral of <u, z> over time and space
  double kkt_residual = 0.0;      // |(1-Lap)u - lambda P z| / |lambda P z|
  int iterations = 0;
};

// Minimizes the action over divergence-free paths subject to
// integral <u, z> >= c, by conjugate gradient restricted to the constraint
// plane. c <= 0 returns the zero path; z with no divergence-free part and
// c > 0 is infeasible and throws.
MinimizeResult constrained_minimize(const DriftPath& z, double c,
                                    int max_iterations = 500,
                                    double tolerance = 1e-12);

// Closed form per mode: u* = lambda (1 - Lap)^-1 P z with lambda chosen to
// activate the constraint.
DriftPath minimizer_oracle(const DriftPath& z, double c);

}  // namespace chvar
