#include "chvar/spectral_pde.hpp"

#include <cmath>
#include <vector>

#include "doctest.h"

using namespace chvar;

namespace {

// u = a1 sin(x) + a2 cos(2x) as a 1-D spectral field.
SpectralField sine_profile_1d(int grid, double a1, double a2) {
  SpectralField u(1, grid);
  std::vector<int> k1{1}, m1{-1}, k2{2}, m2{-2};
  u.at(0, k1) = Complex(0.0, -0.5 * a1);
  u.at(0, m1) = Complex(0.0, 0.5 * a1);
  u.at(0, k2) = Complex(0.5 * a2, 0.0);
  u.at(0, m2) = Complex(0.5 * a2, 0.0);
  return u;
}

// eps * (0, 1) cos(theta1) on the 2-torus.
SpectralField single_mode_2d(int grid, double eps) {
  SpectralField u(2, grid);
  std::vector<int> kp{1, 0}, km{-1, 0};
  u.at(1, kp) = Complex(0.5 * eps, 0.0);
  u.at(1, km) = Complex(0.5 * eps, 0.0);
  return u;
}

// Zero-pad a d=2 field onto a finer grid (same coefficients, exact samples).
SpectralField pad_to(const SpectralField& f, int fine_grid) {
  SpectralField out(f.dim(), fine_grid);
  out.set_time(f.time());
  int band = f.grid() / 2 - 1;
  std::vector<int> k(2);
  for (int k0 = -band; k0 <= band; ++k0)
    for (int k1 = -band; k1 <= band; ++k1) {
      k[0] = k0;
      k[1] = k1;
      for (int c = 0; c < f.dim(); ++c) out.at(c, k) = f.at(c, k);
    }
  return out;
}

// 4th-order periodic central differences on a scalar 2-D grid array.
std::vector<double> fd_deriv_2d(const std::vector<double>& v, int G, int axis) {
  double h = kTwoPi / G;
  std::vector<double> out(v.size());
  auto at = [&](int i0, int i1) {
    i0 = (i0 % G + G) % G;
    i1 = (i1 % G + G) % G;
    return v[static_cast<std::size_t>(i0) * G + i1];
  };
  for (int i0 = 0; i0 < G; ++i0)
    for (int i1 = 0; i1 < G; ++i1) {
      double m2, m1, p1, p2;
      if (axis == 0) {
        m2 = at(i0 - 2, i1), m1 = at(i0 - 1, i1);
        p1 = at(i0 + 1, i1), p2 = at(i0 + 2, i1);
      } else {
        m2 = at(i0, i1 - 2), m1 = at(i0, i1 - 1);
        p1 = at(i0, i1 + 1), p2 = at(i0, i1 + 2);
      }
      out[static_cast<std::size_t>(i0) * G + i1] =
          (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * h);
    }
  return out;
}

std::vector<double> fd_second_2d(const std::vector<double>& v, int G,
                                 int axis) {
  double h = kTwoPi / G;
  std::vector<double> out(v.size());
  auto at = [&](int i0, int i1) {
    i0 = (i0 % G + G) % G;
    i1 = (i1 % G + G) % G;
    return v[static_cast<std::size_t>(i0) * G + i1];
  };
  for (int i0 = 0; i0 < G; ++i0)
    for (int i1 = 0; i1 < G; ++i1) {
      double c = at(i0, i1), m2, m1, p1, p2;
      if (axis == 0) {
        m2 = at(i0 - 2, i1), m1 = at(i0 - 1, i1);
        p1 = at(i0 + 1, i1), p2 = at(i0 + 2, i1);
      } else {
        m2 = at(i0, i1 - 2), m1 = at(i0, i1 - 1);
        p1 = at(i0, i1 + 1), p2 = at(i0, i1 + 2);
      }
      out[static_cast<std::size_t>(i0) * G + i1] =
          (-m2 + 16.0 * m1 - 30.0 * c + 16.0 * p1 - p2) / (12.0 * h * h);
    }
  return out;
}

double max_coef_diff(const SpectralField& a, const SpectralField& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.raw().size(); ++i)
    worst = std::max(worst, std::abs(a.raw()[i] - b.raw()[i]));
  return worst;
}

// Real-space finite-difference oracle for the d=2 momentum tendency,
// evaluated on a fine grid and reported as Fourier coefficients.
SpectralField nd_oracle(const SpectralField& u_coarse, double nu,
                        bool include_stretch, int fine) {
  SpectralField uf = pad_to(u_coarse, fine);
  std::size_t n = uf.points();
  std::vector<double> ru = synthesize(uf);
  std::vector<double> u0(ru.begin(), ru.begin() + n);
  std::vector<double> u1(ru.begin() + n, ru.end());

  auto lap = [&](const std::vector<double>& v) {
    auto a = fd_second_2d(v, fine, 0);
    auto b = fd_second_2d(v, fine, 1);
    for (std::size_t i = 0; i < v.size(); ++i) a[i] += b[i];
    return a;
  };
  auto lap0 = lap(u0), lap1 = lap(u1);
  std::vector<double> m0(n), m1(n);
  for (std::size_t i = 0; i < n; ++i) {
    m0[i] = u0[i] - lap0[i];
    m1[i] = u1[i] - lap1[i];
  }
  auto d0m0 = fd_deriv_2d(m0, fine, 0), d1m0 = fd_deriv_2d(m0, fine, 1);
  auto d0m1 = fd_deriv_2d(m1, fine, 0), d1m1 = fd_deriv_2d(m1, fine, 1);
  auto d0u0 = fd_deriv_2d(u0, fine, 0), d1u0 = fd_deriv_2d(u0, fine, 1);
  auto d0u1 = fd_deriv_2d(u1, fine, 0), d1u1 = fd_deriv_2d(u1, fine, 1);

  std::vector<double> w(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    double adv0 = u0[i] * d0m0[i] + u1[i] * d1m0[i];
    double adv1 = u0[i] * d0m1[i] + u1[i] * d1m1[i];
    double s0 = 0.0, s1 = 0.0;
    if (include_stretch) {
      s0 = d0u0[i] * lap0[i] + d0u1[i] * lap1[i];
      s1 = d1u0[i] * lap0[i] + d1u1[i] * lap1[i];
    }
    w[i] = -adv0 + s0;
    w[n + i] = -adv1 + s1;
  }
  SpectralField nl = analyze(2, fine, w);
  // independent projector + viscosity, coefficient by coefficient
  SpectralField out(2, fine);
  int band = u_coarse.grid() / 2 - 1;
  std::vector<int> k(2);
  for (int k0 = -band; k0 <= band; ++k0)
    for (int k1 = -band; k1 <= band; ++k1) {
      k[0] = k0;
      k[1] = k1;
      double ksq = static_cast<double>(k0) * k0 + static_cast<double>(k1) * k1;
      Complex a = nl.at(0, k), b = nl.at(1, k);
      if (ksq > 0.0) {
        Complex kd = (static_cast<double>(k0) * a + static_cast<double>(k1) * b) / ksq;
        a -= static_cast<double>(k0) * kd;
        b -= static_cast<double>(k1) * kd;
      }
      Complex visc = Complex(-nu * ksq * (1.0 + ksq), 0.0);
      out.at(0, k) = a + visc * uf.at(0, k);
      out.at(1, k) = b + visc * uf.at(1, k);
    }
  return out;
}

}  // namespace

TEST_CASE("ch_rhs_1d: constants are stationary") {
  SpectralField u(1, 32);
  u.component(0)[0] = Complex(0.7, 0.0);
  auto rhs = ch_rhs_1d(u, 0.5);
  for (const Complex& v : rhs.raw()) CHECK(std::abs(v) < 1e-15);
  CHECK_THROWS_AS(ch_rhs_1d(single_mode_2d(16, 0.1), 0.0),
                  std::invalid_argument);
}

TEST_CASE("ch_rhs_1d: closed form for a single sine mode") {
  // u = e sin(x): dm/dt = -2 nu e sin(x) - 3 e^2 sin(2x)
  double e = 0.3, nu = 0.4;
  SpectralField u = sine_profile_1d(64, e, 0.0);
  auto rhs = ch_rhs_1d(u, nu);
  SpectralField expect(1, 64);
  std::vector<int> k1{1}, m1{-1}, k2{2}, m2{-2};
  expect.at(0, k1) = Complex(0.0, nu * e);
  expect.at(0, m1) = Complex(0.0, -nu * e);
  expect.at(0, k2) = Complex(0.0, 1.5 * e * e);
  expect.at(0, m2) = Complex(0.0, -1.5 * e * e);
  CHECK(max_coef_diff(rhs, expect) < 1e-14);
}

TEST_CASE("ch_rhs_1d matches a real-space finite-difference oracle") {
  int G = 4096;
  double nu = 0.3;
  SpectralField u = sine_profile_1d(G, 1.0, 0.0);
  auto lib = synthesize(ch_rhs_1d(u, nu));

  // oracle: second-order periodic stencils on samples of sin. Extended
  // precision keeps the repeated 1/h^2 divisions clear of the double
  // roundoff floor, and the 2 pi constant must carry long double accuracy
  // too: any periodicity seam in the samples at j = 0 is amplified by the
  // composed second differences (1/h^4, about 2e4 at this grid).
  using ld = long double;
  constexpr ld two_pi_l = 6.28318530717958647692528676655900577L;
  ld hl = two_pi_l / G;
  std::vector<ld> us(G);
  for (int j = 0; j < G; ++j) us[j] = sinl(two_pi_l * j / G);
  auto atj = [&](const std::vector<ld>& v, int j) {
    return v[(j % G + G) % G];
  };
  std::vector<ld> d1(G), d2(G), d3(G), m(G), d2m(G), oracle(G);
  for (int j = 0; j < G; ++j) {
    d1[j] = (atj(us, j + 1) - atj(us, j - 1)) / (2.0L * hl);
    d2[j] = (atj(us, j + 1) - 2.0L * us[j] + atj(us, j - 1)) / (hl * hl);
    d3[j] = (atj(us, j + 2) - 2.0L * atj(us, j + 1) + 2.0L * atj(us, j - 1) -
             atj(us, j - 2)) /
            (2.0L * hl * hl * hl);
  }
  for (int j = 0; j < G; ++j) m[j] = us[j] - d2[j];
  for (int j = 0; j < G; ++j)
    d2m[j] = (atj(m, j + 1) - 2.0L * m[j] + atj(m, j - 1)) / (hl * hl);
  double scale = 0.0;
  for (int j = 0; j < G; ++j) {
    oracle[j] = nu * d2m[j] - 3.0L * us[j] * d1[j] + 2.0L * d1[j] * d2[j] +
                us[j] * d3[j];
    scale = std::max(scale, static_cast<double>(fabsl(oracle[j])));
  }
  double worst = 0.0;
  for (int j = 0; j < G; ++j)
    worst = std::max(
        worst, static_cast<double>(fabsl(static_cast<ld>(lib[j]) - oracle[j])));
  CHECK(worst / scale < 1e-6);
}

TEST_CASE("ch_rhs_nd: single-mode stretch term is a pure gradient") {
  // u = e (0,1) cos(x): advection vanishes, the stretch term projects away,
  // leaving exactly the viscous tendency -2 nu uhat.
  double e = 0.3, nu = 0.25;
  SpectralField u = single_mode_2d(32, e);
  auto rhs = ch_rhs_nd(u, nu);
  SpectralField expect = u;
  for (Complex& v : expect.raw()) v *= -2.0 * nu;
  CHECK(max_coef_diff(rhs, expect) < 1e-14);
  auto inviscid = ch_rhs_nd(u, 0.0);
  for (const Complex& v : inviscid.raw()) CHECK(std::abs(v) < 1e-14);
}

TEST_CASE("nd tendencies match the fine-grid finite-difference oracle") {
  double nu = 0.2;
  auto u = random_divfree_field(2, 48, 3, 0.8, 21);
  int fine = 1024, band = 8;
  std::vector<int> k(2);

  auto check = [&](const SpectralField& lib, const SpectralField& oracle) {
    double scale = 0.0, worst = 0.0;
    for (int k0 = -band; k0 <= band; ++k0)
      for (int k1 = -band; k1 <= band; ++k1) {
        k[0] = k0;
        k[1] = k1;
        for (int c = 0; c < 2; ++c) {
          scale = std::max(scale, std::abs(oracle.at(c, k)));
          worst = std::max(worst, std::abs(oracle.at(c, k) - lib.at(c, k)));
        }
      }
    CHECK(scale > 1e-3);  // the comparison has content
    CHECK(worst / scale < 1e-6);
  };
  check(ch_rhs_nd(u, nu), nd_oracle(u, nu, true, fine));
  check(leray_alpha_rhs(u, nu), nd_oracle(u, nu, false, fine));

  // the two tendencies differ exactly by the projected stretch term
  auto diff_lib = ch_rhs_nd(u, nu);
  auto lf = leray_alpha_rhs(u, nu);
  for (std::size_t i = 0; i < diff_lib.raw().size(); ++i)
    diff_lib.raw()[i] -= lf.raw()[i];
  auto stretch_only = nd_oracle(u, 0.0, true, fine);
  auto advection_only = nd_oracle(u, 0.0, false, fine);
  for (std::size_t i = 0; i < stretch_only.raw().size(); ++i)
    stretch_only.raw()[i] -= advection_only.raw()[i];
  check(diff_lib, stretch_only);
}

TEST_CASE("nd tendencies validate their input") {
  SpectralField bad(2, 32);
  std::vector<int> kp{2, 1}, km{-2, -1};
  bad.at(0, kp) = Complex(0.4, 0.0);  // divergence is nonzero
  bad.at(0, km) = Complex(0.4, 0.0);
  CHECK_THROWS_AS(ch_rhs_nd(bad, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(leray_alpha_rhs(bad, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(ch_rhs_nd(sine_profile_1d(32, 0.1, 0.0), 0.1),
                  std::invalid_argument);
  // rhs of a valid field is itself divergence free
  auto u = random_divfree_field(2, 32, 3, 0.5, 9);
  CHECK(max_divergence(ch_rhs_nd(u, 0.3)) < 1e-12);
}

TEST_CASE("step reproduces the heat semigroup on near-linear data") {
  SolverConfig cfg;
  cfg.nu = 1.0;
  cfg.dt = 1e-3;
  // 1-D, tiny amplitude: nonlinear feedback on mode 1 is O(amp^3)
  SpectralField u = sine_profile_1d(64, 1e-6, 0.0);
  auto path = solve(u, cfg, 0.1);
  std::vector<int> k1{1};
  double got = path.fields.back().at(0, k1).imag();
  double want = u.at(0, k1).imag() * std::exp(-0.1);
  CHECK(std::abs(got / want - 1.0) < 1e-10);

  // d=2 single mode: the nonlinearity vanishes identically, decay is exact
  SolverConfig cfg2;
  cfg2.nu = 0.5;
  cfg2.dt = 2e-3;
  SpectralField u2 = single_mode_2d(32, 0.4);
  auto path2 = solve(u2, cfg2, 0.2);
  std::vector<int> k10{1, 0};
  double got2 = path2.fields.back().at(1, k10).real();
  double want2 = 0.2 * std::exp(-0.5 * 0.2);
  CHECK(std::abs(got2 / want2 - 1.0) < 1e-12);
}

TEST_CASE("step rejects CFL violations, solve rejects bad horizons") {
  SolverConfig cfg;
  cfg.dt = 0.1;
  auto u = random_divfree_field(2, 64, 4, 40.0, 3);
  CHECK_THROWS_AS(step(u, cfg), std::runtime_error);

  SolverConfig ok;
  ok.dt = 1e-3;
  auto small = random_divfree_field(2, 32, 3, 0.3, 3);
  CHECK_THROWS_AS(solve(small, ok, 0.00123456), std::invalid_argument);
  CHECK_THROWS_AS(solve(small, ok, -1.0), std::invalid_argument);
  auto path = solve(small, ok, 0.01);
  CHECK(path.times.size() == 11);
  CHECK(path.times.back() == doctest::Approx(0.01).epsilon(1e-12));
}

TEST_CASE("inviscid 1-D evolution conserves the H1 energy") {
  SolverConfig cfg;
  cfg.nu = 0.0;
  cfg.dt = 2.5e-4;
  SpectralField u = sine_profile_1d(128, 0.2, 0.1);
  auto path = solve(u, cfg, 0.25);
  double e0 = h1_norm_sq(path.fields.front());
  double worst = 0.0;
  for (const auto& f : path.fields)
    worst = std::max(worst, std::abs(h1_norm_sq(f) - e0) / e0);
  CHECK(worst < 1e-8);
}

TEST_CASE("viscous 1-D self-convergence at order two") {
  SpectralField u = sine_profile_1d(32, 0.4, 0.2);
  auto run = [&](double dt) {
    SolverConfig cfg;
    cfg.nu = 0.05;
    cfg.dt = dt;
    return solve(u, cfg, 0.5).fields.back();
  };
  auto ref = run(2.5e-4);
  auto err = [&](const SpectralField& f) {
    SpectralField d = f;
    for (std::size_t i = 0; i < d.raw().size(); ++i)
      d.raw()[i] -= ref.raw()[i];
    return std::sqrt(l2_norm_sq(d));
  };
  double e1 = err(run(4e-3));
  double e2 = err(run(2e-3));
  double order = std::log2(e1 / e2);
  CHECK(order > 1.8);
  CHECK(order < 2.3);
}

TEST_CASE("energy report: monotone decay and small residual when viscous") {
  SolverConfig cfg;
  cfg.nu = 0.1;
  cfg.dt = 1e-3;
  auto u = random_divfree_field(2, 32, 2, 0.3, 17);
  auto path = solve(u, cfg, 0.2);
  auto rows = energy_report(path, cfg.nu);
  REQUIRE(rows.size() == path.times.size());
  for (std::size_t i = 1; i < rows.size(); ++i)
    CHECK(rows[i].energy < rows[i - 1].energy);
  double worst = 0.0;
  for (std::size_t i = 1; i + 1 < rows.size(); ++i)
    worst = std::max(worst, std::abs(rows[i].residual));
  CHECK(worst < 1e-6);
  CHECK(max_divergence(path.fields.back()) < 1e-12);

  // same horizon under leray-alpha: energy still shrinks at low amplitude
  SolverConfig lcfg = cfg;
  lcfg.equation = Equation::kLerayAlpha;
  auto lrows = energy_report(solve(u, lcfg, 0.2), lcfg.nu);
  CHECK(lrows.back().energy < lrows.front().energy);

  // zero field: all rows vanish
  DriftPath zp;
  zp.times = {0.0, 1e-3};
  zp.fields = {SpectralField(2, 16), SpectralField(2, 16)};
  for (const auto& row : energy_report(zp, 0.5)) {
    CHECK(row.energy == 0.0);
    CHECK(row.residual == 0.0);
  }
}
