#include "chvar/variational.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace chvar {

namespace {

SpectralField scaled(const SpectralField& f, double s) {
  SpectralField out = f;
  for (Complex& c : out.raw()) c *= s;
  return out;
}

void add_scaled(SpectralField& into, const SpectralField& f, double s) {
  for (std::size_t i = 0; i < into.raw().size(); ++i)
    into.raw()[i] += s * f.raw()[i];
}

// (a . grad) b on the grid, no dealiasing: callers keep the bands narrow
// enough that every product is representable.
SpectralField advect(const SpectralField& a, const SpectralField& b) {
  const int d = a.dim(), G = a.grid();
  const std::size_t P = a.points();
  std::vector<double> as = synthesize(a);
  std::vector<double> out(static_cast<std::size_t>(d) * P, 0.0);
  for (int l = 0; l < d; ++l) {
    std::vector<double> db = synthesize(derivative(b, l));
    for (int i = 0; i < d; ++i)
      for (std::size_t j = 0; j < P; ++j)
        out[i * P + j] += as[l * P + j] * db[i * P + j];
  }
  return analyze(d, G, out, b.time());
}

// sum_j grad u^j Lap u^j on the grid.
SpectralField stretch_sum(const SpectralField& u) {
  const int d = u.dim(), G = u.grid();
  const std::size_t P = u.points();
  std::vector<double> lap = synthesize(laplacian(u));
  std::vector<double> out(static_cast<std::size_t>(d) * P, 0.0);
  for (int i = 0; i < d; ++i) {
    std::vector<double> du = synthesize(derivative(u, i));
    for (int jj = 0; jj < d; ++jj)
      for (std::size_t j = 0; j < P; ++j)
        out[i * P + j] += du[jj * P + j] * lap[jj * P + j];
  }
  return analyze(d, G, out, u.time());
}

std::vector<double> trapezoid_weights(const std::vector<double>& times) {
  if (times.size() < 2)
    throw std::invalid_argument("need at least two time samples");
  double dt = times[1] - times[0];
  std::vector<double> w(times.size(), dt);
  w.front() = 0.5 * dt;
  w.back() = 0.5 * dt;
  return w;
}

void require_matching(const DriftPath& u, const VariationField& v) {
  if (u.times.size() != v.times.size())
    throw std::invalid_argument("drift and variation time grids differ");
  for (std::size_t n = 0; n < u.times.size(); ++n)
    if (std::abs(u.times[n] - v.times[n]) > 1e-12)
      throw std::invalid_argument("drift and variation time grids differ");
  if (u.fields.front().grid() != v.fields.front().grid() ||
      u.fields.front().dim() != v.fields.front().dim())
    throw std::invalid_argument("drift and variation shapes differ");
}

// Second-order time derivative of a path at slice n.
SpectralField path_rate(const std::vector<SpectralField>& f, double dt,
                        std::size_t n) {
  std::size_t last = f.size() - 1;
  SpectralField out = f[n];
  if (n == 0) {
    for (std::size_t i = 0; i < out.raw().size(); ++i)
      out.raw()[i] = (-3.0 * f[0].raw()[i] + 4.0 * f[1].raw()[i] -
                      f[2].raw()[i]) /
                     (2.0 * dt);
  } else if (n == last) {
    for (std::size_t i = 0; i < out.raw().size(); ++i)
      out.raw()[i] = (3.0 * f[last].raw()[i] - 4.0 * f[last - 1].raw()[i] +
                      f[last - 2].raw()[i]) /
                     (2.0 * dt);
  } else {
    for (std::size_t i = 0; i < out.raw().size(); ++i)
      out.raw()[i] = (f[n + 1].raw()[i] - f[n - 1].raw()[i]) / (2.0 * dt);
  }
  return out;
}

double variation_pairing(const DriftPath& u, const VariationField& v,
                         double nu, bool include_vgradu) {
  u.validate();
  require_matching(u, v);
  std::vector<double> w = trapezoid_weights(u.times);
  double acc = 0.0;
  for (std::size_t n = 0; n < u.times.size(); ++n) {
    SpectralField dw = v.rates[n];
    add_scaled(dw, advect(u.fields[n], v.fields[n]), 1.0);
    if (include_vgradu)
      add_scaled(dw, advect(v.fields[n], u.fields[n]), -1.0);
    add_scaled(dw, laplacian(v.fields[n]), nu);
    acc += w[n] * h1_inner(dw, u.fields[n]);
  }
  return acc;
}

double weak_pairing_impl(const DriftPath& u, const VariationField& v,
                         double nu, bool include_stretch) {
  u.validate();
  require_matching(u, v);
  std::vector<double> w = trapezoid_weights(u.times);
  double dt = u.times[1] - u.times[0];
  std::vector<SpectralField> m(u.fields.size());
  for (std::size_t n = 0; n < u.fields.size(); ++n)
    m[n] = helmholtz_apply(u.fields[n]);
  double acc = 0.0;
  for (std::size_t n = 0; n < u.times.size(); ++n) {
    // end slices pair against v = 0; skip them
    if (n == 0 || n + 1 == u.times.size()) continue;
    SpectralField R = path_rate(m, dt, n);
    add_scaled(R, laplacian(m[n]), -nu);
    add_scaled(R, advect(u.fields[n], m[n]), 1.0);
    if (include_stretch) add_scaled(R, stretch_sum(u.fields[n]), -1.0);
    acc -= w[n] * l2_inner(R, v.fields[n]);
  }
  return acc;
}

// Evaluates eps * vdot at arbitrary (t, theta), exactly for separable
// variations, by linear interpolation of the stored rates otherwise.
class RateEvaluator {
 public:
  RateEvaluator(const VariationField& v, double epsilon)
      : v_(v), eps_(epsilon) {
    t0_ = v.times.front();
    T_ = v.times.back() - v.times.front();
    if (v.separable) {
      shape_poly_ = TrigPoly::from_field(v.shape);
    } else {
      polys_.reserve(v.rates.size());
      for (const auto& f : v.rates) polys_.push_back(TrigPoly::from_field(f));
    }
  }

  SmallVec eval(double t, std::span<const double> theta) const {
    if (v_.separable) {
      double adot = (std::numbers::pi / T_) *
                    std::cos(std::numbers::pi * (t - t0_) / T_);
      SmallVec val = shape_poly_.eval(theta);
      for (double& x : val) x *= eps_ * adot;
      return val;
    }
    double s = (t - t0_) / (v_.times[1] - v_.times[0]);
    int n = std::clamp(static_cast<int>(std::floor(s)), 0,
                       static_cast<int>(v_.times.size()) - 2);
    double lam = std::clamp(s - n, 0.0, 1.0);
    SmallVec a = polys_[n].eval(theta);
    SmallVec b = polys_[n + 1].eval(theta);
    for (int i = 0; i < kMaxDim; ++i)
      a[i] = eps_ * ((1.0 - lam) * a[i] + lam * b[i]);
    return a;
  }

  // eps * vdot as a field at time t, for the transport equation.
  SpectralField field(double t, int grid) const {
    if (v_.separable) {
      double adot = (std::numbers::pi / T_) *
                    std::cos(std::numbers::pi * (t - t0_) / T_);
      return scaled(v_.shape, eps_ * adot);
    }
    double s = (t - t0_) / (v_.times[1] - v_.times[0]);
    int n = std::clamp(static_cast<int>(std::floor(s)), 0,
                       static_cast<int>(v_.times.size()) - 2);
    double lam = std::clamp(s - n, 0.0, 1.0);
    SpectralField out = scaled(v_.rates[n], eps_ * (1.0 - lam));
    add_scaled(out, v_.rates[n + 1], eps_ * lam);
    (void)grid;
    return out;
  }

 private:
  const VariationField& v_;
  double eps_, t0_, T_;
  TrigPoly shape_poly_;
  std::vector<TrigPoly> polys_;
};

// Reference grid points in the synthesize layout (first axis slowest).
std::vector<SmallVec> reference_points(int d, int G) {
  std::size_t P = 1;
  for (int i = 0; i < d; ++i) P *= G;
  std::vector<SmallVec> pts(P, zero_vec());
  for (std::size_t j = 0; j < P; ++j) {
    std::size_t rem = j;
    for (int i = d - 1; i >= 0; --i) {
      pts[j][i] = kTwoPi * static_cast<double>(rem % G) / G;
      rem /= G;
    }
  }
  return pts;
}

// Transport stage: -(b . grad) psi - b, all spectral in, spectral out.
SpectralField transport_rhs(const SpectralField& psi, const SpectralField& b) {
  SpectralField out = advect(b, psi);
  dealias(out);
  for (std::size_t i = 0; i < out.raw().size(); ++i)
    out.raw()[i] = -out.raw()[i] - b.raw()[i];
  return out;
}

// Small dense inverse for the d x d deformation gradient.
void invert_matrix(double a[kMaxDim][kMaxDim], int d,
                   double inv[kMaxDim][kMaxDim]) {
  double work[kMaxDim][2 * kMaxDim];
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < 2 * d; ++j)
      work[i][j] = j < d ? a[i][j] : (j - d == i ? 1.0 : 0.0);
  for (int col = 0; col < d; ++col) {
    int piv = col;
    for (int rr = col + 1; rr < d; ++rr)
      if (std::abs(work[rr][col]) > std::abs(work[piv][col])) piv = rr;
    for (int j = 0; j < 2 * d; ++j) std::swap(work[col][j], work[piv][j]);
    double diag = work[col][col];
    for (int j = 0; j < 2 * d; ++j) work[col][j] /= diag;
    for (int rr = 0; rr < d; ++rr) {
      if (rr == col) continue;
      double fac = work[rr][col];
      for (int j = 0; j < 2 * d; ++j) work[rr][j] -= fac * work[col][j];
    }
  }
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) inv[i][j] = work[i][j + d];
}

double determinant(double a[kMaxDim][kMaxDim], int d) {
  double m[kMaxDim][kMaxDim];
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) m[i][j] = a[i][j];
  double det = 1.0;
  for (int col = 0; col < d; ++col) {
    int piv = col;
    for (int rr = col + 1; rr < d; ++rr)
      if (std::abs(m[rr][col]) > std::abs(m[piv][col])) piv = rr;
    if (piv != col) {
      for (int j = 0; j < d; ++j) std::swap(m[col][j], m[piv][j]);
      det = -det;
    }
    if (m[col][col] == 0.0) return 0.0;
    det *= m[col][col];
    for (int rr = col + 1; rr < d; ++rr) {
      double fac = m[rr][col] / m[col][col];
      for (int j = col; j < d; ++j) m[rr][j] -= fac * m[col][j];
    }
  }
  return det;
}

// Weighted inner products over paths, L2 and H1.
double path_l2(const std::vector<SpectralField>& a,
               const std::vector<SpectralField>& b,
               const std::vector<double>& w) {
  double acc = 0.0;
  for (std::size_t n = 0; n < a.size(); ++n)
    acc += w[n] * l2_inner(a[n], b[n]);
  return acc;
}

double path_h1(const std::vector<SpectralField>& a,
               const std::vector<SpectralField>& b,
               const std::vector<double>& w) {
  double acc = 0.0;
  for (std::size_t n = 0; n < a.size(); ++n)
    acc += w[n] * h1_inner(a[n], b[n]);
  return acc;
}

}  // namespace

// ==== action ====

double action(const DriftPath& u) {
  u.validate();
  std::vector<double> w = trapezoid_weights(u.times);
  double acc = 0.0;
  for (std::size_t n = 0; n < u.fields.size(); ++n)
    acc += w[n] * h1_norm_sq(u.fields[n]);
  return 0.5 * acc;
}

// ==== variations ====

void VariationField::validate() const {
  if (times.size() < 3)
    throw std::invalid_argument("variation needs at least three time samples");
  if (fields.size() != times.size() || rates.size() != times.size())
    throw std::invalid_argument("variation arrays do not match the time grid");
  double dt = times[1] - times[0];
  if (dt <= 0.0) throw std::invalid_argument("times must ascend");
  for (std::size_t n = 1; n < times.size(); ++n)
    if (std::abs(times[n] - times[n - 1] - dt) > 1e-9 * dt)
      throw std::invalid_argument("time grid must be uniform");
  double scale = 0.0;
  for (const auto& f : fields) scale = std::max(scale, l2_norm_sq(f));
  double ends = std::max(l2_norm_sq(fields.front()), l2_norm_sq(fields.back()));
  if (ends > 1e-24 * scale)
    throw std::invalid_argument("variation must vanish at both endpoints");
  for (const auto& f : fields)
    if (max_divergence(f) > 1e-8 * (1.0 + std::sqrt(scale)))
      throw std::invalid_argument("variation must be divergence free");
}

VariationField sine_envelope_variation(const SpectralField& shape,
                                       const std::vector<double>& times) {
  if (times.size() < 3)
    throw std::invalid_argument("variation needs at least three time samples");
  VariationField v;
  v.times = times;
  v.separable = true;
  v.shape = shape;
  double t0 = times.front(), T = times.back() - times.front();
  v.fields.reserve(times.size());
  v.rates.reserve(times.size());
  for (std::size_t n = 0; n < times.size(); ++n) {
    double s = std::numbers::pi * (times[n] - t0) / T;
    double a = (n == 0 || n + 1 == times.size()) ? 0.0 : std::sin(s);
    double adot = (std::numbers::pi / T) * std::cos(s);
    v.fields.push_back(scaled(shape, a));
    v.rates.push_back(scaled(shape, adot));
    v.fields.back().set_time(times[n]);
    v.rates.back().set_time(times[n]);
  }
  return v;
}

std::vector<VariationField> variation_battery(int dim, int grid, int kmax,
                                              int count,
                                              const std::vector<double>& times,
                                              uint64_t seed) {
  std::vector<VariationField> battery;
  battery.reserve(count);
  for (int i = 0; i < count; ++i) {
    SpectralField shape =
        random_divfree_field(dim, grid, kmax, 1.0, seed + 1000u * i);
    battery.push_back(sine_envelope_variation(shape, times));
  }
  return battery;
}

// ==== variation flows ====

VariationFlow variation_flow(const VariationField& v, double epsilon, int grid,
                             int substeps) {
  v.validate();
  if (substeps < 1) throw std::invalid_argument("substeps must be positive");
  if (v.fields.front().grid() != grid)
    throw std::invalid_argument("flow grid must match the variation grid");
  const int d = v.fields.front().dim();
  VariationFlow flow;
  flow.epsilon = epsilon;
  flow.dim = d;
  flow.grid = grid;
  flow.times = v.times;
  RateEvaluator rate(v, epsilon);
  std::vector<SmallVec> pts = reference_points(d, grid);
  const std::size_t P = pts.size();

  // forward: particle RK4 per grid point
  std::vector<SmallVec> pos = pts;
  std::vector<double> samples(static_cast<std::size_t>(d) * P);
  SpectralField zero(d, grid);
  flow.forward.assign(v.times.size(), zero);
  flow.inverse.assign(v.times.size(), zero);
  double dt = (v.times[1] - v.times[0]) / substeps;
  SpectralField psi(d, grid);
  for (std::size_t n = 0; n + 1 < v.times.size(); ++n) {
    for (int s = 0; s < substeps; ++s) {
      double t = v.times[n] + s * dt;
      for (std::size_t j = 0; j < P; ++j) {
        SmallVec y = pos[j];
        auto f = [&](double tt, const SmallVec& q) {
          return rate.eval(tt, std::span<const double>(q.data(), d));
        };
        SmallVec k1 = f(t, y), q2 = y;
        for (int i = 0; i < d; ++i) q2[i] += 0.5 * dt * k1[i];
        SmallVec k2 = f(t + 0.5 * dt, q2), q3 = y;
        for (int i = 0; i < d; ++i) q3[i] += 0.5 * dt * k2[i];
        SmallVec k3 = f(t + 0.5 * dt, q3), q4 = y;
        for (int i = 0; i < d; ++i) q4[i] += dt * k3[i];
        SmallVec k4 = f(t + dt, q4);
        for (int i = 0; i < d; ++i)
          pos[j][i] =
              y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      }
      // inverse: RK4 on the transport equation for psi
      SpectralField b1 = rate.field(t, grid);
      SpectralField b2 = rate.field(t + 0.5 * dt, grid);
      SpectralField b3 = rate.field(t + dt, grid);
      SpectralField r1 = transport_rhs(psi, b1);
      SpectralField p2 = psi;
      add_scaled(p2, r1, 0.5 * dt);
      SpectralField r2 = transport_rhs(p2, b2);
      SpectralField p3 = psi;
      add_scaled(p3, r2, 0.5 * dt);
      SpectralField r3 = transport_rhs(p3, b2);
      SpectralField p4 = psi;
      add_scaled(p4, r3, dt);
      SpectralField r4 = transport_rhs(p4, b3);
      add_scaled(psi, r1, dt / 6.0);
      add_scaled(psi, r2, dt / 3.0);
      add_scaled(psi, r3, dt / 3.0);
      add_scaled(psi, r4, dt / 6.0);
    }
    for (int i = 0; i < d; ++i)
      for (std::size_t j = 0; j < P; ++j)
        samples[i * P + j] = pos[j][i] - pts[j][i];
    flow.forward[n + 1] = analyze(d, grid, samples, v.times[n + 1]);
    flow.inverse[n + 1] = psi;
    flow.inverse[n + 1].set_time(v.times[n + 1]);
  }
  return flow;
}

double jacobian_defect(const VariationFlow& flow) {
  const int d = flow.dim;
  const std::size_t P = flow.forward.front().points();
  double worst = 0.0;
  for (const auto& eta : flow.forward) {
    std::vector<std::vector<double>> grads(d);
    for (int ax = 0; ax < d; ++ax)
      grads[ax] = synthesize(derivative(eta, ax));
    for (std::size_t j = 0; j < P; ++j) {
      double A[kMaxDim][kMaxDim];
      for (int i = 0; i < d; ++i)
        for (int ax = 0; ax < d; ++ax)
          A[i][ax] = (i == ax ? 1.0 : 0.0) + grads[ax][i * P + j];
      worst = std::max(worst, std::abs(determinant(A, d) - 1.0));
    }
  }
  return worst;
}

double composition_defect(const VariationFlow& flow) {
  const int d = flow.dim, G = flow.grid;
  std::vector<SmallVec> pts = reference_points(d, G);
  const std::size_t P = pts.size();
  double worst = 0.0;
  for (std::size_t n = 0; n < flow.times.size(); ++n) {
    std::vector<double> eta = synthesize(flow.forward[n]);
    TrigPoly psi = TrigPoly::from_field(flow.inverse[n]);
    for (std::size_t j = 0; j < P; ++j) {
      SmallVec x = pts[j];
      for (int i = 0; i < d; ++i) x[i] += eta[i * P + j];
      SmallVec back = psi.eval(std::span<const double>(x.data(), d));
      for (int i = 0; i < d; ++i) {
        double defect = wrap_signed(x[i] + back[i] - pts[j][i]);
        worst = std::max(worst, std::abs(defect));
      }
    }
  }
  return worst;
}

// ==== first variation and weak pairing ====

double first_variation_ch(const DriftPath& u, const VariationField& v,
                          double nu) {
  return variation_pairing(u, v, nu, true);
}

double first_variation_leray(const DriftPath& u, const VariationField& v,
                             double nu) {
  return variation_pairing(u, v, nu, false);
}

double weak_pairing_ch(const DriftPath& u, const VariationField& v,
                       double nu) {
  return weak_pairing_impl(u, v, nu, true);
}

double weak_pairing_leray(const DriftPath& u, const VariationField& v,
                          double nu) {
  return weak_pairing_impl(u, v, nu, false);
}

double criticality_check(const DriftPath& u,
                         const std::vector<VariationField>& battery, double nu,
                         WhichEquation which) {
  if (battery.empty()) throw std::invalid_argument("empty variation battery");
  double worst = 0.0;
  for (const auto& v : battery) {
    double fv = which == WhichEquation::kCamassaHolm
                    ? first_variation_ch(u, v, nu)
                    : first_variation_leray(u, v, nu);
    worst = std::max(worst, std::abs(fv));
  }
  return worst;
}

// ==== action along the perturbed path ====

double perturbed_action(const DriftPath& u, const VariationField& v, double nu,
                        double epsilon, int substeps) {
  u.validate();
  require_matching(u, v);
  const int d = u.fields.front().dim();
  const int G = u.fields.front().grid();
  VariationFlow flow = variation_flow(v, epsilon, G, substeps);
  RateEvaluator rate(v, epsilon);
  std::vector<SmallVec> pts = reference_points(d, G);
  const std::size_t P = pts.size();
  std::vector<double> w = trapezoid_weights(u.times);
  double cell = 1.0;
  for (int i = 0; i < d; ++i) cell *= kTwoPi / G;

  double acc = 0.0;
  std::vector<double> wsamp(static_cast<std::size_t>(d) * P);
  for (std::size_t n = 0; n < u.times.size(); ++n) {
    const SpectralField& eta = flow.forward[n];
    std::vector<double> es = synthesize(eta);
    std::vector<std::vector<double>> geta(d);
    for (int ax = 0; ax < d; ++ax) geta[ax] = synthesize(derivative(eta, ax));
    std::vector<double> leta = synthesize(laplacian(eta));
    std::vector<double> us = synthesize(u.fields[n]);
    // w = eps vdot(t, e) + u + (u . grad) eta + nu Lap eta, in flow coords
    for (std::size_t j = 0; j < P; ++j) {
      SmallVec y = pts[j];
      for (int i = 0; i < d; ++i) y[i] += es[i * P + j];
      SmallVec vd = rate.eval(u.times[n], std::span<const double>(y.data(), d));
      for (int i = 0; i < d; ++i) {
        double val = vd[i] + us[i * P + j] + nu * leta[i * P + j];
        for (int l = 0; l < d; ++l)
          val += us[l * P + j] * geta[l][i * P + j];
        wsamp[i * P + j] = val;
      }
    }
    SpectralField W = analyze(d, G, wsamp, u.times[n]);
    std::vector<std::vector<double>> gw(d);
    for (int ax = 0; ax < d; ++ax) gw[ax] = synthesize(derivative(W, ax));
    double slice = 0.0;
    for (std::size_t j = 0; j < P; ++j) {
      double A[kMaxDim][kMaxDim], B[kMaxDim][kMaxDim];
      for (int i = 0; i < d; ++i)
        for (int ax = 0; ax < d; ++ax)
          A[i][ax] = (i == ax ? 1.0 : 0.0) + geta[ax][i * P + j];
      double det = determinant(A, d);
      invert_matrix(A, d, B);
      double val = 0.0;
      for (int i = 0; i < d; ++i) {
        double wi = wsamp[i * P + j];
        val += wi * wi;
        for (int beta = 0; beta < d; ++beta) {
          double entry = 0.0;
          for (int ax = 0; ax < d; ++ax)
            entry += gw[ax][i * P + j] * B[ax][beta];
          val += entry * entry;
        }
      }
      slice += val * det;
    }
    acc += w[n] * slice * cell;
  }
  return 0.5 * acc;
}

double fd_action_derivative(const DriftPath& u, const VariationField& v,
                            double nu, double epsilon, int substeps) {
  if (epsilon <= 0.0) throw std::invalid_argument("epsilon must be positive");
  double plus = perturbed_action(u, v, nu, epsilon, substeps);
  double minus = perturbed_action(u, v, nu, -epsilon, substeps);
  return (plus - minus) / (2.0 * epsilon);
}

// ==== constrained minimization ====

DriftPath minimizer_oracle(const DriftPath& z, double c) {
  z.validate();
  std::vector<double> w = trapezoid_weights(z.times);
  std::vector<SpectralField> smooth(z.fields.size());
  double denom = 0.0, zsq = 0.0;
  for (std::size_t n = 0; n < z.fields.size(); ++n) {
    smooth[n] = helmholtz_invert(leray_project(z.fields[n]));
    denom += w[n] * l2_inner(smooth[n], z.fields[n]);
    zsq += w[n] * l2_norm_sq(z.fields[n]);
  }
  DriftPath u;
  u.times = z.times;
  if (c <= 0.0) {
    u.fields.assign(z.fields.size(),
                    SpectralField(z.fields.front().dim(),
                                  z.fields.front().grid()));
    for (std::size_t n = 0; n < u.fields.size(); ++n)
      u.fields[n].set_time(u.times[n]);
    return u;
  }
  if (denom <= 1e-14 * zsq)
    throw std::invalid_argument(
        "constraint is infeasible: z has no divergence-free part");
  double lambda = c / denom;
  u.fields.reserve(z.fields.size());
  for (auto& f : smooth) u.fields.push_back(scaled(f, lambda));
  for (std::size_t n = 0; n < u.fields.size(); ++n)
    u.fields[n].set_time(u.times[n]);
  return u;
}

MinimizeResult constrained_minimize(const DriftPath& z, double c,
                                    int max_iterations, double tolerance) {
  z.validate();
  const int d = z.fields.front().dim(), G = z.fields.front().grid();
  std::vector<double> w = trapezoid_weights(z.times);
  const std::size_t NT = z.fields.size();

  std::vector<SpectralField> s(NT);
  for (std::size_t n = 0; n < NT; ++n) s[n] = leray_project(z.fields[n]);
  double s_sq = path_l2(s, s, w);

  MinimizeResult out;
  out.u.times = z.times;
  if (c <= 0.0) {
    out.u.fields.assign(NT, SpectralField(d, G));
    for (std::size_t n = 0; n < NT; ++n) out.u.fields[n].set_time(z.times[n]);
    return out;
  }
  if (s_sq <= 1e-28 * std::max(1e-300, path_l2(z.fields, z.fields, w)))
    throw std::invalid_argument(
        "constraint is infeasible: z has no divergence-free part");

  // feasible start on the constraint plane
  std::vector<SpectralField> u(NT);
  double sz = path_l2(s, z.fields, w);  // equals s_sq up to roundoff
  for (std::size_t n = 0; n < NT; ++n) u[n] = scaled(s[n], c / sz);

  // conjugate gradient on the constraint tangent space: every direction is
  // the exact line-search minimizer over the Krylov space, and the short
  // spectrum of 1 - Lap on the truncated band finishes the solve before
  // roundoff can accumulate.
  auto project = [&](std::vector<SpectralField>& x) {
    double coef = path_l2(x, s, w) / s_sq;
    for (std::size_t n = 0; n < NT; ++n) add_scaled(x[n], s[n], -coef);
  };
  std::vector<SpectralField> resid_v(NT), p(NT), ap(NT);
  for (std::size_t n = 0; n < NT; ++n) {
    resid_v[n] = helmholtz_apply(u[n]);
    for (Complex& q : resid_v[n].raw()) q = -q;
  }
  project(resid_v);
  p = resid_v;
  double rr = path_l2(resid_v, resid_v, w);
  double scale = std::sqrt(path_h1(u, u, w));
  int it = 0;
  for (; it < max_iterations; ++it) {
    if (std::sqrt(rr) <= tolerance * std::max(1.0, scale)) break;
    for (std::size_t n = 0; n < NT; ++n) ap[n] = helmholtz_apply(p[n]);
    project(ap);
    double pap = path_l2(p, ap, w);
    double alpha = rr / pap;
    for (std::size_t n = 0; n < NT; ++n) {
      add_scaled(u[n], p[n], alpha);
      add_scaled(resid_v[n], ap[n], -alpha);
    }
    double rr_new = path_l2(resid_v, resid_v, w);
    double beta = rr_new / rr;
    rr = rr_new;
    for (std::size_t n = 0; n < NT; ++n) {
      SpectralField next = resid_v[n];
      add_scaled(next, p[n], beta);
      p[n] = std::move(next);
    }
  }

  // clean any roundoff drift off the constraint plane
  double cv = path_l2(u, z.fields, w);
  for (std::size_t n = 0; n < NT; ++n)
    for (Complex& q : u[n].raw()) q *= c / cv;

  for (std::size_t n = 0; n < NT; ++n) {
    u[n].set_time(z.times[n]);
    out.u.fields.push_back(u[n]);
  }
  out.iterations = it;
  std::vector<SpectralField> grad(NT);
  for (std::size_t n = 0; n < NT; ++n) grad[n] = helmholtz_apply(u[n]);
  out.lambda = path_l2(grad, s, w) / s_sq;
  std::vector<SpectralField> resid(NT);
  for (std::size_t n = 0; n < NT; ++n) {
    resid[n] = grad[n];
    add_scaled(resid[n], s[n], -out.lambda);
  }
  double rel = std::sqrt(path_l2(resid, resid, w)) /
               std::max(1e-300, std::abs(out.lambda) * std::sqrt(s_sq));
  out.kkt_residual = rel;
  out.constraint_value = path_l2(u, z.fields, w);
  out.action = 0.5 * path_h1(u, u, w);
  return out;
}

}  // namespace chvar
