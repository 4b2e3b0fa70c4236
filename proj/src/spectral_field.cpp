#include "chvar/spectral_field.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>
#include <tuple>

#include "chvar/philox.hpp"

namespace chvar {

namespace {

std::size_t ipow(int g, int d) {
  std::size_t p = 1;
  for (int i = 0; i < d; ++i) p *= static_cast<std::size_t>(g);
  return p;
}

void require_nonempty(const SpectralField& f) {
  if (f.empty()) throw std::invalid_argument("field is empty");
}

void require_same_shape(const SpectralField& a, const SpectralField& b) {
  if (a.dim() != b.dim() || a.grid() != b.grid())
    throw std::invalid_argument("field shapes differ");
}

// FFTW plans are cached per (dim, grid, sign). FFTW_ESTIMATE keeps plan
// selection deterministic run to run; FFTW_UNALIGNED lets one plan serve
// arbitrarily allocated buffers.
fftw_plan plan_for(int dim, int grid, int sign) {
  static std::map<std::tuple<int, int, int>, fftw_plan> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_tuple(dim, grid, sign);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  std::vector<Complex> scratch(ipow(grid, dim));
  int dims[kMaxDim];
  for (int i = 0; i < dim; ++i) dims[i] = grid;
  fftw_plan p = fftw_plan_dft(
      dim, dims, reinterpret_cast<fftw_complex*>(scratch.data()),
      reinterpret_cast<fftw_complex*>(scratch.data()), sign,
      FFTW_ESTIMATE | FFTW_UNALIGNED);
  cache[key] = p;
  return p;
}

void fft_inplace(int dim, int grid, Complex* data, int sign) {
  fftw_execute_dft(plan_for(dim, grid, sign),
                   reinterpret_cast<fftw_complex*>(data),
                   reinterpret_cast<fftw_complex*>(data));
}

// Visit every mode: fn(flat_index, signed wavenumber array).
template <class F>
void for_each_mode(int dim, int grid, F&& fn) {
  std::size_t n = ipow(grid, dim);
  SmallIVec idx{0, 0, 0, 0};
  SmallIVec k{0, 0, 0, 0};
  int half = grid / 2;
  for (std::size_t f = 0; f < n; ++f) {
    fn(f, k);
    for (int ax = dim - 1; ax >= 0; --ax) {
      if (++idx[ax] < grid) {
        k[ax] = idx[ax] <= half ? idx[ax] : idx[ax] - grid;
        break;
      }
      idx[ax] = 0;
      k[ax] = 0;
    }
  }
}

// Diagonal Fourier multiplier applied to every component.
template <class F>
SpectralField multiplier(const SpectralField& f, F&& m) {
  require_nonempty(f);
  SpectralField out(f.dim(), f.grid());
  out.set_time(f.time());
  for_each_mode(f.dim(), f.grid(), [&](std::size_t flat, const SmallIVec& k) {
    double ksq = 0.0;
    for (int i = 0; i < f.dim(); ++i)
      ksq += static_cast<double>(k[i]) * k[i];
    Complex factor = m(k, ksq);
    for (int c = 0; c < f.dim(); ++c)
      out.component(c)[flat] = factor * f.component(c)[flat];
  });
  return out;
}

}  // namespace

// ==== container ====

SpectralField::SpectralField(int dim, int grid) : dim_(dim), grid_(grid) {
  if (dim < 1 || dim > 3)
    throw std::invalid_argument("field dimension must be 1, 2 or 3");
  if (grid < 4 || grid % 2 != 0)
    throw std::invalid_argument("grid size must be even and >= 4");
  points_ = ipow(grid, dim);
  coef_.assign(static_cast<std::size_t>(dim) * points_, Complex(0.0, 0.0));
}

Complex& SpectralField::at(int c, std::span<const int> k) {
  if (c < 0 || c >= dim_) throw std::invalid_argument("component out of range");
  if (static_cast<int>(k.size()) != dim_)
    throw std::invalid_argument("wavenumber rank mismatch");
  std::size_t flat = 0;
  for (int i = 0; i < dim_; ++i) {
    if (std::abs(k[i]) > grid_ / 2 - 1)
      throw std::invalid_argument("wavenumber beyond resolvable band");
    int idx = k[i] >= 0 ? k[i] : k[i] + grid_;
    flat = flat * grid_ + static_cast<std::size_t>(idx);
  }
  return coef_[c * points_ + flat];
}

Complex SpectralField::at(int c, std::span<const int> k) const {
  return const_cast<SpectralField*>(this)->at(c, k);
}

// ==== transforms ====

std::vector<double> synthesize(const SpectralField& f) {
  require_nonempty(f);
  std::vector<Complex> buf(f.raw());
  std::vector<double> out(buf.size());
  for (int c = 0; c < f.dim(); ++c) {
    Complex* block = buf.data() + c * f.points();
    fft_inplace(f.dim(), f.grid(), block, FFTW_BACKWARD);
    for (std::size_t i = 0; i < f.points(); ++i)
      out[c * f.points() + i] = block[i].real();
  }
  return out;
}

SpectralField analyze(int dim, int grid, std::span<const double> values,
                      double time) {
  SpectralField out(dim, grid);
  if (values.size() != out.raw().size())
    throw std::invalid_argument("sample count does not match dim * grid^dim");
  out.set_time(time);
  double scale = 1.0 / static_cast<double>(out.points());
  for (int c = 0; c < dim; ++c) {
    Complex* block = out.component(c);
    for (std::size_t i = 0; i < out.points(); ++i)
      block[i] = Complex(values[c * out.points() + i], 0.0);
    fft_inplace(dim, grid, block, FFTW_FORWARD);
    for (std::size_t i = 0; i < out.points(); ++i) block[i] *= scale;
  }
  zero_nyquist(out);
  return out;
}

// ==== calculus ====

SpectralField derivative(const SpectralField& f, int axis) {
  if (axis < 0 || axis >= f.dim())
    throw std::invalid_argument("derivative axis out of range");
  return multiplier(f, [axis](const SmallIVec& k, double) {
    return Complex(0.0, static_cast<double>(k[axis]));
  });
}

SpectralField laplacian(const SpectralField& f) {
  return multiplier(f, [](const SmallIVec&, double ksq) {
    return Complex(-ksq, 0.0);
  });
}

SpectralField helmholtz_apply(const SpectralField& f) {
  return multiplier(f, [](const SmallIVec&, double ksq) {
    return Complex(1.0 + ksq, 0.0);
  });
}

SpectralField helmholtz_invert(const SpectralField& f) {
  return multiplier(f, [](const SmallIVec&, double ksq) {
    return Complex(1.0 / (1.0 + ksq), 0.0);
  });
}

SpectralField leray_project(const SpectralField& f) {
  require_nonempty(f);
  SpectralField out = f;
  int d = f.dim();
  for_each_mode(d, f.grid(), [&](std::size_t flat, const SmallIVec& k) {
    double ksq = 0.0;
    for (int i = 0; i < d; ++i) ksq += static_cast<double>(k[i]) * k[i];
    if (ksq == 0.0) return;  // mean mode passes through
    Complex kdotu(0.0, 0.0);
    for (int c = 0; c < d; ++c)
      kdotu += static_cast<double>(k[c]) * out.component(c)[flat];
    Complex s = kdotu / ksq;
    for (int c = 0; c < d; ++c)
      out.component(c)[flat] -= static_cast<double>(k[c]) * s;
  });
  return out;
}

void dealias(SpectralField& f, double fraction) {
  require_nonempty(f);
  if (fraction <= 0.0 || fraction > 1.0)
    throw std::invalid_argument("dealias fraction must lie in (0, 1]");
  int cutoff = static_cast<int>(fraction * (f.grid() / 2));
  int half = f.grid() / 2;
  for_each_mode(f.dim(), f.grid(), [&](std::size_t flat, const SmallIVec& k) {
    bool kill = false;
    for (int i = 0; i < f.dim(); ++i)
      if (std::abs(k[i]) > cutoff || k[i] == half) kill = true;
    if (kill)
      for (int c = 0; c < f.dim(); ++c)
        f.component(c)[flat] = Complex(0.0, 0.0);
  });
}

void zero_nyquist(SpectralField& f) {
  require_nonempty(f);
  int half = f.grid() / 2;
  for_each_mode(f.dim(), f.grid(), [&](std::size_t flat, const SmallIVec& k) {
    for (int i = 0; i < f.dim(); ++i)
      if (k[i] == half) {
        for (int c = 0; c < f.dim(); ++c)
          f.component(c)[flat] = Complex(0.0, 0.0);
        return;
      }
  });
}

double hermitian_defect(const SpectralField& f) {
  require_nonempty(f);
  int g = f.grid();
  double worst = 0.0;
  for_each_mode(f.dim(), g, [&](std::size_t flat, const SmallIVec& k) {
    std::size_t conj_flat = 0;
    for (int i = 0; i < f.dim(); ++i) {
      int idx = k[i] >= 0 ? k[i] : k[i] + g;
      int cidx = (g - idx) % g;
      conj_flat = conj_flat * g + static_cast<std::size_t>(cidx);
    }
    for (int c = 0; c < f.dim(); ++c) {
      double d = std::abs(f.component(c)[flat] -
                          std::conj(f.component(c)[conj_flat]));
      if (d > worst) worst = d;
    }
  });
  return worst;
}

void enforce_hermitian(SpectralField& f) {
  require_nonempty(f);
  int g = f.grid();
  for_each_mode(f.dim(), g, [&](std::size_t flat, const SmallIVec& k) {
    std::size_t conj_flat = 0;
    for (int i = 0; i < f.dim(); ++i) {
      int idx = k[i] >= 0 ? k[i] : k[i] + g;
      int cidx = (g - idx) % g;
      conj_flat = conj_flat * g + static_cast<std::size_t>(cidx);
    }
    if (conj_flat < flat) return;  // handle each pair once
    for (int c = 0; c < f.dim(); ++c) {
      if (conj_flat == flat) {
        f.component(c)[flat] = Complex(f.component(c)[flat].real(), 0.0);
      } else {
        Complex avg = 0.5 * (f.component(c)[flat] +
                             std::conj(f.component(c)[conj_flat]));
        f.component(c)[flat] = avg;
        f.component(c)[conj_flat] = std::conj(avg);
      }
    }
  });
}

// ==== quadratures ====

namespace {

double weighted_inner(const SpectralField& a, const SpectralField& b,
                      double w0, double w2) {
  require_nonempty(a);
  require_same_shape(a, b);
  double vol = std::pow(kTwoPi, a.dim());
  double sum = 0.0;
  for_each_mode(a.dim(), a.grid(), [&](std::size_t flat, const SmallIVec& k) {
    double ksq = 0.0;
    for (int i = 0; i < a.dim(); ++i)
      ksq += static_cast<double>(k[i]) * k[i];
    double w = w0 + w2 * ksq;
    for (int c = 0; c < a.dim(); ++c)
      sum += w * (a.component(c)[flat] * std::conj(b.component(c)[flat])).real();
  });
  return vol * sum;
}

double weighted_norm_sq(const SpectralField& a, double w0, double w2,
                        double w4) {
  require_nonempty(a);
  double vol = std::pow(kTwoPi, a.dim());
  double sum = 0.0;
  for_each_mode(a.dim(), a.grid(), [&](std::size_t flat, const SmallIVec& k) {
    double ksq = 0.0;
    for (int i = 0; i < a.dim(); ++i)
      ksq += static_cast<double>(k[i]) * k[i];
    double w = w0 + w2 * ksq + w4 * ksq * ksq;
    for (int c = 0; c < a.dim(); ++c)
      sum += w * std::norm(a.component(c)[flat]);
  });
  return vol * sum;
}

}  // namespace

double l2_inner(const SpectralField& a, const SpectralField& b) {
  return weighted_inner(a, b, 1.0, 0.0);
}
double h1_inner(const SpectralField& a, const SpectralField& b) {
  return weighted_inner(a, b, 1.0, 1.0);
}
double l2_norm_sq(const SpectralField& a) {
  return weighted_norm_sq(a, 1.0, 0.0, 0.0);
}
double h1_norm_sq(const SpectralField& a) {
  return weighted_norm_sq(a, 1.0, 1.0, 0.0);
}
double grad_norm_sq(const SpectralField& a) {
  return weighted_norm_sq(a, 0.0, 1.0, 0.0);
}
double lap_norm_sq(const SpectralField& a) {
  return weighted_norm_sq(a, 0.0, 0.0, 1.0);
}

double max_divergence(const SpectralField& f) {
  require_nonempty(f);
  std::vector<Complex> div(f.points(), Complex(0.0, 0.0));
  for_each_mode(f.dim(), f.grid(), [&](std::size_t flat, const SmallIVec& k) {
    Complex s(0.0, 0.0);
    for (int c = 0; c < f.dim(); ++c)
      s += Complex(0.0, static_cast<double>(k[c])) * f.component(c)[flat];
    div[flat] = s;
  });
  fft_inplace(f.dim(), f.grid(), div.data(), FFTW_BACKWARD);
  double worst = 0.0;
  for (const Complex& v : div) worst = std::max(worst, std::abs(v));
  return worst;
}

double max_abs(const SpectralField& f) {
  std::vector<double> vals = synthesize(f);
  double worst = 0.0;
  for (std::size_t i = 0; i < f.points(); ++i) {
    double s = 0.0;
    for (int c = 0; c < f.dim(); ++c) {
      double v = vals[c * f.points() + i];
      s += v * v;
    }
    worst = std::max(worst, s);
  }
  return std::sqrt(worst);
}

// ==== random fields ====

SpectralField random_divfree_field(int dim, int grid, int kmax,
                                   double amplitude, uint64_t seed) {
  if (dim < 2) throw std::invalid_argument("divergence-free fields need d >= 2");
  if (kmax < 1 || kmax > grid / 2 - 1)
    throw std::invalid_argument("kmax must lie in [1, grid/2 - 1]");
  SpectralField f(dim, grid);
  GaussianStream gs(seed);
  // Canonical half-lattice of the |k_i| <= kmax block; the conjugate mode
  // mirrors each draw so the field is real.
  SmallIVec k{0, 0, 0, 0};
  std::vector<int> kv(dim);
  for (int k0 = -kmax; k0 <= kmax; ++k0)
    for (int k1 = (dim >= 2 ? -kmax : 0); k1 <= (dim >= 2 ? kmax : 0); ++k1)
      for (int k2 = (dim >= 3 ? -kmax : 0); k2 <= (dim >= 3 ? kmax : 0);
           ++k2) {
        k = {k0, k1, k2, 0};
        int first = 0;
        for (int i = 0; i < dim && first == 0; ++i) first = k[i];
        if (first <= 0) continue;  // canonical reps only
        for (int c = 0; c < dim; ++c) kv[c] = k[c];
        for (int c = 0; c < dim; ++c) {
          auto z = gs.normal_pair(0, mode_stream_id(k, dim, c), 0);
          f.at(c, kv) = Complex(z[0], z[1]);
          for (int i = 0; i < dim; ++i) kv[i] = -kv[i];
          f.at(c, kv) = Complex(z[0], -z[1]);
          for (int i = 0; i < dim; ++i) kv[i] = -kv[i];
        }
      }
  f = leray_project(f);
  double h1 = std::sqrt(h1_norm_sq(f));
  if (h1 <= 0.0) throw std::runtime_error("random field degenerated to zero");
  double s = amplitude / h1;
  for (Complex& v : f.raw()) v *= s;
  return f;
}

// ==== trig evaluation ====

SmallVec TrigPoly::eval(std::span<const double> theta) const {
  SmallVec out = mean;
  for (const Term& t : terms) {
    double kth = 0.0;
    for (int i = 0; i < dim; ++i) kth += t.k[i] * theta[i];
    double c = std::cos(kth), s = std::sin(kth);
    for (int i = 0; i < dim; ++i)
      out[i] += t.coef_cos[i] * c + t.coef_sin[i] * s;
  }
  return out;
}

TrigPoly TrigPoly::from_field(const SpectralField& f, double drop_tol) {
  require_nonempty(f);
  TrigPoly poly;
  poly.dim = f.dim();
  poly.mean = zero_vec();
  for (int c = 0; c < f.dim(); ++c)
    poly.mean[c] = f.component(c)[0].real();
  for_each_mode(f.dim(), f.grid(), [&](std::size_t flat, const SmallIVec& k) {
    int first = 0;
    for (int i = 0; i < f.dim() && first == 0; ++i) first = k[i];
    if (first <= 0) return;  // canonical half only; k = 0 handled above
    Term t;
    t.k = k;
    double biggest = 0.0;
    for (int c = 0; c < f.dim(); ++c) {
      Complex u = f.component(c)[flat];
      t.coef_cos[c] = 2.0 * u.real();
      t.coef_sin[c] = -2.0 * u.imag();
      biggest = std::max({biggest, std::abs(t.coef_cos[c]),
                          std::abs(t.coef_sin[c])});
    }
    if (biggest > drop_tol) poly.terms.push_back(t);
  });
  return poly;
}

TrigPoly TrigPoly::constant(int dim, const SmallVec& value) {
  TrigPoly poly;
  poly.dim = dim;
  poly.mean = value;
  return poly;
}

// ==== drift paths ====

double DriftPath::dt() const {
  return times.size() >= 2 ? times[1] - times[0] : 0.0;
}

void DriftPath::validate() const {
  if (times.empty() || times.size() != fields.size())
    throw std::invalid_argument("drift path needs matching times and fields");
  for (std::size_t i = 1; i < times.size(); ++i) {
    double step = times[i] - times[i - 1];
    if (step <= 0.0) throw std::invalid_argument("times must ascend");
    if (std::abs(step - dt()) > 1e-9 * dt())
      throw std::invalid_argument("drift path spacing must be uniform");
    if (fields[i].dim() != fields[0].dim() ||
        fields[i].grid() != fields[0].grid())
      throw std::invalid_argument("drift path snapshots must share shape");
  }
}

DriftSampler::DriftSampler(const DriftPath& path, double drop_tol) {
  path.validate();
  dim_ = path.fields[0].dim();
  t0_ = path.times.front();
  dt_ = path.dt();
  polys_.reserve(path.fields.size());
  for (const SpectralField& f : path.fields)
    polys_.push_back(TrigPoly::from_field(f, drop_tol));
}

DriftSampler::DriftSampler(TrigPoly constant_field)
    : dim_(constant_field.dim) {
  polys_.push_back(std::move(constant_field));
}

SmallVec DriftSampler::eval(double t, std::span<const double> theta) const {
  if (polys_.size() == 1) return polys_[0].eval(theta);
  double s = (t - t0_) / dt_;
  double smax = static_cast<double>(polys_.size() - 1);
  if (s <= 0.0) return polys_.front().eval(theta);
  if (s >= smax) return polys_.back().eval(theta);
  std::size_t i = static_cast<std::size_t>(s);
  double w = s - static_cast<double>(i);
  SmallVec lo = polys_[i].eval(theta);
  if (w < 1e-12) return lo;
  SmallVec hi = polys_[i + 1].eval(theta);
  for (int c = 0; c < dim_; ++c) lo[c] = (1.0 - w) * lo[c] + w * hi[c];
  return lo;
}

}  // namespace chvar
