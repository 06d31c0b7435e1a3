#pragma once

// Flat rectangular torus with a half-offset uniform grid and Fourier calculus.

#include "toda/rational.hpp"

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <cstddef>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace toda {

using Field = std::vector<double>;
using Components = std::vector<Field>;
using ComplexField = std::vector<std::complex<double>>;

/// Pairwise summation; fixed association order for run-to-run reproducibility.
inline double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 32) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

inline double mean(std::span<const double> v) { return pairwise_sum(v) / static_cast<double>(v.size()); }

inline double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

/// One real Fourier mode a cos(2 pi (kx x/Lx + ky y/Ly)) + b sin(...).
struct FourierTerm {
  int kx = 0;
  int ky = 0;
  double cos_coef = 0.0;
  double sin_coef = 0.0;
};

/// Conformal factor phi of the metric e^{2 phi} |dz|^2, as a truncated Fourier series.
class ConformalFactor {
 public:
  ConformalFactor() = default;
  explicit ConformalFactor(std::vector<FourierTerm> terms) : terms_(std::move(terms)) {}

  bool empty() const { return terms_.empty(); }
  const std::vector<FourierTerm>& terms() const { return terms_; }

  double value(double x, double y, double lx, double ly) const {
    double s = 0.0;
    for (const auto& t : terms_) {
      const double arg = phase(t, x, y, lx, ly);
      s += t.cos_coef * std::cos(arg) + t.sin_coef * std::sin(arg);
    }
    return s;
  }

  double laplacian(double x, double y, double lx, double ly) const {
    double s = 0.0;
    for (const auto& t : terms_) {
      const double arg = phase(t, x, y, lx, ly);
      s -= k2(t, lx, ly) * (t.cos_coef * std::cos(arg) + t.sin_coef * std::sin(arg));
    }
    return s;
  }

  std::pair<double, double> gradient(double x, double y, double lx, double ly) const {
    double gx = 0.0;
    double gy = 0.0;
    for (const auto& t : terms_) {
      const double arg = phase(t, x, y, lx, ly);
      const double d = -t.cos_coef * std::sin(arg) + t.sin_coef * std::cos(arg);
      gx += d * 2.0 * std::numbers::pi * t.kx / lx;
      gy += d * 2.0 * std::numbers::pi * t.ky / ly;
    }
    return {gx, gy};
  }

 private:
  static double phase(const FourierTerm& t, double x, double y, double lx, double ly) {
    return 2.0 * std::numbers::pi * (t.kx * x / lx + t.ky * y / ly);
  }
  static double k2(const FourierTerm& t, double lx, double ly) {
    const double ax = 2.0 * std::numbers::pi * t.kx / lx;
    const double ay = 2.0 * std::numbers::pi * t.ky / ly;
    return ax * ax + ay * ay;
  }

  std::vector<FourierTerm> terms_;
};

/// Rectangular torus [0,Lx) x [0,Ly) sampled at x_i = (i + 1/2) Lx/Nx, y_j = (j + 1/2) Ly/Ny.
/// Fields are stored row-major: value (i, j) at index j * Nx + i.
class TorusDomain {
 public:
  TorusDomain(double lx, double ly, int nx, int ny, ConformalFactor phi = {})
      : lx_(lx), ly_(ly), nx_(nx), ny_(ny), phi_(std::move(phi)) {
    if (!(lx > 0.0) || !(ly > 0.0)) throw InvalidInput("torus periods must be positive");
    if (std::max(lx, ly) / std::min(lx, ly) > 50.0) throw InvalidInput("torus aspect ratio above 50");
    auto pow2 = [](int v) { return v >= 8 && (v & (v - 1)) == 0; };
    if (!pow2(nx) || !pow2(ny)) throw InvalidInput("grid sizes must be powers of two >= 8");
    hx_ = lx / nx;
    hy_ = ly / ny;
    phi_field_.resize(size());
    lap_phi_field_.resize(size());
    for (int j = 0; j < ny_; ++j) {
      for (int i = 0; i < nx_; ++i) {
        phi_field_[index(i, j)] = phi_.value(x(i), y(j), lx_, ly_);
        lap_phi_field_[index(i, j)] = phi_.laplacian(x(i), y(j), lx_, ly_);
      }
    }
  }

  double lx() const { return lx_; }
  double ly() const { return ly_; }
  int nx() const { return nx_; }
  int ny() const { return ny_; }
  double hx() const { return hx_; }
  double hy() const { return hy_; }
  double cell_area() const { return hx_ * hy_; }
  double area() const { return lx_ * ly_; }
  std::size_t size() const { return static_cast<std::size_t>(nx_) * static_cast<std::size_t>(ny_); }
  double x(int i) const { return (i + 0.5) * hx_; }
  double y(int j) const { return (j + 0.5) * hy_; }
  std::size_t index(int i, int j) const {
    return static_cast<std::size_t>(j) * static_cast<std::size_t>(nx_) + static_cast<std::size_t>(i);
  }

  const ConformalFactor& conformal_factor() const { return phi_; }
  bool has_conformal_factor() const { return !phi_.empty(); }
  const Field& phi() const { return phi_field_; }
  const Field& laplacian_phi() const { return lap_phi_field_; }

  /// Same torus and conformal factor at a different resolution.
  TorusDomain with_grid(int nx, int ny) const { return TorusDomain(lx_, ly_, nx, ny, phi_); }

  /// Minimal-image displacement (x - px, y - py) reduced to [-L/2, L/2).
  std::pair<double, double> displacement(double x, double y, double px, double py) const {
    return {wrap(x - px, lx_), wrap(y - py, ly_)};
  }

  static double wrap(double d, double period) {
    d = std::fmod(d, period);
    if (d < -0.5 * period) d += period;
    if (d >= 0.5 * period) d -= period;
    return d;
  }

  template <typename F>
  Field sample(F&& f) const {
    Field out(size());
    for (int j = 0; j < ny_; ++j) {
      for (int i = 0; i < nx_; ++i) out[index(i, j)] = f(x(i), y(j));
    }
    return out;
  }

 private:
  double lx_, ly_;
  int nx_, ny_;
  double hx_ = 0.0, hy_ = 0.0;
  ConformalFactor phi_;
  Field phi_field_;
  Field lap_phi_field_;
};

namespace detail {

inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};
struct PlanDestroy {
  void operator()(fftw_plan p) const { fftw_destroy_plan(p); }
};
using PlanHandle = std::unique_ptr<std::remove_pointer_t<fftw_plan>, PlanDestroy>;

/// Signed wavenumber of DFT bin `b` out of `n`.
inline int signed_bin(int b, int n) { return b <= n / 2 ? b : b - n; }

}  // namespace detail

/// Fourier multipliers on a TorusDomain grid (real-to-complex FFTW, FFTW_ESTIMATE
/// plans so results are reproducible). Not thread-safe: use one instance per thread.
class Spectral {
 public:
  explicit Spectral(const TorusDomain& domain)
      : nx_(domain.nx()), ny_(domain.ny()), ncx_(nx_ / 2 + 1), lx_(domain.lx()), ly_(domain.ly()) {
    real_.reset(static_cast<double*>(fftw_malloc(sizeof(double) * real_size())));
    spec_.reset(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * spec_size())));
    std::lock_guard lock(detail::fftw_planner_mutex());
    forward_.reset(fftw_plan_dft_r2c_2d(ny_, nx_, real_.get(), spec_.get(), FFTW_ESTIMATE));
    backward_.reset(fftw_plan_dft_c2r_2d(ny_, nx_, spec_.get(), real_.get(), FFTW_ESTIMATE));
  }

  int nx() const { return nx_; }
  int ny() const { return ny_; }

  double kx(int bin) const { return 2.0 * std::numbers::pi * bin / lx_; }
  double ky(int row) const { return 2.0 * std::numbers::pi * detail::signed_bin(row, ny_) / ly_; }

  /// Applies a real-or-complex multiplier m(kx, ky, nyquist_x, nyquist_y) to f.
  template <typename M>
  Field apply(std::span<const double> f, M&& multiplier) const {
    check(f);
    std::copy(f.begin(), f.end(), real_.get());
    fftw_execute(forward_.get());
    const double norm = 1.0 / static_cast<double>(real_size());
    for (int r = 0; r < ny_; ++r) {
      const double ky_r = ky(r);
      const bool nyq_y = (r == ny_ / 2);
      for (int b = 0; b < ncx_; ++b) {
        const std::complex<double> m = multiplier(kx(b), ky_r, b == nx_ / 2, nyq_y);
        auto& c = spec_.get()[static_cast<std::size_t>(r) * ncx_ + b];
        const std::complex<double> v(c[0], c[1]);
        const std::complex<double> out = v * m * norm;
        c[0] = out.real();
        c[1] = out.imag();
      }
    }
    fftw_execute(backward_.get());
    return Field(real_.get(), real_.get() + real_size());
  }

  Field laplacian(std::span<const double> f) const {
    return apply(f, [](double kx, double ky, bool, bool) { return std::complex<double>(-(kx * kx + ky * ky)); });
  }

  /// First derivatives; the Nyquist mode is dropped (its derivative vanishes at the nodes).
  Field dx(std::span<const double> f) const {
    return apply(f, [](double kx, double, bool nx, bool) {
      return nx ? std::complex<double>(0.0) : std::complex<double>(0.0, kx);
    });
  }
  Field dy(std::span<const double> f) const {
    return apply(f, [](double, double ky, bool, bool ny) {
      return ny ? std::complex<double>(0.0) : std::complex<double>(0.0, ky);
    });
  }

  /// (sigma - scale * Laplacian)^{-1} f, for sigma > 0 and scale >= 0.
  Field solve_shifted(std::span<const double> f, double sigma, double scale) const {
    return apply(f, [sigma, scale](double kx, double ky, bool, bool) {
      return std::complex<double>(1.0 / (sigma + scale * (kx * kx + ky * ky)));
    });
  }

  /// Mean-zero solution of Laplacian g = f - mean(f).
  Field inverse_laplacian(std::span<const double> f) const {
    return apply(f, [](double kx, double ky, bool, bool) {
      const double k2 = kx * kx + ky * ky;
      return std::complex<double>(k2 == 0.0 ? 0.0 : -1.0 / k2);
    });
  }

 private:
  std::size_t real_size() const { return static_cast<std::size_t>(nx_) * ny_; }
  std::size_t spec_size() const { return static_cast<std::size_t>(ny_) * ncx_; }
  void check(std::span<const double> f) const {
    if (f.size() != real_size()) throw InvalidInput("field size does not match the grid");
  }

  int nx_, ny_, ncx_;
  double lx_, ly_;
  std::unique_ptr<double, detail::FftwFree> real_;
  std::unique_ptr<fftw_complex, detail::FftwFree> spec_;
  detail::PlanHandle forward_;
  detail::PlanHandle backward_;
};

namespace detail {

/// Periodic interpolation kernel for an even number of samples (symmetric Nyquist term).
inline double dirichlet_kernel(double t, double period, int n) {
  const double a = std::numbers::pi * t / period;
  const double s = std::sin(a);
  if (std::abs(s) < 1e-14) return 1.0;  // t is a multiple of the period; n is even
  return std::sin(n * a) * std::cos(a) / (n * s);
}

}  // namespace detail

/// Value of the trigonometric interpolant of f at an arbitrary point.
inline double interpolate(const TorusDomain& d, std::span<const double> f, double x, double y) {
  std::vector<double> kx(d.nx()), ky(d.ny());
  for (int i = 0; i < d.nx(); ++i) kx[i] = detail::dirichlet_kernel(x - d.x(i), d.lx(), d.nx());
  for (int j = 0; j < d.ny(); ++j) ky[j] = detail::dirichlet_kernel(y - d.y(j), d.ly(), d.ny());
  double total = 0.0;
  for (int j = 0; j < d.ny(); ++j) {
    double row = 0.0;
    for (int i = 0; i < d.nx(); ++i) row += kx[i] * f[d.index(i, j)];
    total += ky[j] * row;
  }
  return total;
}

/// Trigonometric interpolant of f (on `from`) sampled on the grid of `to`.
/// Both domains must share periods; Nyquist modes are split symmetrically.
inline Field resample(const TorusDomain& from, std::span<const double> f, const TorusDomain& to) {
  if (f.size() != from.size()) throw InvalidInput("field size does not match the grid");
  const int n1x = from.nx(), n1y = from.ny(), n2x = to.nx(), n2y = to.ny();
  using cplx = std::complex<double>;
  std::vector<cplx> a(from.size());
  std::vector<cplx> b(to.size(), cplx(0.0));
  std::unique_ptr<fftw_complex, detail::FftwFree> buf1(
      static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * from.size())));
  std::unique_ptr<fftw_complex, detail::FftwFree> buf2(
      static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * to.size())));
  detail::PlanHandle fwd, bwd;
  {
    std::lock_guard lock(detail::fftw_planner_mutex());
    fwd.reset(fftw_plan_dft_2d(n1y, n1x, buf1.get(), buf1.get(), FFTW_FORWARD, FFTW_ESTIMATE));
    bwd.reset(fftw_plan_dft_2d(n2y, n2x, buf2.get(), buf2.get(), FFTW_BACKWARD, FFTW_ESTIMATE));
  }
  for (std::size_t k = 0; k < from.size(); ++k) {
    buf1.get()[k][0] = f[k];
    buf1.get()[k][1] = 0.0;
  }
  fftw_execute(fwd.get());
  // Node offsets of the two grids differ: x_from = x - h1/2, x_to = x - h2/2.
  const double shift_x = 0.5 * (to.hx() - from.hx());
  const double shift_y = 0.5 * (to.hy() - from.hy());
  auto add_mode = [&](int sx, int sy, cplx value) {
    if (std::abs(sx) > n2x / 2 || std::abs(sy) > n2y / 2) return;
    const double kx = 2.0 * std::numbers::pi * sx / from.lx();
    const double ky = 2.0 * std::numbers::pi * sy / from.ly();
    const cplx phase = std::exp(cplx(0.0, kx * shift_x + ky * shift_y));
    const int bx = (sx + n2x) % n2x;
    const int by = (sy + n2y) % n2y;
    b[static_cast<std::size_t>(by) * n2x + bx] += value * phase;
  };
  const double norm = 1.0 / static_cast<double>(from.size());
  for (int r = 0; r < n1y; ++r) {
    for (int c = 0; c < n1x; ++c) {
      const cplx v(buf1.get()[static_cast<std::size_t>(r) * n1x + c][0],
                   buf1.get()[static_cast<std::size_t>(r) * n1x + c][1]);
      const int sx = detail::signed_bin(c, n1x);
      const int sy = detail::signed_bin(r, n1y);
      const bool nyq_x = (c == n1x / 2);
      const bool nyq_y = (r == n1y / 2);
      const std::vector<int> xs = nyq_x ? std::vector<int>{sx, -sx} : std::vector<int>{sx};
      const std::vector<int> ys = nyq_y ? std::vector<int>{sy, -sy} : std::vector<int>{sy};
      const double split = (nyq_x ? 0.5 : 1.0) * (nyq_y ? 0.5 : 1.0);
      for (int mx : xs) {
        for (int my : ys) add_mode(mx, my, v * split * norm);
      }
    }
  }
  for (std::size_t k = 0; k < to.size(); ++k) {
    buf2.get()[k][0] = b[k].real();
    buf2.get()[k][1] = b[k].imag();
  }
  fftw_execute(bwd.get());
  Field out(to.size());
  for (std::size_t k = 0; k < to.size(); ++k) out[k] = buf2.get()[k][0];
  return out;
}

}  // namespace toda
