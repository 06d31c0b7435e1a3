#pragma once

// Green's function of the flat rectangular torus, Laplacian G = delta_0 - 1/area,
// normalized to mean zero, and the Green-regularized singular fields gamma_k, w_k.

#include "toda/strengths.hpp"
#include "toda/torus.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace toda {

/// Thrown when G is evaluated at a lattice point.
class SingularEvaluation : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

namespace detail {

// All evaluations run in a frame where the short period lies along x, so the
// nome q = exp(-pi L_long / L_short) is at most exp(-pi).
struct GreenFrame {
  double l1;  // short period
  double l2;  // long period
  bool swapped;

  GreenFrame(double lx, double ly) : l1(std::min(lx, ly)), l2(std::max(lx, ly)), swapped(lx > ly) {}

  double nome() const { return std::exp(-std::numbers::pi * l2 / l1); }

  std::pair<double, double> to_frame(double x, double y, double lx, double ly) const {
    double a = TorusDomain::wrap(x, lx);
    double b = TorusDomain::wrap(y, ly);
    if (swapped) std::swap(a, b);
    return {a, b};
  }
};

// Number of product factors needed so that q^{2m} e^{2|b|} drops below 1e-18.
inline int product_terms(double q, double b) {
  int m = 1;
  while (std::pow(q, 2 * m) * std::exp(2.0 * std::abs(b)) > 1e-18 && m < 200) ++m;
  return m;
}

}  // namespace detail

/// G at displacement (x, y); x, y may be any representatives.
inline double green_eval(double lx, double ly, double x, double y) {
  const detail::GreenFrame f(lx, ly);
  const auto [a, b] = f.to_frame(x, y, lx, ly);
  if (std::abs(a) < 1e-15 * f.l1 && std::abs(b) < 1e-15 * f.l2) {
    throw SingularEvaluation("Green's function evaluated at a lattice point");
  }
  const double pi = std::numbers::pi;
  const double q = f.nome();
  const double wr = pi * a / f.l1;
  const double wi = pi * b / f.l1;
  const double s = std::sin(wr);
  const double sh = std::sinh(wi);
  double acc = std::log(2.0) - pi * f.l2 / (4.0 * f.l1) + 0.5 * std::log(s * s + sh * sh);
  const std::complex<double> e2iw = std::exp(std::complex<double>(-2.0 * wi, 2.0 * wr));
  const std::complex<double> em2iw = std::exp(std::complex<double>(2.0 * wi, -2.0 * wr));
  const int terms = detail::product_terms(q, wi);
  for (int m = 1; m <= terms; ++m) {
    const double qm = std::pow(q, 2 * m);
    acc += std::log(std::abs(1.0 - qm * e2iw)) + std::log(std::abs(1.0 - qm * em2iw));
  }
  acc += -pi * b * b / (f.l1 * f.l2) + pi * f.l2 / (12.0 * f.l1);
  return acc / (2.0 * pi);
}

/// lim_{z -> 0} G(z) - (1/2pi) log|z|.
inline double green_regular_at_origin(double lx, double ly) {
  const detail::GreenFrame f(lx, ly);
  const double pi = std::numbers::pi;
  const double q = f.nome();
  double acc = std::log(2.0) - pi * f.l2 / (4.0 * f.l1) + std::log(pi / f.l1) + pi * f.l2 / (12.0 * f.l1);
  for (int m = 1; m <= detail::product_terms(q, 0.0); ++m) acc += 2.0 * std::log1p(-std::pow(q, 2 * m));
  return acc / (2.0 * pi);
}

/// (dG/dx, dG/dy) at displacement (x, y).
inline std::pair<double, double> green_gradient(double lx, double ly, double x, double y) {
  using cplx = std::complex<double>;
  const detail::GreenFrame f(lx, ly);
  const auto [a, b] = f.to_frame(x, y, lx, ly);
  if (std::abs(a) < 1e-15 * f.l1 && std::abs(b) < 1e-15 * f.l2) {
    throw SingularEvaluation("Green's function gradient evaluated at a lattice point");
  }
  const double pi = std::numbers::pi;
  const double q = f.nome();
  const cplx w(pi * a / f.l1, pi * b / f.l1);
  cplx dlog = std::cos(w) / std::sin(w);
  const cplx e2iw = std::exp(cplx(0.0, 2.0) * w);
  const cplx em2iw = std::exp(cplx(0.0, -2.0) * w);
  const int terms = detail::product_terms(q, w.imag());
  for (int m = 1; m <= terms; ++m) {
    const double qm = std::pow(q, 2 * m);
    dlog += cplx(0.0, -2.0) * qm * e2iw / (1.0 - qm * e2iw);
    dlog += cplx(0.0, 2.0) * qm * em2iw / (1.0 - qm * em2iw);
  }
  double gx = (pi / f.l1) * dlog.real() / (2.0 * pi);
  double gy = (-(pi / f.l1) * dlog.imag() - 2.0 * pi * b / (f.l1 * f.l2)) / (2.0 * pi);
  if (f.swapped) std::swap(gx, gy);
  return {gx, gy};
}

struct PunctureSite {
  std::string label;
  double x = 0.0;
  double y = 0.0;
  std::vector<double> mu;  // one entry per component
};

/// gamma_k = 4 pi sum_p mu_k(p) G(z - p) and w_k = exp(gamma_k) tabulated on the grid.
struct GreenTable {
  int n = 0;
  std::vector<PunctureSite> sites;
  Components gamma;
  Components w;
  /// regular_log[s][k] = lim_{z -> p_s} gamma_k(z) - 2 mu_k(p_s) log|z - p_s|.
  std::vector<std::vector<double>> regular_log;
  double area = 0.0;

  /// Smooth factor C with w_k ~ C |z - p_s|^{2 mu_k(p_s)} near p_s.
  double w_smooth_factor(std::size_t site, int k) const { return std::exp(regular_log[site][k]); }

  /// s_k as floating point (sum of strengths).
  double strength_sum(int k) const {
    double s = 0.0;
    for (const auto& p : sites) s += p.mu[k];
    return s;
  }
};

inline GreenTable empty_green_table(const TorusDomain& domain, int n) {
  GreenTable t;
  t.n = n;
  t.area = domain.area();
  t.gamma.assign(n, Field(domain.size(), 0.0));
  t.w.assign(n, Field(domain.size(), 1.0));
  return t;
}

inline GreenTable build_green_table(const TorusDomain& domain, const SingularStrengths& strengths) {
  const int n = strengths.n();
  GreenTable t = empty_green_table(domain, n);
  for (const auto& p : strengths.punctures()) {
    if (!p.position) throw InvalidInput("puncture '" + p.label + "' has no position");
    PunctureSite site{p.label, to_double((*p.position)[0]), to_double((*p.position)[1]), to_double(p.mu)};
    if (!(site.x > 0.0 && site.x < domain.lx() && site.y > 0.0 && site.y < domain.ly())) {
      throw InvalidInput("puncture '" + p.label + "' is not strictly inside the fundamental domain");
    }
    // Distance to the nearest node, in cell units.
    const double fx = site.x / domain.hx() - 0.5;
    const double fy = site.y / domain.hy() - 0.5;
    const double ix = std::round(fx);
    const double iy = std::round(fy);
    if (std::hypot(fx - ix, fy - iy) < 1e-3) {
      throw InvalidInput("puncture '" + p.label + "' lies within 1e-3 cells of grid node (" +
                         std::to_string(static_cast<long>(ix)) + ", " + std::to_string(static_cast<long>(iy)) + ")");
    }
    t.sites.push_back(std::move(site));
  }

  const double four_pi = 4.0 * std::numbers::pi;
  for (const auto& site : t.sites) {
    const Field g = domain.sample(
        [&](double x, double y) { return green_eval(domain.lx(), domain.ly(), x - site.x, y - site.y); });
    for (int k = 0; k < n; ++k) {
      if (site.mu[k] == 0.0) continue;
      for (std::size_t idx = 0; idx < g.size(); ++idx) t.gamma[k][idx] += four_pi * site.mu[k] * g[idx];
    }
  }
  for (int k = 0; k < n; ++k) {
    for (std::size_t idx = 0; idx < domain.size(); ++idx) t.w[k][idx] = std::exp(t.gamma[k][idx]);
  }

  const double greg = green_regular_at_origin(domain.lx(), domain.ly());
  for (std::size_t s = 0; s < t.sites.size(); ++s) {
    std::vector<double> reg(n, 0.0);
    for (int k = 0; k < n; ++k) {
      reg[k] = four_pi * t.sites[s].mu[k] * greg;
      for (std::size_t o = 0; o < t.sites.size(); ++o) {
        if (o == s || t.sites[o].mu[k] == 0.0) continue;
        reg[k] += four_pi * t.sites[o].mu[k] *
                  green_eval(domain.lx(), domain.ly(), t.sites[s].x - t.sites[o].x, t.sites[s].y - t.sites[o].y);
      }
    }
    t.regular_log.push_back(std::move(reg));
  }
  return t;
}

/// Gradient fields (d gamma_k/dx, d gamma_k/dy) on the grid.
inline std::pair<Field, Field> gamma_gradient(const TorusDomain& domain, const GreenTable& table, int k) {
  Field gx(domain.size(), 0.0), gy(domain.size(), 0.0);
  const double four_pi = 4.0 * std::numbers::pi;
  for (const auto& site : table.sites) {
    if (site.mu[k] == 0.0) continue;
    for (int j = 0; j < domain.ny(); ++j) {
      for (int i = 0; i < domain.nx(); ++i) {
        const auto [dx, dy] = green_gradient(domain.lx(), domain.ly(), domain.x(i) - site.x, domain.y(j) - site.y);
        gx[domain.index(i, j)] += four_pi * site.mu[k] * dx;
        gy[domain.index(i, j)] += four_pi * site.mu[k] * dy;
      }
    }
  }
  return {gx, gy};
}

}  // namespace toda
