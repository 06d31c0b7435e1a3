#pragma once

// Midpoint quadrature on the torus grid with singularity subtraction for
// integrands behaving like C |z - p|^a near isolated points, a > -2.

#include "toda/torus.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace toda {

class NonIntegrable : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Integrand ~ coefficient * r^exponent + log_coefficient * log r near (x, y), r = |z - (x, y)|.
struct SingularPoint {
  double x = 0.0;
  double y = 0.0;
  double exponent = 0.0;
  double coefficient = 0.0;
  double log_coefficient = 0.0;
};

namespace detail {

// Smooth cutoff: 1 on [0, r0/2], 0 beyond r0, C-infinity in between.
inline double cutoff(double r, double r0) {
  const double t = (r - 0.5 * r0) / (0.5 * r0);
  if (t <= 0.0) return 1.0;
  if (t >= 1.0) return 0.0;
  const double g0 = std::exp(-1.0 / t);
  const double g1 = std::exp(-1.0 / (1.0 - t));
  return g1 / (g0 + g1);
}

inline double cutoff_radius(const TorusDomain& d) { return 0.45 * std::min(d.lx(), d.ly()); }

// h^2 sum_nodes psi(r) chi(r) - integral psi chi, given the exact integral of
// psi over the disk of radius r0/2.
template <typename Psi>
double cutoff_excess(const TorusDomain& d, double px, double py, Psi&& psi, double inner_exact) {
  const double r0 = cutoff_radius(d);
  auto tail = [&](double r) { return r * psi(r) * cutoff(r, r0); };
  const double smooth_part =
      boost::math::quadrature::gauss_kronrod<double, 61>::integrate(tail, 0.5 * r0, r0, 15, 1e-15);
  const double exact = inner_exact + 2.0 * std::numbers::pi * smooth_part;

  std::vector<double> terms;
  const int ri = static_cast<int>(std::ceil(r0 / d.hx())) + 1;
  const int rj = static_cast<int>(std::ceil(r0 / d.hy())) + 1;
  const int ci = static_cast<int>(std::floor(px / d.hx()));
  const int cj = static_cast<int>(std::floor(py / d.hy()));
  for (int dj = -rj; dj <= rj; ++dj) {
    for (int di = -ri; di <= ri; ++di) {
      // Unwrapped node positions; the cutoff disk lies inside one period.
      const double x = (ci + di + 0.5) * d.hx();
      const double y = (cj + dj + 0.5) * d.hy();
      const double r = std::hypot(x - px, y - py);
      if (r >= r0) continue;
      terms.push_back(psi(r) * cutoff(r, r0));
    }
  }
  return d.cell_area() * pairwise_sum(terms) - exact;
}

}  // namespace detail

/// Midpoint-rule error for r^a chi(r) centred at (px, py): h^2 sum - integral.
inline double midpoint_excess(const TorusDomain& d, double px, double py, double exponent) {
  if (exponent <= -2.0) throw NonIntegrable("singular exponent <= -2 is not integrable in two dimensions");
  const double b = 0.5 * detail::cutoff_radius(d);
  const double inner = 2.0 * std::numbers::pi * std::pow(b, exponent + 2.0) / (exponent + 2.0);
  return detail::cutoff_excess(d, px, py, [exponent](double r) { return std::pow(r, exponent); }, inner);
}

/// Midpoint-rule error for log(r) chi(r) centred at (px, py).
inline double midpoint_excess_log(const TorusDomain& d, double px, double py) {
  const double b = 0.5 * detail::cutoff_radius(d);
  const double inner = 2.0 * std::numbers::pi * (0.5 * b * b * std::log(b) - 0.25 * b * b);
  return detail::cutoff_excess(d, px, py, [](double r) { return std::log(r); }, inner);
}

/// Integral of f against e^{2 phi} dx dy. Each singular point subtracts the
/// midpoint error of its leading term; coefficients refer to f itself, and the
/// measure factor at the point is applied here.
inline double integrate(const TorusDomain& d, std::span<const double> f,
                        const std::vector<SingularPoint>& singular = {}) {
  if (f.size() != d.size()) throw InvalidInput("field size does not match the grid");
  double total;
  if (d.has_conformal_factor()) {
    std::vector<double> weighted(f.size());
    const auto& phi = d.phi();
    for (std::size_t k = 0; k < f.size(); ++k) weighted[k] = f[k] * std::exp(2.0 * phi[k]);
    total = d.cell_area() * pairwise_sum(weighted);
  } else {
    total = d.cell_area() * pairwise_sum(f);
  }
  for (const auto& s : singular) {
    if (s.exponent <= -2.0) throw NonIntegrable("singular exponent <= -2 is not integrable in two dimensions");
    const double measure = std::exp(2.0 * d.conformal_factor().value(s.x, s.y, d.lx(), d.ly()));
    if (s.exponent != 0.0 && s.coefficient != 0.0) {
      total -= s.coefficient * measure * midpoint_excess(d, s.x, s.y, s.exponent);
    }
    if (s.log_coefficient != 0.0) total -= s.log_coefficient * measure * midpoint_excess_log(d, s.x, s.y);
  }
  return total;
}

}  // namespace toda
