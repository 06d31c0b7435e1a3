#pragma once

// Higgs-bundle data rebuilt from a Toda solution: metric weights, the connection
// 1-forms A_k, Higgs components B_k = b_k e^phi dz, and the flatness residuals.
//
// A 1-form coefficient pair is stored by its dz-component a; the dz-bar component
// is -conj(a). Curvatures are reported as coefficients of i dx^dy.

#include "toda/green.hpp"
#include "toda/toda_solver.hpp"
#include "toda/torus.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

namespace toda {

using ComplexComponents = std::vector<ComplexField>;

/// Regular part v, singular part from the Green table, and the sign eps.
struct HiggsInput {
  const TorusDomain& domain;
  const GreenTable& green;
  const Components& v;
  int epsilon = 1;

  int n() const { return static_cast<int>(v.size()); }
  double u(int k, std::size_t i) const { return green.gamma[k][i] + v[k][i]; }
};

inline HiggsInput higgs_input(const TodaProblem& p, const TodaState& s) {
  return HiggsInput{p.domain, p.green, s.v, p.options.epsilon};
}

struct MetricWeights {
  Components log_delta;  // k = 0..n
  Components delta;
  Components H;          // delta^2
};

/// delta_k = (prod_j b_j^{n+1-j})^{-1/(n+1)} b_1...b_k e^{(k - n/2) phi}, H_k = delta_k^2.
inline MetricWeights metric_weights(const HiggsInput& in) {
  const int n = in.n();
  const std::size_t size = in.domain.size();
  const Field& phi = in.domain.phi();
  MetricWeights m;
  m.log_delta.assign(n + 1, Field(size, 0.0));
  for (std::size_t i = 0; i < size; ++i) {
    double base = 0.0;
    for (int j = 1; j <= n; ++j) base -= (n + 1 - j) * 0.5 * in.u(j - 1, i) / (n + 1);
    double acc = base;
    m.log_delta[0][i] = acc - 0.5 * n * phi[i];
    for (int k = 1; k <= n; ++k) {
      acc += 0.5 * in.u(k - 1, i);
      m.log_delta[k][i] = acc + (k - 0.5 * n) * phi[i];
    }
  }
  m.delta = m.log_delta;
  m.H = m.log_delta;
  for (int k = 0; k <= n; ++k) {
    for (std::size_t i = 0; i < size; ++i) {
      m.delta[k][i] = std::exp(m.log_delta[k][i]);
      m.H[k][i] = std::exp(2.0 * m.log_delta[k][i]);
    }
  }
  return m;
}

/// Inverts the metric weights: b_k = sqrt(H_k / H_{k-1}) e^{-phi}.
inline Components recover_b(const TorusDomain& domain, const Components& H) {
  const int n = static_cast<int>(H.size()) - 1;
  const Field& phi = domain.phi();
  Components b(n, Field(domain.size()));
  for (int k = 1; k <= n; ++k) {
    for (std::size_t i = 0; i < domain.size(); ++i) b[k - 1][i] = std::sqrt(H[k][i] / H[k - 1][i]) * std::exp(-phi[i]);
  }
  return b;
}

struct Connection {
  ComplexComponents a;     // dz-coefficients of A_0..A_n
  ComplexComponents diff;  // dz-coefficients of D_k = A_{k-1} - A_k, k = 1..n
  Components beta;         // B_k = beta_k dz, k = 1..n
  ComplexComponents dz_u;  // d u_k / dz, k = 1..n
  ComplexField dz_phi;
};

namespace detail {

// d/dz of u_k = gamma_k + v_k: analytic for gamma, spectral for v.
inline ComplexComponents dz_u_spectral(const HiggsInput& in, const Spectral& sp) {
  ComplexComponents out;
  for (int k = 0; k < in.n(); ++k) {
    const Field vx = sp.dx(in.v[k]), vy = sp.dy(in.v[k]);
    const auto [gx, gy] = gamma_gradient(in.domain, in.green, k);
    ComplexField c(in.domain.size());
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = 0.5 * std::complex<double>(vx[i] + gx[i], -(vy[i] + gy[i]));
    out.push_back(std::move(c));
  }
  return out;
}

inline ComplexField dz_phi(const TorusDomain& d) {
  ComplexField c(d.size());
  for (int j = 0; j < d.ny(); ++j) {
    for (int i = 0; i < d.nx(); ++i) {
      const auto [px, py] = d.conformal_factor().gradient(d.x(i), d.y(j), d.lx(), d.ly());
      c[d.index(i, j)] = 0.5 * std::complex<double>(px, -py);
    }
  }
  return c;
}

// Fourth-order central differences on the periodic grid.
inline Field fd4_dx(const TorusDomain& d, std::span<const double> f) {
  Field out(d.size());
  const int nx = d.nx();
  for (int j = 0; j < d.ny(); ++j) {
    for (int i = 0; i < nx; ++i) {
      auto at = [&](int o) { return f[d.index(((i + o) % nx + nx) % nx, j)]; };
      out[d.index(i, j)] = (-at(2) + 8.0 * at(1) - 8.0 * at(-1) + at(-2)) / (12.0 * d.hx());
    }
  }
  return out;
}

inline Field fd4_dy(const TorusDomain& d, std::span<const double> f) {
  Field out(d.size());
  const int ny = d.ny();
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < d.nx(); ++i) {
      auto at = [&](int o) { return f[d.index(i, ((j + o) % ny + ny) % ny)]; };
      out[d.index(i, j)] = (-at(2) + 8.0 * at(1) - 8.0 * at(-1) + at(-2)) / (12.0 * d.hy());
    }
  }
  return out;
}

inline ComplexComponents dz_u_fd(const HiggsInput& in) {
  ComplexComponents out;
  for (int k = 0; k < in.n(); ++k) {
    const Field vx = fd4_dx(in.domain, in.v[k]), vy = fd4_dy(in.domain, in.v[k]);
    const auto [gx, gy] = gamma_gradient(in.domain, in.green, k);
    ComplexField c(in.domain.size());
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = 0.5 * std::complex<double>(vx[i] + gx[i], -(vy[i] + gy[i]));
    out.push_back(std::move(c));
  }
  return out;
}

inline Connection assemble_connection(const HiggsInput& in, ComplexComponents dz_u) {
  const int n = in.n();
  const std::size_t size = in.domain.size();
  Connection c;
  c.dz_u = std::move(dz_u);
  c.dz_phi = dz_phi(in.domain);
  c.diff.assign(n, ComplexField(size));
  for (int k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < size; ++i) c.diff[k][i] = -0.5 * c.dz_u[k][i] - c.dz_phi[i];
  }
  c.a.assign(n + 1, ComplexField(size, 0.0));
  for (std::size_t i = 0; i < size; ++i) {
    std::complex<double> a0 = 0.0;
    for (int k = 1; k <= n; ++k) a0 += static_cast<double>(n + 1 - k) * c.diff[k - 1][i];
    a0 /= static_cast<double>(n + 1);
    c.a[0][i] = a0;
    for (int k = 1; k <= n; ++k) c.a[k][i] = c.a[k - 1][i] - c.diff[k - 1][i];
  }
  const Field& phi = in.domain.phi();
  c.beta.assign(n, Field(size));
  for (int k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < size; ++i) c.beta[k][i] = std::exp(0.5 * in.u(k, i) + phi[i]);
  }
  return c;
}

}  // namespace detail

/// A_k from A_{k-1} - A_k = dbar ln b_k - d ln b_k - i rho and sum_k A_k = 0.
inline Connection connection(const HiggsInput& in) {
  const Spectral sp(in.domain);
  return detail::assemble_connection(in, detail::dz_u_spectral(in, sp));
}

struct Curvature {
  Components diag;  // k = 0..n, coefficient of i dx^dy in dA_k + eps (B_k^B_k-bar - B_{k+1}^B_{k+1}-bar)
  ComplexComponents off;  // k = 1..n, dz-bar^dz coefficient of dB_k - (A_{k-1} - A_k)^B_k
  double max_off = 0.0;
};

namespace detail {

// diag_k = -2 (dA_k + eps (|beta_k|^2 - |beta_{k+1}|^2)), with dA in dz^dz-bar units,
// given dD_k (k = 1..n) in the same units.
inline Components diagonal_curvature(const HiggsInput& in, const Components& dD, const Components& beta) {
  const int n = in.n();
  const std::size_t size = in.domain.size();
  Components diag(n + 1, Field(size));
  for (std::size_t i = 0; i < size; ++i) {
    double da = 0.0;
    for (int k = 1; k <= n; ++k) da += (n + 1 - k) * dD[k - 1][i];
    da /= (n + 1);
    for (int k = 0; k <= n; ++k) {
      if (k > 0) da -= dD[k - 1][i];
      const double bk = k >= 1 ? beta[k - 1][i] * beta[k - 1][i] : 0.0;
      const double bk1 = k + 1 <= n ? beta[k][i] * beta[k][i] : 0.0;
      diag[k][i] = -2.0 * (da + in.epsilon * (bk - bk1));
    }
  }
  return diag;
}

inline ComplexComponents off_diagonal(const Connection& c) {
  ComplexComponents off;
  for (std::size_t k = 0; k < c.beta.size(); ++k) {
    ComplexField f(c.beta[k].size());
    for (std::size_t i = 0; i < f.size(); ++i) {
      // dbar beta by the chain rule on beta = exp(u/2 + phi); D^{0,1} = -conj(D^{1,0}).
      const std::complex<double> dbar_log = std::conj(0.5 * c.dz_u[k][i] + c.dz_phi[i]);
      f[i] = c.beta[k][i] * dbar_log - (-std::conj(c.diff[k][i])) * c.beta[k][i];
    }
    off.push_back(std::move(f));
  }
  return off;
}

inline double max_abs(const ComplexComponents& f) {
  double m = 0.0;
  for (const auto& c : f) {
    for (const auto& z : c) m = std::max(m, std::abs(z));
  }
  return m;
}

}  // namespace detail

/// Flatness residuals with spectral differentiation. dD_k = (1/4) Delta u_k + (1/2) Delta phi,
/// where the point masses of Delta gamma_k are left out (they live on the punctures).
inline Curvature curvature_residual(const HiggsInput& in) {
  const int n = in.n();
  const Spectral sp(in.domain);
  const Connection c = detail::assemble_connection(in, detail::dz_u_spectral(in, sp));
  const Field& lap_phi = in.domain.laplacian_phi();
  Components dD(n);
  for (int k = 0; k < n; ++k) {
    dD[k] = sp.laplacian(in.v[k]);
    const double flux = std::numbers::pi * in.green.strength_sum(k) / in.domain.area();
    for (std::size_t i = 0; i < dD[k].size(); ++i) dD[k][i] = 0.25 * dD[k][i] - flux + 0.5 * lap_phi[i];
  }
  Curvature out;
  out.diag = detail::diagonal_curvature(in, dD, c.beta);
  out.off = detail::off_diagonal(c);
  out.max_off = detail::max_abs(out.off);
  return out;
}

/// Same diagonal residual, but dA_k is obtained by fourth-order finite differences
/// of finite-difference connection coefficients: an independent discretization
/// for refinement studies.
inline Components curvature_residual_fd(const HiggsInput& in) {
  const int n = in.n();
  const Connection c = detail::assemble_connection(in, detail::dz_u_fd(in));
  Components dD(n);
  for (int k = 0; k < n; ++k) {
    // dD = d_z conj-part minus d_zbar d = -2 Re(d_zbar d), d_zbar = (d_x + i d_y)/2.
    Field re(c.diff[k].size()), im(c.diff[k].size());
    for (std::size_t i = 0; i < re.size(); ++i) {
      re[i] = c.diff[k][i].real();
      im[i] = c.diff[k][i].imag();
    }
    const Field rx = detail::fd4_dx(in.domain, re), iy = detail::fd4_dy(in.domain, im);
    dD[k].resize(re.size());
    for (std::size_t i = 0; i < re.size(); ++i) dD[k][i] = -(rx[i] - iy[i]);
  }
  return detail::diagonal_curvature(in, dD, c.beta);
}

/// Largest |curv_{k-1} - curv_k + 2 R_k| / max(1, |curv|) over nodes and k, with R the
/// residual for the plain (uncorrected) source. Zero up to roundoff for any v.
inline double curvature_agreement(const TodaProblem& p, const Components& v) {
  const TodaProblem plain = without_source_correction(p);
  const Components r = residual(plain, v);
  const Curvature c = curvature_residual(HiggsInput{p.domain, p.green, v, p.options.epsilon});
  double worst = 0.0;
  for (std::size_t i = 0; i < p.domain.size(); ++i) {
    double scale = 1.0;
    for (const auto& d : c.diag) scale = std::max(scale, std::abs(d[i]));
    for (int k = 1; k <= p.n(); ++k) {
      worst = std::max(worst, std::abs(c.diag[k - 1][i] - c.diag[k][i] + 2.0 * r[k - 1][i]) / scale);
    }
  }
  return worst;
}

/// Max |f| over nodes at distance > radius from every puncture.
inline double masked_max(const TorusDomain& d, const std::vector<PunctureSite>& sites, const Components& f,
                         double radius) {
  double m = 0.0;
  for (int j = 0; j < d.ny(); ++j) {
    for (int i = 0; i < d.nx(); ++i) {
      bool near = false;
      for (const auto& s : sites) {
        const auto [dx, dy] = d.displacement(d.x(i), d.y(j), s.x, s.y);
        near = near || std::hypot(dx, dy) <= radius;
      }
      if (near) continue;
      for (const auto& c : f) m = std::max(m, std::abs(c[d.index(i, j)]));
    }
  }
  return m;
}

/// Chern-form degree of each H_k: -(1/4 pi) integral of Delta_reg log H_k, with the
/// regular part of Delta gamma_j equal to -4 pi s_j / area.
inline std::vector<double> degrees_by_curvature(const HiggsInput& in) {
  const int n = in.n();
  const Spectral sp(in.domain);
  Components lap_u(n);
  for (int j = 0; j < n; ++j) {
    lap_u[j] = sp.laplacian(in.v[j]);
    const double reg = -4.0 * std::numbers::pi * in.green.strength_sum(j) / in.domain.area();
    for (auto& e : lap_u[j]) e += reg;
  }
  const Field& lap_phi = in.domain.laplacian_phi();
  std::vector<double> out;
  for (int k = 0; k <= n; ++k) {
    Field density(in.domain.size());
    for (std::size_t i = 0; i < density.size(); ++i) {
      double l = (2 * k - n) * lap_phi[i];
      for (int j = 1; j <= n; ++j) l -= static_cast<double>(n + 1 - j) * lap_u[j - 1][i] / (n + 1);
      for (int j = 1; j <= k; ++j) l += lap_u[j - 1][i];
      density[i] = -l / (4.0 * std::numbers::pi);
    }
    out.push_back(in.domain.cell_area() * pairwise_sum(density));
  }
  return out;
}

}  // namespace toda
