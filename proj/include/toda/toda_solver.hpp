#pragma once

// Newton-Krylov solver for the Toda system (1/4) Delta u_k - K/2 = eps (A e^u)_k on
// a (conformally) flat torus with point sources, written for the regular parts
// v_k = u_k - gamma_k.

#include "toda/green.hpp"
#include "toda/quadrature.hpp"
#include "toda/random.hpp"
#include "toda/stability.hpp"
#include "toda/torus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace toda {

/// e^{v} left the double range at a node.
class ScaledEvaluationError : public std::overflow_error {
 public:
  using std::overflow_error::overflow_error;
};

enum class SolverStatus { converged, diverged, max_iter };

inline std::string_view to_string(SolverStatus s) {
  switch (s) {
    case SolverStatus::converged: return "converged";
    case SolverStatus::diverged: return "diverged";
    case SolverStatus::max_iter: return "max_iter";
  }
  return "unknown";
}

struct SolverOptions {
  double tol = 1e-8;  // on max |R_k|
  int max_iter = 60;
  int max_halvings = 20;
  int stall_limit = 5;
  double divergence_threshold = 40.0;
  int krylov_max = 400;
  int epsilon = 1;
  /// Rescale the source near each puncture so that the discrete source integral
  /// matches the singularity-corrected quadrature.
  bool source_correction = true;
};

/// Everything a solve needs; immutable once built.
struct TodaProblem {
  SingularStrengths strengths;
  TorusDomain domain;
  GreenTable green;
  SolverOptions options;
  StabilityReport report;
  std::vector<std::vector<double>> cartan;  // A as doubles
  std::vector<double> masses;               // pi * masses_over_pi
  /// e^{2 phi} w_k with the near-puncture correction applied; T_k = source_k e^{v_k}.
  Components source;
  /// Correction factors per (site, component), for diagnostics.
  std::vector<std::vector<double>> correction;

  int n() const { return strengths.n(); }
  double s(int k) const { return green.strength_sum(k); }

  /// Singular descriptors for integrating e^{u_k} given v_k(p) per site.
  std::vector<SingularPoint> singular_points(int k, const std::vector<double>& v_at_sites) const {
    std::vector<SingularPoint> out;
    for (std::size_t i = 0; i < green.sites.size(); ++i) {
      const auto& site = green.sites[i];
      if (site.mu[k] == 0.0) continue;
      out.push_back({site.x, site.y, 2.0 * site.mu[k], green.w_smooth_factor(i, k) * std::exp(v_at_sites[i]), 0.0});
    }
    return out;
  }
};

namespace detail {

// The four nodes surrounding (px, py).
inline std::array<std::size_t, 4> surrounding_nodes(const TorusDomain& d, double px, double py) {
  const int i0 = static_cast<int>(std::floor(px / d.hx() - 0.5));
  const int j0 = static_cast<int>(std::floor(py / d.hy() - 0.5));
  auto wrap = [](int i, int n) { return ((i % n) + n) % n; };
  return {d.index(wrap(i0, d.nx()), wrap(j0, d.ny())), d.index(wrap(i0 + 1, d.nx()), wrap(j0, d.ny())),
          d.index(wrap(i0, d.nx()), wrap(j0 + 1, d.ny())), d.index(wrap(i0 + 1, d.nx()), wrap(j0 + 1, d.ny()))};
}

}  // namespace detail

/// Validates the data and assembles the problem. Punctures must be at least
/// three cells apart so their corrections are disjoint.
inline TodaProblem make_problem(const SingularStrengths& strengths, const TorusDomain& domain,
                                const SolverOptions& options = {}) {
  strengths.require_solver_ready();
  if (options.epsilon != 1 && options.epsilon != -1) throw InvalidInput("epsilon must be +1 or -1");
  GreenTable green = build_green_table(domain, strengths);
  const double min_sep = 3.0 * std::max(domain.hx(), domain.hy());
  for (std::size_t a = 0; a < green.sites.size(); ++a) {
    for (std::size_t b = a + 1; b < green.sites.size(); ++b) {
      const auto [dx, dy] = domain.displacement(green.sites[a].x, green.sites[a].y, green.sites[b].x, green.sites[b].y);
      if (std::hypot(dx, dy) < min_sep) {
        throw InvalidInput("punctures '" + green.sites[a].label + "' and '" + green.sites[b].label +
                           "' are closer than 3 cells");
      }
    }
  }
  const int n = strengths.n();
  StabilityReport report = criterion(strengths);
  const CartanData c = cartan(n);
  std::vector<std::vector<double>> a(n, std::vector<double>(n));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) a[i][j] = c.A[i][j];
  }
  std::vector<double> masses;
  for (const auto& m : report.masses) masses.push_back(std::numbers::pi * to_double(m));

  Components source(n, Field(domain.size()));
  const Field& phi = domain.phi();
  for (int k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < domain.size(); ++i) source[k][i] = std::exp(2.0 * phi[i]) * green.w[k][i];
  }
  std::vector<std::vector<double>> correction(green.sites.size(), std::vector<double>(n, 0.0));
  if (options.source_correction) {
    for (std::size_t si = 0; si < green.sites.size(); ++si) {
      const auto& site = green.sites[si];
      const auto nodes = detail::surrounding_nodes(domain, site.x, site.y);
      const double measure = std::exp(2.0 * domain.conformal_factor().value(site.x, site.y, domain.lx(), domain.ly()));
      for (int k = 0; k < n; ++k) {
        if (site.mu[k] == 0.0) continue;
        // Midpoint excess of the leading term, to be removed from the four nodes around p.
        const double excess = green.w_smooth_factor(si, k) * measure * midpoint_excess(domain, site.x, site.y, 2.0 * site.mu[k]);
        double local = 0.0;
        for (std::size_t q : nodes) local += domain.cell_area() * source[k][q];
        const double factor = excess / local;
        if (factor >= 0.9) throw InvalidInput("source correction too large at puncture '" + site.label + "'");
        correction[si][k] = factor;
        for (std::size_t q : nodes) source[k][q] *= 1.0 - factor;
      }
    }
  }
  return TodaProblem{strengths, domain, std::move(green), options, std::move(report), std::move(a),
                     std::move(masses), std::move(source), std::move(correction)};
}

/// The same problem with the plain source e^{2 phi} w, as in the continuum equation.
inline TodaProblem without_source_correction(TodaProblem p) {
  const Field& phi = p.domain.phi();
  for (int k = 0; k < p.n(); ++k) {
    for (std::size_t i = 0; i < p.domain.size(); ++i) p.source[k][i] = std::exp(2.0 * phi[i]) * p.green.w[k][i];
  }
  for (auto& c : p.correction) std::fill(c.begin(), c.end(), 0.0);
  p.options.source_correction = false;
  return p;
}

struct IterationRecord {
  int iteration = 0;
  double residual_inf = 0.0;
  double residual_l2 = 0.0;
  double step = 0.0;
  int krylov_iterations = 0;
  double mean_v_min = 0.0;
};

struct TodaState {
  Components v;
  Components u;  // gamma + v at the nodes
  Components b;  // e^{u/2}
  double residual_norm = std::numeric_limits<double>::infinity();
  int newton_iterations = 0;
  SolverStatus status = SolverStatus::max_iter;
  std::string message;
  std::vector<IterationRecord> history;
};

namespace detail {

inline Components source_terms(const TodaProblem& p, const Components& v) {
  const int n = p.n();
  const TorusDomain& d = p.domain;
  Components t(n, Field(d.size()));
  for (int k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double e = p.source[k][i] * std::exp(v[k][i]);
      if (!std::isfinite(e)) {
        const int ii = static_cast<int>(i % static_cast<std::size_t>(d.nx()));
        const int jj = static_cast<int>(i / static_cast<std::size_t>(d.nx()));
        throw ScaledEvaluationError("e^v overflows in component " + std::to_string(k + 1) + " at node (" +
                                    std::to_string(ii) + ", " + std::to_string(jj) + ")");
      }
      t[k][i] = e;
    }
  }
  return t;
}

inline double norm_inf(const Components& f) {
  double m = 0.0;
  for (const auto& c : f) m = std::max(m, max_abs(c));
  return m;
}

inline double dot(const Components& a, const Components& b) {
  std::vector<double> parts;
  for (std::size_t k = 0; k < a.size(); ++k) {
    std::vector<double> prod(a[k].size());
    for (std::size_t i = 0; i < prod.size(); ++i) prod[i] = a[k][i] * b[k][i];
    parts.push_back(pairwise_sum(prod));
  }
  return pairwise_sum(parts);
}

// Discrete L2 norm sqrt(h^2 sum |R|^2).
inline double norm_l2(const TorusDomain& d, const Components& f) { return std::sqrt(d.cell_area() * dot(f, f)); }

inline Components mix(const std::vector<std::vector<double>>& m, const Components& f) {
  const std::size_t n = f.size();
  Components out(n, Field(f[0].size(), 0.0));
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t l = 0; l < n; ++l) {
      if (m[k][l] == 0.0) continue;
      for (std::size_t i = 0; i < out[k].size(); ++i) out[k][i] += m[k][l] * f[l][i];
    }
  }
  return out;
}

inline std::vector<std::vector<double>> cartan_inverse_double(int n) {
  std::vector<std::vector<double>> m(n, std::vector<double>(n));
  for (int j = 1; j <= n; ++j) {
    for (int k = 1; k <= n; ++k) m[j - 1][k - 1] = to_double(cartan_inverse_entry(n, j, k));
  }
  return m;
}

}  // namespace detail

/// R_k = (1/4) Delta v_k + (1/2) Delta phi - pi s_k / area - eps (A T)_k, T_l = source_l e^{v_l}.
inline Components residual(const TodaProblem& p, const Components& v, const Spectral& sp) {
  const int n = p.n();
  const TorusDomain& d = p.domain;
  const Components t = detail::source_terms(p, v);
  const Components at = detail::mix(p.cartan, t);
  const Field& lap_phi = d.laplacian_phi();
  Components r(n);
  for (int k = 0; k < n; ++k) {
    r[k] = sp.laplacian(v[k]);
    const double flux = std::numbers::pi * p.s(k) / d.area();
    for (std::size_t i = 0; i < d.size(); ++i) {
      r[k][i] = 0.25 * r[k][i] + 0.5 * lap_phi[i] - flux - p.options.epsilon * at[k][i];
    }
  }
  return r;
}

inline Components residual(const TodaProblem& p, const Components& v) { return residual(p, v, Spectral(p.domain)); }

/// Jacobian action J[delta]_k = (1/4) Delta delta_k - eps (A (T . delta))_k at the source terms t.
inline Components jacobian_apply(const TodaProblem& p, const Components& t, const Components& delta,
                                 const Spectral& sp) {
  const int n = p.n();
  Components td(n, Field(p.domain.size()));
  for (int k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < td[k].size(); ++i) td[k][i] = t[k][i] * delta[k][i];
  }
  const Components atd = detail::mix(p.cartan, td);
  Components out(n);
  for (int k = 0; k < n; ++k) {
    out[k] = sp.laplacian(delta[k]);
    for (std::size_t i = 0; i < out[k].size(); ++i) out[k][i] = 0.25 * out[k][i] - p.options.epsilon * atd[k][i];
  }
  return out;
}

inline Components jacobian_apply(const TodaProblem& p, const Components& v, const Components& delta) {
  const Spectral sp(p.domain);
  return jacobian_apply(p, detail::source_terms(p, v), delta, sp);
}

/// Constant guess v_k = ln(m_k / integral of e^{2 phi} w_k); empty when some m_k <= 0.
inline std::optional<Components> initial_guess(const TodaProblem& p) {
  const int n = p.n();
  for (double m : p.masses) {
    if (!(m > 0.0)) return std::nullopt;
  }
  Components v(n);
  const std::vector<double> zero(p.green.sites.size(), 0.0);
  for (int k = 0; k < n; ++k) {
    const double integral = integrate(p.domain, p.green.w[k], p.singular_points(k, zero));
    v[k].assign(p.domain.size(), std::log(p.masses[k] / integral));
  }
  return v;
}

namespace detail {

// Solves B x = rhs for B = A^{-1}(-Delta/4) + diag(t) (the Newton system premultiplied
// by A^{-1}) with preconditioned CG. The preconditioner diagonalizes A and inverts
// sigma + (1/lambda_j)(-Delta/4) per eigencomponent.
struct KrylovResult {
  Components x;
  int iterations = 0;
};

inline KrylovResult newton_direction(const TodaProblem& p, const Components& t, const Components& rhs_r,
                                     double rel_tol, const Spectral& sp) {
  const int n = p.n();
  const std::size_t size = p.domain.size();
  const auto ainv = cartan_inverse_double(n);
  std::vector<std::vector<double>> q(n, std::vector<double>(n));
  std::vector<double> lambda(n);
  for (int j = 1; j <= n; ++j) {
    lambda[j - 1] = 2.0 - 2.0 * std::cos(j * std::numbers::pi / (n + 1));
    for (int k = 1; k <= n; ++k) q[k - 1][j - 1] = std::sqrt(2.0 / (n + 1)) * std::sin(j * k * std::numbers::pi / (n + 1));
  }
  std::vector<std::vector<double>> qt(n, std::vector<double>(n));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) qt[i][j] = q[j][i];
  }
  double sigma = 0.0;
  for (const auto& c : t) sigma += mean(c);
  sigma = std::max(sigma / n, 1e-12);

  auto apply_b = [&](const Components& x) {
    Components lap(n);
    for (int k = 0; k < n; ++k) {
      lap[k] = sp.laplacian(x[k]);
      for (auto& e : lap[k]) e *= -0.25;
    }
    Components out = mix(ainv, lap);
    for (int k = 0; k < n; ++k) {
      for (std::size_t i = 0; i < size; ++i) out[k][i] += t[k][i] * x[k][i];
    }
    return out;
  };
  auto precondition = [&](const Components& r) {
    Components y = mix(qt, r);
    for (int j = 0; j < n; ++j) y[j] = sp.solve_shifted(y[j], sigma, 0.25 / lambda[j]);
    return mix(q, y);
  };

  const Components b = mix(ainv, rhs_r);
  Components x(n, Field(size, 0.0));
  Components r = b;
  Components z = precondition(r);
  Components dir = z;
  double rz = dot(r, z);
  const double bnorm = std::sqrt(dot(b, b));
  int it = 0;
  if (bnorm == 0.0) return {x, 0};
  while (it < p.options.krylov_max) {
    const Components bd = apply_b(dir);
    const double curv = dot(dir, bd);
    if (!(curv > 0.0)) break;
    const double alpha = rz / curv;
    for (int k = 0; k < n; ++k) {
      for (std::size_t i = 0; i < size; ++i) {
        x[k][i] += alpha * dir[k][i];
        r[k][i] -= alpha * bd[k][i];
      }
    }
    ++it;
    if (std::sqrt(dot(r, r)) <= rel_tol * bnorm) break;
    z = precondition(r);
    const double rz_new = dot(r, z);
    const double beta = rz_new / rz;
    rz = rz_new;
    for (int k = 0; k < n; ++k) {
      for (std::size_t i = 0; i < size; ++i) dir[k][i] = z[k][i] + beta * dir[k][i];
    }
  }
  return {x, it};
}

inline void finish_state(const TodaProblem& p, TodaState& s) {
  const int n = p.n();
  s.u.assign(n, Field(p.domain.size()));
  s.b.assign(n, Field(p.domain.size()));
  for (int k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < p.domain.size(); ++i) {
      s.u[k][i] = p.green.gamma[k][i] + s.v[k][i];
      s.b[k][i] = std::exp(0.5 * s.u[k][i]);
    }
  }
}

}  // namespace detail

/// Damped Newton with an Armijo backtracking line search on the discrete L2 norm.
/// Failures are reported through the status, never thrown; eps = -1 is refused.
inline TodaState newton_solve(const TodaProblem& p, Components v0) {
  if (p.options.epsilon != 1) throw InvalidInput("only eps = +1 (variation of Hodge structure type) is solvable");
  const Spectral sp(p.domain);
  const SolverOptions& o = p.options;
  TodaState s;
  s.v = std::move(v0);
  int stalls = 0;

  auto diverged = [&](const Components& v) {
    for (const auto& c : v) {
      if (mean(c) < -o.divergence_threshold) return "mean(v) below -" + std::to_string(static_cast<int>(o.divergence_threshold));
      if (max_abs(c) > o.divergence_threshold) return "max|v| above " + std::to_string(static_cast<int>(o.divergence_threshold));
    }
    return std::string();
  };

  Components t;
  Components r;
  try {
    t = detail::source_terms(p, s.v);
    r = residual(p, s.v, sp);
  } catch (const ScaledEvaluationError& e) {
    s.status = SolverStatus::diverged;
    s.message = e.what();
    detail::finish_state(p, s);
    return s;
  }
  for (int it = 0;; ++it) {
    const double rinf = detail::norm_inf(r);
    const double rl2 = detail::norm_l2(p.domain, r);
    s.residual_norm = rinf;
    s.newton_iterations = it;
    if (rinf <= o.tol) {
      s.status = SolverStatus::converged;
      break;
    }
    if (const std::string why = diverged(s.v); !why.empty()) {
      s.status = SolverStatus::diverged;
      s.message = why;
      break;
    }
    if (it >= o.max_iter) {
      s.status = SolverStatus::max_iter;
      break;
    }
    const double forcing = std::clamp(0.01 * rinf, 1e-12, 1e-4);
    const auto kr = detail::newton_direction(p, t, r, forcing, sp);

    double step = 1.0;
    bool accepted = false;
    Components trial(p.n()), trial_r, trial_t;
    Components fallback, fallback_r, fallback_t;
    for (int h = 0; h <= o.max_halvings; ++h, step *= 0.5) {
      for (int k = 0; k < p.n(); ++k) {
        trial[k] = s.v[k];
        for (std::size_t i = 0; i < trial[k].size(); ++i) trial[k][i] += step * kr.x[k][i];
      }
      try {
        trial_t = detail::source_terms(p, trial);
        trial_r = residual(p, trial, sp);
      } catch (const ScaledEvaluationError&) {
        continue;
      }
      if (fallback.empty()) {
        fallback = trial;
        fallback_r = trial_r;
        fallback_t = trial_t;
      }
      if (detail::norm_l2(p.domain, trial_r) <= (1.0 - 1e-4 * step) * rl2) {
        accepted = true;
        break;
      }
    }
    IterationRecord rec{it + 1, rinf, rl2, accepted ? step : 1.0, kr.iterations, 0.0};
    if (!accepted) {
      // Stalled line search: take the longest finite step so that runaway
      // (nonexistence) behaviour shows up in v, and count the stall.
      ++stalls;
      if (fallback.empty() || stalls >= o.stall_limit) {
        s.history.push_back(rec);
        s.status = SolverStatus::diverged;
        s.message = "line search stalled " + std::to_string(stalls) + " times";
        if (!fallback.empty()) {
          s.v = std::move(fallback);
          r = std::move(fallback_r);
          s.residual_norm = detail::norm_inf(r);
        }
        s.newton_iterations = it + 1;
        break;
      }
      trial = std::move(fallback);
      trial_r = std::move(fallback_r);
      trial_t = std::move(fallback_t);
      rec.step = -1.0;
    }
    s.v = std::move(trial);
    r = std::move(trial_r);
    t = std::move(trial_t);
    double mv = std::numeric_limits<double>::infinity();
    for (const auto& c : s.v) mv = std::min(mv, mean(c));
    rec.mean_v_min = mv;
    s.history.push_back(rec);
  }
  if (s.status == SolverStatus::diverged && s.message.empty()) s.message = "diverged";
  detail::finish_state(p, s);
  return s;
}

/// Newton from the mass-matched guess, or from v = 0 when no guess exists (probe mode).
inline TodaState solve(const TodaProblem& p) {
  if (auto g = initial_guess(p)) return newton_solve(p, std::move(*g));
  return newton_solve(p, Components(p.n(), Field(p.domain.size(), 0.0)));
}

/// Smooth random field with modes |kx|, |ky| <= band, scaled to max-norm `amplitude`.
inline Field band_limited_noise(const TorusDomain& d, std::uint64_t seed, std::uint64_t key, int band,
                                double amplitude) {
  CounterRng rng(seed, key);
  std::vector<FourierTerm> terms;
  for (int kx = -band; kx <= band; ++kx) {
    for (int ky = 0; ky <= band; ++ky) {
      if (ky == 0 && kx < 0) continue;
      terms.push_back({kx, ky, 2.0 * rng.uniform() - 1.0, 2.0 * rng.uniform() - 1.0});
    }
  }
  const ConformalFactor f(terms);
  Field out = d.sample([&](double x, double y) { return f.value(x, y, d.lx(), d.ly()); });
  const double m = max_abs(out);
  for (auto& e : out) e *= amplitude / m;
  return out;
}

struct UniquenessReport {
  int starts = 0;
  std::uint64_t seed = 0;
  std::vector<SolverStatus> statuses;
  std::vector<int> iterations;
  std::vector<std::vector<double>> distances;  // pairwise sup|u_a - u_b| among converged starts
  double max_distance = 0.0;
  bool all_converged = true;
};

/// Newton from `starts` randomly perturbed guesses; start i uses stream (seed, i).
inline UniquenessReport uniqueness_probe(const TodaProblem& p, int starts, std::uint64_t seed) {
  if (starts < 1) throw InvalidInput("starts must be >= 1");
  const auto guess = initial_guess(p);
  if (!guess) throw InvalidInput("uniqueness probe needs positive masses");
  UniquenessReport rep;
  rep.starts = starts;
  rep.seed = seed;
  std::vector<Components> us;
  for (int i = 0; i < starts; ++i) {
    Components v0 = *guess;
    for (int k = 0; k < p.n(); ++k) {
      const Field noise = band_limited_noise(p.domain, seed, static_cast<std::uint64_t>(i * p.n() + k), 4, 1.0);
      for (std::size_t j = 0; j < v0[k].size(); ++j) v0[k][j] += noise[j];
    }
    TodaState st = newton_solve(p, std::move(v0));
    rep.statuses.push_back(st.status);
    rep.iterations.push_back(st.newton_iterations);
    if (st.status != SolverStatus::converged) {
      rep.all_converged = false;
      us.emplace_back();
      continue;
    }
    us.push_back(std::move(st.u));
  }
  rep.distances.assign(starts, std::vector<double>(starts, 0.0));
  for (int a = 0; a < starts; ++a) {
    for (int b = a + 1; b < starts; ++b) {
      if (us[a].empty() || us[b].empty()) {
        rep.distances[a][b] = rep.distances[b][a] = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      double m = 0.0;
      for (int k = 0; k < p.n(); ++k) {
        for (std::size_t i = 0; i < us[a][k].size(); ++i) m = std::max(m, std::abs(us[a][k][i] - us[b][k][i]));
      }
      rep.distances[a][b] = rep.distances[b][a] = m;
      rep.max_distance = std::max(rep.max_distance, m);
    }
  }
  return rep;
}

struct AsymptoticFit {
  std::string label;
  int component = 0;  // 0-based
  double target_slope = 0.0;
  double slope = 0.0;
  double oscillation = 0.0;
  int nodes = 0;
};

namespace detail {

// Least squares via normal equations with Gaussian elimination (tiny systems).
inline std::vector<double> least_squares(const std::vector<std::vector<double>>& rows, const std::vector<double>& y) {
  const std::size_t m = rows.front().size();
  std::vector<std::vector<double>> a(m, std::vector<double>(m + 1, 0.0));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j) a[i][j] += rows[r][i] * rows[r][j];
      a[i][m] += rows[r][i] * y[r];
    }
  }
  for (std::size_t c = 0; c < m; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < m; ++r) {
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    }
    std::swap(a[c], a[piv]);
    for (std::size_t r = 0; r < m; ++r) {
      if (r == c) continue;
      const double f = a[r][c] / a[c][c];
      for (std::size_t j = c; j <= m; ++j) a[r][j] -= f * a[c][j];
    }
  }
  std::vector<double> x(m);
  for (std::size_t i = 0; i < m; ++i) x[i] = a[i][m] / a[i][i];
  return x;
}

}  // namespace detail

/// Least-squares fit of `field` on the annulus 2h <= |z - p| <= 10h against
/// {1, log r, x, y, r^e for e in extra}; the oscillation is max - min of
/// field - target_slope log r over the annulus.
inline AsymptoticFit fit_log_slope(const TodaProblem& p, std::span<const double> field, std::size_t site_index,
                                   double target_slope, std::vector<double> extra) {
  const TorusDomain& d = p.domain;
  const auto& site = p.green.sites.at(site_index);
  const double h = std::max(d.hx(), d.hy());
  const double r_in = 2.0 * h, r_out = 10.0 * h;
  for (std::size_t o = 0; o < p.green.sites.size(); ++o) {
    if (o == site_index) continue;
    const auto [dx, dy] = d.displacement(p.green.sites[o].x, p.green.sites[o].y, site.x, site.y);
    if (std::hypot(dx, dy) <= r_out + h) {
      throw InvalidInput("fit annulus around '" + site.label + "' contains puncture '" + p.green.sites[o].label + "'");
    }
  }
  std::sort(extra.begin(), extra.end());
  extra.erase(std::unique(extra.begin(), extra.end()), extra.end());

  std::vector<std::vector<double>> rows;
  std::vector<double> y, bounded;
  const int ri = static_cast<int>(std::ceil(r_out / d.hx())) + 1;
  const int rj = static_cast<int>(std::ceil(r_out / d.hy())) + 1;
  const int ci = static_cast<int>(std::floor(site.x / d.hx()));
  const int cj = static_cast<int>(std::floor(site.y / d.hy()));
  for (int dj = -rj; dj <= rj; ++dj) {
    for (int di = -ri; di <= ri; ++di) {
      const int i = ci + di, j = cj + dj;
      const double dx = (i + 0.5) * d.hx() - site.x, dy = (j + 0.5) * d.hy() - site.y;
      const double r = std::hypot(dx, dy);
      if (r < r_in || r > r_out) continue;
      const int wi = ((i % d.nx()) + d.nx()) % d.nx(), wj = ((j % d.ny()) + d.ny()) % d.ny();
      const double val = field[d.index(wi, wj)];
      std::vector<double> row{1.0, std::log(r), dx, dy};
      for (double e : extra) row.push_back(std::pow(r, e));
      rows.push_back(std::move(row));
      y.push_back(val);
      bounded.push_back(val - target_slope * std::log(r));
    }
  }
  const auto coef = detail::least_squares(rows, y);
  const auto [lo, hi] = std::minmax_element(bounded.begin(), bounded.end());
  return AsymptoticFit{site.label, -1, target_slope, coef[1], *hi - *lo, static_cast<int>(y.size())};
}

/// Exponents 2 mu_l(p) + 2 of the leading non-smooth terms that the sources of the
/// components l coupled to k (|l - k| <= 1) put into v_k near puncture `site_index`.
inline std::vector<double> source_exponents(const TodaProblem& p, std::size_t site_index, int k) {
  const auto& site = p.green.sites.at(site_index);
  std::vector<double> extra;
  for (int l = std::max(0, k - 1); l <= std::min(p.n() - 1, k + 1); ++l) {
    if (site.mu[l] != 0.0) extra.push_back(2.0 * site.mu[l] + 2.0);
  }
  return extra;
}

/// Log-slope of u_k at a puncture (target 2 mu_k(p)) and oscillation of its bounded part.
inline AsymptoticFit asymptotic_fit(const TodaProblem& p, const TodaState& s, std::size_t site_index, int k) {
  AsymptoticFit f = fit_log_slope(p, s.u.at(k), site_index, 2.0 * p.green.sites.at(site_index).mu[k],
                                  source_exponents(p, site_index, k));
  f.component = k;
  return f;
}

struct IdentityReport {
  std::vector<double> masses_expected;
  std::vector<double> masses_measured;
  std::vector<double> relative_errors;
  std::vector<double> mass_identity_residual;  // (A m_hat)_k + pi s_k
  std::vector<double> residual_integrals;      // integral of R_k, a solvability diagnostic
  double max_relative_error = 0.0;
};

/// v_k at each puncture by trigonometric interpolation.
inline std::vector<double> values_at_sites(const TodaProblem& p, const Field& v) {
  std::vector<double> out;
  for (const auto& site : p.green.sites) out.push_back(interpolate(p.domain, v, site.x, site.y));
  return out;
}

/// Measured masses m_hat_l = integral of e^{u_l} dA against the exact ones.
inline IdentityReport verify_identities(const TodaProblem& p, const TodaState& s) {
  const int n = p.n();
  const TorusDomain& d = p.domain;
  IdentityReport rep;
  rep.masses_expected = p.masses;
  for (int k = 0; k < n; ++k) {
    Field eu(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) eu[i] = std::exp(s.u[k][i]);
    const double m = integrate(d, eu, p.singular_points(k, values_at_sites(p, s.v[k])));
    rep.masses_measured.push_back(m);
    const double rel = std::abs(m - p.masses[k]) / std::abs(p.masses[k]);
    rep.relative_errors.push_back(rel);
    rep.max_relative_error = std::max(rep.max_relative_error, rel);
  }
  for (int k = 0; k < n; ++k) {
    double am = 0.0;
    for (int l = 0; l < n; ++l) am += p.cartan[k][l] * rep.masses_measured[l];
    rep.mass_identity_residual.push_back(am + std::numbers::pi * p.s(k));
  }
  try {
    const Components r = residual(p, s.v);
    for (int k = 0; k < n; ++k) rep.residual_integrals.push_back(d.cell_area() * pairwise_sum(r[k]));
  } catch (const ScaledEvaluationError&) {
    rep.residual_integrals.assign(n, std::numeric_limits<double>::quiet_NaN());
  }
  return rep;
}

}  // namespace toda
