#include <gtest/gtest.h>

#include "toda/toda_solver.hpp"
#include "support.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <numbers>

using namespace toda;
using toda::testing::centred;
using toda::testing::q;
using toda::testing::strengths_at;

namespace {

constexpr double pi = std::numbers::pi;

// Integral of w = exp(-2 pi G(z - p)) over the unit torus, computed once in
// polar coordinates about p (r w is smooth there) with nested Gauss-Kronrod
// over the eight sectors cut by the square's corners.
constexpr double kWeightIntegral = 1.133437682628874;

double polar_weight_integral() {
  using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
  double total = 0.0;
  for (int s = 0; s < 8; ++s) {
    auto outer = [](double th) {
      const double edge = 0.5 / std::max(std::abs(std::cos(th)), std::abs(std::sin(th)));
      auto inner = [th](double r) { return r * std::exp(-2 * pi * green_eval(1, 1, r * std::cos(th), r * std::sin(th))); };
      return GK::integrate(inner, 0.0, edge, 10, 1e-14);
    };
    total += GK::integrate(outer, s * pi / 4, (s + 1) * pi / 4, 10, 1e-14);
  }
  return total;
}

TodaProblem unit_problem(const SingularStrengths& st, int N, SolverOptions o = {}) {
  return make_problem(st, TorusDomain(1.0, 1.0, N, N), o);
}

double sup_diff(const Field& a, const Field& b, double shift = 0.0) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i] - shift));
  return m;
}

}  // namespace

TEST(Residual, IntegralSignWithoutMassMatching) {
  // s = +1, v = 0: the integral of R is -pi s - 2 (integral of w), strictly negative.
  const auto p = unit_problem(centred({q(1)}), 64);
  const Components v(1, Field(p.domain.size(), 0.0));
  const Components r = residual(p, v);
  const double integral = p.domain.cell_area() * pairwise_sum(r[0]);
  // Discrete identity against the corrected quadrature, and against a 512^2
  // midpoint oracle (w = r^2 x smooth is itself smooth).
  const double w_integral = integrate(p.domain, p.green.w[0], p.singular_points(0, {0.0}));
  EXPECT_NEAR(integral, -pi - 2 * w_integral, 1e-10);
  const auto fine = unit_problem(centred({q(1)}), 512);
  const double oracle = fine.domain.cell_area() * pairwise_sum(fine.green.w[0]);
  EXPECT_NEAR(integral, -pi - 2 * oracle, 1e-6);
  EXPECT_LT(integral, 0.0);
}

TEST(Residual, VanishingIntegralAtMassMatchedGuess) {
  const auto p = unit_problem(centred({q(-1, 100)}), 64);
  const auto v = initial_guess(p);
  ASSERT_TRUE(v.has_value());
  const Components r = residual(p, *v);
  EXPECT_NEAR(p.domain.cell_area() * pairwise_sum(r[0]), 0.0, 1e-12);
}

TEST(Residual, OverflowNamesTheNode) {
  const auto p = unit_problem(centred({q(-1, 2)}), 32);
  Components v(1, Field(p.domain.size(), 0.0));
  v[0][p.domain.index(3, 5)] = 800.0;
  try {
    residual(p, v);
    FAIL() << "expected an overflow";
  } catch (const ScaledEvaluationError& e) {
    EXPECT_NE(std::string(e.what()).find("(3, 5)"), std::string::npos) << e.what();
  }
}

TEST(Residual, HermitianSignAssemblesButIsNotSolved) {
  SolverOptions o;
  o.epsilon = -1;
  const auto p = unit_problem(centred({q(-1, 2)}), 32, o);
  const Components v(1, Field(p.domain.size(), 0.0));
  const Components r = residual(p, v);
  // With v = 0 the source enters with the opposite sign.
  SolverOptions plus;
  const auto pp = unit_problem(centred({q(-1, 2)}), 32, plus);
  const Components rp = residual(pp, v);
  for (std::size_t i = 0; i < r[0].size(); ++i) {
    EXPECT_NEAR(r[0][i] + rp[0][i], 2 * (-pi * (-0.5)), 1e-12);
  }
  EXPECT_THROW(newton_solve(p, v), InvalidInput);
}

TEST(InitialGuess, MatchesPolarQuadrature) {
  EXPECT_NEAR(polar_weight_integral(), kWeightIntegral, 1e-13);
  const auto p = unit_problem(centred({q(-1, 2)}), 256);
  const auto v = initial_guess(p);
  ASSERT_TRUE(v.has_value());
  EXPECT_NEAR((*v)[0][0], std::log((pi / 4) / kWeightIntegral), 1e-8);
  for (double e : (*v)[0]) EXPECT_EQ(e, (*v)[0][0]);
}

TEST(InitialGuess, SymmetricDataGivesEqualComponents) {
  const auto p = unit_problem(centred({q(-1, 2), q(-1, 2)}), 64);
  const auto v = initial_guess(p);
  ASSERT_TRUE(v.has_value());
  EXPECT_EQ((*v)[0], (*v)[1]);
}

TEST(InitialGuess, UnavailableForNonPositiveMass) {
  EXPECT_FALSE(initial_guess(unit_problem(centred({q(1, 2)}), 32)).has_value());
  // n = 2 with m_1 = 0.
  const auto st = strengths_at(2, {{{q(1, 4), q(1, 4)}, {q(1, 2), q(-2, 3)}},
                                   {{q(3, 4), q(1, 4)}, {q(1, 2), q(-2, 3)}},
                                   {{q(1, 2), q(3, 4)}, {q(0), q(-2, 3)}}});
  const auto p = unit_problem(st, 32);
  EXPECT_EQ(p.masses[0], 0.0);
  EXPECT_FALSE(initial_guess(p).has_value());
}

TEST(Problem, RejectsBadInput) {
  EXPECT_THROW(unit_problem(centred({q(-1)}), 32), InvalidInput);
  const auto close = strengths_at(1, {{{q(1, 2), q(1, 2)}, {q(-1, 2)}}, {{q(17, 32), q(1, 2)}, {q(-1, 4)}}});
  EXPECT_THROW(unit_problem(close, 32), InvalidInput);
  SolverOptions o;
  o.epsilon = 0;
  EXPECT_THROW(unit_problem(centred({q(-1, 2)}), 32, o), InvalidInput);
  EXPECT_THROW(make_problem(SingularStrengths(1, 2, {Puncture{"a", std::array{q(1, 2), q(1, 2)}, {q(-1, 2)}}}),
                            TorusDomain(1, 1, 32, 32)),
               InvalidInput);
}

TEST(Jacobian, SymmetricInInverseCartanProduct) {
  const auto p = unit_problem(centred({q(-1, 2), q(-1, 3), q(1, 4)}), 64);
  const int n = p.n();
  Components v(n), delta(n), eta(n);
  for (int k = 0; k < n; ++k) {
    v[k] = band_limited_noise(p.domain, 7, k, 3, 1.0);
    delta[k] = band_limited_noise(p.domain, 8, k, 5, 1.0);
    eta[k] = band_limited_noise(p.domain, 9, k, 5, 1.0);
  }
  const Components jd = jacobian_apply(p, v, delta);
  const Components je = jacobian_apply(p, v, eta);
  const auto ainv = detail::cartan_inverse_double(n);
  const double lhs = detail::dot(detail::mix(ainv, jd), eta);
  const double rhs = detail::dot(delta, detail::mix(ainv, je));
  EXPECT_NEAR(lhs, rhs, 1e-8 * std::abs(lhs));
}

TEST(Jacobian, MatchesFiniteDifferenceOfResidual) {
  const auto p = unit_problem(centred({q(-1, 2), q(-1, 4)}), 32);
  Components v(2), delta(2);
  for (int k = 0; k < 2; ++k) {
    v[k] = band_limited_noise(p.domain, 1, k, 3, 0.5);
    delta[k] = band_limited_noise(p.domain, 2, k, 3, 1.0);
  }
  const double h = 1e-6;
  Components plus = v, minus = v;
  for (int k = 0; k < 2; ++k) {
    for (std::size_t i = 0; i < v[k].size(); ++i) {
      plus[k][i] += h * delta[k][i];
      minus[k][i] -= h * delta[k][i];
    }
  }
  const Components rp = residual(p, plus), rm = residual(p, minus), j = jacobian_apply(p, v, delta);
  for (int k = 0; k < 2; ++k) {
    for (std::size_t i = 0; i < j[k].size(); ++i) EXPECT_NEAR((rp[k][i] - rm[k][i]) / (2 * h), j[k][i], 1e-6);
  }
}

TEST(Solver, UnitTorusHalfStrengthConverges) {
  // The fit annulus scales with h, and the bounded part varies linearly in r
  // there, so the oscillation bound needs 256^2.
  const auto p = unit_problem(centred({q(-1, 2)}), 256);
  const TodaState s = solve(p);
  ASSERT_EQ(s.status, SolverStatus::converged) << s.message;
  EXPECT_LE(s.residual_norm, 1e-8);
  EXPECT_LE(detail::norm_inf(residual(p, s.v)), 1e-8);
  for (const auto& b : s.b) {
    for (double e : b) EXPECT_GT(e, 0.0);
  }
  const IdentityReport rep = verify_identities(p, s);
  EXPECT_NEAR(rep.masses_measured[0], pi / 4, 0.01 * pi / 4);
  // A m_hat = -pi s at genus 1.
  EXPECT_NEAR(rep.mass_identity_residual[0], 0.0, 0.01);
  EXPECT_NEAR(rep.residual_integrals[0], 0.0, 1e-8);

  const AsymptoticFit fit = asymptotic_fit(p, s, 0, 0);
  EXPECT_NEAR(fit.slope, -1.0, 0.02);
  EXPECT_LE(fit.oscillation, 0.05);
}

TEST(Solver, PositiveStrengthDivergesFromEveryStart) {
  const auto p = unit_problem(centred({q(1, 2)}), 128);
  EXPECT_LT(p.masses[0], 0.0);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Components v0(1, band_limited_noise(p.domain, seed, 0, 4, 1.0));
    const TodaState s = newton_solve(p, v0);
    EXPECT_EQ(s.status, SolverStatus::diverged) << "seed " << seed;
    EXPECT_LT(mean(s.v[0]), -40.0) << s.message;
  }
  const TodaState probe = solve(p);
  EXPECT_EQ(probe.status, SolverStatus::diverged);
  EXPECT_LT(mean(probe.v[0]), -40.0);
}

TEST(Solver, ProbeDivergesWhenSomeMassIsNegative) {
  const auto p = unit_problem(centred({q(1, 2), q(-1, 2)}), 64);
  EXPECT_LT(p.masses[0], 0.0);
  EXPECT_GT(p.masses[1], 0.0);
  EXPECT_EQ(solve(p).status, SolverStatus::diverged);
}

TEST(Solver, SymmetricPairAndReduction) {
  const auto p2 = unit_problem(centred({q(-1, 2), q(-1, 2)}), 128);
  const TodaState s2 = solve(p2);
  ASSERT_EQ(s2.status, SolverStatus::converged) << s2.message;
  EXPECT_LE(sup_diff(s2.u[0], s2.u[1]), 1e-8);
  const IdentityReport rep = verify_identities(p2, s2);
  for (double m : rep.masses_measured) EXPECT_NEAR(m, pi / 2, 0.01 * pi / 2);
  EXPECT_NEAR(rep.masses_measured[0], rep.masses_measured[1], 1e-10);

  const auto p1 = unit_problem(centred({q(-1, 2)}), 128);
  const TodaState s1 = solve(p1);
  ASSERT_EQ(s1.status, SolverStatus::converged);
  // Compare regular parts: gamma is identical, so u - u~ = v - v~.
  EXPECT_LE(sup_diff(s2.v[0], s1.v[0], std::log(2.0)), 1e-6);
}

TEST(Solver, ZeroStrengthComponentHasNoLogTerm) {
  const auto p = unit_problem(centred({q(-1, 2), q(0)}), 128);
  const TodaState s = solve(p);
  ASSERT_EQ(s.status, SolverStatus::converged) << s.message;
  const AsymptoticFit f0 = asymptotic_fit(p, s, 0, 0);
  const AsymptoticFit f1 = asymptotic_fit(p, s, 0, 1);
  EXPECT_NEAR(f0.slope, -1.0, 0.02);
  EXPECT_NEAR(f1.slope, 0.0, 0.02);
  EXPECT_LE(f1.oscillation, 0.05);
  const IdentityReport rep = verify_identities(p, s);
  EXPECT_NEAR(rep.masses_measured[0], pi / 3, 0.01 * pi / 3);
  EXPECT_NEAR(rep.masses_measured[1], pi / 6, 0.01 * pi / 6);
}

TEST(Solver, AnnulusContainingAnotherPunctureIsRejected) {
  const auto st = strengths_at(1, {{{q(1, 2), q(1, 2)}, {q(-1, 2)}}, {{q(5, 8), q(1, 2)}, {q(-1, 4)}}});
  const auto p = unit_problem(st, 64);
  const Field zero(p.domain.size(), 0.0);
  EXPECT_THROW(fit_log_slope(p, zero, 0, -1.0, {}), InvalidInput);
}

TEST(Solver, ConformalFactorLeavesMassesUnchanged) {
  const ConformalFactor phi({{1, 0, 0.2, 0.0}, {0, 1, 0.0, -0.15}, {1, 1, 0.05, 0.1}});
  const auto p = make_problem(centred({q(-1, 2)}), TorusDomain(1, 1, 128, 128, phi));
  const TodaState s = solve(p);
  ASSERT_EQ(s.status, SolverStatus::converged) << s.message;
  const IdentityReport rep = verify_identities(p, s);
  EXPECT_NEAR(rep.masses_measured[0], pi / 4, 0.01 * pi / 4);
}

TEST(Uniqueness, SingleStartHasZeroDistance) {
  const auto p = unit_problem(centred({q(-1, 2)}), 64);
  const UniquenessReport r = uniqueness_probe(p, 1, 11);
  EXPECT_TRUE(r.all_converged);
  EXPECT_EQ(r.max_distance, 0.0);
  EXPECT_THROW(uniqueness_probe(p, 0, 11), InvalidInput);
}

TEST(Uniqueness, RandomStartsAgree) {
  const auto p = unit_problem(centred({q(-1, 2)}), 128);
  const UniquenessReport r = uniqueness_probe(p, 5, 2024);
  EXPECT_TRUE(r.all_converged);
  EXPECT_LE(r.max_distance, 1e-6);
}

TEST(Uniqueness, AsymmetricNoiseStillGivesSymmetricPair) {
  const auto p = unit_problem(centred({q(-1, 2), q(-1, 2)}), 64);
  const auto guess = initial_guess(p);
  ASSERT_TRUE(guess.has_value());
  Components v0 = *guess;
  const Field noise = band_limited_noise(p.domain, 5, 0, 4, 1.0);
  for (std::size_t i = 0; i < noise.size(); ++i) v0[0][i] += noise[i];
  const TodaState s = newton_solve(p, v0);
  ASSERT_EQ(s.status, SolverStatus::converged);
  EXPECT_LE(sup_diff(s.u[0], s.u[1]), 1e-6);
}

TEST(Refinement, SolutionConvergesAtSecondOrder) {
  // v^N against v^{2N} restricted to the coarse nodes (cubic through the four
  // fine nodes around each coarse node), off 5-cell puncture neighbourhoods.
  std::vector<Field> vs;
  for (int N : {128, 256, 512}) vs.push_back(solve(unit_problem(centred({q(-1, 2)}), N)).v[0]);
  const double w[4] = {-1.0 / 16, 9.0 / 16, 9.0 / 16, -1.0 / 16};
  std::vector<double> errors;
  for (int level = 0; level < 2; ++level) {
    const int N = 128 << level;
    const TorusDomain coarse(1, 1, N, N), fine(1, 1, 2 * N, 2 * N);
    double err = 0.0;
    for (int j = 0; j < N; ++j) {
      for (int i = 0; i < N; ++i) {
        if (std::hypot(coarse.x(i) - 0.5, coarse.y(j) - 0.5) <= 5.0 / N) continue;
        double restricted = 0.0;
        for (int a = 0; a < 4; ++a) {
          for (int b = 0; b < 4; ++b) {
            const int fi = (2 * i - 1 + a + 2 * N) % (2 * N), fj = (2 * j - 1 + b + 2 * N) % (2 * N);
            restricted += w[a] * w[b] * vs[level + 1][fine.index(fi, fj)];
          }
        }
        err = std::max(err, std::abs(vs[level][coarse.index(i, j)] - restricted));
      }
    }
    errors.push_back(err);
  }
  EXPECT_GE(std::log2(errors[0] / errors[1]), 1.5) << errors[0] << " " << errors[1];
}
