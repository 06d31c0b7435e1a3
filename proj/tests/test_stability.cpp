#include <gtest/gtest.h>

#include "toda/scan.hpp"
#include "toda/stability.hpp"

#include <algorithm>
#include <numeric>

using namespace toda;

namespace {

Rational q(std::int64_t a, std::int64_t b = 1) { return make_rational(a, b); }

SingularStrengths one_puncture(int n, int genus, RationalVector mu) {
  return SingularStrengths(n, genus, {Puncture{"p", std::nullopt, std::move(mu)}});
}

// Oracle: exponent of |z| in |delta_k|^2, accumulated puncture by puncture from
// b_j ~ |z|^{mu_j}: delta_k = (prod_j b_j^{n+1-j})^{-1/(n+1)} b_1...b_k.
RationalVector delta_exponent_oracle(const SingularStrengths& st) {
  const int n = st.n();
  RationalVector e(n, Rational(0));
  for (const auto& p : st.punctures()) {
    for (int k = 1; k <= n; ++k) {
      Rational log_delta = 0;
      for (int j = 1; j <= n; ++j) log_delta -= Rational(n + 1 - j) * p.mu[j - 1] / (n + 1);
      for (int j = 1; j <= k; ++j) log_delta += p.mu[j - 1];
      e[k - 1] += log_delta;  // |delta_k|^2 ~ |z|^{2 e_k}
    }
  }
  return e;
}

}  // namespace

TEST(Cartan, SmallCases) {
  auto c1 = cartan(1);
  EXPECT_EQ(c1.A[0][0], 2);
  EXPECT_EQ(c1.A_inv[0][0], q(1, 2));

  auto c2 = cartan(2);
  EXPECT_EQ(c2.A, (std::vector<std::vector<int>>{{2, -1}, {-1, 2}}));
  EXPECT_EQ(c2.A_inv[0][0], q(2, 3));
  EXPECT_EQ(c2.A_inv[0][1], q(1, 3));
  EXPECT_EQ(c2.A_inv[1][1], q(2, 3));

  EXPECT_EQ(cartan(4).A_inv[0][3], q(1, 5));
  EXPECT_THROW(cartan(0), InvalidInput);
}

TEST(Cartan, InverseIsExactAndPositive) {
  for (int n = 1; n <= 12; ++n) {
    const auto c = cartan(n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        Rational acc = 0;
        for (int k = 0; k < n; ++k) acc += c.A[i][k] * c.A_inv[k][j];
        EXPECT_EQ(acc, i == j ? 1 : 0);
        EXPECT_GT(c.A_inv[i][j], 0);
        EXPECT_EQ(c.A_inv[i][j], cartan_inverse_entry(n, i + 1, j + 1));
      }
    }
  }
}

TEST(Exponents, FrozenValues) {
  // n = 1: the two weightings differ by the (n+1-j) vs (n-j) shift.
  auto st1 = one_puncture(1, 1, {q(-1, 2)});
  EXPECT_EQ(exponents(st1, Variant::paper), (RationalVector{q(-1, 2)}));
  EXPECT_EQ(exponents(st1, Variant::derived), (RationalVector{q(-1, 4)}));

  auto st2 = one_puncture(2, 1, {q(-1, 2), q(-1, 2)});
  EXPECT_EQ(exponents(st2, Variant::paper), (RationalVector{q(-1, 3), q(-5, 6)}));
  EXPECT_EQ(exponents(st2, Variant::derived), (RationalVector{q(0), q(-1, 2)}));
}

TEST(Exponents, DerivedMatchesDeltaConstruction) {
  std::vector<Puncture> ps = {
      {"a", std::nullopt, {q(1, 3), q(-1, 2), q(0), q(2)}},
      {"b", std::nullopt, {q(-3, 4), q(0), q(5, 6), q(-1)}},
  };
  SingularStrengths st(4, 0, ps);
  EXPECT_EQ(exponents(st, Variant::derived), delta_exponent_oracle(st));
}

TEST(Degrees, FrozenValues) {
  auto st = one_puncture(2, 2, {q(0), q(1)});
  EXPECT_EQ(exponents(st, Variant::derived), (RationalVector{q(-1, 3), q(2, 3)}));
  auto deg = degrees(st, Variant::derived);
  EXPECT_EQ(deg.deg_F[0], q(-4, 3));

  auto st1 = one_puncture(1, 1, {q(-1, 2)});
  auto d1 = degrees(st1, Variant::paper);
  EXPECT_EQ(d1.deg_E[1], q(-1, 2));
  EXPECT_EQ(d1.deg_F[0], q(-1, 2));
  // E_0 balances the determinant.
  EXPECT_EQ(d1.deg_E[0], q(1, 2));
}

TEST(Degrees, FlagIdentityAndTotalDegree) {
  std::vector<Puncture> ps = {{"a", std::nullopt, {q(1, 3), q(-1, 2), q(7, 5)}},
                              {"b", std::nullopt, {q(-3, 4), q(0), q(5, 6)}}};
  for (int genus = 0; genus <= 3; ++genus) {
    SingularStrengths st(3, genus, ps);
    for (auto variant : {Variant::paper, Variant::derived}) {
      const auto d = exponents(st, variant);
      const auto deg = degrees(st, variant);
      const int n = 3;
      Rational total = 0;
      for (const auto& e : deg.deg_E) total += e;
      EXPECT_EQ(total, 0);
      for (int l = 1; l <= n; ++l) {
        Rational expected = Rational((genus - 1) * l * (l - n - 1));
        for (int k = n - l + 1; k <= n; ++k) expected += d[k - 1];
        EXPECT_EQ(deg.deg_F[l - 1], expected);
        EXPECT_EQ(deg.slopes_F[l - 1] * l, deg.deg_F[l - 1]);
      }
    }
    // Under the derived weighting the balancing term of E_0 is the exponent of |delta_0|^2.
    const auto s = st.column_sums();
    Rational e0 = 0;
    for (int j = 1; j <= 3; ++j) e0 -= Rational(4 - j) * s[j - 1] / 4;
    EXPECT_EQ(degrees(st, Variant::derived).deg_E[0], Rational((genus - 1) * 3) + e0);
  }
}

TEST(Masses, FrozenValues) {
  EXPECT_EQ(masses(one_puncture(1, 1, {q(-1, 2)})), (RationalVector{q(1, 4)}));
  EXPECT_EQ(masses(one_puncture(2, 1, {q(-1, 2), q(-1, 2)})), (RationalVector{q(1, 2), q(1, 2)}));
  EXPECT_EQ(masses(one_puncture(2, 1, {q(1), q(-2)})), (RationalVector{q(0), q(1)}));
}

TEST(Masses, SatisfyIntegratedSystem) {
  std::vector<Puncture> ps = {{"a", std::nullopt, {q(1, 3), q(-1, 2), q(7, 5), q(1)}}};
  SingularStrengths st(4, 3, ps);
  const auto m = masses(st);
  const auto s = st.column_sums();
  const auto c = cartan(4);
  for (int k = 0; k < 4; ++k) {
    Rational am = 0;
    for (int l = 0; l < 4; ++l) am += c.A[k][l] * m[l];
    EXPECT_EQ(am, Rational(2 * (3 - 1)) - s[k]);
  }
}

TEST(Criterion, FrozenCases) {
  auto r1 = criterion(one_puncture(1, 1, {q(-1, 2)}));
  EXPECT_TRUE(r1.verdict_paper.exists);
  EXPECT_TRUE(r1.verdict_derived.exists);
  EXPECT_TRUE(r1.variants_agree);

  auto r2 = criterion(one_puncture(2, 1, {q(1), q(-2)}));
  EXPECT_EQ(r2.d_paper, (RationalVector{q(2, 3), q(-4, 3)}));
  EXPECT_EQ(r2.d_derived, (RationalVector{q(1), q(-1)}));
  EXPECT_TRUE(r2.verdict_paper.exists);
  EXPECT_FALSE(r2.verdict_derived.exists);
  EXPECT_FALSE(r2.verdict_derived.per_l[1]);  // l = 2: sum 0 is not < 0
  EXPECT_FALSE(r2.variants_agree);
  EXPECT_EQ(r2.masses[0], 0);
}

TEST(Criterion, SmoothCaseExistsIffGenusAtLeastTwo) {
  for (int n = 1; n <= 12; ++n) {
    for (int genus = 0; genus <= 4; ++genus) {
      const auto r = smooth_criterion(n, genus);
      EXPECT_EQ(r.verdict_paper.exists, genus >= 2);
      EXPECT_EQ(r.verdict_derived.exists, genus >= 2);
    }
  }
}

TEST(Criterion, VerdictMatchesNegativeFlagSlopes) {
  auto st = one_puncture(3, 2, {q(1, 2), q(-5, 3), q(3, 4)});
  const auto r = criterion(st);
  for (auto v : {Variant::paper, Variant::derived}) {
    for (int l = 0; l < 3; ++l) {
      EXPECT_EQ(r.verdict(v).per_l[l], r.degrees(v).slopes_F[l] < 0);
    }
  }
}

TEST(Criterion, PermutationAndSumSufficiency) {
  Puncture a{"a", std::nullopt, {q(1, 3), q(-1, 2), q(1)}};
  Puncture b{"b", std::nullopt, {q(-2, 3), q(1, 6), q(-1, 4)}};
  const auto r_ab = to_json(criterion(SingularStrengths(3, 1, {a, b})));
  const auto r_ba = to_json(criterion(SingularStrengths(3, 1, {b, a})));
  EXPECT_EQ(r_ab, r_ba);
  Puncture merged{"m", std::nullopt, {q(-1, 3), q(-1, 3), q(3, 4)}};
  EXPECT_EQ(r_ab, to_json(criterion(SingularStrengths(3, 1, {merged}))));
}

TEST(Criterion, DerivedVerdictEqualsMassPositivityExhaustive) {
  // n <= 3 over s_j in {k/6 : |k| <= 12}; n = 4 over {k/2 : |k| <= 4}.
  std::int64_t checked = 0;
  auto run = [&](int n, int genus, const std::vector<Rational>& values) {
    std::vector<std::size_t> idx(n, 0);
    while (true) {
      RationalVector s(n);
      for (int j = 0; j < n; ++j) s[j] = values[idx[j]];
      const auto r = report_from_sums(n, genus, s);
      ASSERT_EQ(r.verdict_derived.exists, r.masses_positive());
      ++checked;
      int pos = 0;
      while (pos < n && ++idx[pos] == values.size()) idx[pos++] = 0;
      if (pos == n) break;
    }
  };
  std::vector<Rational> sixths, halves;
  for (int k = -12; k <= 12; ++k) sixths.push_back(q(k, 6));
  for (int k = -4; k <= 4; ++k) halves.push_back(q(k, 2));
  for (int genus = 0; genus <= 3; ++genus) {
    for (int n = 1; n <= 3; ++n) run(n, genus, sixths);
    run(4, genus, halves);
  }
  EXPECT_GT(checked, 60000);
}

TEST(Criterion, InvalidStrengthsRejected) {
  EXPECT_THROW(one_puncture(2, 1, {q(0), q(0)}), InvalidInput);
  EXPECT_THROW(one_puncture(2, 1, {q(1)}), InvalidInput);
  EXPECT_THROW(SingularStrengths(2, 1, {}), InvalidInput);
  EXPECT_THROW(one_puncture(0, 1, {}), InvalidInput);
  EXPECT_THROW(one_puncture(1, 1, {q(-1)}).require_solver_ready(), InvalidInput);
}

TEST(Scan, DeterministicAndConsistent) {
  ScanParams p;
  p.count = 2000;
  p.seed = 7;
  const auto a = consistency_scan(p);
  const auto b = consistency_scan(p);
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
  EXPECT_TRUE(a.mass_equivalence_holds());
  EXPECT_GT(a.disagreements, 0);
  for (const auto& w : a.witnesses) {
    EXPECT_FALSE(w.report.variants_agree);
    const auto replay = draw_sample(p, w.sample.index);
    EXPECT_EQ(replay.column_sums(), w.sample.column_sums());
  }
}

TEST(Scan, GenusOneSingleComponentSamplesAgree) {
  // For n = 1 the weightings differ by a factor 2 on s_1, which only matters off genus 1.
  ScanParams p;
  p.n_max = 1;
  p.genus_max = 1;
  p.count = 500;
  const auto r = consistency_scan(p);
  for (const auto& w : r.witnesses) EXPECT_NE(w.sample.genus, 1);
  for (std::int64_t i = 0; i < p.count; ++i) {
    const auto s = draw_sample(p, i);
    if (s.genus != 1) continue;
    EXPECT_TRUE(report_from_sums(1, 1, s.column_sums()).variants_agree);
  }
}
