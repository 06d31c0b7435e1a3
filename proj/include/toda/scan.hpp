#pragma once

// Randomized consistency scan over strength configurations: compares the two
// exponent weightings and checks the derived criterion against mass positivity.

#include "toda/random.hpp"
#include "toda/stability.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <vector>

namespace toda {

struct ScanParams {
  int n_max = 5;
  int genus_max = 3;
  std::int64_t count = 10000;
  std::uint64_t seed = 0;
  int max_punctures = 3;
  int max_denominator = 6;
  std::size_t max_witnesses = 16;
};

struct ScanSample {
  std::int64_t index = 0;
  int n = 0;
  int genus = 0;
  std::vector<RationalVector> mu;  // one vector per puncture

  RationalVector column_sums() const {
    RationalVector s(n, Rational(0));
    for (const auto& m : mu) {
      for (int j = 0; j < n; ++j) s[j] += m[j];
    }
    return s;
  }
};

/// Draws sample `index` of the scan stream for `seed`. Strengths are bounded
/// denominator rationals in [-2, 2]; zero entries are deliberately common.
inline ScanSample draw_sample(const ScanParams& params, std::int64_t index) {
  CounterRng rng(params.seed, static_cast<std::uint64_t>(index));
  ScanSample out;
  out.index = index;
  out.n = static_cast<int>(rng.uniform_int(1, params.n_max));
  out.genus = static_cast<int>(rng.uniform_int(0, params.genus_max));
  const auto punctures = rng.uniform_int(1, params.max_punctures);
  for (std::int64_t p = 0; p < punctures; ++p) {
    RationalVector mu(out.n, Rational(0));
    bool nonzero = false;
    while (!nonzero) {
      for (int j = 0; j < out.n; ++j) {
        if (rng.uniform_int(0, 3) == 0) {
          mu[j] = 0;
          continue;
        }
        const auto den = rng.uniform_int(1, params.max_denominator);
        const auto num = rng.uniform_int(-2 * den, 2 * den);
        mu[j] = make_rational(num, den);
      }
      nonzero = std::any_of(mu.begin(), mu.end(), [](const Rational& r) { return r != 0; });
    }
    out.mu.push_back(std::move(mu));
  }
  return out;
}

struct ScanWitness {
  ScanSample sample;
  StabilityReport report;
  bool zero_mass = false;  // some m_l is exactly 0 (boundary witness)
};

struct ScanReport {
  ScanParams params;
  std::int64_t disagreements = 0;
  std::int64_t n1_disagreements = 0;
  std::int64_t zero_mass_witnesses = 0;
  std::vector<std::int64_t> mass_equivalence_failures;
  std::vector<ScanWitness> witnesses;  // smallest disagreement witnesses

  bool mass_equivalence_holds() const { return mass_equivalence_failures.empty(); }
};

namespace detail {

inline mpz_class witness_height(const ScanSample& s) {
  mpz_class h = 1000 * s.n + 100 * s.genus;
  for (const auto& r : s.column_sums()) h += abs(r.get_num()) + r.get_den();
  return h;
}

}  // namespace detail

inline ScanReport consistency_scan(const ScanParams& params) {
  if (params.count < 1) throw InvalidInput("scan count must be >= 1");
  if (params.n_max < 1 || params.genus_max < 0) throw InvalidInput("bad scan bounds");
  ScanReport out;
  out.params = params;
  std::vector<ScanWitness> all;
  for (std::int64_t i = 0; i < params.count; ++i) {
    ScanSample sample = draw_sample(params, i);
    StabilityReport report = report_from_sums(sample.n, sample.genus, sample.column_sums());
    if (report.verdict_derived.exists != report.masses_positive()) {
      out.mass_equivalence_failures.push_back(i);
    }
    if (report.variants_agree) continue;
    ++out.disagreements;
    if (sample.n == 1) ++out.n1_disagreements;
    ScanWitness w{std::move(sample), std::move(report), false};
    w.zero_mass = std::any_of(w.report.masses.begin(), w.report.masses.end(),
                              [](const Rational& m) { return m == 0; });
    if (w.zero_mass) ++out.zero_mass_witnesses;
    all.push_back(std::move(w));
  }
  std::stable_sort(all.begin(), all.end(), [](const ScanWitness& a, const ScanWitness& b) {
    return detail::witness_height(a.sample) < detail::witness_height(b.sample);
  });
  // One witness per (n, genus, s): the first sample index that produced it.
  std::vector<ScanWitness> distinct;
  for (auto& w : all) {
    const bool seen = std::any_of(distinct.begin(), distinct.end(), [&](const ScanWitness& d) {
      return d.sample.n == w.sample.n && d.sample.genus == w.sample.genus && d.report.s == w.report.s;
    });
    if (!seen) distinct.push_back(std::move(w));
  }
  all = std::move(distinct);
  if (all.size() > params.max_witnesses) all.resize(params.max_witnesses);
  out.witnesses = std::move(all);
  return out;
}

inline nlohmann::json to_json(const ScanSample& s) {
  auto mu = nlohmann::json::array();
  for (const auto& m : s.mu) mu.push_back(to_json(m));
  return nlohmann::json{{"index", s.index}, {"n", s.n}, {"genus", s.genus}, {"mu", mu},
                        {"s", to_json(s.column_sums())}};
}

inline nlohmann::json to_json(const ScanReport& r) {
  auto witnesses = nlohmann::json::array();
  for (const auto& w : r.witnesses) {
    witnesses.push_back(nlohmann::json{{"sample", to_json(w.sample)},
                                       {"verdict_paper", w.report.verdict_paper.exists},
                                       {"verdict_derived", w.report.verdict_derived.exists},
                                       {"d_paper", to_json(w.report.d_paper)},
                                       {"d_derived", to_json(w.report.d_derived)},
                                       {"masses_over_pi", to_json(w.report.masses)},
                                       {"zero_mass", w.zero_mass}});
  }
  Rational fraction(r.disagreements, r.params.count);
  fraction.canonicalize();
  return nlohmann::json{
      {"params",
       {{"n_max", r.params.n_max},
        {"genus_max", r.params.genus_max},
        {"count", r.params.count},
        {"seed", r.params.seed},
        {"max_punctures", r.params.max_punctures},
        {"max_denominator", r.params.max_denominator}}},
      {"disagreements", r.disagreements},
      {"disagreement_fraction", to_json(fraction)},
      {"n1_disagreements", r.n1_disagreements},
      {"zero_mass_witnesses", r.zero_mass_witnesses},
      {"mass_equivalence_holds", r.mass_equivalence_holds()},
      {"mass_equivalence_failures", r.mass_equivalence_failures},
      {"witnesses", witnesses}};
}

}  // namespace toda
