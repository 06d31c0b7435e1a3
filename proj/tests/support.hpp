#pragma once

#include "toda/strengths.hpp"

#include <array>
#include <string>
#include <utility>
#include <vector>

namespace toda::testing {

inline Rational q(std::int64_t a, std::int64_t b = 1) { return make_rational(a, b); }

using Site = std::pair<std::array<Rational, 2>, RationalVector>;

/// Genus-1 strengths with punctures labelled p0, p1, ...
inline SingularStrengths strengths_at(int n, std::vector<Site> pts) {
  std::vector<Puncture> ps;
  for (std::size_t i = 0; i < pts.size(); ++i) ps.push_back(Puncture{"p" + std::to_string(i), pts[i].first, pts[i].second});
  return SingularStrengths(n, 1, std::move(ps));
}

/// One puncture at the centre of the unit torus.
inline SingularStrengths centred(RationalVector mu) {
  const int n = static_cast<int>(mu.size());
  return strengths_at(n, {{{q(1, 2), q(1, 2)}, std::move(mu)}});
}

}  // namespace toda::testing
