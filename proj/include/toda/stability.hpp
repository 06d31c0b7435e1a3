#pragma once

// Existence/uniqueness criterion for singular Toda systems of VHS type,
// evaluated in exact rational arithmetic.

#include "toda/rational.hpp"
#include "toda/strengths.hpp"

#include <json.hpp>

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace toda {

using RationalMatrix = std::vector<RationalVector>;

struct CartanData {
  int n = 0;
  std::vector<std::vector<int>> A;
  RationalMatrix A_inv;
};

/// Closed form of the type-A inverse Cartan matrix (1-based j, k).
inline Rational cartan_inverse_entry(int n, int j, int k) {
  const int lo = std::min(j, k);
  const int hi = std::max(j, k);
  Rational r(lo * (n + 1 - hi), n + 1);
  r.canonicalize();
  return r;
}

/// Inverse of an exact rational matrix by Gauss-Jordan elimination.
inline RationalMatrix invert_exact(RationalMatrix m) {
  const std::size_t size = m.size();
  RationalMatrix inv(size, RationalVector(size, Rational(0)));
  for (std::size_t i = 0; i < size; ++i) inv[i][i] = 1;
  for (std::size_t col = 0; col < size; ++col) {
    std::size_t pivot = col;
    while (pivot < size && m[pivot][col] == 0) ++pivot;
    if (pivot == size) throw std::domain_error("singular matrix");
    std::swap(m[pivot], m[col]);
    std::swap(inv[pivot], inv[col]);
    const Rational scale = m[col][col];
    for (std::size_t c = 0; c < size; ++c) {
      m[col][c] /= scale;
      inv[col][c] /= scale;
    }
    for (std::size_t r = 0; r < size; ++r) {
      if (r == col || m[r][col] == 0) continue;
      const Rational f = m[r][col];
      for (std::size_t c = 0; c < size; ++c) {
        m[r][c] -= f * m[col][c];
        inv[r][c] -= f * inv[col][c];
      }
    }
  }
  return inv;
}

/// Type-A Cartan matrix and its exact inverse. The inverse is obtained by
/// elimination and cross-checked against the closed form.
inline CartanData cartan(int n) {
  if (n < 1) throw InvalidInput("cartan: n must be >= 1");
  CartanData out;
  out.n = n;
  out.A.assign(n, std::vector<int>(n, 0));
  RationalMatrix a(n, RationalVector(n, Rational(0)));
  for (int i = 0; i < n; ++i) {
    out.A[i][i] = 2;
    if (i + 1 < n) out.A[i][i + 1] = out.A[i + 1][i] = -1;
    for (int j = 0; j < n; ++j) a[i][j] = out.A[i][j];
  }
  out.A_inv = invert_exact(std::move(a));
  for (int j = 0; j < n; ++j) {
    for (int k = 0; k < n; ++k) {
      if (out.A_inv[j][k] != cartan_inverse_entry(n, j + 1, k + 1)) {
        throw std::logic_error("inverse Cartan matrix disagrees with closed form");
      }
    }
  }
  return out;
}

/// Two weightings of the exponent d_k.
///  - paper:   -(1/(n+1)) sum_j (n-j) s_j + sum_{j<=k} s_j
///  - derived: -(1/(n+1)) sum_j (n+1-j) s_j + sum_{j<=k} s_j (exponent of |z| in |delta_k|^2)
enum class Variant { paper, derived };

inline std::string_view to_string(Variant v) { return v == Variant::paper ? "paper" : "derived"; }

inline Variant variant_from_string(std::string_view s) {
  if (s == "paper") return Variant::paper;
  if (s == "derived") return Variant::derived;
  throw InvalidInput("unknown variant '" + std::string(s) + "'");
}

inline RationalVector exponents_from_sums(const RationalVector& s, Variant variant) {
  const int n = static_cast<int>(s.size());
  Rational base = 0;
  for (int j = 1; j <= n; ++j) {
    const int weight = (variant == Variant::paper) ? (n - j) : (n + 1 - j);
    base += weight * s[j - 1];
  }
  base /= (n + 1);
  RationalVector d(n);
  Rational partial = 0;
  for (int k = 1; k <= n; ++k) {
    partial += s[k - 1];
    d[k - 1] = partial - base;
  }
  return d;
}

inline RationalVector exponents(const SingularStrengths& strengths, Variant variant) {
  return exponents_from_sums(strengths.column_sums(), variant);
}

struct Degrees {
  RationalVector deg_E;     // k = 0..n
  RationalVector deg_F;     // l = 1..n
  RationalVector slopes_F;  // l = 1..n
};

/// Degrees of the line summands E_k, the flags F^l = E_{n-l+1} + ... + E_n,
/// and their slopes. E_0 is balanced so that the total degree vanishes (det K = 1).
inline Degrees degrees_from_exponents(int n, int genus, const RationalVector& d) {
  Degrees out;
  out.deg_E.assign(n + 1, Rational(0));
  Rational rest = 0;
  for (int j = 1; j <= n; ++j) {
    out.deg_E[j] = Rational((genus - 1) * (n - 2 * j)) + d[j - 1];
    rest += out.deg_E[j];
  }
  out.deg_E[0] = -rest;
  out.deg_F.assign(n, Rational(0));
  out.slopes_F.assign(n, Rational(0));
  for (int l = 1; l <= n; ++l) {
    Rational sum = 0;
    for (int j = n - l + 1; j <= n; ++j) sum += out.deg_E[j];
    out.deg_F[l - 1] = sum;
    out.slopes_F[l - 1] = sum / l;
  }
  return out;
}

inline Degrees degrees(const SingularStrengths& strengths, Variant variant) {
  return degrees_from_exponents(strengths.n(), strengths.genus(), exponents(strengths, variant));
}

/// Coefficients m_l of pi in the integrals of e^{u_l}, forced by integrating the
/// system: (A m)_k = 2 (genus - 1) - s_k.
inline RationalVector masses_from_sums(const RationalVector& s, int genus, const CartanData& c) {
  const int n = c.n;
  RationalVector rhs(n);
  for (int k = 0; k < n; ++k) rhs[k] = Rational(2 * (genus - 1)) - s[k];
  RationalVector m(n, Rational(0));
  for (int l = 0; l < n; ++l) {
    for (int k = 0; k < n; ++k) m[l] += c.A_inv[l][k] * rhs[k];
  }
  return m;
}

inline RationalVector masses(const SingularStrengths& strengths) {
  return masses_from_sums(strengths.column_sums(), strengths.genus(), cartan(strengths.n()));
}

struct Verdict {
  std::vector<bool> per_l;  // l = 1..n
  RationalVector lhs;       // d_{n-l+1} + ... + d_n
  RationalVector rhs;       // l (n-l+1) (genus-1)
  bool exists = false;
};

inline Verdict evaluate_condition(int genus, const RationalVector& d) {
  const int n = static_cast<int>(d.size());
  Verdict v;
  v.exists = true;
  for (int l = 1; l <= n; ++l) {
    Rational lhs = 0;
    for (int k = n - l + 1; k <= n; ++k) lhs += d[k - 1];
    const Rational rhs(l * (n - l + 1) * (genus - 1));
    const bool ok = lhs < rhs;
    v.per_l.push_back(ok);
    v.lhs.push_back(lhs);
    v.rhs.push_back(rhs);
    v.exists = v.exists && ok;
  }
  return v;
}

struct StabilityReport {
  int n = 0;
  int genus = 0;
  RationalVector s;
  RationalVector d_paper;
  RationalVector d_derived;
  Degrees degrees_paper;
  Degrees degrees_derived;
  RationalVector masses;  // coefficients of pi
  Verdict verdict_paper;
  Verdict verdict_derived;
  bool variants_agree = true;

  const Verdict& verdict(Variant v) const {
    return v == Variant::paper ? verdict_paper : verdict_derived;
  }
  const Degrees& degrees(Variant v) const {
    return v == Variant::paper ? degrees_paper : degrees_derived;
  }
  bool masses_positive() const {
    for (const auto& m : masses) {
      if (m <= 0) return false;
    }
    return true;
  }
};

inline StabilityReport report_from_sums(int n, int genus, const RationalVector& s) {
  if (n < 1) throw InvalidInput("system size n must be >= 1");
  if (genus < 0) throw InvalidInput("genus must be >= 0");
  if (static_cast<int>(s.size()) != n) throw InvalidInput("column sums have wrong length");
  StabilityReport r;
  r.n = n;
  r.genus = genus;
  r.s = s;
  r.d_paper = exponents_from_sums(s, Variant::paper);
  r.d_derived = exponents_from_sums(s, Variant::derived);
  r.degrees_paper = degrees_from_exponents(n, genus, r.d_paper);
  r.degrees_derived = degrees_from_exponents(n, genus, r.d_derived);
  r.masses = masses_from_sums(s, genus, cartan(n));
  r.verdict_paper = evaluate_condition(genus, r.d_paper);
  r.verdict_derived = evaluate_condition(genus, r.d_derived);
  r.variants_agree = r.verdict_paper.exists == r.verdict_derived.exists;
  return r;
}

/// Full criterion report; only the column sums of the strengths enter.
inline StabilityReport criterion(const SingularStrengths& strengths) {
  return report_from_sums(strengths.n(), strengths.genus(), strengths.column_sums());
}

/// No punctures: a solution exists iff 0 < l(n-l+1)(genus-1) for all l, i.e. genus >= 2.
inline StabilityReport smooth_criterion(int n, int genus) {
  return report_from_sums(n, genus, RationalVector(n < 1 ? 0 : n, Rational(0)));
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const Verdict& v) {
  return nlohmann::json{{"per_l", v.per_l},
                        {"lhs", to_json(v.lhs)},
                        {"rhs", to_json(v.rhs)},
                        {"exists", v.exists}};
}

inline nlohmann::json to_json(const Degrees& d) {
  return nlohmann::json{{"deg_E", to_json(d.deg_E)},
                        {"deg_F", to_json(d.deg_F)},
                        {"slopes_F", to_json(d.slopes_F)}};
}

inline nlohmann::json to_json(const StabilityReport& r) {
  return nlohmann::json{{"n", r.n},
                        {"genus", r.genus},
                        {"s", to_json(r.s)},
                        {"d_paper", to_json(r.d_paper)},
                        {"d_derived", to_json(r.d_derived)},
                        {"degrees_paper", to_json(r.degrees_paper)},
                        {"degrees_derived", to_json(r.degrees_derived)},
                        {"masses_over_pi", to_json(r.masses)},
                        {"masses_positive", r.masses_positive()},
                        {"verdict_paper", to_json(r.verdict_paper)},
                        {"verdict_derived", to_json(r.verdict_derived)},
                        {"variants_agree", r.variants_agree}};
}

}  // namespace toda
