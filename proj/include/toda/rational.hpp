#pragma once

#include <gmpxx.h>

#include <json.hpp>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace toda {

using Rational = mpq_class;
using RationalVector = std::vector<Rational>;

/// Malformed or out-of-contract user data (bad config, invalid strengths, ...).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline Rational make_rational(std::int64_t num, std::int64_t den = 1) {
  if (den == 0) throw InvalidInput("rational with zero denominator");
  Rational r{mpz_class(std::to_string(num)), mpz_class(std::to_string(den))};
  r.canonicalize();
  return r;
}

/// Accepts "a/b" or "a".
inline Rational parse_rational(const std::string& text) {
  Rational r;
  if (r.set_str(text, 10) != 0) throw InvalidInput("not a rational: '" + text + "'");
  if (r.get_den() == 0) throw InvalidInput("rational with zero denominator: '" + text + "'");
  r.canonicalize();
  return r;
}

inline double to_double(const Rational& r) { return r.get_d(); }

inline std::vector<double> to_double(const RationalVector& v) {
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& r : v) out.push_back(r.get_d());
  return out;
}

namespace detail {

inline nlohmann::json integer_json(const mpz_class& z) {
  if (z.fits_slong_p()) return nlohmann::json(static_cast<std::int64_t>(z.get_si()));
  return nlohmann::json(z.get_str());
}

inline mpz_class integer_from_json(const nlohmann::json& j) {
  if (j.is_number_integer()) return mpz_class(std::to_string(j.get<std::int64_t>()));
  if (j.is_string()) {
    mpz_class z;
    if (z.set_str(j.get<std::string>(), 10) != 0) throw InvalidInput("bad integer: " + j.dump());
    return z;
  }
  throw InvalidInput("expected an integer, got " + j.dump());
}

}  // namespace detail

/// Rationals are always serialized as {"num": ..., "den": ...}; never as floats.
inline nlohmann::json to_json(const Rational& r) {
  return nlohmann::json{{"num", detail::integer_json(r.get_num())},
                        {"den", detail::integer_json(r.get_den())}};
}

inline nlohmann::json to_json(const RationalVector& v) {
  auto arr = nlohmann::json::array();
  for (const auto& r : v) arr.push_back(to_json(r));
  return arr;
}

inline Rational rational_from_json(const nlohmann::json& j) {
  if (j.is_object()) {
    if (!j.contains("num") || !j.contains("den")) {
      throw InvalidInput("rational object needs 'num' and 'den': " + j.dump());
    }
    const mpz_class num = detail::integer_from_json(j.at("num"));
    const mpz_class den = detail::integer_from_json(j.at("den"));
    if (den == 0) throw InvalidInput("rational with zero denominator: " + j.dump());
    Rational r(num, den);
    r.canonicalize();
    return r;
  }
  if (j.is_number_integer()) return Rational(detail::integer_from_json(j));
  if (j.is_string()) return parse_rational(j.get<std::string>());
  throw InvalidInput("floats are not accepted where a rational is expected: " + j.dump());
}

inline RationalVector rational_vector_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw InvalidInput("expected an array of rationals: " + j.dump());
  RationalVector out;
  for (const auto& e : j) out.push_back(rational_from_json(e));
  return out;
}

}  // namespace toda
