#pragma once

// Run configuration and field dumps.
//
// Dumps are row-major (x fastest) little-endian float64 with a JSON sidecar
// describing the grid, periods, field name and punctures.

#include "toda/green.hpp"
#include "toda/rational.hpp"
#include "toda/stability.hpp"
#include "toda/strengths.hpp"
#include "toda/toda_solver.hpp"
#include "toda/torus.hpp"

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace toda {

namespace fs = std::filesystem;

/// A dump or manifest that cannot be read back faithfully.
class CorruptData : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct VerifyThresholds {
  double residual = 1e-8;          // max |R_k| recomputed from the dumped v
  double mass_relative = 1e-2;
  double slope_relative = 2e-2;    // for mu != 0; absolute for mu = 0
  double oscillation = 5e-2;
  double curvature = 1e-6;         // spectral curvature off the corrected nodes
  double off_diagonal = 1e-10;
  double agreement = 1e-8;         // curvature differences against -2 R, relative
  double degree = 1e-8;
};

struct RunConfig {
  int n = 1;
  int genus = 1;
  Variant variant = Variant::derived;
  bool both_variants = false;
  double lx = 1.0;
  double ly = 1.0;
  int grid = 256;
  std::vector<FourierTerm> conformal_factor;
  std::vector<Puncture> punctures;
  double tol = 1e-8;
  int max_iter = 60;
  std::uint64_t seed = 0;
  int starts = 1;  // uniqueness probe starts; 1 disables the probe
  VerifyThresholds verify;
  std::string output = "solution";

  bool smooth() const { return punctures.empty(); }
  SingularStrengths strengths() const { return SingularStrengths(n, genus, punctures); }
  TorusDomain domain() const { return TorusDomain(lx, ly, grid, grid, ConformalFactor(conformal_factor)); }
  SolverOptions solver_options() const {
    SolverOptions o;
    o.tol = tol;
    o.max_iter = max_iter;
    return o;
  }
};

namespace detail {

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw InvalidInput(std::string("bad value for '") + key + "': " + j.at(key).dump());
  }
}

inline void require_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw InvalidInput(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw InvalidInput("unknown key '" + key + "' in " + where);
  }
}

inline std::string variant_name(const RunConfig& c) { return c.both_variants ? "both" : std::string(to_string(c.variant)); }

inline void set_variant(RunConfig& c, const std::string& name) {
  if (name == "both") {
    c.both_variants = true;
    c.variant = Variant::derived;
    return;
  }
  c.both_variants = false;
  c.variant = variant_from_string(name);
}

}  // namespace detail

/// Parses and validates a run configuration.
inline RunConfig parse_config(const nlohmann::json& j) {
  using detail::get_or;
  detail::require_keys(j, {"n", "genus", "variant", "torus", "punctures", "solver", "verify", "output"}, "config");
  RunConfig c;
  if (!j.contains("n")) throw InvalidInput("config needs 'n'");
  c.n = get_or<int>(j, "n", 0);
  c.genus = get_or<int>(j, "genus", 1);
  if (c.n < 1) throw InvalidInput("n must be >= 1");
  if (c.genus < 0) throw InvalidInput("genus must be >= 0");
  detail::set_variant(c, get_or<std::string>(j, "variant", "derived"));

  if (j.contains("torus")) {
    const auto& t = j.at("torus");
    detail::require_keys(t, {"Lx", "Ly", "N", "conformal_factor"}, "torus");
    c.lx = get_or<double>(t, "Lx", 1.0);
    c.ly = get_or<double>(t, "Ly", 1.0);
    c.grid = get_or<int>(t, "N", 256);
    if (!(c.lx > 0.0) || !(c.ly > 0.0)) throw InvalidInput("torus periods must be positive");
    if (t.contains("conformal_factor")) {
      for (const auto& term : t.at("conformal_factor")) {
        detail::require_keys(term, {"kx", "ky", "cos", "sin"}, "conformal_factor term");
        c.conformal_factor.push_back(
            {get_or<int>(term, "kx", 0), get_or<int>(term, "ky", 0), get_or<double>(term, "cos", 0.0), get_or<double>(term, "sin", 0.0)});
      }
    }
  }
  if (j.contains("punctures")) {
    if (!j.at("punctures").is_array()) throw InvalidInput("'punctures' must be an array");
    for (const auto& p : j.at("punctures")) {
      detail::require_keys(p, {"label", "position", "mu"}, "puncture");
      Puncture out;
      out.label = get_or<std::string>(p, "label", "p" + std::to_string(c.punctures.size()));
      if (!p.contains("mu")) throw InvalidInput("puncture '" + out.label + "' needs 'mu'");
      out.mu = rational_vector_from_json(p.at("mu"));
      if (p.contains("position")) {
        const RationalVector pos = rational_vector_from_json(p.at("position"));
        if (pos.size() != 2) throw InvalidInput("puncture '" + out.label + "': position needs two entries");
        out.position = std::array<Rational, 2>{pos[0], pos[1]};
      }
      c.punctures.push_back(std::move(out));
    }
  }
  if (j.contains("solver")) {
    const auto& s = j.at("solver");
    detail::require_keys(s, {"tol", "max_iter", "seed", "starts"}, "solver");
    c.tol = get_or<double>(s, "tol", c.tol);
    c.max_iter = get_or<int>(s, "max_iter", c.max_iter);
    c.seed = get_or<std::uint64_t>(s, "seed", c.seed);
    c.starts = get_or<int>(s, "starts", c.starts);
    if (!(c.tol > 0.0) || c.max_iter < 1 || c.starts < 1) throw InvalidInput("bad solver options");
  }
  if (j.contains("verify")) {
    const auto& v = j.at("verify");
    detail::require_keys(v, {"residual", "mass_relative", "slope_relative", "oscillation", "curvature", "off_diagonal",
                             "agreement", "degree"},
                         "verify");
    auto& t = c.verify;
    t.residual = get_or<double>(v, "residual", t.residual);
    t.mass_relative = get_or<double>(v, "mass_relative", t.mass_relative);
    t.slope_relative = get_or<double>(v, "slope_relative", t.slope_relative);
    t.oscillation = get_or<double>(v, "oscillation", t.oscillation);
    t.curvature = get_or<double>(v, "curvature", t.curvature);
    t.off_diagonal = get_or<double>(v, "off_diagonal", t.off_diagonal);
    t.agreement = get_or<double>(v, "agreement", t.agreement);
    t.degree = get_or<double>(v, "degree", t.degree);
  }
  c.output = get_or<std::string>(j, "output", c.output);
  if (!c.smooth()) c.strengths();  // validates the mu vectors
  return c;
}

inline nlohmann::json to_json(const RunConfig& c) {
  auto terms = nlohmann::json::array();
  for (const auto& t : c.conformal_factor) terms.push_back({{"kx", t.kx}, {"ky", t.ky}, {"cos", t.cos_coef}, {"sin", t.sin_coef}});
  auto punctures = nlohmann::json::array();
  for (const auto& p : c.punctures) {
    nlohmann::json e{{"label", p.label}, {"mu", to_json(p.mu)}};
    if (p.position) e["position"] = to_json(RationalVector{(*p.position)[0], (*p.position)[1]});
    punctures.push_back(std::move(e));
  }
  const auto& v = c.verify;
  return nlohmann::json{
      {"n", c.n},
      {"genus", c.genus},
      {"variant", detail::variant_name(c)},
      {"torus", {{"Lx", c.lx}, {"Ly", c.ly}, {"N", c.grid}, {"conformal_factor", terms}}},
      {"punctures", punctures},
      {"solver", {{"tol", c.tol}, {"max_iter", c.max_iter}, {"seed", c.seed}, {"starts", c.starts}}},
      {"verify",
       {{"residual", v.residual},
        {"mass_relative", v.mass_relative},
        {"slope_relative", v.slope_relative},
        {"oscillation", v.oscillation},
        {"curvature", v.curvature},
        {"off_diagonal", v.off_diagonal},
        {"agreement", v.agreement},
        {"degree", v.degree}}},
      {"output", c.output}};
}

inline nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidInput(path.string() + ": " + e.what());
  }
}

inline RunConfig load_config(const fs::path& path) { return parse_config(read_json_file(path)); }

/// Deterministic serialization: sorted keys (nlohmann's default object order), fixed indent.
inline void write_json_file(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Field dumps

inline nlohmann::json sites_json(const std::vector<PunctureSite>& sites) {
  auto arr = nlohmann::json::array();
  for (const auto& s : sites) arr.push_back({{"label", s.label}, {"x", s.x}, {"y", s.y}, {"mu", s.mu}});
  return arr;
}

/// Writes <dir>/<name>.bin and <dir>/<name>.json; returns the sidecar.
inline nlohmann::json write_field(const fs::path& dir, const std::string& name, const TorusDomain& d,
                                  const std::vector<PunctureSite>& sites, std::span<const double> f) {
  if (f.size() != d.size()) throw InvalidInput("field size does not match the grid");
  std::vector<unsigned char> bytes(f.size() * 8);
  for (std::size_t i = 0; i < f.size(); ++i) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(f[i]);
    for (int b = 0; b < 8; ++b) bytes[8 * i + b] = static_cast<unsigned char>(bits >> (8 * b));
  }
  std::ofstream out(dir / (name + ".bin"), std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + (dir / (name + ".bin")).string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  nlohmann::json side{{"name", name},
                      {"file", name + ".bin"},
                      {"dtype", "float64"},
                      {"byte_order", "little"},
                      {"layout", "row-major, x fastest"},
                      {"nx", d.nx()},
                      {"ny", d.ny()},
                      {"Lx", d.lx()},
                      {"Ly", d.ly()},
                      {"punctures", sites_json(sites)}};
  write_json_file(dir / (name + ".json"), side);
  return side;
}

/// Reads a dump back, checking it against its sidecar and the expected grid.
inline Field read_field(const fs::path& dir, const std::string& name, const TorusDomain& d) {
  nlohmann::json side;
  try {
    side = read_json_file(dir / (name + ".json"));
  } catch (const InvalidInput& e) {
    throw CorruptData(e.what());
  }
  if (side.value("nx", -1) != d.nx() || side.value("ny", -1) != d.ny()) {
    throw CorruptData(name + ": grid in sidecar does not match the run");
  }
  const fs::path bin = dir / side.value("file", name + ".bin");
  std::ifstream in(bin, std::ios::binary);
  if (!in) throw CorruptData("cannot open " + bin.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() != d.size() * 8) {
    throw CorruptData(bin.string() + ": expected " + std::to_string(d.size() * 8) + " bytes, found " +
                      std::to_string(bytes.size()));
  }
  Field f(d.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[8 * i + b]) << (8 * b);
    f[i] = std::bit_cast<double>(bits);
  }
  return f;
}

}  // namespace toda
