#pragma once

// The four subcommands as library functions: each returns its JSON report and
// process exit code, so the CLI stays a thin argument parser.

#include "toda/higgs.hpp"
#include "toda/io.hpp"
#include "toda/scan.hpp"
#include "toda/stability.hpp"
#include "toda/toda_solver.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

namespace toda {

enum ExitCode : int {
  exit_ok = 0,
  exit_invalid = 2,
  exit_not_exists = 3,
  exit_variants_disagree = 4,
  exit_diverged = 5,
  exit_verify_failed = 6,
};

struct CommandResult {
  nlohmann::json report;
  int exit_code = exit_ok;
};

namespace detail {

// Config echo for reports; the output location is left out so that reruns
// into different directories produce identical bytes.
inline nlohmann::json config_echo(const RunConfig& c) {
  nlohmann::json j = to_json(c);
  j.erase("output");
  return j;
}

// JSON has no NaN or infinity.
inline nlohmann::json number(double x) {
  if (std::isfinite(x)) return x;
  if (std::isnan(x)) return "nan";
  return x > 0 ? "inf" : "-inf";
}

inline nlohmann::json numbers(const std::vector<double>& xs) {
  auto arr = nlohmann::json::array();
  for (double x : xs) arr.push_back(number(x));
  return arr;
}

inline void require_solvable(const RunConfig& c) {
  if (c.genus != 1) throw InvalidInput("solve and verify need genus 1");
  if (c.smooth()) throw InvalidInput("solve needs at least one puncture (no smooth solution exists on the flat torus)");
}

// Starting point for probe mode: band-limited noise of amplitude 1 from the seed.
inline Components probe_start(const TodaProblem& p, std::uint64_t seed) {
  Components v(p.n());
  for (int k = 0; k < p.n(); ++k) v[k] = band_limited_noise(p.domain, seed, 1000 + k, 4, 1.0);
  return v;
}

inline nlohmann::json fit_json(const TodaProblem& p, const TodaState& s) {
  auto fits = nlohmann::json::array();
  for (std::size_t si = 0; si < p.green.sites.size(); ++si) {
    for (int k = 0; k < p.n(); ++k) {
      nlohmann::json e{{"puncture", p.green.sites[si].label}, {"component", k + 1}};
      try {
        const AsymptoticFit f = asymptotic_fit(p, s, si, k);
        e["target_slope"] = f.target_slope;
        e["slope"] = number(f.slope);
        e["oscillation"] = number(f.oscillation);
        e["nodes"] = f.nodes;
      } catch (const InvalidInput& err) {
        e["skipped"] = err.what();
      }
      fits.push_back(std::move(e));
    }
  }
  return fits;
}

inline bool all_finite(const Components& v) {
  for (const auto& c : v) {
    for (double e : c) {
      if (!std::isfinite(e)) return false;
    }
  }
  return true;
}

}  // namespace detail

/// Existence verdict. Exit 0 exists, 3 not, 4 when both variants are requested and disagree.
inline CommandResult run_check(const RunConfig& c) {
  const StabilityReport rep = c.smooth() ? smooth_criterion(c.n, c.genus) : criterion(c.strengths());
  CommandResult out;
  out.report = {{"command", "check"},
                {"config", detail::config_echo(c)},
                {"variant", detail::variant_name(c)},
                {"smooth", c.smooth()},
                {"stability", to_json(rep)},
                {"variants_agree", rep.variants_agree}};
  if (c.both_variants) {
    out.report["exists"] = rep.variants_agree ? nlohmann::json(rep.verdict_derived.exists) : nlohmann::json(nullptr);
    out.exit_code = !rep.variants_agree ? exit_variants_disagree : (rep.verdict_derived.exists ? exit_ok : exit_not_exists);
  } else {
    const bool exists = rep.verdict(c.variant).exists;
    out.report["exists"] = exists;
    out.exit_code = exists ? exit_ok : exit_not_exists;
  }
  return out;
}

/// Solves and writes the solution directory (fields plus manifest.json).
/// Exit 0 when converged, 5 otherwise.
inline CommandResult run_solve(const RunConfig& c, const fs::path& dir) {
  detail::require_solvable(c);
  const TodaProblem p = make_problem(c.strengths(), c.domain(), c.solver_options());
  const auto guess = initial_guess(p);
  const std::string mode = guess ? "mass_matched" : "probe";
  const TodaState s = newton_solve(p, guess ? *guess : detail::probe_start(p, c.seed));

  fs::create_directories(dir);
  const TorusDomain& d = p.domain;
  nlohmann::json fields = nlohmann::json::object();
  auto v_files = nlohmann::json::array(), u_files = nlohmann::json::array(), e_files = nlohmann::json::array();
  const double mask_radius = 2.0 * std::max(d.hx(), d.hy());
  for (int k = 0; k < p.n(); ++k) {
    const std::string id = std::to_string(k + 1);
    write_field(dir, "v_" + id, d, p.green.sites, s.v[k]);
    Field u = s.u[k], eu(d.size());
    for (int j = 0; j < d.ny(); ++j) {
      for (int i = 0; i < d.nx(); ++i) {
        const std::size_t idx = d.index(i, j);
        eu[idx] = std::exp(u[idx]);
        for (const auto& site : p.green.sites) {
          const auto [dx, dy] = d.displacement(d.x(i), d.y(j), site.x, site.y);
          if (std::hypot(dx, dy) <= mask_radius) u[idx] = std::numeric_limits<double>::quiet_NaN();
        }
      }
    }
    write_field(dir, "u_" + id, d, p.green.sites, u);
    write_field(dir, "exp_u_" + id, d, p.green.sites, eu);
    v_files.push_back("v_" + id + ".json");
    u_files.push_back("u_" + id + ".json");
    e_files.push_back("exp_u_" + id + ".json");
  }
  fields["v"] = v_files;
  fields["u_masked"] = u_files;
  fields["exp_u"] = e_files;

  auto history = nlohmann::json::array();
  for (const auto& h : s.history) {
    history.push_back({{"iteration", h.iteration},
                       {"residual_inf", detail::number(h.residual_inf)},
                       {"residual_l2", detail::number(h.residual_l2)},
                       {"step", h.step},
                       {"krylov_iterations", h.krylov_iterations},
                       {"mean_v_min", detail::number(h.mean_v_min)}});
  }
  std::vector<double> mean_v;
  for (const auto& c2 : s.v) mean_v.push_back(mean(c2));

  nlohmann::json m{{"command", "solve"},
                   {"config", detail::config_echo(c)},
                   {"stability", to_json(p.report)},
                   {"mode", mode},
                   {"status", std::string(to_string(s.status))},
                   {"message", s.message},
                   {"residual_norm", detail::number(s.residual_norm)},
                   {"newton_iterations", s.newton_iterations},
                   {"mean_v", detail::numbers(mean_v)},
                   {"history", history},
                   {"fields", fields},
                   {"source_correction", p.correction}};
  if (s.status == SolverStatus::converged) {
    const IdentityReport ids = verify_identities(p, s);
    m["masses"] = {{"expected_over_pi", to_json(p.report.masses)},
                   {"expected", detail::numbers(ids.masses_expected)},
                   {"measured", detail::numbers(ids.masses_measured)},
                   {"relative_errors", detail::numbers(ids.relative_errors)},
                   {"identity_residual", detail::numbers(ids.mass_identity_residual)},
                   {"residual_integrals", detail::numbers(ids.residual_integrals)}};
    m["fits"] = detail::fit_json(p, s);
    if (c.starts > 1) {
      const UniquenessReport u = uniqueness_probe(p, c.starts, c.seed);
      auto statuses = nlohmann::json::array();
      for (auto st : u.statuses) statuses.push_back(std::string(to_string(st)));
      m["uniqueness"] = {{"starts", u.starts},
                         {"seed", u.seed},
                         {"statuses", statuses},
                         {"iterations", u.iterations},
                         {"all_converged", u.all_converged},
                         {"max_distance", detail::number(u.max_distance)}};
    }
  }
  write_json_file(dir / "manifest.json", m);
  return {m, s.status == SolverStatus::converged ? exit_ok : exit_diverged};
}

/// Recomputes every check from the dumped regular parts. Exit 0 when all pass,
/// 6 when some check fails; unreadable input throws CorruptData.
inline CommandResult run_verify(const fs::path& dir) {
  nlohmann::json manifest;
  try {
    manifest = read_json_file(dir / "manifest.json");
  } catch (const InvalidInput& e) {
    throw CorruptData(e.what());
  }
  if (!manifest.contains("config")) throw CorruptData("manifest has no config");
  RunConfig c;
  try {
    c = parse_config(manifest.at("config"));
  } catch (const InvalidInput& e) {
    throw CorruptData(std::string("manifest config: ") + e.what());
  }
  detail::require_solvable(c);
  const TodaProblem p = make_problem(c.strengths(), c.domain(), c.solver_options());
  const TorusDomain& d = p.domain;
  TodaState s;
  for (int k = 0; k < p.n(); ++k) s.v.push_back(read_field(dir, "v_" + std::to_string(k + 1), d));
  if (!detail::all_finite(s.v)) throw CorruptData("non-finite values in the dumped v");
  const VerifyThresholds& t = c.verify;

  nlohmann::json checks = nlohmann::json::object();
  bool passed = true;
  auto record = [&](const std::string& name, double value, double threshold) {
    const bool ok = std::isfinite(value) && value <= threshold;
    checks[name] = {{"value", detail::number(value)}, {"threshold", threshold}, {"pass", ok}};
    passed = passed && ok;
  };

  double rinf = std::numeric_limits<double>::infinity();
  try {
    rinf = detail::norm_inf(residual(p, s.v));
  } catch (const ScaledEvaluationError&) {
  }
  record("residual_max", rinf, t.residual);
  s.residual_norm = rinf;
  s.status = rinf <= c.tol ? SolverStatus::converged : SolverStatus::diverged;
  detail::finish_state(p, s);

  const IdentityReport ids = verify_identities(p, s);
  record("mass_relative_error", ids.max_relative_error, t.mass_relative);

  double slope_err = 0.0, osc = 0.0;
  auto fits = nlohmann::json::array();
  for (std::size_t si = 0; si < p.green.sites.size(); ++si) {
    for (int k = 0; k < p.n(); ++k) {
      try {
        const AsymptoticFit f = asymptotic_fit(p, s, si, k);
        const double err = f.target_slope == 0.0 ? std::abs(f.slope) : std::abs(f.slope / f.target_slope - 1.0);
        slope_err = std::max(slope_err, err);
        osc = std::max(osc, f.oscillation);
        fits.push_back({{"puncture", f.label}, {"component", k + 1}, {"slope", detail::number(f.slope)},
                        {"target_slope", f.target_slope}, {"oscillation", detail::number(f.oscillation)}});
      } catch (const InvalidInput& e) {
        fits.push_back({{"puncture", p.green.sites[si].label}, {"component", k + 1}, {"skipped", e.what()}});
      }
    }
  }
  record("slope_error", slope_err, t.slope_relative);
  record("oscillation", osc, t.oscillation);

  const HiggsInput in = higgs_input(p, s);
  const Curvature curv = curvature_residual(in);
  record("curvature_off_diagonal", curv.max_off, t.off_diagonal);
  record("curvature_diagonal", masked_max(d, p.green.sites, curv.diag, 1.5 * std::max(d.hx(), d.hy())), t.curvature);
  double agreement = std::numeric_limits<double>::infinity();
  try {
    agreement = curvature_agreement(p, s.v);
  } catch (const ScaledEvaluationError&) {
  }
  record("curvature_residual_agreement", agreement, t.agreement);

  const std::vector<double> deg = degrees_by_curvature(in);
  double deg_err = 0.0;
  for (int k = 0; k <= p.n(); ++k) deg_err = std::max(deg_err, std::abs(deg[k] - to_double(p.report.degrees_derived.deg_E[k])));
  record("degree_error", deg_err, t.degree);

  nlohmann::json report{{"command", "verify"},
                        {"config", detail::config_echo(c)},
                        {"checks", checks},
                        {"fits", fits},
                        {"masses_measured", detail::numbers(ids.masses_measured)},
                        {"masses_expected_over_pi", to_json(p.report.masses)},
                        {"degrees_by_curvature", detail::numbers(deg)},
                        {"degrees_derived", to_json(p.report.degrees_derived.deg_E)},
                        {"passed", passed}};
  return {report, passed ? exit_ok : exit_verify_failed};
}

/// Randomized consistency scan. Exit 6 if the derived verdict ever disagrees with mass positivity.
inline CommandResult run_scan(const ScanParams& params) {
  const ScanReport r = consistency_scan(params);
  nlohmann::json j = to_json(r);
  j["command"] = "scan";
  return {j, r.mass_equivalence_holds() ? exit_ok : exit_verify_failed};
}

}  // namespace toda
