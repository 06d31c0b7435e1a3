// Command-line driver: check | solve | verify | scan.

#include "toda/io.hpp"
#include "toda/run.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace {

struct Overrides {
  std::string config;
  std::string variant;
  int grid = 0;
  double tol = 0.0;
  std::optional<std::uint64_t> seed;
  std::string out;
};

toda::RunConfig load(const Overrides& o) {
  if (o.config.empty()) throw toda::InvalidInput("--config is required");
  nlohmann::json j = toda::read_json_file(o.config);
  if (!o.variant.empty()) j["variant"] = o.variant;
  if (o.grid > 0) j["torus"]["N"] = o.grid;
  if (o.tol > 0.0) j["solver"]["tol"] = o.tol;
  if (o.seed) j["solver"]["seed"] = *o.seed;
  return toda::parse_config(j);
}

void emit(const nlohmann::json& report, const std::string& path) {
  const std::string text = report.dump(2) + "\n";
  if (!path.empty()) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << text;
  }
  std::cout << text;
}

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "run configuration (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--variant", o.variant, "exponent variant")->check(CLI::IsMember({"paper", "derived", "both"}));
  cmd->add_option("--grid", o.grid, "grid size N (N x N nodes)");
  cmd->add_option("--tol", o.tol, "Newton tolerance on max |R|");
  cmd->add_option("--seed", o.seed, "random seed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Singular Toda systems on the torus: existence criterion, solver and Higgs-side checks"};
  app.require_subcommand(1);

  Overrides check_o, solve_o;
  auto* check = app.add_subcommand("check", "evaluate the existence criterion (exit 0 exists, 3 not, 4 variants disagree)");
  add_common(check, check_o);
  check->add_option("--out", check_o.out, "also write the report to this file");

  auto* solve = app.add_subcommand("solve", "solve and write a solution directory (exit 0 converged, 5 diverged)");
  add_common(solve, solve_o);
  solve->add_option("--out", solve_o.out, "solution directory (default: config 'output')");

  std::string verify_dir, verify_out;
  auto* verify = app.add_subcommand("verify", "recheck a solution directory (exit 0 pass, 6 fail, 2 corrupt)");
  verify->add_option("--dir", verify_dir, "solution directory")->required();
  verify->add_option("--out", verify_out, "report file (default: <dir>/verification.json)");

  toda::ScanParams scan_p;
  std::string scan_out;
  auto* scan = app.add_subcommand("scan", "randomized comparison of the exponent variants");
  scan->add_option("--n-max", scan_p.n_max, "largest n")->check(CLI::PositiveNumber);
  scan->add_option("--genus-max", scan_p.genus_max, "largest genus")->check(CLI::NonNegativeNumber);
  scan->add_option("--count", scan_p.count, "number of samples")->check(CLI::PositiveNumber);
  scan->add_option("--seed", scan_p.seed, "random seed");
  scan->add_option("--out", scan_out, "also write the report to this file");

  CLI11_PARSE(app, argc, argv);

  try {
    toda::CommandResult r;
    if (*check) {
      r = toda::run_check(load(check_o));
      emit(r.report, check_o.out);
    } else if (*solve) {
      const toda::RunConfig c = load(solve_o);
      r = toda::run_solve(c, solve_o.out.empty() ? c.output : solve_o.out);
      emit(r.report, "");
    } else if (*verify) {
      r = toda::run_verify(verify_dir);
      emit(r.report, verify_out.empty() ? (toda::fs::path(verify_dir) / "verification.json").string() : verify_out);
    } else {
      r = toda::run_scan(scan_p);
      emit(r.report, scan_out);
    }
    return r.exit_code;
  } catch (const toda::InvalidInput& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return toda::exit_invalid;
  } catch (const toda::CorruptData& e) {
    std::cerr << "corrupt input: " << e.what() << '\n';
    return toda::exit_invalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
