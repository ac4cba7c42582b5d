#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"

#include "msaflow/cli.hpp"
#include "msaflow/errors.hpp"

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw msaflow::ConfigError("cannot read config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Finite-horizon stochastic optimal control: proximal successive "
      "approximation, control-space gradient flow, and convergence "
      "diagnostics"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string out_override;
  long long seed_override = -1;
  long long paths_override = -1;
  app.add_option("--config", config_path, "JSON config file (defaults apply when omitted)");
  app.add_option("--out", out_override, "output directory (overrides config)");
  app.add_option("--seed", seed_override, "RNG seed (overrides config)")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--paths", paths_override, "Monte Carlo path count (overrides config)")
      ->check(CLI::PositiveNumber);

  CLI::App* c_msa = app.add_subcommand(
      "run-msa", "Run the proximal successive-approximation solver");
  CLI::App* c_flow =
      app.add_subcommand("run-flow", "Integrate the control-space gradient flow");
  CLI::App* c_verify = app.add_subcommand(
      "verify", "Check a convergence property; exits 1 when it fails");
  std::string check;
  c_verify->add_option("check", check, "property to check")
      ->required()
      ->check(CLI::IsMember({"tau-rate", "sublinear", "exponential",
                             "grad-vanishing", "energy-identity", "gap-bound"}));
  CLI::App* c_bsde = app.add_subcommand(
      "validate-bsde", "Compare the regression adjoint solver to the "
                       "closed-form linear-quadratic adjoint");
  CLI::App* c_default = app.add_subcommand(
      "default-config", "Print the fully defaulted config to stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    msaflow::RunConfig cfg = config_path.empty()
                                 ? msaflow::default_config()
                                 : msaflow::parse_config(slurp(config_path));
    if (seed_override >= 0)
      cfg.ensemble.seed = static_cast<std::uint64_t>(seed_override);
    if (paths_override > 0)
      cfg.ensemble.n_paths = static_cast<int>(paths_override);
    if (!out_override.empty()) cfg.output.directory = out_override;

    if (c_default->parsed()) {
      std::cout << msaflow::serialize_config(cfg);
      return 0;
    }
    if (c_msa->parsed()) return msaflow::cmd_run_msa(cfg);
    if (c_flow->parsed()) return msaflow::cmd_run_flow(cfg);
    if (c_verify->parsed()) return msaflow::cmd_verify(cfg, check);
    if (c_bsde->parsed()) return msaflow::cmd_validate_bsde(cfg);
    std::cerr << "error: no subcommand\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
