#ifndef MSAFLOW_CLI_HPP
#define MSAFLOW_CLI_HPP

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "msaflow/flow.hpp"
#include "msaflow/msa.hpp"
#include "msaflow/problem.hpp"

namespace msaflow {

/// Config file or flag rejected during validation (exit code 2 territory).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ProblemConfig {
  std::string kind = "lq_modified";  // lq_modified | quartic | logistic | toy_quadratic
  std::map<std::string, double> params;  // per-kind overrides, validated
};

struct GridConfig {
  double T = 1.0;
  int n_steps = 50;
};

struct EnsembleConfig {
  int n_paths = 10000;
  std::uint64_t seed = 42;
};

struct SolverConfig {
  double tau0 = 0.2;
  int max_outer = 200;
  double stop_dJ = 1e-8;
  bool backtrack = true;
  double tau_min = 1e-8;
  std::string mode = "implicit";  // implicit | explicit
  int basis_degree = 2;
  bool basis_include_control = true;
  bool center_z = true;
  bool extra_picard_sweep = false;
};

struct FlowSectionConfig {
  double S = 1.0;
  double tau_flow = 0.01;
  std::string scheme = "implicit";  // implicit | explicit
  int store_stride = 0;
  bool backtrack = false;
};

struct VerifySectionConfig {
  std::vector<double> tau_list = {0.1, 0.05, 0.025};
  double ref_divisor = 16.0;
  double slope_lo = 0.7;
  double slope_hi = 1.3;
  std::vector<double> S_list = {1.0, 2.0, 4.0, 8.0};
  double oracle_S = 20.0;     // flow horizon of the in-process optimum run
  double oracle_tau = 0.01;
  double eta = 0.0;           // 0 = derive from the problem when possible
  double energy_floor = 1e-6;
  double rel_tol = 0.1;
  double grad_tol = 1e-3;
  int n_directions = 10;
  double eps = 1e-4;
  double tol_abs = 1e-3;
  double direction_scale = 1.0;
  int n_pairs = 10;
  double pair_scale = 0.5;
  double rms_y_tol = 0.02;
  double rms_z_tol = 0.05;
  // Stabilizing feedback keeps every path well inside |x| <= 1, where the
  // closed-form adjoint is exact; destabilizing choices push mass across the
  // cost kink and the comparison stops being apples-to-apples.
  double feedback_F = -0.3;
  double feedback_h = 0.0;
};

struct OutputConfig {
  std::string directory = "out";
  std::vector<std::string> formats = {"csv", "json"};  // kept sorted
};

struct RunConfig {
  ProblemConfig problem;
  GridConfig grid;
  EnsembleConfig ensemble;
  SolverConfig solver;
  FlowSectionConfig flow;
  VerifySectionConfig verify;
  OutputConfig output;
  double alpha0 = 0.0;  // initial control, constant across paths and steps
};

/// Strict parse: unknown keys anywhere are errors naming the full key path;
/// missing keys take the documented defaults.
RunConfig parse_config(const std::string& text);

RunConfig default_config();

/// Canonical form: sorted keys, two-space indent, every field explicit,
/// trailing newline. parse(serialize(c)) == c and the serialization is a
/// fixed point, so byte equality is meaningful.
std::string serialize_config(const RunConfig& cfg);

ProblemSpec build_problem(const RunConfig& cfg);
MsaConfig make_msa_config(const RunConfig& cfg);
FlowConfig make_flow_config(const RunConfig& cfg);

/// Commands write artifacts into cfg.output.directory and return the process
/// exit code: 0 success / check passed, 1 check failed (verify commands
/// report and return, they do not throw). Runtime failures propagate as
/// exceptions and are mapped to exit 2 by the entry point.
int cmd_run_msa(const RunConfig& cfg);
int cmd_run_flow(const RunConfig& cfg);
int cmd_verify(const RunConfig& cfg, const std::string& check);
int cmd_validate_bsde(const RunConfig& cfg);

}  // namespace msaflow

#endif
