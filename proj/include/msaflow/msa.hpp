#ifndef MSAFLOW_MSA_HPP
#define MSAFLOW_MSA_HPP

#include <vector>

#include "msaflow/bsde.hpp"
#include "msaflow/core.hpp"
#include "msaflow/problem.hpp"
#include "msaflow/prox.hpp"

namespace msaflow {

struct MsaConfig {
  double tau0 = 0.2;
  int max_outer = 200;
  /// Stop when 0 <= J(a_n) - J(a_{n+1}) < stop_dJ. Zero disables the test.
  double stop_dJ = 1e-8;
  /// Halve tau until the control update does not increase the sampled cost.
  bool backtrack = true;
  double tau_min = 1e-8;
  /// kProx solves the implicit first-order condition; kExplicit takes a plain
  /// gradient step. Only kProx is tied to the tau0 * lambda_hint < 1 guard.
  UpdateMode mode = UpdateMode::kProx;
  RegressionBasis basis;
  LsmcFlags lsmc;
  ProxOptions prox;
};

struct MsaIterationRecord {
  int iter = 0;
  double J = 0.0;
  double grad_norm_sq = 0.0;
  double step_norm_sq = 0.0;  // ||a_{n+1} - a_n||^2; 0 on the final record
  double tau_used = 0.0;
};

enum class MsaTermination { kConverged, kMaxOuter };

struct RunReport {
  std::vector<MsaIterationRecord> iterations;  // one per iterate, 0..K
  ControlField final_control;
  double final_J = 0.0;
  MsaTermination termination = MsaTermination::kMaxOuter;
  bool rank_warning = false;
};

/// Successive approximation with proximal control updates: simulate forward,
/// solve the adjoint backward equation, replace the control pointwise by the
/// proximal step, backtracking on tau so the sampled cost never increases.
/// All iterations share the Brownian ensemble (common random numbers), so
/// cost comparisons are exact, not statistical.
RunReport run_msa(const ProblemSpec& spec, const ControlField& alpha0,
                  const BrownianEnsemble& w, const MsaConfig& cfg = {});

/// Pointwise control-gradient field D_a H(t_k, X_k, Y_k, Z_k, a_k).
ControlField gradient_field(const ProblemSpec& spec, const ControlField& alpha,
                            const StatePaths& x, const AdjointSolution& sol);

/// ||D_a H||^2 in the control norm: mean over paths of sum_k |D_a H|^2 dt.
double grad_norm_estimator(const ProblemSpec& spec, const ControlField& alpha,
                           const StatePaths& x, const AdjointSolution& sol);

}  // namespace msaflow

#endif
