#ifndef MSAFLOW_FLOW_HPP
#define MSAFLOW_FLOW_HPP

#include <vector>

#include "msaflow/bsde.hpp"
#include "msaflow/core.hpp"
#include "msaflow/problem.hpp"
#include "msaflow/prox.hpp"

namespace msaflow {

/// Time discretization of the control-space flow da/ds = -D_a H:
/// kExplicit steps a - tau * D_a H(a); kImplicit solves the proximal
/// equation D_a H(a') + (a' - a)/tau = 0 (implicit Euler).
enum class FlowScheme { kExplicit, kImplicit };

struct FlowConfig {
  double S = 1.0;          // flow horizon in the artificial time s
  double tau_flow = 1e-2;  // flow step; S must be an integer multiple
  FlowScheme scheme = FlowScheme::kImplicit;
  /// Store every store_stride-th control iterate (0 = auto, about 100 stored
  /// fields). Nodes 0 and the final node are always stored. J and the
  /// gradient norm are recorded at every node regardless.
  int store_stride = 0;
  /// Implicit scheme only: halve the step until the sampled cost does not
  /// increase. Makes J exactly non-increasing but the s nodes non-uniform.
  bool backtrack = false;
  double tau_min = 1e-8;
  RegressionBasis basis;
  LsmcFlags lsmc;
  ProxOptions prox;
};

struct FlowTrajectory {
  FlowScheme scheme = FlowScheme::kImplicit;
  double tau_flow = 0.0;
  std::vector<double> s_nodes;             // s_0 = 0 .. s_K
  std::vector<double> J_trace;             // per node
  std::vector<double> grad_norm_sq_trace;  // per node
  std::vector<int> stored_nodes;           // node indices with a kept control
  std::vector<ControlField> controls;      // parallel to stored_nodes
  bool rank_warning = false;

  bool has_control(int node) const;
  const ControlField& control_at_node(int node) const;  // throws if not kept
};

FlowTrajectory run_gradient_flow(const ProblemSpec& spec,
                                 const ControlField& alpha0,
                                 const BrownianEnsemble& w,
                                 const FlowConfig& cfg = {});

/// Reconstruction of the flow between stored iterates.
enum class InterpMode {
  kPiecewiseLinear,  // linear in s between consecutive stored fields
  kConstRight,       // right-continuous step function (next stored iterate)
  kConstLeft,        // left-continuous step function (previous stored iterate)
};

/// Control at flow time s from the stored iterates. At a stored node all
/// three modes return that iterate; between nodes they differ as described.
/// s outside [0, s_K] is an error.
ControlField interpolate_controls(const FlowTrajectory& traj, double s,
                                  InterpMode mode);

/// Compare the centered slope of J against -||D_a H||^2 at interior nodes.
/// Nodes with gradient norm below `floor` are skipped (the identity degrades
/// to 0 ~ 0 there and the relative error is meaningless).
struct EnergyIdentityReport {
  std::vector<int> nodes;
  std::vector<double> dJ_ds;          // centered difference at each node
  std::vector<double> grad_norm_sq;   // trace value at each node
  std::vector<double> rel_err;        // |dJ/ds + grad| / grad
  double max_rel_err = 0.0;
  int eligible_nodes = 0;
  bool no_eligible_nodes = true;
};

EnergyIdentityReport energy_identity_check(const FlowTrajectory& traj,
                                           double floor = 1e-6);

/// Integral form: sum_n grad_n * (s_{n+1} - s_n) against J(s_0) - J(s_K).
struct EnergyIntegralReport {
  double integral = 0.0;
  double decrement = 0.0;
  double rel_err = 0.0;
};

EnergyIntegralReport energy_integral_check(const FlowTrajectory& traj);

/// Monte Carlo check of the cost-gap bound
///   J(beta) - J(theta) <= < D_a H(along beta), beta - theta >
/// using paired per-path differences so common noise cancels: satisfied means
/// lhs - rhs <= 3 * SE(paired difference).
struct GapBoundReport {
  double lhs = 0.0;  // J(beta) - J(theta), sample means
  double rhs = 0.0;  // inner product estimate
  double se = 0.0;   // standard error of the paired per-path difference
  bool satisfied = false;
};

GapBoundReport gap_bound_check(const ProblemSpec& spec,
                               const ControlField& beta,
                               const ControlField& theta,
                               const BrownianEnsemble& w,
                               const RegressionBasis& basis = {},
                               const LsmcFlags& flags = {});

}  // namespace msaflow

#endif
