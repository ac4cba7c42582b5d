#ifndef MSAFLOW_BSDE_HPP
#define MSAFLOW_BSDE_HPP

#include <utility>
#include <vector>

#include "msaflow/core.hpp"
#include "msaflow/examples.hpp"
#include "msaflow/problem.hpp"

namespace msaflow {

/// Polynomial regression features of total degree <= degree on the state
/// (and, by default, the control) at one time step. Feature order is graded
/// lexicographic and therefore deterministic.
struct RegressionBasis {
  int degree = 2;
  bool include_control = true;
  int max_features = 512;

  int n_vars(int d, int p) const { return d + (include_control ? p : 0); }
  int feature_count(int d, int p) const;

  /// Multi-indices (one exponent per variable) in evaluation order.
  std::vector<std::vector<int>> exponents(int d, int p) const;
};

struct LsmcFlags {
  /// Estimate Z from the centered increment (Y_{k+1} - E[Y_{k+1}|F_k]) dW/dt
  /// instead of Y_{k+1} dW/dt. Same conditional expectation, far lower
  /// sampling variance.
  bool center_z = true;
  /// Re-evaluate the driver once at the updated Y_k (one extra Picard sweep).
  bool extra_picard_sweep = false;
};

/// Least-squares Monte Carlo solve of the adjoint backward equation
///   Y_N = D_x g(X_N),
///   Z_k = (1/dt) CE[ Y_{k+1} dW_k^T | F_k ],
///   Y_k = CE[ Y_{k+1} | F_k ] + D_x H(t_k, X_k, Y_k^pred, Z_k, a_k) dt,
/// with CE the regression projection on the basis features. Terminal values
/// are imposed exactly; rank-deficient regressions are handled by ridge
/// regularization and flagged on the returned solution.
AdjointSolution solve_adjoint_lsmc(const ProblemSpec& spec,
                                   const ControlField& alpha,
                                   const StatePaths& x,
                                   const BrownianEnsemble& w,
                                   const RegressionBasis& basis = {},
                                   const LsmcFlags& flags = {});

/// alpha_t = F x_t + h (scalar problems).
struct LqFeedback {
  double F = 0.0;
  double h = 0.0;
};

/// Closed-form adjoint for the linear-quadratic branch: Y_t = P_t X_t + phi_t
/// and Z_t = P_t sigma(t, X_t, alpha_t), with (P, phi) integrated backward by
/// classical RK4 on a 10x-refined grid. branch_exits counts path-nodes with
/// |x| > 1, where the quadratic-branch formulas stop being exact.
struct LqAnalyticSolution {
  AdjointSolution sol;
  std::vector<double> P;    // one value per grid node
  std::vector<double> phi;  // one value per grid node
  long branch_exits = 0;
};

LqAnalyticSolution solve_adjoint_lq_analytic(const LqParams& params,
                                             const LqFeedback& feedback,
                                             const StatePaths& x);

/// Self-consistency audit: plug (Y, Z) into the one-step relation
///   defect = Y_{k+1} - Y_k + D_x H(t_k, X_k, Y_k, Z_k, a_k) dt - Z_k dW_k,
/// regress the defect on the basis features (conditional-mean part, should be
/// noise level) and report the raw per-step mean defect as well.
struct BsdeResidualReport {
  double one_step_residual = 0.0;   // RMS of regression-fitted defect
  double martingale_defect = 0.0;   // RMS over steps of per-step mean defect
  bool terminal_exact = false;      // Y_N == D_x g(X_N) bitwise
};

BsdeResidualReport residual_check(const ProblemSpec& spec,
                                  const ControlField& alpha,
                                  const StatePaths& x,
                                  const BrownianEnsemble& w,
                                  const AdjointSolution& sol,
                                  const RegressionBasis& basis = {});

/// Ridge-regularized least-squares fit: returns the fitted values of
/// response ~ features. features is row-major n x m. Exposed for projection
/// tests; the solver uses the same path.
std::vector<double> regression_fit(const std::vector<double>& features, int n,
                                   int m, const std::vector<double>& response,
                                   bool* rank_warning = nullptr);

}  // namespace msaflow

#endif
