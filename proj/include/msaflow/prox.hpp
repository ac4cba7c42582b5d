#ifndef MSAFLOW_PROX_HPP
#define MSAFLOW_PROX_HPP

#include "msaflow/core.hpp"
#include "msaflow/problem.hpp"

namespace msaflow {

struct ProxOptions {
  double tol = 1e-10;
  int max_iter = 50;
  int max_backtracks = 20;
};

/// Pointwise proximal update: the root of
///   D_a H(t, x, y, z, a) + (a - a_prev) / tau = 0,
/// i.e. the first-order condition of argmin_a H + |a - a_prev|^2 / (2 tau).
/// Quadratic-in-control Hamiltonians (spec.hess_a_constant) are solved in one
/// shot; otherwise damped Newton with step halving. Throws ConvergenceFailure
/// when the residual cannot be brought below tol.
void prox_step_point(const ProblemSpec& spec, double t, const double* x,
                     const double* y, const double* z, const double* a_prev,
                     double tau, double* a_out, CoeffBuffers& buf,
                     const ProxOptions& opts = {});

/// Explicit counterpart a_prev - tau * D_a H(t, x, y, z, a_prev).
void explicit_step_point(const ProblemSpec& spec, double t, const double* x,
                         const double* y, const double* z,
                         const double* a_prev, double tau, double* a_out,
                         CoeffBuffers& buf);

enum class UpdateMode { kProx, kExplicit };

/// Apply the pointwise update at every (path, step) of the field. Each point
/// uses only step-k data, so progressive measurability of the inputs is
/// preserved.
ControlField update_control(const ProblemSpec& spec, const ControlField& alpha,
                            const StatePaths& x, const AdjointSolution& sol,
                            double tau, UpdateMode mode = UpdateMode::kProx,
                            const ProxOptions& opts = {});

}  // namespace msaflow

#endif
