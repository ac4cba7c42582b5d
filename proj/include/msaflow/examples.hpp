#ifndef MSAFLOW_EXAMPLES_HPP
#define MSAFLOW_EXAMPLES_HPP

#include "msaflow/problem.hpp"

namespace msaflow {

/// Scalar linear dynamics dX = (A x + B a + beta) dt + (C x + D a + gamma) dW
/// with piecewise-quadratic costs:
///   f = L/2 x^2 + M/2 a^2   for |x| <= 1,   L/2 |x| + M/2 a^2 outside
///   g = N/2 x^2             for |x| <= 1,   N/2 |x| outside
/// At |x| = 1 the quadratic branch wins (consistent tie-break; the switch set
/// has measure zero under the path law).
struct LqParams {
  double A = 0.25;
  double B = 0.5;
  double beta = 0.0;
  double C = 0.2;
  double D = 0.1;
  double gamma = 0.05;
  double L = 0.5;
  double M = 1.0;
  double N = 0.5;
  double x0 = 0.3;
};

ProblemSpec example_lq_modified(const LqParams& params = {});

/// Same dynamics and state costs as the modified LQ problem, control cost
/// replaced by the non-convex double well
///   q(a) = M/2 (a^4 - a^2)  for |a| <= 1,  (a - 1)^2 for a > 1,
///   (a + 1)^2 for a < -1.
///
/// Default state costs are lighter than the LQ example's. The well barrier
/// q'(a) peaks at 0.272 between the basins; with L = N = 0.5 and x0 = 0.3 the
/// adjoint forcing B y + D z sits just above that at early times, so the flow
/// spends tens of units of flow time marching path-points across the barrier
/// one by one. The lighter costs keep the forcing below the barrier and the
/// flow settles into the nearest well, which is the regime the long-run
/// diagnostics probe. Pass LQ-sized costs explicitly to study migration.
inline LqParams quartic_default_params() {
  LqParams p;
  p.L = 0.25;
  p.N = 0.25;
  p.x0 = 0.2;
  return p;
}

ProblemSpec example_quartic(const LqParams& params = quartic_default_params());

/// Saturating drift b = logi(x) * A * logi(a) with logi(u) = 1/(1+e^-u),
/// affine noise sigma = sig_x x + sig_a a + sig_c, costs from the LQ example.
struct LogisticParams {
  double A = 4.0;
  double sig_x = 0.2;
  double sig_a = 0.1;
  double sig_c = 0.05;
  double L = 0.5;
  double M = 1.0;
  double N = 0.5;
  double x0 = 0.0;
};

/// Compact box on which the logistic example's semiconvexity constant is
/// certified by grid minimization of hess_a H = A logi(x) logi''(a) y + M.
struct LogisticBox {
  double x = 3.0;
  double a = 3.0;
  double y = 5.0;
};
inline constexpr LogisticBox kLogisticBox{};

ProblemSpec example_logistic(const LogisticParams& params = {});

/// Decoupled diagnostic problem: b, sigma constant (control- and
/// state-independent), f = |a|^2, g = 0. The control-space gradient is
/// exactly D_a H = 2a, so the gradient flow is alpha_s = alpha_0 e^{-2s} and
/// every rate can be checked against a closed form.
struct ToyParams {
  double b0 = 0.1;
  double sigma0 = 0.2;
  double x0 = 0.0;
};

ProblemSpec example_toy_quadratic(const ToyParams& params = {});

}  // namespace msaflow

#endif
