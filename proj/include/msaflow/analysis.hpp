#ifndef MSAFLOW_ANALYSIS_HPP
#define MSAFLOW_ANALYSIS_HPP

#include <cstdint>
#include <vector>

#include "msaflow/core.hpp"
#include "msaflow/flow.hpp"
#include "msaflow/problem.hpp"

namespace msaflow {

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  int n = 0;
};

/// Least squares of log(err) on log(h): slope is the observed convergence
/// order. Errors on fewer than 3 points or nonpositive h/err.
RateFit fit_rate(const std::vector<double>& h, const std::vector<double>& err);

/// Least squares of log(err) on x itself: slope is the observed exponential
/// rate. Errors on fewer than 3 points or nonpositive err.
RateFit fit_exponential(const std::vector<double>& x,
                        const std::vector<double>& err);

/// First-order convergence of the implicit scheme to the flow: for each tau,
/// distance (sup over that run's stored nodes, in the control norm) between
/// the implicit run and a fine explicit reference at tau_ref =
/// min(tau_list) / ref_divisor. Every tau must be an integer multiple of
/// min(tau_list) and S an integer multiple of every tau so nodes align.
struct TauRateOptions {
  double S = 1.0;
  std::vector<double> tau_list = {0.1, 0.05, 0.025};
  double ref_divisor = 16.0;
  FlowConfig base;  // S, tau_flow, scheme, store_stride are overridden
};

struct TauRateEntry {
  double tau = 0.0;
  double err = 0.0;
};

struct TauRateReport {
  std::vector<TauRateEntry> entries;
  RateFit fit;
  double tau_ref = 0.0;
};

TauRateReport verify_tau_rate(const ProblemSpec& spec,
                              const ControlField& alpha0,
                              const BrownianEnsemble& w,
                              const TauRateOptions& opts);

/// Convex-case sublinear rate: J(a_S) - J(a*) <= ||a0 - a*||^2 / S, tested
/// per horizon with the paired per-path statistic
///   d_i = [cost_i(a_S) - cost_i(a*)] - q_i / S,  q_i = per-path ||a0-a*||^2,
/// passing when mean(d) <= 3 SE(d). One flow run to max(S_list) serves every
/// horizon; each S must land on a flow node.
struct SublinearOptions {
  std::vector<double> S_list = {1.0, 2.0, 4.0, 8.0};
  FlowConfig base;  // S and store_stride are overridden
};

struct SublinearEntry {
  double S = 0.0;
  double gap = 0.0;       // J(a_S) - J(a*), paired estimate
  double envelope = 0.0;  // mean(q) / S
  double slack_se = 0.0;  // SE of the paired statistic
  bool ok = false;
};

struct SublinearReport {
  std::vector<SublinearEntry> entries;
  double J_star = 0.0;
  double dist0_sq = 0.0;  // ||a0 - a*||^2
  RateFit fit;            // log gap vs log S, when all gaps are positive
  bool fit_valid = false;
  bool all_ok = false;
};

SublinearReport verify_sublinear_rate(const ProblemSpec& spec,
                                      const ControlField& alpha0,
                                      const ControlField& alpha_star,
                                      const BrownianEnsemble& w,
                                      const SublinearOptions& opts);

/// Strongly convex case: both J(a_S) - J(a*) and ||a_S - a*||^2 should decay
/// like exp(-c S) with c at least a known fraction of eta. Reports semilog
/// fits over the horizons with positive gaps.
struct ExponentialOptions {
  std::vector<double> S_list = {0.5, 1.0, 1.5, 2.0};
  double eta = 0.0;  // must be positive
  FlowConfig base;   // S and store_stride are overridden
};

struct ExponentialEntry {
  double S = 0.0;
  double j_gap = 0.0;
  double control_gap_sq = 0.0;
};

struct ExponentialReport {
  std::vector<ExponentialEntry> entries;
  double eta = 0.0;
  RateFit j_fit, gap_fit;
  bool j_fit_valid = false;
  bool gap_fit_valid = false;
};

ExponentialReport verify_exponential_rate(const ProblemSpec& spec,
                                          const ControlField& alpha0,
                                          const ControlField& alpha_star,
                                          const BrownianEnsemble& w,
                                          const ExponentialOptions& opts);

/// Long-horizon run: the gradient norm at the final node should be small and
/// its integral over s should match the total cost decrease (both are the
/// energy identity read at s -> infinity).
struct GradientVanishingOptions {
  double S = 10.0;
  FlowConfig base;  // S is overridden
};

struct GradientVanishingReport {
  double final_grad_norm_sq = 0.0;
  double J0 = 0.0;
  double min_J = 0.0;
  double integral = 0.0;   // sum grad * ds over the run
  double decrement = 0.0;  // J0 - min_J
  double rel_err = 0.0;    // |integral - decrement| / max(decrement, eps)
};

GradientVanishingReport verify_gradient_vanishing(
    const ProblemSpec& spec, const ControlField& alpha0,
    const BrownianEnsemble& w, const GradientVanishingOptions& opts);

/// Directional-derivative audit: central difference (J(a + eps v) -
/// J(a - eps v)) / (2 eps) against <D_a H along a, v>, paired per path.
/// Directions are mean-zero Gaussian fields; ok means the paired difference
/// is within max(tol_abs, 3 SE) for every direction.
struct GateauxOptions {
  double eps = 1e-4;
  int n_directions = 10;
  double tol_abs = 1e-3;
  double direction_scale = 1.0;
  std::uint64_t seed = 7;
  RegressionBasis basis;
  LsmcFlags lsmc;
};

struct GateauxDirection {
  double fd = 0.0;
  double inner = 0.0;
  double diff = 0.0;  // fd - inner, paired estimate
  double se = 0.0;
  bool ok = false;
};

struct GateauxReport {
  std::vector<GateauxDirection> directions;
  double max_abs_diff = 0.0;
  bool ok = false;
};

GateauxReport gateaux_check(const ProblemSpec& spec, const ControlField& alpha,
                            const BrownianEnsemble& w,
                            const GateauxOptions& opts = {});

}  // namespace msaflow

#endif
