#ifndef MSAFLOW_SDE_HPP
#define MSAFLOW_SDE_HPP

#include <utility>

#include "msaflow/core.hpp"
#include "msaflow/problem.hpp"

namespace msaflow {

/// |x| beyond this for any path aborts the simulation as a blow-up.
inline constexpr double kBlowupThreshold = 1e8;

/// Euler-Maruyama with left-endpoint coefficients:
///   X_{k+1} = X_k + b(t_k, X_k, a_k) dt + sigma(t_k, X_k, a_k) dW_k.
/// X[path][k] depends only on increments with step < k (adaptedness is a
/// structural property of the recursion, tested by noise splicing).
StatePaths simulate_forward(const ProblemSpec& spec, const ControlField& alpha,
                            const BrownianEnsemble& w);

/// Scalar problems only: simulate with the feedback control a_k = F x_k + h
/// evaluated along the way, returning both the paths and the realized
/// open-loop control field.
std::pair<StatePaths, ControlField> simulate_forward_feedback(
    const ProblemSpec& spec, const BrownianEnsemble& w, double F, double h);

/// Per-path cost: sum_k f(t_k, X_k, a_k) dt + g(X_N).
std::vector<double> estimate_cost_per_path(const ProblemSpec& spec,
                                           const ControlField& alpha,
                                           const StatePaths& x);

/// J(alpha) = mean over paths of the per-path cost (pairwise reduction).
double estimate_cost(const ProblemSpec& spec, const ControlField& alpha,
                     const StatePaths& x);

}  // namespace msaflow

#endif
