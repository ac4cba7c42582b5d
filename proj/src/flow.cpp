#include "msaflow/flow.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "msaflow/errors.hpp"
#include "msaflow/msa.hpp"
#include "msaflow/sde.hpp"

namespace msaflow {

bool FlowTrajectory::has_control(int node) const {
  return std::find(stored_nodes.begin(), stored_nodes.end(), node) !=
         stored_nodes.end();
}

const ControlField& FlowTrajectory::control_at_node(int node) const {
  auto it = std::find(stored_nodes.begin(), stored_nodes.end(), node);
  if (it == stored_nodes.end())
    throw std::invalid_argument("control_at_node: node was not stored");
  return controls[static_cast<std::size_t>(it - stored_nodes.begin())];
}

FlowTrajectory run_gradient_flow(const ProblemSpec& spec,
                                 const ControlField& alpha0,
                                 const BrownianEnsemble& w,
                                 const FlowConfig& cfg) {
  validate_spec(spec);
  if (cfg.tau_flow <= 0.0)
    throw std::invalid_argument("run_gradient_flow: tau_flow must be positive");
  if (cfg.S <= 0.0)
    throw std::invalid_argument("run_gradient_flow: S must be positive");
  const double steps_real = cfg.S / cfg.tau_flow;
  const long n_flow = std::lround(steps_real);
  if (n_flow < 1 || std::abs(steps_real - static_cast<double>(n_flow)) >
                        1e-6 * std::max(1.0, steps_real))
    throw std::invalid_argument(
        "run_gradient_flow: S must be an integer multiple of tau_flow");
  if (cfg.scheme == FlowScheme::kImplicit && spec.lambda_hint > 0.0 &&
      cfg.tau_flow * spec.lambda_hint >= 1.0)
    throw std::invalid_argument(
        "run_gradient_flow: tau_flow must satisfy tau_flow * lambda_hint < 1");
  if (cfg.backtrack && cfg.scheme != FlowScheme::kImplicit)
    throw std::invalid_argument(
        "run_gradient_flow: backtracking requires the implicit scheme");

  int stride = cfg.store_stride;
  if (stride < 0)
    throw std::invalid_argument("run_gradient_flow: store_stride must be >= 0");
  if (stride == 0) stride = static_cast<int>(std::max(1L, n_flow / 100));

  FlowTrajectory traj;
  traj.scheme = cfg.scheme;
  traj.tau_flow = cfg.tau_flow;

  const UpdateMode mode = cfg.scheme == FlowScheme::kImplicit
                              ? UpdateMode::kProx
                              : UpdateMode::kExplicit;

  ControlField alpha = alpha0;
  StatePaths x = simulate_forward(spec, alpha, w);
  double J = estimate_cost(spec, alpha, x);
  // Track full steps separately so uniform runs have s_n = n * tau_flow
  // exactly (no accumulation drift); backtracked partial steps go in `extra`.
  long full_steps = 0;
  double extra = 0.0;
  double s = 0.0;

  for (long n = 0;; ++n) {
    AdjointSolution sol = solve_adjoint_lsmc(spec, alpha, x, w, cfg.basis, cfg.lsmc);
    traj.rank_warning = traj.rank_warning || sol.rank_warning;

    traj.s_nodes.push_back(s);
    traj.J_trace.push_back(J);
    traj.grad_norm_sq_trace.push_back(grad_norm_estimator(spec, alpha, x, sol));

    const bool last = n >= n_flow;
    if (n % stride == 0 || last) {
      traj.stored_nodes.push_back(static_cast<int>(n));
      traj.controls.push_back(alpha);
    }
    if (last) break;

    double tau = cfg.tau_flow;
    for (;;) {
      ControlField next = update_control(spec, alpha, x, sol, tau, mode, cfg.prox);
      StatePaths x_next = simulate_forward(spec, next, w);
      const double J_next = estimate_cost(spec, next, x_next);
      if (!cfg.backtrack || J_next <= J) {
        alpha = std::move(next);
        x = std::move(x_next);
        J = J_next;
        break;
      }
      tau *= 0.5;
      if (tau < cfg.tau_min)
        throw StalledIteration("flow backtracking stalled below tau_min", static_cast<int>(n), J);
    }
    if (tau == cfg.tau_flow)
      ++full_steps;
    else
      extra += tau;
    s = static_cast<double>(full_steps) * cfg.tau_flow + extra;
  }
  return traj;
}

ControlField interpolate_controls(const FlowTrajectory& traj, double s,
                                  InterpMode mode) {
  if (traj.stored_nodes.empty() || traj.s_nodes.empty())
    throw std::invalid_argument("interpolate_controls: empty trajectory");
  const double s_last =
      traj.s_nodes[static_cast<std::size_t>(traj.stored_nodes.back())];
  if (s < 0.0 || s > s_last)
    throw std::invalid_argument(
        "interpolate_controls: s outside the stored range");

  // s values of the stored iterates, in increasing order.
  std::vector<double> ss(traj.stored_nodes.size());
  for (std::size_t j = 0; j < ss.size(); ++j)
    ss[j] = traj.s_nodes[static_cast<std::size_t>(traj.stored_nodes[j])];

  // Exact hit on a stored node: every mode returns that iterate.
  for (std::size_t j = 0; j < ss.size(); ++j)
    if (s == ss[j]) return traj.controls[j];

  std::size_t hi = 1;
  while (hi < ss.size() && ss[hi] < s) ++hi;
  const std::size_t lo = hi - 1;

  switch (mode) {
    case InterpMode::kConstLeft:
      return traj.controls[lo];
    case InterpMode::kConstRight:
      return traj.controls[hi];
    case InterpMode::kPiecewiseLinear: {
      const double theta = (s - ss[lo]) / (ss[hi] - ss[lo]);
      ControlField out = traj.controls[lo];
      for (std::size_t i = 0; i < out.values.size(); ++i)
        out.values[i] = (1.0 - theta) * out.values[i] +
                        theta * traj.controls[hi].values[i];
      return out;
    }
  }
  throw std::logic_error("interpolate_controls: unreachable");
}

EnergyIdentityReport energy_identity_check(const FlowTrajectory& traj,
                                           double floor) {
  EnergyIdentityReport rep;
  const std::size_t n = traj.s_nodes.size();
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double grad = traj.grad_norm_sq_trace[i];
    if (grad < floor) continue;
    const double slope = (traj.J_trace[i + 1] - traj.J_trace[i - 1]) /
                         (traj.s_nodes[i + 1] - traj.s_nodes[i - 1]);
    rep.nodes.push_back(static_cast<int>(i));
    rep.dJ_ds.push_back(slope);
    rep.grad_norm_sq.push_back(grad);
    rep.rel_err.push_back(std::abs(slope + grad) / grad);
  }
  rep.eligible_nodes = static_cast<int>(rep.nodes.size());
  rep.no_eligible_nodes = rep.nodes.empty();
  for (double e : rep.rel_err) rep.max_rel_err = std::max(rep.max_rel_err, e);
  return rep;
}

EnergyIntegralReport energy_integral_check(const FlowTrajectory& traj) {
  EnergyIntegralReport rep;
  const std::size_t n = traj.s_nodes.size();
  if (n < 2) throw std::invalid_argument("energy_integral_check: need >= 2 nodes");
  for (std::size_t i = 0; i + 1 < n; ++i)
    rep.integral += traj.grad_norm_sq_trace[i] *
                    (traj.s_nodes[i + 1] - traj.s_nodes[i]);
  rep.decrement = traj.J_trace.front() - traj.J_trace.back();
  rep.rel_err = std::abs(rep.integral - rep.decrement) /
                std::max({std::abs(rep.decrement), std::abs(rep.integral), 1e-12});
  return rep;
}

GapBoundReport gap_bound_check(const ProblemSpec& spec,
                               const ControlField& beta,
                               const ControlField& theta,
                               const BrownianEnsemble& w,
                               const RegressionBasis& basis,
                               const LsmcFlags& flags) {
  if (!(beta.shape == theta.shape))
    throw std::invalid_argument("gap_bound_check: control shapes differ");

  StatePaths x_beta = simulate_forward(spec, beta, w);
  StatePaths x_theta = simulate_forward(spec, theta, w);
  AdjointSolution sol = solve_adjoint_lsmc(spec, beta, x_beta, w, basis, flags);
  ControlField grad = gradient_field(spec, beta, x_beta, sol);

  std::vector<double> cost_beta = estimate_cost_per_path(spec, beta, x_beta);
  std::vector<double> cost_theta = estimate_cost_per_path(spec, theta, x_theta);

  // Per-path <D_a H, beta - theta> and the paired statistic lhs_i - rhs_i.
  const int n_paths = beta.shape.n_paths;
  const int n_steps = beta.grid.n_steps;
  const int p = beta.shape.p;
  const double dt = beta.grid.dt;
  std::vector<double> lhs_pp(n_paths), rhs_pp(n_paths), diff(n_paths);
  for (int i = 0; i < n_paths; ++i) {
    double acc = 0.0;
    for (int k = 0; k < n_steps; ++k) {
      const double* gik = grad.at(i, k);
      const double* bik = beta.at(i, k);
      const double* tik = theta.at(i, k);
      for (int l = 0; l < p; ++l) acc += gik[l] * (bik[l] - tik[l]);
    }
    rhs_pp[i] = acc * dt;
    lhs_pp[i] = cost_beta[i] - cost_theta[i];
    diff[i] = lhs_pp[i] - rhs_pp[i];
  }

  GapBoundReport rep;
  rep.lhs = pairwise_sum(lhs_pp) / n_paths;
  rep.rhs = pairwise_sum(rhs_pp) / n_paths;
  const double mean_diff = pairwise_sum(diff) / n_paths;
  double var = 0.0;
  for (double v : diff) var += (v - mean_diff) * (v - mean_diff);
  var /= std::max(1, n_paths - 1);
  rep.se = std::sqrt(var / n_paths);
  rep.satisfied = mean_diff <= 3.0 * rep.se;
  return rep;
}

}  // namespace msaflow
