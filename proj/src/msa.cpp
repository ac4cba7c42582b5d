#include "msaflow/msa.hpp"

#include <cmath>
#include <stdexcept>

#include "msaflow/errors.hpp"
#include "msaflow/sde.hpp"

namespace msaflow {

ControlField gradient_field(const ProblemSpec& spec, const ControlField& alpha,
                            const StatePaths& x, const AdjointSolution& sol) {
  const EnsembleShape& sh = alpha.shape;
  ControlField grad;
  grad.shape = sh;
  grad.grid = alpha.grid;
  grad.values.assign(alpha.values.size(), 0.0);
  CoeffBuffers buf;
  buf.resize(spec);
  const int n_steps = alpha.grid.n_steps;
  for (int i = 0; i < sh.n_paths; ++i) {
    for (int k = 0; k < n_steps; ++k) {
      const double t = alpha.grid.nodes[k];
      hamiltonian_grad_a(spec, t, x.at(i, k), sol.y_at(i, k), sol.z_at(i, k),
                         alpha.at(i, k), grad.at(i, k), buf);
    }
  }
  return grad;
}

double grad_norm_estimator(const ProblemSpec& spec, const ControlField& alpha,
                           const StatePaths& x, const AdjointSolution& sol) {
  return control_norm_sq(gradient_field(spec, alpha, x, sol));
}

RunReport run_msa(const ProblemSpec& spec, const ControlField& alpha0,
                  const BrownianEnsemble& w, const MsaConfig& cfg) {
  validate_spec(spec);
  if (cfg.tau0 <= 0.0) throw std::invalid_argument("run_msa: tau0 must be positive");
  if (cfg.max_outer < 1) throw std::invalid_argument("run_msa: max_outer must be >= 1");
  if (cfg.stop_dJ < 0.0) throw std::invalid_argument("run_msa: stop_dJ must be >= 0");
  if (cfg.mode == UpdateMode::kProx && spec.lambda_hint > 0.0 &&
      cfg.tau0 * spec.lambda_hint >= 1.0)
    throw std::invalid_argument("run_msa: tau0 must satisfy tau0 * lambda_hint < 1");

  RunReport report;
  ControlField alpha = alpha0;
  StatePaths x = simulate_forward(spec, alpha, w);
  double J = estimate_cost(spec, alpha, x);
  double tau = cfg.tau0;

  for (int n = 0; n < cfg.max_outer; ++n) {
    AdjointSolution sol = solve_adjoint_lsmc(spec, alpha, x, w, cfg.basis, cfg.lsmc);
    report.rank_warning = report.rank_warning || sol.rank_warning;
    const double grad_sq = grad_norm_estimator(spec, alpha, x, sol);

    ControlField next;
    StatePaths x_next;
    double J_next = 0.0;
    for (;;) {
      next = update_control(spec, alpha, x, sol, tau, cfg.mode, cfg.prox);
      x_next = simulate_forward(spec, next, w);
      J_next = estimate_cost(spec, next, x_next);
      if (!cfg.backtrack || J_next <= J) break;
      tau *= 0.5;
      if (tau < cfg.tau_min) throw StalledIteration("backtracking stalled below tau_min", n, J);
    }

    MsaIterationRecord rec;
    rec.iter = n;
    rec.J = J;
    rec.grad_norm_sq = grad_sq;
    rec.step_norm_sq = control_dist_sq(next, alpha);
    rec.tau_used = tau;
    report.iterations.push_back(rec);

    const double dJ = J - J_next;
    alpha = std::move(next);
    x = std::move(x_next);
    J = J_next;
    if (cfg.stop_dJ > 0.0 && dJ >= 0.0 && dJ < cfg.stop_dJ) {
      report.termination = MsaTermination::kConverged;
      break;
    }
  }

  // Final record at the last iterate, with one more adjoint solve for its
  // gradient norm so the trace covers every iterate produced.
  {
    AdjointSolution sol = solve_adjoint_lsmc(spec, alpha, x, w, cfg.basis, cfg.lsmc);
    report.rank_warning = report.rank_warning || sol.rank_warning;
    MsaIterationRecord rec;
    rec.iter = static_cast<int>(report.iterations.size());
    rec.J = J;
    rec.grad_norm_sq = grad_norm_estimator(spec, alpha, x, sol);
    rec.step_norm_sq = 0.0;
    rec.tau_used = tau;
    report.iterations.push_back(rec);
  }

  report.final_control = std::move(alpha);
  report.final_J = J;
  return report;
}

}  // namespace msaflow
