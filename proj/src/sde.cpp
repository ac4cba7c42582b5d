#include "msaflow/sde.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace msaflow {

namespace {

void require_consistent(const ProblemSpec& spec, const ControlField& alpha,
                        const BrownianEnsemble& w) {
  if (alpha.shape.d != spec.d || alpha.shape.d_w != spec.d_w ||
      alpha.shape.p != spec.p)
    throw std::invalid_argument(
        "simulate_forward: control shape does not match problem dimensions");
  if (!(alpha.shape == w.shape) || alpha.grid.n_steps != w.grid.n_steps ||
      alpha.grid.horizon != w.grid.horizon)
    throw std::invalid_argument(
        "simulate_forward: control and noise layouts do not match");
}

}  // namespace

StatePaths simulate_forward(const ProblemSpec& spec, const ControlField& alpha,
                            const BrownianEnsemble& w) {
  validate_spec(spec);
  require_consistent(spec, alpha, w);

  const int d = spec.d, dw = spec.d_w;
  const int n_steps = alpha.grid.n_steps;
  const double dt = alpha.grid.dt;

  StatePaths x(alpha.shape, alpha.grid);
  std::vector<double> drift(d), diff(static_cast<std::size_t>(d) * dw);

  for (int path = 0; path < alpha.shape.n_paths; ++path) {
    double* xk = x.at(path, 0);
    for (int i = 0; i < d; ++i) xk[i] = spec.x0[i];
    for (int k = 0; k < n_steps; ++k) {
      const double t = alpha.grid.nodes[k];
      const double* cur = x.at(path, k);
      const double* a = alpha.at(path, k);
      const double* dwk = w.at(path, k);
      spec.b(t, cur, a, drift.data());
      spec.sigma(t, cur, a, diff.data());
      double* nxt = x.at(path, k + 1);
      for (int i = 0; i < d; ++i) {
        double v = cur[i] + drift[i] * dt;
        for (int j = 0; j < dw; ++j) v += diff[i * dw + j] * dwk[j];
        if (!std::isfinite(v) || std::abs(v) > kBlowupThreshold)
          throw NumericalBlowup(
              "simulate_forward: path " + std::to_string(path) +
                  " exceeded blow-up threshold at step " +
                  std::to_string(k + 1),
              path, k + 1);
        nxt[i] = v;
      }
    }
  }
  return x;
}

std::pair<StatePaths, ControlField> simulate_forward_feedback(
    const ProblemSpec& spec, const BrownianEnsemble& w, double F, double h) {
  validate_spec(spec);
  if (spec.d != 1 || spec.d_w != 1 || spec.p != 1)
    throw std::invalid_argument(
        "simulate_forward_feedback: scalar problems only");
  const int n_steps = w.grid.n_steps;
  const double dt = w.grid.dt;
  StatePaths x(w.shape, w.grid);
  ControlField alpha(w.shape, w.grid);
  double drift = 0.0, diff = 0.0;
  for (int path = 0; path < w.shape.n_paths; ++path) {
    x.at(path, 0)[0] = spec.x0[0];
    for (int k = 0; k < n_steps; ++k) {
      const double t = w.grid.nodes[k];
      const double cur = x.at(path, k)[0];
      const double a = F * cur + h;
      alpha.at(path, k)[0] = a;
      spec.b(t, &cur, &a, &drift);
      spec.sigma(t, &cur, &a, &diff);
      const double v = cur + drift * dt + diff * w.dw(path, k, 0);
      if (!std::isfinite(v) || std::abs(v) > kBlowupThreshold)
        throw NumericalBlowup(
            "simulate_forward_feedback: path " + std::to_string(path) +
                " exceeded blow-up threshold at step " + std::to_string(k + 1),
            path, k + 1);
      x.at(path, k + 1)[0] = v;
    }
  }
  return {std::move(x), std::move(alpha)};
}

std::vector<double> estimate_cost_per_path(const ProblemSpec& spec,
                                           const ControlField& alpha,
                                           const StatePaths& x) {
  if (!(alpha.shape == x.shape) || alpha.grid.n_steps != x.grid.n_steps)
    throw std::invalid_argument(
        "estimate_cost: control and state layouts do not match");
  const int n_steps = alpha.grid.n_steps;
  const double dt = alpha.grid.dt;
  std::vector<double> cost(alpha.shape.n_paths);
  for (int path = 0; path < alpha.shape.n_paths; ++path) {
    double running = 0.0;
    for (int k = 0; k < n_steps; ++k)
      running += spec.f(alpha.grid.nodes[k], x.at(path, k), alpha.at(path, k));
    cost[path] = running * dt + spec.g(x.at(path, n_steps));
  }
  return cost;
}

double estimate_cost(const ProblemSpec& spec, const ControlField& alpha,
                     const StatePaths& x) {
  const std::vector<double> cost = estimate_cost_per_path(spec, alpha, x);
  return pairwise_sum(cost) / cost.size();
}

}  // namespace msaflow
