#include "msaflow/prox.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace msaflow {

namespace {

std::vector<double> copy_x(const double* x, int d) {
  return std::vector<double>(x, x + d);
}

// Smallest residual the first-order condition grad + (a - a_prev)/tau can
// resolve in doubles: moving a by one ulp changes the residual by about
// ulp(a)/tau, so below this level no representable iterate does better and
// the current one is accepted even if it misses the nominal tolerance.
double residual_floor(double tau, double a_scale) {
  constexpr double eps = std::numeric_limits<double>::epsilon();
  return 8.0 * eps * std::max(1.0, a_scale) / tau;
}

// Scalar damped Newton on F(a) = grad_a H(a) + (a - a_prev)/tau.
void newton_scalar(const ProblemSpec& spec, double t, const double* x,
                   const double* y, const double* z, double a_prev, double tau,
                   double* a_out, CoeffBuffers& buf, const ProxOptions& opts) {
  double a = a_prev;
  double grad, hess;
  hamiltonian_grad_a(spec, t, x, y, z, &a, &grad, buf);
  double res = grad + (a - a_prev) / tau;
  for (int it = 0; it < opts.max_iter; ++it) {
    const double tol_eff =
        std::max(opts.tol, residual_floor(tau, std::abs(a)));
    if (std::abs(res) <= tol_eff) {
      *a_out = a;
      return;
    }
    hamiltonian_hess_a(spec, t, x, y, &a, &hess, buf);
    const double jac = hess + 1.0 / tau;
    if (jac == 0.0 || !std::isfinite(jac))
      throw ConvergenceFailure("prox_step_point: singular Newton system", t,
                               copy_x(x, spec.d), std::abs(res));
    const double delta = -res / jac;
    double step = 1.0;
    bool accepted = false;
    for (int bt = 0; bt <= opts.max_backtracks; ++bt) {
      const double cand = a + step * delta;
      hamiltonian_grad_a(spec, t, x, y, z, &cand, &grad, buf);
      const double cand_res = grad + (cand - a_prev) / tau;
      if (std::isfinite(cand_res) && std::abs(cand_res) < std::abs(res)) {
        a = cand;
        res = cand_res;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (std::abs(res) <= residual_floor(tau, std::abs(a))) {
        *a_out = a;
        return;
      }
      throw ConvergenceFailure(
          "prox_step_point: damped Newton stalled at residual " +
              std::to_string(std::abs(res)),
          t, copy_x(x, spec.d), std::abs(res));
    }
  }
  if (std::abs(res) <= std::max(opts.tol, residual_floor(tau, std::abs(a)))) {
    *a_out = a;
    return;
  }
  throw ConvergenceFailure("prox_step_point: no convergence in " +
                               std::to_string(opts.max_iter) + " iterations",
                           t, copy_x(x, spec.d), std::abs(res));
}

void newton_vector(const ProblemSpec& spec, double t, const double* x,
                   const double* y, const double* z, const double* a_prev,
                   double tau, double* a_out, CoeffBuffers& buf,
                   const ProxOptions& opts) {
  const int p = spec.p;
  Eigen::VectorXd a = Eigen::Map<const Eigen::VectorXd>(a_prev, p);
  Eigen::VectorXd res(p), grad(p), cand(p), cand_res(p);
  Eigen::MatrixXd jac(p, p);

  hamiltonian_grad_a(spec, t, x, y, z, a.data(), res.data(), buf);
  // residual = grad + (a - a_prev)/tau; at the start the second term is 0
  for (int it = 0; it < opts.max_iter; ++it) {
    const double tol_eff = std::max(
        opts.tol, residual_floor(tau, a.lpNorm<Eigen::Infinity>()));
    if (res.norm() <= tol_eff) {
      Eigen::Map<Eigen::VectorXd>(a_out, p) = a;
      return;
    }
    hamiltonian_hess_a(spec, t, x, y, a.data(), jac.data(), buf);
    jac.transposeInPlace();  // row-major callback layout into column-major
    jac.diagonal().array() += 1.0 / tau;
    Eigen::VectorXd delta = jac.partialPivLu().solve(-res);
    if (!delta.allFinite())
      throw ConvergenceFailure("prox_step_point: singular Newton system", t,
                               copy_x(x, spec.d), res.norm());
    double step = 1.0;
    bool accepted = false;
    for (int bt = 0; bt <= opts.max_backtracks; ++bt) {
      cand = a + step * delta;
      hamiltonian_grad_a(spec, t, x, y, z, cand.data(), grad.data(), buf);
      cand_res = grad + (cand - Eigen::Map<const Eigen::VectorXd>(a_prev, p)) /
                            tau;
      if (cand_res.allFinite() && cand_res.norm() < res.norm()) {
        a = cand;
        res = cand_res;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (res.norm() <= residual_floor(tau, a.lpNorm<Eigen::Infinity>())) {
        Eigen::Map<Eigen::VectorXd>(a_out, p) = a;
        return;
      }
      throw ConvergenceFailure("prox_step_point: damped Newton stalled", t,
                               copy_x(x, spec.d), res.norm());
    }
  }
  if (res.norm() <=
      std::max(opts.tol, residual_floor(tau, a.lpNorm<Eigen::Infinity>()))) {
    Eigen::Map<Eigen::VectorXd>(a_out, p) = a;
    return;
  }
  throw ConvergenceFailure("prox_step_point: no convergence", t,
                           copy_x(x, spec.d), res.norm());
}

}  // namespace

void prox_step_point(const ProblemSpec& spec, double t, const double* x,
                     const double* y, const double* z, const double* a_prev,
                     double tau, double* a_out, CoeffBuffers& buf,
                     const ProxOptions& opts) {
  if (!(tau > 0.0))
    throw std::invalid_argument("prox_step_point: tau must be positive");

  if (spec.hess_a_constant) {
    // Quadratic Hamiltonian in a: the first-order condition is linear,
    //   (hess + I/tau)(a - a_prev) = -grad(a_prev).
    if (spec.p == 1) {
      double grad, hess;
      hamiltonian_grad_a(spec, t, x, y, z, a_prev, &grad, buf);
      hamiltonian_hess_a(spec, t, x, y, a_prev, &hess, buf);
      const double denom = hess + 1.0 / tau;
      if (!(denom > 0.0))
        throw ConvergenceFailure(
            "prox_step_point: nonpositive curvature hess + 1/tau", t,
            copy_x(x, spec.d), std::abs(grad));
      a_out[0] = a_prev[0] - grad / denom;
      return;
    }
    const int p = spec.p;
    Eigen::VectorXd grad(p);
    Eigen::MatrixXd hess(p, p);
    hamiltonian_grad_a(spec, t, x, y, z, a_prev, grad.data(), buf);
    hamiltonian_hess_a(spec, t, x, y, a_prev, hess.data(), buf);
    hess.transposeInPlace();
    hess.diagonal().array() += 1.0 / tau;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
    Eigen::VectorXd delta = ldlt.solve(-grad);
    if (ldlt.info() != Eigen::Success || !delta.allFinite())
      throw ConvergenceFailure("prox_step_point: singular quadratic solve", t,
                               copy_x(x, spec.d), grad.norm());
    Eigen::Map<Eigen::VectorXd>(a_out, p) =
        Eigen::Map<const Eigen::VectorXd>(a_prev, p) + delta;
    return;
  }

  if (spec.p == 1)
    newton_scalar(spec, t, x, y, z, a_prev[0], tau, a_out, buf, opts);
  else
    newton_vector(spec, t, x, y, z, a_prev, tau, a_out, buf, opts);
}

void explicit_step_point(const ProblemSpec& spec, double t, const double* x,
                         const double* y, const double* z,
                         const double* a_prev, double tau, double* a_out,
                         CoeffBuffers& buf) {
  if (!(tau > 0.0))
    throw std::invalid_argument("explicit_step_point: tau must be positive");
  hamiltonian_grad_a(spec, t, x, y, z, a_prev, a_out, buf);
  for (int l = 0; l < spec.p; ++l) a_out[l] = a_prev[l] - tau * a_out[l];
}

ControlField update_control(const ProblemSpec& spec, const ControlField& alpha,
                            const StatePaths& x, const AdjointSolution& sol,
                            double tau, UpdateMode mode,
                            const ProxOptions& opts) {
  validate_spec(spec);
  if (!(alpha.shape == x.shape) || !(alpha.shape == sol.shape) ||
      alpha.grid.n_steps != x.grid.n_steps ||
      alpha.grid.n_steps != sol.grid.n_steps)
    throw std::invalid_argument("update_control: layout mismatch");
  if (!(tau > 0.0))
    throw std::invalid_argument("update_control: tau must be positive");
  if (mode == UpdateMode::kProx && spec.lambda_hint > 0.0 &&
      !(tau < 1.0 / spec.lambda_hint))
    throw std::invalid_argument(
        "update_control: tau must be below 1/lambda_hint = " +
        std::to_string(1.0 / spec.lambda_hint));

  ControlField out(alpha.shape, alpha.grid);
  CoeffBuffers buf;
  buf.resize(spec);
  const int n_steps = alpha.grid.n_steps;
  for (int path = 0; path < alpha.shape.n_paths; ++path)
    for (int k = 0; k < n_steps; ++k) {
      const double t = alpha.grid.nodes[k];
      if (mode == UpdateMode::kProx)
        prox_step_point(spec, t, x.at(path, k), sol.y_at(path, k),
                        sol.z_at(path, k), alpha.at(path, k), tau,
                        out.at(path, k), buf, opts);
      else
        explicit_step_point(spec, t, x.at(path, k), sol.y_at(path, k),
                            sol.z_at(path, k), alpha.at(path, k), tau,
                            out.at(path, k), buf);
    }
  return out;
}

}  // namespace msaflow
