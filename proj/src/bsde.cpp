#include "msaflow/bsde.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

namespace msaflow {

namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void append_exponents(int n_vars, int total, std::vector<int>& cur,
                      std::vector<std::vector<int>>& out) {
  if (static_cast<int>(cur.size()) == n_vars - 1) {
    cur.push_back(total);
    out.push_back(cur);
    cur.pop_back();
    return;
  }
  for (int e = total; e >= 0; --e) {
    cur.push_back(e);
    append_exponents(n_vars, total - e, cur, out);
    cur.pop_back();
  }
}

}  // namespace

std::vector<std::vector<int>> RegressionBasis::exponents(int d, int p) const {
  if (degree < 0)
    throw std::invalid_argument("RegressionBasis: degree must be >= 0");
  const int v = n_vars(d, p);
  std::vector<std::vector<int>> out;
  std::vector<int> cur;
  for (int total = 0; total <= degree; ++total)
    append_exponents(v, total, cur, out);
  if (static_cast<int>(out.size()) > max_features)
    throw std::invalid_argument(
        "RegressionBasis: feature count " + std::to_string(out.size()) +
        " exceeds max_features " + std::to_string(max_features));
  return out;
}

int RegressionBasis::feature_count(int d, int p) const {
  return static_cast<int>(exponents(d, p).size());
}

namespace {

/// One time-step regression context: features, ridge-regularized Gram factor,
/// and multi-response fitting. Reused across steps to avoid reallocation.
class StepRegression {
 public:
  void configure(const RegressionBasis& basis, int d, int p, int n) {
    mi_ = basis.exponents(d, p);
    n_vars_ = basis.n_vars(d, p);
    degree_ = basis.degree;
    include_control_ = basis.include_control;
    d_ = d;
    p_ = p;
    n_ = n;
    m_ = static_cast<int>(mi_.size());
    phi_.resize(n_, m_);
    powers_.resize(static_cast<std::size_t>(n_vars_) * (degree_ + 1));
  }

  int m() const { return m_; }

  void build(const StatePaths& x, const ControlField& alpha, int k) {
    for (int path = 0; path < n_; ++path) {
      const double* xv = x.at(path, k);
      const double* av = alpha.at(path, k);
      double* pw = powers_.data();
      for (int v = 0; v < n_vars_; ++v) {
        const double val = v < d_ ? xv[v] : av[v - d_];
        pw[v * (degree_ + 1)] = 1.0;
        for (int e = 1; e <= degree_; ++e)
          pw[v * (degree_ + 1) + e] = pw[v * (degree_ + 1) + e - 1] * val;
      }
      for (int c = 0; c < m_; ++c) {
        double prod = 1.0;
        const std::vector<int>& e = mi_[c];
        for (int v = 0; v < n_vars_; ++v)
          prod *= pw[v * (degree_ + 1) + e[v]];
        phi_(path, c) = prod;
      }
    }
    Eigen::MatrixXd gram = phi_.transpose() * phi_;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
    rank_deficient_ =
        es.eigenvalues().minCoeff() <= 1e-12 * es.eigenvalues().maxCoeff();
    gram.diagonal().array() += 1e-10 * gram.trace();
    factor_.compute(gram);
  }

  bool rank_deficient() const { return rank_deficient_; }

  void fit(const Eigen::VectorXd& resp, Eigen::VectorXd& fitted) const {
    fitted.noalias() = phi_ * factor_.solve(phi_.transpose() * resp);
  }

 private:
  std::vector<std::vector<int>> mi_;
  int n_vars_ = 0, degree_ = 0, d_ = 0, p_ = 0, n_ = 0, m_ = 0;
  bool include_control_ = true;
  bool rank_deficient_ = false;
  RowMat phi_;
  std::vector<double> powers_;
  Eigen::LDLT<Eigen::MatrixXd> factor_;
};

void require_bsde_inputs(const ProblemSpec& spec, const ControlField& alpha,
                         const StatePaths& x, const BrownianEnsemble& w,
                         const RegressionBasis& basis) {
  validate_spec(spec);
  if (!(alpha.shape == x.shape) || !(alpha.shape == w.shape) ||
      alpha.grid.n_steps != x.grid.n_steps ||
      alpha.grid.n_steps != w.grid.n_steps)
    throw std::invalid_argument("solve_adjoint_lsmc: layout mismatch");
  if (alpha.shape.d != spec.d || alpha.shape.p != spec.p ||
      alpha.shape.d_w != spec.d_w)
    throw std::invalid_argument(
        "solve_adjoint_lsmc: ensemble does not match problem dimensions");
  const int m = basis.feature_count(spec.d, spec.p);
  if (alpha.shape.n_paths < 10 * m)
    throw std::invalid_argument(
        "solve_adjoint_lsmc: need n_paths >= 10 x feature count (" +
        std::to_string(10 * m) + ")");
}

}  // namespace

std::vector<double> regression_fit(const std::vector<double>& features, int n,
                                   int m, const std::vector<double>& response,
                                   bool* rank_warning) {
  if (n < 1 || m < 1 || static_cast<int>(features.size()) != n * m ||
      static_cast<int>(response.size()) != n)
    throw std::invalid_argument("regression_fit: inconsistent sizes");
  Eigen::Map<const RowMat> phi(features.data(), n, m);
  Eigen::Map<const Eigen::VectorXd> resp(response.data(), n);
  Eigen::MatrixXd gram = phi.transpose() * phi;
  if (rank_warning) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
    *rank_warning =
        es.eigenvalues().minCoeff() <= 1e-12 * es.eigenvalues().maxCoeff();
  }
  gram.diagonal().array() += 1e-10 * gram.trace();
  Eigen::VectorXd fitted =
      phi * gram.ldlt().solve(phi.transpose() * resp);
  return std::vector<double>(fitted.data(), fitted.data() + n);
}

AdjointSolution solve_adjoint_lsmc(const ProblemSpec& spec,
                                   const ControlField& alpha,
                                   const StatePaths& x,
                                   const BrownianEnsemble& w,
                                   const RegressionBasis& basis,
                                   const LsmcFlags& flags) {
  require_bsde_inputs(spec, alpha, x, w, basis);

  const int n = alpha.shape.n_paths;
  const int d = spec.d, dw = spec.d_w;
  const int n_steps = alpha.grid.n_steps;
  const double dt = alpha.grid.dt;

  AdjointSolution out(alpha.shape, alpha.grid);

  // Terminal condition, imposed exactly.
  for (int path = 0; path < n; ++path)
    spec.g_x(x.at(path, n_steps), out.y_at(path, n_steps));

  StepRegression reg;
  reg.configure(basis, d, spec.p, n);

  Eigen::MatrixXd y_next(n, d), y_pred(n, d);
  Eigen::MatrixXd z_fit(n, d * dw);
  Eigen::VectorXd resp(n), fitted(n);
  std::vector<double> grad(d), yrow(d);
  CoeffBuffers buf;
  buf.resize(spec);

  for (int path = 0; path < n; ++path)
    for (int i = 0; i < d; ++i) y_next(path, i) = out.y_at(path, n_steps)[i];

  for (int k = n_steps - 1; k >= 0; --k) {
    reg.build(x, alpha, k);
    // Step 0 is rank-deficient by construction (X_0 is the same point on
    // every path) and its ridge fit is the plain mean, which is the exact
    // conditional expectation there; only interior steps say anything about
    // basis health.
    out.rank_warning = out.rank_warning || (k > 0 && reg.rank_deficient());

    // Predictor: CE[Y_{k+1} | features at step k].
    for (int i = 0; i < d; ++i) {
      resp = y_next.col(i);
      reg.fit(resp, fitted);
      y_pred.col(i) = fitted;
    }

    // Z: regression of the (optionally centered) martingale increment.
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < dw; ++j) {
        if (flags.center_z) {
          for (int path = 0; path < n; ++path)
            resp(path) = (y_next(path, i) - y_pred(path, i)) *
                         w.dw(path, k, j) / dt;
        } else {
          for (int path = 0; path < n; ++path)
            resp(path) = y_next(path, i) * w.dw(path, k, j) / dt;
        }
        reg.fit(resp, fitted);
        z_fit.col(i * dw + j) = fitted;
      }

    // Explicit driver step (plus optional single Picard re-evaluation).
    const double t = alpha.grid.nodes[k];
    for (int path = 0; path < n; ++path) {
      double* zrow = out.z_at(path, k);
      for (int c = 0; c < d * dw; ++c) zrow[c] = z_fit(path, c);
      for (int i = 0; i < d; ++i) yrow[i] = y_pred(path, i);
      hamiltonian_grad_x(spec, t, x.at(path, k), yrow.data(), zrow,
                         alpha.at(path, k), grad.data(), buf);
      double* yk = out.y_at(path, k);
      for (int i = 0; i < d; ++i) yk[i] = y_pred(path, i) + grad[i] * dt;
      if (flags.extra_picard_sweep) {
        hamiltonian_grad_x(spec, t, x.at(path, k), yk, zrow,
                           alpha.at(path, k), grad.data(), buf);
        for (int i = 0; i < d; ++i) yk[i] = y_pred(path, i) + grad[i] * dt;
      }
      for (int i = 0; i < d; ++i) {
        if (!std::isfinite(yk[i]))
          throw NumericalBlowup(
              "solve_adjoint_lsmc: non-finite Y at path " +
                  std::to_string(path) + ", step " + std::to_string(k),
              path, k);
        y_next(path, i) = yk[i];
      }
    }
  }
  return out;
}

LqAnalyticSolution solve_adjoint_lq_analytic(const LqParams& q,
                                             const LqFeedback& fb,
                                             const StatePaths& x) {
  if (x.shape.d != 1 || x.shape.d_w != 1 || x.shape.p != 1)
    throw std::invalid_argument(
        "solve_adjoint_lq_analytic: scalar problems only");
  const int n_steps = x.grid.n_steps;
  const double dt = x.grid.dt;

  LqAnalyticSolution res;
  res.P.resize(n_steps + 1);
  res.phi.resize(n_steps + 1);
  res.P[n_steps] = q.N;
  res.phi[n_steps] = 0.0;

  // Backward ODEs for the affine ansatz Y = P x + phi under alpha = F x + h:
  //   P'   = -( 2A P + C (C + D F) P + B F P + L )
  //   phi' = -( A phi + C P (D h + gamma) + P (B h + beta) )
  // integrated with classical RK4 on a 10x-refined grid.
  const auto dP = [&](double P) {
    return -(2.0 * q.A * P + q.C * (q.C + q.D * fb.F) * P + q.B * fb.F * P +
             q.L);
  };
  const auto dphi = [&](double P, double phi) {
    return -(q.A * phi + q.C * P * (q.D * fb.h + q.gamma) +
             P * (q.B * fb.h + q.beta));
  };

  const int refine = 10;
  const double hstep = -dt / refine;
  double P = q.N, phi = 0.0;
  for (int k = n_steps; k >= 1; --k) {
    for (int s = 0; s < refine; ++s) {
      const double k1p = dP(P);
      const double k1f = dphi(P, phi);
      const double k2p = dP(P + 0.5 * hstep * k1p);
      const double k2f = dphi(P + 0.5 * hstep * k1p, phi + 0.5 * hstep * k1f);
      const double k3p = dP(P + 0.5 * hstep * k2p);
      const double k3f = dphi(P + 0.5 * hstep * k2p, phi + 0.5 * hstep * k2f);
      const double k4p = dP(P + hstep * k3p);
      const double k4f = dphi(P + hstep * k3p, phi + hstep * k3f);
      P += hstep / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
      phi += hstep / 6.0 * (k1f + 2.0 * k2f + 2.0 * k3f + k4f);
    }
    res.P[k - 1] = P;
    res.phi[k - 1] = phi;
  }

  res.sol = AdjointSolution(x.shape, x.grid);
  for (int path = 0; path < x.shape.n_paths; ++path) {
    for (int k = 0; k <= n_steps; ++k) {
      const double xv = x.at(path, k)[0];
      if (std::abs(xv) > 1.0) ++res.branch_exits;
      res.sol.y_at(path, k)[0] = res.P[k] * xv + res.phi[k];
      if (k < n_steps) {
        const double a = fb.F * xv + fb.h;
        res.sol.z_at(path, k)[0] =
            res.P[k] * (q.C * xv + q.D * a + q.gamma);
      }
    }
  }
  return res;
}

BsdeResidualReport residual_check(const ProblemSpec& spec,
                                  const ControlField& alpha,
                                  const StatePaths& x,
                                  const BrownianEnsemble& w,
                                  const AdjointSolution& sol,
                                  const RegressionBasis& basis) {
  require_bsde_inputs(spec, alpha, x, w, basis);
  if (!(sol.shape == alpha.shape) || sol.grid.n_steps != alpha.grid.n_steps)
    throw std::invalid_argument("residual_check: solution layout mismatch");

  const int n = alpha.shape.n_paths;
  const int d = spec.d, dw = spec.d_w;
  const int n_steps = alpha.grid.n_steps;
  const double dt = alpha.grid.dt;

  StepRegression reg;
  reg.configure(basis, d, spec.p, n);
  Eigen::MatrixXd defect(n, d);
  Eigen::VectorXd resp(n), fitted(n);
  std::vector<double> grad(d);
  CoeffBuffers buf;
  buf.resize(spec);

  double fitted_sq = 0.0;
  double mean_sq = 0.0;
  for (int k = 0; k < n_steps; ++k) {
    const double t = alpha.grid.nodes[k];
    for (int path = 0; path < n; ++path) {
      const double* yk = sol.y_at(path, k);
      const double* yk1 = sol.y_at(path, k + 1);
      const double* zk = sol.z_at(path, k);
      hamiltonian_grad_x(spec, t, x.at(path, k), yk, zk, alpha.at(path, k),
                         grad.data(), buf);
      for (int i = 0; i < d; ++i) {
        double v = yk1[i] - yk[i] + grad[i] * dt;
        for (int j = 0; j < dw; ++j) v -= zk[i * dw + j] * w.dw(path, k, j);
        defect(path, i) = v;
      }
    }
    reg.build(x, alpha, k);
    for (int i = 0; i < d; ++i) {
      resp = defect.col(i);
      reg.fit(resp, fitted);
      fitted_sq += fitted.squaredNorm();
      const double mean = resp.mean();
      mean_sq += mean * mean;
    }
  }

  BsdeResidualReport rep;
  rep.one_step_residual =
      std::sqrt(fitted_sq / (static_cast<double>(n) * n_steps * d));
  rep.martingale_defect =
      std::sqrt(mean_sq / (static_cast<double>(n_steps) * d));
  rep.terminal_exact = true;
  std::vector<double> gx(d);
  for (int path = 0; path < n && rep.terminal_exact; ++path) {
    spec.g_x(x.at(path, n_steps), gx.data());
    for (int i = 0; i < d; ++i)
      if (gx[i] != sol.y_at(path, n_steps)[i]) {
        rep.terminal_exact = false;
        break;
      }
  }
  return rep;
}

}  // namespace msaflow
