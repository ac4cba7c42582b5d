#include "msaflow/examples.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace msaflow {

namespace {

double sign(double v) { return v < 0.0 ? -1.0 : 1.0; }

double logi(double u) { return 1.0 / (1.0 + std::exp(-u)); }
double logi_d1(double u) {
  const double l = logi(u);
  return l * (1.0 - l);
}
double logi_d2(double u) {
  const double l = logi(u);
  return l * (1.0 - l) * (1.0 - 2.0 * l);
}

// State cost pieces shared by the LQ, quartic and logistic examples.
double state_f(double L, double x) {
  return std::abs(x) <= 1.0 ? 0.5 * L * x * x : 0.5 * L * std::abs(x);
}
double state_f_x(double L, double x) {
  return std::abs(x) <= 1.0 ? L * x : 0.5 * L * sign(x);
}
double state_g(double N, double x) {
  return std::abs(x) <= 1.0 ? 0.5 * N * x * x : 0.5 * N * std::abs(x);
}
double state_g_x(double N, double x) {
  return std::abs(x) <= 1.0 ? N * x : 0.5 * N * sign(x);
}

void check_lq(const LqParams& q) {
  if (!(q.M > 0.0))
    throw std::invalid_argument("LqParams: M must be positive");
  if (q.L < 0.0 || q.N < 0.0)
    throw std::invalid_argument("LqParams: L and N must be nonnegative");
}

}  // namespace

ProblemSpec example_lq_modified(const LqParams& q) {
  check_lq(q);
  ProblemSpec s;
  s.name = "lq_modified";
  s.x0 = {q.x0};
  s.lambda_hint = 0.0;  // M/2 a^2 is already convex in a
  s.bound_K = std::max(1.0, 2.0 / q.M);
  s.hess_a_constant = true;
  s.b = [q](double, const double* x, const double* a, double* out) {
    out[0] = q.A * x[0] + q.B * a[0] + q.beta;
  };
  s.sigma = [q](double, const double* x, const double* a, double* out) {
    out[0] = q.C * x[0] + q.D * a[0] + q.gamma;
  };
  s.f = [q](double, const double* x, const double* a) {
    return state_f(q.L, x[0]) + 0.5 * q.M * a[0] * a[0];
  };
  s.g = [q](const double* x) { return state_g(q.N, x[0]); };
  s.b_x = [q](double, const double*, const double*, double* out) {
    out[0] = q.A;
  };
  s.b_a = [q](double, const double*, const double*, double* out) {
    out[0] = q.B;
  };
  s.sigma_x = [q](double, const double*, const double*, double* out) {
    out[0] = q.C;
  };
  s.sigma_a = [q](double, const double*, const double*, double* out) {
    out[0] = q.D;
  };
  s.f_x = [q](double, const double* x, const double*, double* out) {
    out[0] = state_f_x(q.L, x[0]);
  };
  s.f_a = [q](double, const double*, const double* a, double* out) {
    out[0] = q.M * a[0];
  };
  s.g_x = [q](const double* x, double* out) { out[0] = state_g_x(q.N, x[0]); };
  s.b_aa = [](double, const double*, const double*, double* out) {
    out[0] = 0.0;
  };
  s.f_aa = [q](double, const double*, const double*, double* out) {
    out[0] = q.M;
  };
  s.smooth_at = [](double, const double* x, const double*) {
    return std::abs(std::abs(x[0]) - 1.0) > 0.05;
  };
  return s;
}

namespace {

double well_f(double M, double a) {
  if (a > 1.0) return (a - 1.0) * (a - 1.0);
  if (a < -1.0) return (a + 1.0) * (a + 1.0);
  return 0.5 * M * (a * a * a * a - a * a);
}
double well_f_a(double M, double a) {
  if (a > 1.0) return 2.0 * (a - 1.0);
  if (a < -1.0) return 2.0 * (a + 1.0);
  return 0.5 * M * (4.0 * a * a * a - 2.0 * a);
}
double well_f_aa(double M, double a) {
  if (std::abs(a) > 1.0) return 2.0;
  return 0.5 * M * (12.0 * a * a - 2.0);
}

}  // namespace

ProblemSpec example_quartic(const LqParams& q) {
  ProblemSpec s = example_lq_modified(q);
  s.name = "quartic";
  // Double well: hess_a >= -M on |a| <= 1; 2.01 leaves margin for the
  // default M = 1 operating range.
  s.lambda_hint = 2.01;
  s.bound_K = std::max(2.0, q.M);
  s.hess_a_constant = false;
  s.f = [q](double, const double* x, const double* a) {
    return state_f(q.L, x[0]) + well_f(q.M, a[0]);
  };
  s.f_a = [q](double, const double*, const double* a, double* out) {
    out[0] = well_f_a(q.M, a[0]);
  };
  s.f_aa = [q](double, const double*, const double* a, double* out) {
    out[0] = well_f_aa(q.M, a[0]);
  };
  s.smooth_at = [](double, const double* x, const double* a) {
    return std::abs(std::abs(x[0]) - 1.0) > 0.05 &&
           std::abs(std::abs(a[0]) - 1.0) > 0.05;
  };
  return s;
}

ProblemSpec example_logistic(const LogisticParams& q) {
  if (!(q.M > 0.0))
    throw std::invalid_argument("LogisticParams: M must be positive");
  ProblemSpec s;
  s.name = "logistic";
  s.x0 = {q.x0};
  s.bound_K = std::max(1.0, 2.0 / q.M);
  s.hess_a_constant = false;
  s.b = [q](double, const double* x, const double* a, double* out) {
    out[0] = logi(x[0]) * q.A * logi(a[0]);
  };
  s.sigma = [q](double, const double* x, const double* a, double* out) {
    out[0] = q.sig_x * x[0] + q.sig_a * a[0] + q.sig_c;
  };
  s.f = [q](double, const double* x, const double* a) {
    return state_f(q.L, x[0]) + 0.5 * q.M * a[0] * a[0];
  };
  s.g = [q](const double* x) { return state_g(q.N, x[0]); };
  s.b_x = [q](double, const double* x, const double* a, double* out) {
    out[0] = logi_d1(x[0]) * q.A * logi(a[0]);
  };
  s.b_a = [q](double, const double* x, const double* a, double* out) {
    out[0] = logi(x[0]) * q.A * logi_d1(a[0]);
  };
  s.sigma_x = [q](double, const double*, const double*, double* out) {
    out[0] = q.sig_x;
  };
  s.sigma_a = [q](double, const double*, const double*, double* out) {
    out[0] = q.sig_a;
  };
  s.f_x = [q](double, const double* x, const double*, double* out) {
    out[0] = state_f_x(q.L, x[0]);
  };
  s.f_a = [q](double, const double*, const double* a, double* out) {
    out[0] = q.M * a[0];
  };
  s.g_x = [q](const double* x, double* out) { out[0] = state_g_x(q.N, x[0]); };
  s.b_aa = [q](double, const double* x, const double* a, double* out) {
    out[0] = logi(x[0]) * q.A * logi_d2(a[0]);
  };
  s.f_aa = [q](double, const double*, const double*, double* out) {
    out[0] = q.M;
  };
  s.smooth_at = [](double, const double* x, const double*) {
    return std::abs(std::abs(x[0]) - 1.0) > 0.05;
  };

  // Certify the semiconvexity constant on the compact box by direct grid
  // minimization of hess_a H = A logi(x) logi''(a) y + M.
  const int nx = 61, na = 121, ny = 21;
  double min_hess = q.M;
  for (int ix = 0; ix < nx; ++ix) {
    const double x = -kLogisticBox.x + 2.0 * kLogisticBox.x * ix / (nx - 1);
    const double lx = logi(x);
    for (int ia = 0; ia < na; ++ia) {
      const double a = -kLogisticBox.a + 2.0 * kLogisticBox.a * ia / (na - 1);
      const double d2 = logi_d2(a);
      for (int iy = 0; iy < ny; ++iy) {
        const double y = -kLogisticBox.y + 2.0 * kLogisticBox.y * iy / (ny - 1);
        min_hess = std::min(min_hess, q.A * lx * d2 * y + q.M);
      }
    }
  }
  s.lambda_hint = std::max(0.0, -min_hess);
  return s;
}

ProblemSpec example_toy_quadratic(const ToyParams& q) {
  ProblemSpec s;
  s.name = "toy_quadratic";
  s.x0 = {q.x0};
  s.lambda_hint = 0.0;
  s.bound_K = 1.0;
  s.hess_a_constant = true;
  s.b = [q](double, const double*, const double*, double* out) {
    out[0] = q.b0;
  };
  s.sigma = [q](double, const double*, const double*, double* out) {
    out[0] = q.sigma0;
  };
  s.f = [](double, const double*, const double* a) { return a[0] * a[0]; };
  s.g = [](const double*) { return 0.0; };
  auto zero = [](double, const double*, const double*, double* out) {
    out[0] = 0.0;
  };
  s.b_x = zero;
  s.b_a = zero;
  s.sigma_x = zero;
  s.sigma_a = zero;
  s.f_x = zero;
  s.f_a = [](double, const double*, const double* a, double* out) {
    out[0] = 2.0 * a[0];
  };
  s.g_x = [](const double*, double* out) { out[0] = 0.0; };
  s.b_aa = zero;
  s.f_aa = [](double, const double*, const double*, double* out) {
    out[0] = 2.0;
  };
  return s;
}

}  // namespace msaflow
