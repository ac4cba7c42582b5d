#include "msaflow/problem.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "msaflow/rng.hpp"

namespace msaflow {

void validate_spec(const ProblemSpec& spec) {
  if (spec.d < 1 || spec.d_w < 1 || spec.p < 1)
    throw std::invalid_argument("ProblemSpec: dimensions must be >= 1");
  if (static_cast<int>(spec.x0.size()) != spec.d)
    throw std::invalid_argument("ProblemSpec: x0 must have length d");
  if (!spec.b || !spec.sigma || !spec.f || !spec.g)
    throw std::invalid_argument("ProblemSpec: b, sigma, f, g are required");
  if (!spec.b_x || !spec.b_a || !spec.sigma_x || !spec.sigma_a || !spec.f_x ||
      !spec.f_a || !spec.g_x)
    throw std::invalid_argument(
        "ProblemSpec: first-derivative callbacks are required");
  if (!spec.b_aa || !spec.f_aa)
    throw std::invalid_argument(
        "ProblemSpec: b_aa and f_aa callbacks are required");
  if (spec.lambda_hint < 0.0)
    throw std::invalid_argument("ProblemSpec: lambda_hint must be >= 0");
}

void CoeffBuffers::resize(const ProblemSpec& spec) {
  b.resize(spec.d);
  sig.resize(static_cast<std::size_t>(spec.d) * spec.d_w);
  bx.resize(static_cast<std::size_t>(spec.d) * spec.d);
  ba.resize(static_cast<std::size_t>(spec.d) * spec.p);
  sx.resize(static_cast<std::size_t>(spec.d) * spec.d_w * spec.d);
  sa.resize(static_cast<std::size_t>(spec.d) * spec.d_w * spec.p);
  fx.resize(spec.d);
  fa.resize(spec.p);
  gx.resize(spec.d);
  baa.resize(static_cast<std::size_t>(spec.d) * spec.p * spec.p);
  faa.resize(static_cast<std::size_t>(spec.p) * spec.p);
}

double hamiltonian_value(const ProblemSpec& spec, double t, const double* x,
                         const double* y, const double* z, const double* a,
                         CoeffBuffers& buf) {
  spec.b(t, x, a, buf.b.data());
  spec.sigma(t, x, a, buf.sig.data());
  double h = spec.f(t, x, a);
  for (int i = 0; i < spec.d; ++i) h += buf.b[i] * y[i];
  const int dw = spec.d_w;
  for (int i = 0; i < spec.d; ++i)
    for (int j = 0; j < dw; ++j) h += buf.sig[i * dw + j] * z[i * dw + j];
  return h;
}

void hamiltonian_grad_x(const ProblemSpec& spec, double t, const double* x,
                        const double* y, const double* z, const double* a,
                        double* out, CoeffBuffers& buf) {
  spec.b_x(t, x, a, buf.bx.data());
  spec.sigma_x(t, x, a, buf.sx.data());
  spec.f_x(t, x, a, buf.fx.data());
  const int d = spec.d, dw = spec.d_w;
  for (int k = 0; k < d; ++k) {
    double s = buf.fx[k];
    for (int i = 0; i < d; ++i) s += buf.bx[i * d + k] * y[i];
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < dw; ++j)
        s += buf.sx[(i * dw + j) * d + k] * z[i * dw + j];
    out[k] = s;
  }
}

void hamiltonian_grad_a(const ProblemSpec& spec, double t, const double* x,
                        const double* y, const double* z, const double* a,
                        double* out, CoeffBuffers& buf) {
  spec.b_a(t, x, a, buf.ba.data());
  spec.sigma_a(t, x, a, buf.sa.data());
  spec.f_a(t, x, a, buf.fa.data());
  const int d = spec.d, dw = spec.d_w, p = spec.p;
  for (int l = 0; l < p; ++l) {
    double s = buf.fa[l];
    for (int i = 0; i < d; ++i) s += buf.ba[i * p + l] * y[i];
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < dw; ++j)
        s += buf.sa[(i * dw + j) * p + l] * z[i * dw + j];
    out[l] = s;
  }
}

void hamiltonian_hess_a(const ProblemSpec& spec, double t, const double* x,
                        const double* y, const double* a, double* out,
                        CoeffBuffers& buf) {
  // sigma is affine in the control, so its second derivative never appears.
  spec.b_aa(t, x, a, buf.baa.data());
  spec.f_aa(t, x, a, buf.faa.data());
  const int d = spec.d, p = spec.p;
  for (int l = 0; l < p; ++l)
    for (int m = 0; m < p; ++m) {
      double s = buf.faa[l * p + m];
      for (int i = 0; i < d; ++i) s += buf.baa[(i * p + l) * p + m] * y[i];
      out[l * p + m] = s;
    }
}

HamiltonianEval hamiltonian(const ProblemSpec& spec, double t, const double* x,
                            const double* y, const double* z,
                            const double* a) {
  CoeffBuffers buf;
  buf.resize(spec);
  HamiltonianEval ev;
  ev.value = hamiltonian_value(spec, t, x, y, z, a, buf);
  ev.grad_x.resize(spec.d);
  ev.grad_a.resize(spec.p);
  ev.hess_a.resize(static_cast<std::size_t>(spec.p) * spec.p);
  hamiltonian_grad_x(spec, t, x, y, z, a, ev.grad_x.data(), buf);
  hamiltonian_grad_a(spec, t, x, y, z, a, ev.grad_a.data(), buf);
  hamiltonian_hess_a(spec, t, x, y, a, ev.hess_a.data(), buf);
  return ev;
}

double DerivativeReport::worst() const {
  double w = 0.0;
  for (const auto& [_, v] : max_rel_error) w = std::max(w, v);
  return w;
}

namespace {

// Relative error with a unit floor: near-zero derivatives do not explode the
// ratio, while sign errors on O(1) derivatives still register as O(1).
double rel_err(double got, double want) {
  return std::abs(got - want) / std::max({std::abs(got), std::abs(want), 1.0});
}

}  // namespace

DerivativeReport check_derivatives(const ProblemSpec& spec, int n_points,
                                   std::uint64_t seed, double fd_step) {
  validate_spec(spec);
  if (n_points < 1)
    throw std::invalid_argument("check_derivatives: n_points must be >= 1");
  if (!(fd_step > 0.0))
    throw std::invalid_argument("check_derivatives: fd_step must be > 0");

  const int d = spec.d, dw = spec.d_w, p = spec.p;
  const double h = fd_step;

  DerivativeReport rep;
  auto note = [&rep](const std::string& name, double err) {
    auto& slot = rep.max_rel_error[name];
    slot = std::max(slot, err);
  };

  std::vector<double> x(d), a(p), xs(d), as(p);
  std::vector<double> an(static_cast<std::size_t>(d) * dw *
                         std::max({d, p, 1}) * std::max(p, 1)),
      hi(an.size()), lo(an.size());

  const int max_attempts = 50 * n_points + 100;
  for (int attempt = 0;
       attempt < max_attempts && rep.points_used < n_points; ++attempt) {
    const double t = rng::uniform(seed, rng::kPoints, attempt, 0, 0, 0.0, 1.0);
    for (int i = 0; i < d; ++i)
      x[i] = 0.6 * rng::normal(seed, rng::kPoints, attempt, 1, i);
    for (int i = 0; i < p; ++i)
      a[i] = 0.6 * rng::normal(seed, rng::kPoints, attempt, 2, i);

    if (spec.smooth_at) {
      // The whole centered stencil must stay inside one smooth branch.
      bool ok = spec.smooth_at(t, x.data(), a.data());
      for (int i = 0; ok && i < d; ++i)
        for (double s : {-2.0 * h, 2.0 * h}) {
          xs = x;
          xs[i] += s;
          ok = ok && spec.smooth_at(t, xs.data(), a.data());
        }
      for (int i = 0; ok && i < p; ++i)
        for (double s : {-2.0 * h, 2.0 * h}) {
          as = a;
          as[i] += s;
          ok = ok && spec.smooth_at(t, x.data(), as.data());
        }
      if (!ok) continue;
    }
    ++rep.points_used;

    // b_x: centered difference of b in each state coordinate.
    spec.b_x(t, x.data(), a.data(), an.data());
    for (int v = 0; v < d; ++v) {
      xs = x;
      xs[v] += h;
      spec.b(t, xs.data(), a.data(), hi.data());
      xs[v] -= 2.0 * h;
      spec.b(t, xs.data(), a.data(), lo.data());
      for (int i = 0; i < d; ++i)
        note("b_x", rel_err(an[i * d + v], (hi[i] - lo[i]) / (2.0 * h)));
    }

    // b_a
    spec.b_a(t, x.data(), a.data(), an.data());
    for (int v = 0; v < p; ++v) {
      as = a;
      as[v] += h;
      spec.b(t, x.data(), as.data(), hi.data());
      as[v] -= 2.0 * h;
      spec.b(t, x.data(), as.data(), lo.data());
      for (int i = 0; i < d; ++i)
        note("b_a", rel_err(an[i * p + v], (hi[i] - lo[i]) / (2.0 * h)));
    }

    // sigma_x
    spec.sigma_x(t, x.data(), a.data(), an.data());
    for (int v = 0; v < d; ++v) {
      xs = x;
      xs[v] += h;
      spec.sigma(t, xs.data(), a.data(), hi.data());
      xs[v] -= 2.0 * h;
      spec.sigma(t, xs.data(), a.data(), lo.data());
      for (int ij = 0; ij < d * dw; ++ij)
        note("sigma_x",
             rel_err(an[ij * d + v], (hi[ij] - lo[ij]) / (2.0 * h)));
    }

    // sigma_a
    spec.sigma_a(t, x.data(), a.data(), an.data());
    for (int v = 0; v < p; ++v) {
      as = a;
      as[v] += h;
      spec.sigma(t, x.data(), as.data(), hi.data());
      as[v] -= 2.0 * h;
      spec.sigma(t, x.data(), as.data(), lo.data());
      for (int ij = 0; ij < d * dw; ++ij)
        note("sigma_a",
             rel_err(an[ij * p + v], (hi[ij] - lo[ij]) / (2.0 * h)));
    }

    // f_x, f_a
    spec.f_x(t, x.data(), a.data(), an.data());
    for (int v = 0; v < d; ++v) {
      xs = x;
      xs[v] += h;
      const double up = spec.f(t, xs.data(), a.data());
      xs[v] -= 2.0 * h;
      const double dn = spec.f(t, xs.data(), a.data());
      note("f_x", rel_err(an[v], (up - dn) / (2.0 * h)));
    }
    spec.f_a(t, x.data(), a.data(), an.data());
    for (int v = 0; v < p; ++v) {
      as = a;
      as[v] += h;
      const double up = spec.f(t, x.data(), as.data());
      as[v] -= 2.0 * h;
      const double dn = spec.f(t, x.data(), as.data());
      note("f_a", rel_err(an[v], (up - dn) / (2.0 * h)));
    }

    // g_x
    spec.g_x(x.data(), an.data());
    for (int v = 0; v < d; ++v) {
      xs = x;
      xs[v] += h;
      const double up = spec.g(xs.data());
      xs[v] -= 2.0 * h;
      const double dn = spec.g(xs.data());
      note("g_x", rel_err(an[v], (up - dn) / (2.0 * h)));
    }

    // Second derivatives: centered differences of the declared first
    // derivatives, so a failure here isolates the second-derivative callback.
    spec.b_aa(t, x.data(), a.data(), an.data());
    for (int v = 0; v < p; ++v) {
      as = a;
      as[v] += h;
      spec.b_a(t, x.data(), as.data(), hi.data());
      as[v] -= 2.0 * h;
      spec.b_a(t, x.data(), as.data(), lo.data());
      for (int i = 0; i < d; ++i)
        for (int l = 0; l < p; ++l)
          note("b_aa", rel_err(an[(i * p + l) * p + v],
                               (hi[i * p + l] - lo[i * p + l]) / (2.0 * h)));
    }
    spec.f_aa(t, x.data(), a.data(), an.data());
    for (int v = 0; v < p; ++v) {
      as = a;
      as[v] += h;
      spec.f_a(t, x.data(), as.data(), hi.data());
      as[v] -= 2.0 * h;
      spec.f_a(t, x.data(), as.data(), lo.data());
      for (int l = 0; l < p; ++l)
        note("f_aa",
             rel_err(an[l * p + v], (hi[l] - lo[l]) / (2.0 * h)));
    }

    if (spec.bound_K > 0.0) {
      double a_sq = 0.0;
      for (int i = 0; i < p; ++i) a_sq += a[i] * a[i];
      if (spec.f(t, x.data(), a.data()) <
          -spec.bound_K + a_sq / spec.bound_K - 1e-12)
        rep.f_lower_bound_ok = false;
    }
  }

  if (rep.points_used == 0)
    throw std::invalid_argument(
        "check_derivatives: no smooth sample points found");
  return rep;
}

}  // namespace msaflow
