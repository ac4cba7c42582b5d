#ifndef MSAFLOW_PROBLEM_HPP
#define MSAFLOW_PROBLEM_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "msaflow/core.hpp"

namespace msaflow {

/// Control problem data: minimize J(alpha) = E[ int_0^T f(t,X,alpha) dt
/// + g(X_T) ] subject to dX = b dt + sigma dW, X_0 = x0.
///
/// Callbacks write into caller-provided buffers; layouts are row-major:
///   b:        out[d]
///   sigma:    out[d*d_w]          (i,j) -> out[i*d_w + j]
///   b_x:      out[d*d]            db_i/dx_j -> out[i*d + j]
///   b_a:      out[d*p]            db_i/da_l -> out[i*p + l]
///   sigma_x:  out[d*d_w*d]        dsig_ij/dx_k -> out[(i*d_w + j)*d + k]
///   sigma_a:  out[d*d_w*p]
///   f_x:      out[d],  f_a: out[p],  g_x: out[d]
///   b_aa:     out[d*p*p]          d2b_i/da_l da_m -> out[(i*p + l)*p + m]
///   f_aa:     out[p*p]
/// Second derivatives of sigma in the control are structurally zero and have
/// no slot.
struct ProblemSpec {
  std::string name;
  int d = 1;
  int d_w = 1;
  int p = 1;
  std::vector<double> x0;

  /// Semiconvexity hint: a |-> H + (lambda/2)|a|^2 is expected convex on the
  /// operating region. 0 means H is already convex in a.
  double lambda_hint = 0.0;

  /// When > 0, f is expected to satisfy f >= -K + |a|^2 / K (spot-checked by
  /// check_derivatives).
  double bound_K = 0.0;

  /// True when hess_a H is constant in a (quadratic-in-control Hamiltonian);
  /// enables the one-shot proximal solve.
  bool hess_a_constant = false;

  using VecFn =
      std::function<void(double, const double*, const double*, double*)>;

  VecFn b, sigma;
  std::function<double(double, const double*, const double*)> f;
  std::function<double(const double*)> g;
  VecFn b_x, b_a, sigma_x, sigma_a, f_x, f_a;
  std::function<void(const double*, double*)> g_x;
  VecFn b_aa, f_aa;

  /// Optional: false near kinks of piecewise data; finite-difference checks
  /// skip such points. Absent means smooth everywhere.
  std::function<bool(double, const double*, const double*)> smooth_at;
};

void validate_spec(const ProblemSpec& spec);

/// Scratch buffers for repeated coefficient evaluation in hot loops.
struct CoeffBuffers {
  std::vector<double> b, sig, bx, ba, sx, sa, fx, fa, gx, baa, faa;
  void resize(const ProblemSpec& spec);
};

/// H(t,x,y,z,a) = b . y + sigma : z + f and its first/second derivatives.
struct HamiltonianEval {
  double value = 0.0;
  std::vector<double> grad_x;  // d
  std::vector<double> grad_a;  // p
  std::vector<double> hess_a;  // p*p, row-major
};

HamiltonianEval hamiltonian(const ProblemSpec& spec, double t, const double* x,
                            const double* y, const double* z, const double* a);

/// Buffer-based variants used by the solvers.
double hamiltonian_value(const ProblemSpec& spec, double t, const double* x,
                         const double* y, const double* z, const double* a,
                         CoeffBuffers& buf);
void hamiltonian_grad_x(const ProblemSpec& spec, double t, const double* x,
                        const double* y, const double* z, const double* a,
                        double* out, CoeffBuffers& buf);
void hamiltonian_grad_a(const ProblemSpec& spec, double t, const double* x,
                        const double* y, const double* z, const double* a,
                        double* out, CoeffBuffers& buf);
void hamiltonian_hess_a(const ProblemSpec& spec, double t, const double* x,
                        const double* y, const double* a, double* out,
                        CoeffBuffers& buf);

/// Finite-difference audit of every declared derivative callback at random
/// draws (t, x, a), skipping points the spec marks non-smooth. Fails loudly
/// only through the reported errors; thresholding is the caller's business.
struct DerivativeReport {
  std::map<std::string, double> max_rel_error;
  bool f_lower_bound_ok = true;
  int points_used = 0;
  double worst() const;
};

DerivativeReport check_derivatives(const ProblemSpec& spec, int n_points,
                                   std::uint64_t seed, double fd_step = 1e-5);

}  // namespace msaflow

#endif
