// End-to-end acceptance checks, one per numbered criterion. Each prints a
// single line
//   criterion N PASS <what was checked, with the measured numbers>
// or the same with FAIL, and the process exits 0 only when every requested
// criterion passed. Run a single criterion with --criterion N; with no
// arguments the whole set runs in order.
//
// These run at full sampling scale (1e4 to 1e5 paths), unlike the unit
// suites, so each one costs seconds to minutes. Tolerances are fixed here on
// purpose; loosening them to make a failure go away defeats the point.

#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "msaflow/analysis.hpp"
#include "msaflow/bsde.hpp"
#include "msaflow/cli.hpp"
#include "msaflow/examples.hpp"
#include "msaflow/flow.hpp"
#include "msaflow/msa.hpp"
#include "msaflow/prox.hpp"
#include "msaflow/sde.hpp"
#include "support/harness.hpp"
#include "support/oracles.hpp"

using namespace msaflow;
namespace fs = std::filesystem;

namespace {

BrownianEnsemble make_w(int n_paths, std::uint64_t seed = 42) {
  TimeGrid grid = make_time_grid(1.0, 50);
  EnsembleShape shape;
  shape.n_paths = n_paths;
  return sample_brownian(shape, grid, seed);
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

bool nonincreasing(const std::vector<MsaIterationRecord>& recs) {
  for (std::size_t k = 1; k < recs.size(); ++k)
    if (recs[k].J > recs[k - 1].J) return false;
  return true;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 1. Proximal iteration with backtracking descends monotonically on both the
// convex and the nonconvex example: 100 updates under common random numbers,
// recorded cost exactly non-increasing.
bool crit_monotone_descent(std::string& d) {
  BrownianEnsemble w = make_w(10000);
  MsaConfig cfg;
  cfg.tau0 = 0.02;
  cfg.stop_dJ = 0.0;  // disable early stop, take all 100 steps
  cfg.max_outer = 100;
  bool ok = true;
  d = "monotone descent over 100 prox steps:";
  struct Item {
    const char* tag;
    ProblemSpec spec;
    double a0;
  };
  const Item items[] = {{"convex", example_lq_modified(), 0.0},
                        {"nonconvex", example_quartic(), 0.9}};
  for (const Item& it : items) {
    ControlField alpha0 = constant_control(w.shape, w.grid, it.a0);
    RunReport rep = run_msa(it.spec, alpha0, w, cfg);
    const bool mono = nonincreasing(rep.iterations);
    const bool full = rep.iterations.size() == 101;
    ok = ok && mono && full;
    d += fmt(" %s iters=%zu mono=%d J %.6g -> %.6g;", it.tag,
             rep.iterations.size(), mono ? 1 : 0, rep.iterations.front().J,
             rep.final_J);
  }
  return ok;
}

// 2. Along the implicit gradient flow the centered difference of J matches
// the negative squared gradient norm at every node where the gradient is
// above floor: within 10% on the convex example, 2% on the decoupled
// quadratic toy (whose flow is known in closed form).
bool crit_energy_identity(std::string& d) {
  FlowConfig fc;
  fc.tau_flow = 1e-3;

  BrownianEnsemble w_lq = make_w(100000);
  ControlField a0_lq = constant_control(w_lq.shape, w_lq.grid, 0.0);
  fc.S = 0.2;
  FlowTrajectory t_lq = run_gradient_flow(example_lq_modified(), a0_lq, w_lq, fc);
  EnergyIdentityReport e_lq = energy_identity_check(t_lq, 1e-6);

  BrownianEnsemble w_toy = make_w(10000);
  ControlField a0_toy = constant_control(w_toy.shape, w_toy.grid, 0.9);
  fc.S = 0.5;
  FlowTrajectory t_toy =
      run_gradient_flow(example_toy_quadratic(), a0_toy, w_toy, fc);
  EnergyIdentityReport e_toy = energy_identity_check(t_toy, 1e-6);

  const bool ok = e_lq.eligible_nodes > 0 && e_lq.max_rel_err <= 0.10 &&
                  e_toy.eligible_nodes > 0 && e_toy.max_rel_err <= 0.02;
  d = fmt("energy identity dJ/ds = -|grad|^2: convex max_rel=%.3e (tol 0.1, "
          "%d nodes), toy max_rel=%.3e (tol 0.02, %d nodes)",
          e_lq.max_rel_err, e_lq.eligible_nodes, e_toy.max_rel_err,
          e_toy.eligible_nodes);
  return ok;
}

// 3. The discrete integral of |grad|^2 over flow time equals the total cost
// decrease J(a_0) - J(a_S) within 10% on the convex example, S = 2.
bool crit_energy_integral(std::string& d) {
  BrownianEnsemble w = make_w(10000);
  ControlField a0 = constant_control(w.shape, w.grid, 0.0);
  FlowConfig fc;
  fc.S = 2.0;
  fc.tau_flow = 0.01;
  FlowTrajectory t = run_gradient_flow(example_lq_modified(), a0, w, fc);
  EnergyIntegralReport r = energy_integral_check(t);
  d = fmt("integral of |grad|^2 vs cost decrement: integral=%.6g "
          "decrement=%.6g rel_err=%.3e (tol 0.1)",
          r.integral, r.decrement, r.rel_err);
  return r.rel_err <= 0.10;
}

// 4. The implicit scheme converges to the flow at first order in tau:
// log-log slope of the distance to a 16x finer explicit reference over
// tau in {0.1, 0.05, 0.025}, within [0.9, 1.1] on the toy and [0.7, 1.3]
// on the convex example.
bool crit_tau_rate(std::string& d) {
  TauRateOptions opts;

  BrownianEnsemble w = make_w(10000);
  ControlField a_toy = constant_control(w.shape, w.grid, 0.9);
  TauRateReport toy = verify_tau_rate(example_toy_quadratic(), a_toy, w, opts);
  ControlField a_lq = constant_control(w.shape, w.grid, 0.5);
  TauRateReport lq = verify_tau_rate(example_lq_modified(), a_lq, w, opts);

  const bool ok = toy.entries.size() == 3 && lq.entries.size() == 3 &&
                  toy.fit.slope >= 0.9 && toy.fit.slope <= 1.1 &&
                  lq.fit.slope >= 0.7 && lq.fit.slope <= 1.3;
  d = fmt("first order in tau: toy slope=%.4f (window [0.9,1.1], r2=%.5f), "
          "convex slope=%.4f (window [0.7,1.3], r2=%.5f)",
          toy.fit.slope, toy.fit.r_squared, lq.fit.slope, lq.fit.r_squared);
  return ok;
}

// 5. Convex sublinear rate: J(a_S) - J* <= ||a_0 - a*||^2 / S within three
// standard errors of the paired estimator at S in {1, 2, 4, 8}. The
// reference a* and J* come from a long deterministic flow run (S = 20) under
// the same noise.
bool crit_sublinear(std::string& d) {
  ProblemSpec spec = example_lq_modified();
  BrownianEnsemble w = make_w(10000);
  ControlField a0 = constant_control(w.shape, w.grid, 0.5);
  FlowConfig oracle_cfg;
  oracle_cfg.S = 20.0;
  oracle_cfg.tau_flow = 0.01;
  oracle_cfg.store_stride = 2000;
  FlowTrajectory oracle = run_gradient_flow(spec, a0, w, oracle_cfg);
  ControlField a_star = oracle.controls.back();

  SublinearOptions opts;
  SublinearReport rep = verify_sublinear_rate(spec, a0, a_star, w, opts);
  d = fmt("sublinear envelope dist0^2/S with 3 SE slack: J*=%.6g "
          "dist0^2=%.4g;",
          rep.J_star, rep.dist0_sq);
  for (const auto& e : rep.entries)
    d += fmt(" S=%g gap=%.3e env=%.3e ok=%d;", e.S, e.gap, e.envelope,
             e.ok ? 1 : 0);
  return rep.all_ok && rep.entries.size() == 4;
}

// 6. Strongly convex rate: on the toy the fitted decay slope of the control
// gap must sit within 10% of the known rate -4; on the convex example both
// the cost gap and the control gap must decay log-linearly with negative
// slopes agreeing within 30%.
bool crit_exponential(std::string& d) {
  BrownianEnsemble w = make_w(10000);

  ProblemSpec toy = example_toy_quadratic();
  ControlField a0_toy = constant_control(w.shape, w.grid, 0.9);
  ControlField a_star_toy = constant_control(w.shape, w.grid, 0.0);
  ExponentialOptions topt;
  topt.eta = 2.0;
  ExponentialReport toy_rep =
      verify_exponential_rate(toy, a0_toy, a_star_toy, w, topt);
  const double toy_rel = std::abs(toy_rep.gap_fit.slope + 4.0) / 4.0;

  LqParams p;
  p.M = 1.0;
  ProblemSpec lq = example_lq_modified(p);
  ControlField a0 = constant_control(w.shape, w.grid, 0.5);
  FlowConfig oracle_cfg;
  oracle_cfg.S = 20.0;
  oracle_cfg.tau_flow = 0.01;
  oracle_cfg.store_stride = 2000;
  FlowTrajectory oracle = run_gradient_flow(lq, a0, w, oracle_cfg);
  ExponentialOptions lopt;
  lopt.eta = 1.0;
  ExponentialReport lq_rep =
      verify_exponential_rate(lq, a0, oracle.controls.back(), w, lopt);
  const double ratio_err =
      std::abs(lq_rep.j_fit.slope / lq_rep.gap_fit.slope - 1.0);

  const bool ok = toy_rep.gap_fit_valid && toy_rel <= 0.10 &&
                  lq_rep.j_fit_valid && lq_rep.gap_fit_valid &&
                  lq_rep.j_fit.slope < 0.0 && lq_rep.gap_fit.slope < 0.0 &&
                  lq_rep.j_fit.r_squared >= 0.9 &&
                  lq_rep.gap_fit.r_squared >= 0.9 && ratio_err <= 0.30;
  d = fmt("exponential decay: toy gap slope=%.4f vs -4 (rel=%.3f, tol 0.1); "
          "convex slopes j=%.3f gap=%.3f agree to %.3f (tol 0.3, r2 %.4f/%.4f)",
          toy_rep.gap_fit.slope, toy_rel, lq_rep.j_fit.slope,
          lq_rep.gap_fit.slope, ratio_err, lq_rep.j_fit.r_squared,
          lq_rep.gap_fit.r_squared);
  return ok;
}

// 7. On the nonconvex example the long flow drives the squared gradient norm
// to <= 1e-3 by S = 10.
bool crit_gradient_vanishing(std::string& d) {
  BrownianEnsemble w = make_w(10000);
  ControlField a0 = constant_control(w.shape, w.grid, 0.9);
  GradientVanishingOptions opts;
  GradientVanishingReport rep =
      verify_gradient_vanishing(example_quartic(), a0, w, opts);
  d = fmt("gradient vanishing on the nonconvex example: final |grad|^2=%.3e "
          "(tol 1e-3) at S=10, energy balance rel_err=%.3e",
          rep.final_grad_norm_sq, rep.rel_err);
  return rep.final_grad_norm_sq <= 1e-3;
}

// 8. The regression-based adjoint solver matches the closed-form linear
// adjoint to 2% (Y) and 5% (Z) relative RMS at 1e5 paths, and in the
// noise-free sub-case matches an independent backward ODE integration to
// 0.1% with Z identically zero.
bool crit_bsde(std::string& d) {
  ProblemSpec spec = example_lq_modified();
  LqParams p;
  TimeGrid grid = make_time_grid(1.0, 50);
  EnsembleShape shape;
  shape.n_paths = 100000;
  BrownianEnsemble w = sample_brownian(shape, grid, 42);
  auto [x, alpha] = simulate_forward_feedback(spec, w, -0.3, 0.0);
  LqFeedback fb;
  fb.F = -0.3;
  LqAnalyticSolution exact = solve_adjoint_lq_analytic(p, fb, x);
  RegressionBasis basis;
  basis.include_control = false;  // control is a function of the state here
  AdjointSolution sol = solve_adjoint_lsmc(spec, alpha, x, w, basis);
  double ey = 0.0, ny = 0.0, ez = 0.0, nz = 0.0;
  for (int i = 0; i < shape.n_paths; ++i) {
    for (int k = 0; k <= grid.n_steps; ++k) {
      const double dy = sol.y_at(i, k)[0] - exact.sol.y_at(i, k)[0];
      ey += dy * dy;
      ny += exact.sol.y_at(i, k)[0] * exact.sol.y_at(i, k)[0];
    }
    for (int k = 0; k < grid.n_steps; ++k) {
      const double dz = sol.z_at(i, k)[0] - exact.sol.z_at(i, k)[0];
      ez += dz * dz;
      nz += exact.sol.z_at(i, k)[0] * exact.sol.z_at(i, k)[0];
    }
  }
  const double rms_y = std::sqrt(ey / ny), rms_z = std::sqrt(ez / nz);

  // noise-free sub-case: every path collapses onto x(t) = x0 exp(A t) and Y
  // must follow the backward ODE y' = -(A y + L x(t))
  LqParams q;
  q.C = 0.0;
  q.D = 0.0;
  q.gamma = 0.0;
  ProblemSpec det_spec = example_lq_modified(q);
  const int n_steps = 2000;
  TimeGrid det_grid = make_time_grid(1.0, n_steps);
  EnsembleShape det_shape;
  det_shape.n_paths = 64;
  BrownianEnsemble det_w = sample_brownian(det_shape, det_grid, 7);
  ControlField det_a = constant_control(det_shape, det_grid, 0.0);
  StatePaths det_x = simulate_forward(det_spec, det_a, det_w);
  AdjointSolution det_sol = solve_adjoint_lsmc(det_spec, det_a, det_x, det_w);
  const double y_term = q.N * q.x0 * std::exp(q.A);
  std::vector<double> ode = oracle::rk4_scalar_trace(
      [&](double t, double y) {
        return -(q.A * y + q.L * q.x0 * std::exp(q.A * t));
      },
      y_term, 1.0, 0.0, n_steps);
  double worst_rel = 0.0;
  for (int k = 0; k <= n_steps; k += 500) {
    const double want = ode[n_steps - k];
    worst_rel = std::max(
        worst_rel, std::abs(det_sol.y_at(0, k)[0] - want) / std::abs(want));
  }
  double worst_z = 0.0;
  for (int k = 0; k < n_steps; ++k)
    worst_z = std::max(worst_z, std::abs(det_sol.z_at(0, k)[0]));

  const bool ok = rms_y <= 0.02 && rms_z <= 0.05 && worst_rel <= 1e-3 &&
                  worst_z <= 1e-6;
  d = fmt("adjoint solver: rms_y=%.4f (tol 0.02) rms_z=%.4f (tol 0.05) vs "
          "closed form at 1e5 paths; noise-free worst Y rel=%.2e (tol 1e-3), "
          "worst |Z|=%.1e (tol 1e-6) vs backward ODE",
          rms_y, rms_z, worst_rel, worst_z);
  return ok;
}

// 9. The reported gradient is the Gateaux derivative: central differences of
// J along 10 random directions agree with the inner product against the
// gradient field within max(1e-3, 3 SE), on all three dynamic examples.
bool crit_gateaux(std::string& d) {
  BrownianEnsemble w = make_w(10000);
  struct Item {
    const char* tag;
    ProblemSpec spec;
    double a0;
  };
  const Item items[] = {{"convex", example_lq_modified(), 0.3},
                        {"nonconvex", example_quartic(), 0.9},
                        {"saturating", example_logistic(), 0.3}};
  bool ok = true;
  d = "directional derivative vs gradient, 10 directions:";
  for (const Item& it : items) {
    ControlField alpha = constant_control(w.shape, w.grid, it.a0);
    GateauxReport rep = gateaux_check(it.spec, alpha, w);
    ok = ok && rep.ok && rep.directions.size() == 10;
    d += fmt(" %s ok=%d max|diff|=%.2e;", it.tag, rep.ok ? 1 : 0,
             rep.max_abs_diff);
  }
  return ok;
}

// 10. Cost-gap bound between two arbitrary controls holds with 3 SE slack on
// ten random pairs of Gaussian control fields.
bool crit_gap_bound(std::string& d) {
  ProblemSpec spec = example_lq_modified();
  BrownianEnsemble w = make_w(10000);
  RegressionBasis basis;
  LsmcFlags flags;
  int n_ok = 0;
  double worst = -1e300;
  for (int j = 0; j < 10; ++j) {
    ControlField beta = gaussian_control_field(w.shape, w.grid, 2042 + 2 * j, 0.5);
    ControlField theta =
        gaussian_control_field(w.shape, w.grid, 2043 + 2 * j, 0.5);
    GapBoundReport rep = gap_bound_check(spec, beta, theta, w, basis, flags);
    if (rep.satisfied) ++n_ok;
    const double margin = (rep.lhs - rep.rhs) / (rep.se > 0.0 ? rep.se : 1.0);
    worst = std::max(worst, margin);
  }
  d = fmt("cost-gap bound on 10 random control pairs: %d/10 satisfied, worst "
          "margin %.1f SE",
          n_ok, worst);
  return n_ok == 10;
}

// 11. Structural invariants: state paths are progressively measurable under
// a future-noise splice, the prox solve meets its first-order condition to
// 1e-10, the one-sided control monotonicity bound holds on 100 random draws
// per example, identical configs reproduce byte-identical artifacts, and
// hand-coded derivatives match finite differences to 1e-6.
bool crit_structural(std::string& d) {
  bool ok = true;
  d = "structural:";

  {  // future-noise splice leaves the past bitwise unchanged
    ProblemSpec spec = example_lq_modified();
    BrownianEnsemble w = make_w(500);
    ControlField alpha = gaussian_control_field(w.shape, w.grid, 5, 0.5);
    StatePaths x1 = simulate_forward(spec, alpha, w);
    BrownianEnsemble spliced = harness::splice_future(w, 25, 999);
    StatePaths x2 = simulate_forward(spec, alpha, spliced);
    bool same = true;
    for (int i = 0; i < w.shape.n_paths && same; ++i)
      for (int k = 0; k <= 25 && same; ++k)
        same = x1.at(i, k)[0] == x2.at(i, k)[0];
    ok = ok && same;
    d += fmt(" splice=%d;", same ? 1 : 0);
  }

  {  // prox first-order condition on random draws, tau below 1/lambda
    struct Case {
      ProblemSpec spec;
      double a_box;
    };
    std::vector<Case> cases;
    cases.push_back({example_lq_modified(), 2.0});
    cases.push_back({example_quartic(), 1.0});
    cases.push_back({example_logistic(), 3.0});
    cases.push_back({example_toy_quadratic(), 2.0});
    const double taus[] = {0.3, 0.1, 0.02};
    std::mt19937 rng(2024);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double worst = 0.0;
    for (const Case& c : cases) {
      CoeffBuffers buf;
      buf.resize(c.spec);
      for (int i = 0; i < 25; ++i) {
        const double t = 0.5 * (u(rng) + 1.0);
        const double x = 0.9 * u(rng), y = 2.0 * u(rng), z = 2.0 * u(rng);
        const double a_prev = c.a_box * u(rng);
        const double tau = taus[i % 3];
        double a_out = 0.0;
        prox_step_point(c.spec, t, &x, &y, &z, &a_prev, tau, &a_out, buf);
        HamiltonianEval h = hamiltonian(c.spec, t, &x, &y, &z, &a_out);
        const double res = std::abs(h.grad_a[0] + (a_out - a_prev) / tau);
        worst = std::max(worst, res);
      }
    }
    ok = ok && worst <= 1e-10;
    d += fmt(" prox_foc=%.1e;", worst);
  }

  {  // one-sided monotonicity of the control gradient, 100 draws per example
    struct Case {
      ProblemSpec spec;
      double a_box;
    };
    std::vector<Case> cases;
    cases.push_back({example_lq_modified(), 2.0});
    cases.push_back({example_quartic(), 1.0});
    cases.push_back({example_logistic(), 3.0});
    cases.push_back({example_toy_quadratic(), 2.0});
    std::mt19937 rng(2024);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    bool mono = true;
    for (const Case& c : cases) {
      for (int i = 0; i < 100; ++i) {
        const double t = 0.5 * (u(rng) + 1.0);
        const double x = 0.9 * u(rng), y = 2.0 * u(rng), z = 2.0 * u(rng);
        const double a = c.a_box * u(rng), ap = c.a_box * u(rng);
        HamiltonianEval ha = hamiltonian(c.spec, t, &x, &y, &z, &a);
        HamiltonianEval hb = hamiltonian(c.spec, t, &x, &y, &z, &ap);
        const double lhs = (a - ap) * (ha.grad_a[0] - hb.grad_a[0]);
        const double da2 = (a - ap) * (a - ap);
        if (lhs < -c.spec.lambda_hint * da2 - 1e-9) mono = false;
      }
    }
    ok = ok && mono;
    d += fmt(" monotonicity=%d;", mono ? 1 : 0);
  }

  {  // identical configs give byte-identical artifacts
    const fs::path dir = fs::temp_directory_path() / "msaflow_acceptance";
    fs::remove_all(dir);
    RunConfig cfg = default_config();
    cfg.ensemble.n_paths = 2000;
    cfg.solver.max_outer = 10;
    cfg.output.directory = dir.string();
    cmd_run_msa(cfg);
    const std::string trace1 = slurp(dir / "msa_trace.csv");
    const std::string report1 = slurp(dir / "msa_report.json");
    cmd_run_msa(cfg);
    const bool same = !trace1.empty() && trace1 == slurp(dir / "msa_trace.csv") &&
                      report1 == slurp(dir / "msa_report.json");
    ok = ok && same;
    d += fmt(" repro=%d;", same ? 1 : 0);
    fs::remove_all(dir);
  }

  {  // hand-coded derivatives vs central differences
    double worst = 0.0;
    bool bounds = true;
    for (const ProblemSpec& spec :
         {example_lq_modified(), example_quartic(), example_logistic(),
          example_toy_quadratic()}) {
      DerivativeReport rep = check_derivatives(spec, 200, 9);
      worst = std::max(worst, rep.worst());
      bounds = bounds && rep.f_lower_bound_ok;
    }
    ok = ok && worst <= 1e-6 && bounds;
    d += fmt(" derivatives=%.1e bounds=%d", worst, bounds ? 1 : 0);
  }

  return ok;
}

struct Criterion {
  int id;
  bool (*fn)(std::string&);
};

const Criterion kCriteria[] = {
    {1, crit_monotone_descent}, {2, crit_energy_identity},
    {3, crit_energy_integral},  {4, crit_tau_rate},
    {5, crit_sublinear},        {6, crit_exponential},
    {7, crit_gradient_vanishing}, {8, crit_bsde},
    {9, crit_gateaux},          {10, crit_gap_bound},
    {11, crit_structural},
};

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) {
      only = std::atoi(argv[++i]);
    } else {
      std::fprintf(stderr, "usage: %s [--criterion N]\n", argv[0]);
      return 2;
    }
  }
  if (only != 0 && (only < 1 || only > 11)) {
    std::fprintf(stderr, "no criterion %d (valid: 1..11)\n", only);
    return 2;
  }

  bool all_ok = true;
  for (const Criterion& c : kCriteria) {
    if (only != 0 && c.id != only) continue;
    std::string detail;
    bool ok = false;
    try {
      ok = c.fn(detail);
    } catch (const std::exception& e) {
      detail = fmt("unexpected exception: %s", e.what());
    }
    std::printf("criterion %d %s %s\n", c.id, ok ? "PASS" : "FAIL",
                detail.c_str());
    std::fflush(stdout);
    all_ok = all_ok && ok;
  }
  return all_ok ? 0 : 1;
}
