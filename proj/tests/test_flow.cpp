#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "msaflow/errors.hpp"
#include "msaflow/examples.hpp"
#include "msaflow/flow.hpp"
#include "msaflow/sde.hpp"

using namespace msaflow;

namespace {

BrownianEnsemble make_w(int n_paths, std::uint64_t seed) {
  TimeGrid grid = make_time_grid(1.0, 50);
  EnsembleShape shape;
  shape.n_paths = n_paths;
  shape.d = 1;
  shape.d_w = 1;
  shape.p = 1;
  return sample_brownian(shape, grid, seed);
}

// Toy with the sign of the running cost flipped: f = -|a|^2 is concave in a,
// so the first-order cost gap bound genuinely fails between 0 and 1.
ProblemSpec concave_toy() {
  ProblemSpec s = example_toy_quadratic();
  s.f = [](double, const double*, const double* a) { return -a[0] * a[0]; };
  s.f_a = [](double, const double*, const double* a, double* out) {
    out[0] = -2.0 * a[0];
  };
  s.f_aa = [](double, const double*, const double*, double* out) {
    out[0] = -2.0;
  };
  return s;
}

}  // namespace

TEST_CASE("explicit flow follows the exact exponential decay") {
  // da/ds = -2a, so the explicit scheme multiplies by (1 - 2 tau) each step
  // and the continuous flow is alpha_0 e^{-2s}.
  BrownianEnsemble w = make_w(200, 42);
  ControlField a0 = constant_control(w.shape, w.grid, 0.9);
  FlowConfig cfg;
  cfg.S = 0.5;
  cfg.tau_flow = 1e-3;
  cfg.scheme = FlowScheme::kExplicit;
  FlowTrajectory t = run_gradient_flow(example_toy_quadratic(), a0, w, cfg);

  CHECK(t.scheme == FlowScheme::kExplicit);
  CHECK(t.tau_flow == 1e-3);
  CHECK(t.s_nodes.size() == 501);
  CHECK(t.J_trace.size() == 501);
  CHECK(t.grad_norm_sq_trace.size() == 501);
  // auto stride keeps about a hundred fields plus the endpoints
  CHECK(t.controls.size() == 101);
  CHECK(t.stored_nodes.front() == 0);
  CHECK(t.stored_nodes.back() == 500);

  const double discrete = 0.9 * std::pow(1.0 - 2e-3, 500);
  const double continuous = 0.9 * std::exp(-1.0);
  const double got = t.controls.back().values.front();
  for (double v : t.controls.back().values) CHECK(v == got);
  CHECK(got == doctest::Approx(discrete).epsilon(1e-10));
  CHECK(got == doctest::Approx(continuous).epsilon(3e-3));

  for (std::size_t k = 0; k < t.J_trace.size(); ++k) {
    CHECK(t.grad_norm_sq_trace[k] ==
          doctest::Approx(4.0 * t.J_trace[k]).epsilon(1e-12));
    if (k > 0) CHECK(t.J_trace[k] < t.J_trace[k - 1]);
  }
  CHECK(t.J_trace.back() ==
        doctest::Approx(control_norm_sq(t.controls.back())).epsilon(1e-12));
}

TEST_CASE("implicit and explicit schemes agree to first order") {
  BrownianEnsemble w = make_w(200, 42);
  ControlField a0 = constant_control(w.shape, w.grid, 0.5);
  FlowConfig ce;
  ce.S = 1.0;
  ce.tau_flow = 0.01;
  ce.scheme = FlowScheme::kExplicit;
  FlowConfig ci = ce;
  ci.scheme = FlowScheme::kImplicit;
  ProblemSpec lq = example_lq_modified();
  FlowTrajectory te = run_gradient_flow(lq, a0, w, ce);
  FlowTrajectory ti = run_gradient_flow(lq, a0, w, ci);

  const double d =
      std::sqrt(control_dist_sq(te.controls.back(), ti.controls.back()));
  CHECK(d <= 5e-3);
  CHECK(std::abs(te.J_trace.back() - ti.J_trace.back()) <= 2e-3);

  // On the toy the two schemes bracket the continuous flow: the explicit
  // factor (1-2 tau)^n undershoots e^{-2S} and the implicit (1+2 tau)^{-n}
  // overshoots it.
  ControlField b0 = constant_control(w.shape, w.grid, 0.9);
  ProblemSpec toy = example_toy_quadratic();
  FlowTrajectory ue = run_gradient_flow(toy, b0, w, ce);
  FlowTrajectory ui = run_gradient_flow(toy, b0, w, ci);
  const double limit = 0.9 * std::exp(-2.0);
  CHECK(ue.controls.back().values.front() < limit);
  CHECK(ui.controls.back().values.front() > limit);
  CHECK(std::abs(ui.controls.back().values.front() -
                 ue.controls.back().values.front()) <= 6e-3);
}

TEST_CASE("interpolation reconstructs and brackets stored iterates") {
  BrownianEnsemble w = make_w(100, 42);
  ControlField a0 = constant_control(w.shape, w.grid, 0.9);
  FlowConfig cfg;
  cfg.S = 0.2;
  cfg.tau_flow = 0.05;
  cfg.store_stride = 1;
  FlowTrajectory t = run_gradient_flow(example_toy_quadratic(), a0, w, cfg);

  REQUIRE(t.stored_nodes == std::vector<int>{0, 1, 2, 3, 4});
  for (int k = 0; k <= 4; ++k)
    CHECK(t.s_nodes[static_cast<std::size_t>(k)] == k * 0.05);

  // At a stored node every mode returns that iterate.
  const double s2 = t.s_nodes[2];
  for (InterpMode m : {InterpMode::kPiecewiseLinear, InterpMode::kConstRight,
                       InterpMode::kConstLeft}) {
    ControlField c = interpolate_controls(t, s2, m);
    CHECK(c.values == t.controls[2].values);
  }

  // Halfway between nodes 1 and 2.
  const double mid = 0.075;
  ControlField left = interpolate_controls(t, mid, InterpMode::kConstLeft);
  ControlField right = interpolate_controls(t, mid, InterpMode::kConstRight);
  ControlField lin = interpolate_controls(t, mid, InterpMode::kPiecewiseLinear);
  CHECK(left.values == t.controls[1].values);
  CHECK(right.values == t.controls[2].values);
  for (std::size_t i = 0; i < lin.values.size(); ++i)
    CHECK(lin.values[i] ==
          doctest::Approx(0.5 * (left.values[i] + right.values[i]))
              .epsilon(1e-12));

  // The linear interpolant never leaves the bracket set by the step modes.
  CHECK(std::sqrt(control_dist_sq(lin, left)) <=
        std::sqrt(control_dist_sq(right, left)) + 1e-15);

  CHECK_THROWS_AS(interpolate_controls(t, -1e-9, InterpMode::kConstLeft),
                  std::invalid_argument);
  CHECK_THROWS_AS(interpolate_controls(t, 0.2 + 1e-9, InterpMode::kConstLeft),
                  std::invalid_argument);
  FlowTrajectory empty;
  CHECK_THROWS_AS(interpolate_controls(empty, 0.0, InterpMode::kConstLeft),
                  std::invalid_argument);
}

TEST_CASE("trajectory stores controls at the requested stride") {
  BrownianEnsemble w = make_w(100, 42);
  ControlField a0 = constant_control(w.shape, w.grid, 0.9);
  FlowConfig cfg;
  cfg.S = 0.5;
  cfg.tau_flow = 0.05;
  cfg.store_stride = 3;
  FlowTrajectory t = run_gradient_flow(example_toy_quadratic(), a0, w, cfg);

  CHECK(t.stored_nodes == std::vector<int>{0, 3, 6, 9, 10});
  CHECK(t.controls.size() == 5);
  CHECK(t.has_control(3));
  CHECK(!t.has_control(1));
  CHECK_THROWS_AS(t.control_at_node(1), std::invalid_argument);
  CHECK_NOTHROW(t.control_at_node(10));
}

TEST_CASE("energy identity holds along the toy flow") {
  BrownianEnsemble w = make_w(500, 42);
  ControlField a0 = constant_control(w.shape, w.grid, 0.9);
  FlowConfig cfg;
  cfg.S = 0.5;
  cfg.tau_flow = 1e-3;
  cfg.scheme = FlowScheme::kExplicit;
  FlowTrajectory t = run_gradient_flow(example_toy_quadratic(), a0, w, cfg);
  EnergyIdentityReport rep = energy_identity_check(t);

  CHECK(!rep.no_eligible_nodes);
  CHECK(rep.eligible_nodes == 499);  // every interior node is above the floor
  CHECK(rep.nodes.size() == rep.rel_err.size());
  CHECK(rep.dJ_ds.size() == rep.rel_err.size());
  CHECK(rep.max_rel_err <= 2e-3);
  for (double d : rep.dJ_ds) CHECK(d < 0.0);  // cost decreases along the flow
}

TEST_CASE("energy identity holds along the strongly convex flow") {
  BrownianEnsemble w = make_w(500, 42);
  ControlField a0 = constant_control(w.shape, w.grid, 0.5);
  FlowConfig cfg;
  cfg.S = 0.5;
  cfg.tau_flow = 2e-3;
  cfg.scheme = FlowScheme::kImplicit;
  FlowTrajectory t = run_gradient_flow(example_lq_modified(), a0, w, cfg);
  EnergyIdentityReport rep = energy_identity_check(t);

  CHECK(!rep.no_eligible_nodes);
  CHECK(rep.eligible_nodes == 249);
  CHECK(rep.max_rel_err <= 2e-2);
}

TEST_CASE("a stationary start has no eligible nodes") {
  BrownianEnsemble w = make_w(100, 42);
  ControlField a0 = constant_control(w.shape, w.grid, 0.0);
  FlowConfig cfg;
  cfg.S = 0.05;
  cfg.tau_flow = 0.01;
  FlowTrajectory t = run_gradient_flow(example_toy_quadratic(), a0, w, cfg);
  for (double g : t.grad_norm_sq_trace) CHECK(g == 0.0);

  EnergyIdentityReport rep = energy_identity_check(t);
  CHECK(rep.no_eligible_nodes);
  CHECK(rep.eligible_nodes == 0);
  CHECK(rep.max_rel_err == 0.0);
}

TEST_CASE("gradient integral matches the cost decrement") {
  BrownianEnsemble w = make_w(300, 42);
  ControlField a0 = constant_control(w.shape, w.grid, 0.9);
  FlowConfig cfg;
  cfg.S = 1.0;
  cfg.tau_flow = 0.01;
  cfg.scheme = FlowScheme::kImplicit;
  FlowTrajectory t = run_gradient_flow(example_toy_quadratic(), a0, w, cfg);
  EnergyIntegralReport rep = energy_integral_check(t);

  CHECK(rep.integral > 0.0);
  CHECK(rep.decrement > 0.0);
  CHECK(rep.rel_err <= 5e-2);

  FlowTrajectory stub;
  stub.s_nodes = {0.0};
  stub.J_trace = {1.0};
  stub.grad_norm_sq_trace = {1.0};
  CHECK_THROWS_AS(energy_integral_check(stub), std::invalid_argument);
}

TEST_CASE("implicit backtracking keeps the cost non-increasing") {
  BrownianEnsemble w = make_w(300, 42);
  ControlField a0 = constant_control(w.shape, w.grid, 0.9);
  FlowConfig cfg;
  cfg.S = 2.0;
  cfg.tau_flow = 0.1;
  cfg.scheme = FlowScheme::kImplicit;
  cfg.backtrack = true;
  FlowTrajectory t = run_gradient_flow(example_quartic(), a0, w, cfg);

  for (std::size_t i = 1; i < t.J_trace.size(); ++i) {
    CHECK(t.J_trace[i] <= t.J_trace[i - 1]);
    CHECK(t.s_nodes[i] > t.s_nodes[i - 1]);
  }
  CHECK(t.s_nodes.back() <= 2.0 + 1e-12);
}

TEST_CASE("halving the flow step halves the endpoint gap") {
  BrownianEnsemble w = make_w(100, 42);
  ControlField a0 = constant_control(w.shape, w.grid, 0.9);
  const double taus[4] = {0.1, 0.05, 0.025, 0.0125};
  ControlField finals[4];
  for (int i = 0; i < 4; ++i) {
    FlowConfig cfg;
    cfg.S = 0.4;
    cfg.tau_flow = taus[i];
    cfg.scheme = FlowScheme::kImplicit;
    finals[i] =
        run_gradient_flow(example_toy_quadratic(), a0, w, cfg).controls.back();
  }
  double dist[3];
  for (int i = 0; i < 3; ++i)
    dist[i] = std::sqrt(control_dist_sq(finals[i], finals[i + 1]));
  CHECK(dist[1] / dist[0] >= 0.4);
  CHECK(dist[1] / dist[0] <= 0.65);
  CHECK(dist[2] / dist[1] >= 0.4);
  CHECK(dist[2] / dist[1] <= 0.65);
}

TEST_CASE("cost gap bound is exact on the quadratic toy") {
  BrownianEnsemble w = make_w(100, 42);
  ControlField beta = constant_control(w.shape, w.grid, 0.5);
  ControlField theta = constant_control(w.shape, w.grid, 0.2);
  GapBoundReport rep =
      gap_bound_check(example_toy_quadratic(), beta, theta, w);

  // J(beta) - J(theta) = (0.25 - 0.04) T and <2 beta, beta - theta> = 0.3 T;
  // every path contributes the same number, so the standard error vanishes.
  CHECK(rep.lhs == doctest::Approx(0.21).epsilon(1e-12));
  CHECK(rep.rhs == doctest::Approx(0.30).epsilon(1e-12));
  CHECK(rep.se == 0.0);
  CHECK(rep.satisfied);

  // beta == theta degenerates to 0 <= 0.
  GapBoundReport same = gap_bound_check(example_toy_quadratic(), beta, beta, w);
  CHECK(same.lhs == 0.0);
  CHECK(same.rhs == 0.0);
  CHECK(same.satisfied);
}

TEST_CASE("cost gap bound fails on a concave running cost") {
  BrownianEnsemble w = make_w(100, 42);
  ControlField beta = constant_control(w.shape, w.grid, 1.0);
  ControlField theta = constant_control(w.shape, w.grid, 0.0);
  GapBoundReport rep = gap_bound_check(concave_toy(), beta, theta, w);

  // J(beta) - J(theta) = -1 but the linearization predicts -2.
  CHECK(rep.lhs == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(rep.rhs == doctest::Approx(-2.0).epsilon(1e-12));
  CHECK(!rep.satisfied);
}

TEST_CASE("cost gap bound holds for random pairs on the convex example") {
  BrownianEnsemble w = make_w(2000, 42);
  ProblemSpec lq = example_lq_modified();
  for (int i = 0; i < 10; ++i) {
    ControlField beta = gaussian_control_field(w.shape, w.grid, 100 + i, 0.5);
    ControlField theta = gaussian_control_field(w.shape, w.grid, 200 + i, 0.5);
    GapBoundReport rep = gap_bound_check(lq, beta, theta, w);
    CHECK(rep.satisfied);
    CHECK(rep.se > 0.0);
  }
}

TEST_CASE("flow configuration is validated") {
  BrownianEnsemble w = make_w(100, 42);
  ControlField a0 = constant_control(w.shape, w.grid, 0.5);
  ProblemSpec toy = example_toy_quadratic();
  ProblemSpec quart = example_quartic();

  FlowConfig bad;
  bad.tau_flow = 0.0;
  CHECK_THROWS_AS(run_gradient_flow(toy, a0, w, bad), std::invalid_argument);
  bad = {};
  bad.S = 0.0;
  CHECK_THROWS_AS(run_gradient_flow(toy, a0, w, bad), std::invalid_argument);
  bad = {};
  bad.S = 1.0;
  bad.tau_flow = 0.3;  // 1/0.3 is not an integer
  CHECK_THROWS_AS(run_gradient_flow(toy, a0, w, bad), std::invalid_argument);
  bad = {};
  bad.store_stride = -1;
  bad.S = 0.05;
  bad.tau_flow = 0.05;
  CHECK_THROWS_AS(run_gradient_flow(toy, a0, w, bad), std::invalid_argument);
  bad = {};
  bad.backtrack = true;
  bad.scheme = FlowScheme::kExplicit;
  bad.S = 0.05;
  bad.tau_flow = 0.05;
  CHECK_THROWS_AS(run_gradient_flow(toy, a0, w, bad), std::invalid_argument);

  // The implicit step bound only applies when lambda_hint is positive.
  ControlField a9 = constant_control(w.shape, w.grid, 0.9);
  FlowConfig big;
  big.S = 1.2;
  big.tau_flow = 0.6;
  big.scheme = FlowScheme::kImplicit;
  CHECK_THROWS_AS(run_gradient_flow(quart, a9, w, big), std::invalid_argument);
  big.scheme = FlowScheme::kExplicit;
  CHECK_NOTHROW(run_gradient_flow(quart, a9, w, big));
  big.scheme = FlowScheme::kImplicit;
  big.S = 5.0;
  big.tau_flow = 5.0;
  CHECK_NOTHROW(run_gradient_flow(example_lq_modified(), a0, w, big));

  ControlField mismatched = constant_control(w.shape, w.grid, 0.0);
  ControlField smaller;
  CHECK_THROWS_AS(
      gap_bound_check(toy, a0,
                      constant_control(EnsembleShape{25, 1, 1, 1}, w.grid, 0.0),
                      w),
      std::invalid_argument);
}
