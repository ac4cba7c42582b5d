#include "msaflow/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "msaflow/msa.hpp"
#include "msaflow/sde.hpp"

namespace msaflow {

namespace {

RateFit least_squares(const std::vector<double>& xs,
                      const std::vector<double>& ys) {
  const int n = static_cast<int>(xs.size());
  double mx = 0.0, my = 0.0;
  for (int i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (int i = 0; i < n; ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx <= 0.0)
    throw std::invalid_argument("rate fit: abscissae must be distinct");
  RateFit fit;
  fit.n = n;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0.0;
  for (int i = 0; i < n; ++i) {
    const double r = ys[i] - (fit.intercept + fit.slope * xs[i]);
    ss_res += r * r;
  }
  fit.r_squared = syy > 1e-30 ? 1.0 - ss_res / syy : (ss_res < 1e-30 ? 1.0 : 0.0);
  return fit;
}

std::vector<double> log_all(const std::vector<double>& v, const char* what) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!(v[i] > 0.0))
      throw std::invalid_argument(std::string("rate fit: nonpositive ") + what);
    out[i] = std::log(v[i]);
  }
  return out;
}

double mean_of(const std::vector<double>& v) {
  return pairwise_sum(v) / static_cast<double>(v.size());
}

double se_of(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= static_cast<double>(v.size() - 1);
  return std::sqrt(var / static_cast<double>(v.size()));
}

long node_index_of(double S, double tau, const char* ctx) {
  const double r = S / tau;
  const long n = std::lround(r);
  if (n < 1 || std::abs(r - static_cast<double>(n)) > 1e-6 * std::max(1.0, r))
    throw std::invalid_argument(std::string(ctx) +
                                ": horizon is not a node of the flow grid");
  return n;
}

long gcd_of(long a, long b) {
  while (b != 0) {
    const long t = a % b;
    a = b;
    b = t;
  }
  return a;
}

}  // namespace

RateFit fit_rate(const std::vector<double>& h, const std::vector<double>& err) {
  if (h.size() != err.size())
    throw std::invalid_argument("fit_rate: size mismatch");
  if (h.size() < 3) throw std::invalid_argument("fit_rate: need >= 3 points");
  return least_squares(log_all(h, "h"), log_all(err, "err"));
}

RateFit fit_exponential(const std::vector<double>& x,
                        const std::vector<double>& err) {
  if (x.size() != err.size())
    throw std::invalid_argument("fit_exponential: size mismatch");
  if (x.size() < 3)
    throw std::invalid_argument("fit_exponential: need >= 3 points");
  return least_squares(x, log_all(err, "err"));
}

TauRateReport verify_tau_rate(const ProblemSpec& spec,
                              const ControlField& alpha0,
                              const BrownianEnsemble& w,
                              const TauRateOptions& opts) {
  if (opts.tau_list.empty())
    throw std::invalid_argument("verify_tau_rate: empty tau_list");
  if (opts.ref_divisor < 2.0)
    throw std::invalid_argument("verify_tau_rate: ref_divisor must be >= 2");
  double tau_min = opts.tau_list.front();
  for (double t : opts.tau_list) {
    if (t <= 0.0)
      throw std::invalid_argument("verify_tau_rate: tau must be positive");
    tau_min = std::min(tau_min, t);
  }
  const double tau_ref = tau_min / opts.ref_divisor;

  // Node alignment: every tau (and S) must sit on the reference grid.
  std::vector<long> stride_on_ref(opts.tau_list.size());
  for (std::size_t i = 0; i < opts.tau_list.size(); ++i) {
    stride_on_ref[i] =
        node_index_of(opts.tau_list[i], tau_ref, "verify_tau_rate");
    node_index_of(opts.S, opts.tau_list[i], "verify_tau_rate");
  }

  // Fine explicit reference, storing only nodes shared with the coarse runs.
  long keep = stride_on_ref[0];
  for (long sr : stride_on_ref) keep = gcd_of(keep, sr);
  FlowConfig ref_cfg = opts.base;
  ref_cfg.S = opts.S;
  ref_cfg.tau_flow = tau_ref;
  ref_cfg.scheme = FlowScheme::kExplicit;
  ref_cfg.backtrack = false;
  ref_cfg.store_stride = static_cast<int>(keep);
  FlowTrajectory ref = run_gradient_flow(spec, alpha0, w, ref_cfg);

  TauRateReport report;
  report.tau_ref = tau_ref;
  for (std::size_t i = 0; i < opts.tau_list.size(); ++i) {
    FlowConfig cfg = opts.base;
    cfg.S = opts.S;
    cfg.tau_flow = opts.tau_list[i];
    cfg.scheme = FlowScheme::kImplicit;
    cfg.store_stride = 1;
    FlowTrajectory run = run_gradient_flow(spec, alpha0, w, cfg);

    double worst = 0.0;
    for (std::size_t j = 0; j < run.stored_nodes.size(); ++j) {
      const long ref_node = run.stored_nodes[j] * stride_on_ref[i];
      const double d2 = control_dist_sq(
          run.controls[j], ref.control_at_node(static_cast<int>(ref_node)));
      worst = std::max(worst, std::sqrt(std::max(0.0, d2)));
    }
    report.entries.push_back({opts.tau_list[i], worst});
  }

  std::vector<double> hs, errs;
  for (const auto& e : report.entries) {
    hs.push_back(e.tau);
    errs.push_back(e.err);
  }
  report.fit = fit_rate(hs, errs);
  return report;
}

SublinearReport verify_sublinear_rate(const ProblemSpec& spec,
                                      const ControlField& alpha0,
                                      const ControlField& alpha_star,
                                      const BrownianEnsemble& w,
                                      const SublinearOptions& opts) {
  if (opts.S_list.empty())
    throw std::invalid_argument("verify_sublinear_rate: empty S_list");
  std::vector<long> nodes;
  for (double S : opts.S_list)
    nodes.push_back(
        node_index_of(S, opts.base.tau_flow, "verify_sublinear_rate"));
  long stride = nodes[0];
  for (long n : nodes) stride = gcd_of(stride, n);

  FlowConfig cfg = opts.base;
  cfg.S = *std::max_element(opts.S_list.begin(), opts.S_list.end());
  cfg.store_stride = static_cast<int>(stride);
  FlowTrajectory traj = run_gradient_flow(spec, alpha0, w, cfg);

  StatePaths x_star = simulate_forward(spec, alpha_star, w);
  std::vector<double> cost_star = estimate_cost_per_path(spec, alpha_star, x_star);
  std::vector<double> q = control_dist_sq_per_path(alpha0, alpha_star);

  SublinearReport report;
  report.J_star = mean_of(cost_star);
  report.dist0_sq = mean_of(q);

  const int n_paths = alpha0.shape.n_paths;
  for (std::size_t i = 0; i < opts.S_list.size(); ++i) {
    const double S = opts.S_list[i];
    const ControlField& a_S = traj.control_at_node(static_cast<int>(nodes[i]));
    StatePaths x_S = simulate_forward(spec, a_S, w);
    std::vector<double> cost_S = estimate_cost_per_path(spec, a_S, x_S);

    std::vector<double> gap_pp(n_paths), d(n_paths);
    for (int j = 0; j < n_paths; ++j) {
      gap_pp[j] = cost_S[j] - cost_star[j];
      d[j] = gap_pp[j] - q[j] / S;
    }
    SublinearEntry e;
    e.S = S;
    e.gap = mean_of(gap_pp);
    e.envelope = report.dist0_sq / S;
    const double mean_d = mean_of(d);
    e.slack_se = se_of(d, mean_d);
    e.ok = mean_d <= 3.0 * e.slack_se;
    report.entries.push_back(e);
  }

  report.all_ok =
      std::all_of(report.entries.begin(), report.entries.end(),
                  [](const SublinearEntry& e) { return e.ok; });
  std::vector<double> Ss, gaps;
  for (const auto& e : report.entries)
    if (e.gap > 0.0) {
      Ss.push_back(e.S);
      gaps.push_back(e.gap);
    }
  if (Ss.size() >= 3) {
    report.fit = fit_rate(Ss, gaps);
    report.fit_valid = true;
  }
  return report;
}

ExponentialReport verify_exponential_rate(const ProblemSpec& spec,
                                          const ControlField& alpha0,
                                          const ControlField& alpha_star,
                                          const BrownianEnsemble& w,
                                          const ExponentialOptions& opts) {
  if (!(opts.eta > 0.0))
    throw std::invalid_argument("verify_exponential_rate: eta must be positive");
  if (opts.S_list.empty())
    throw std::invalid_argument("verify_exponential_rate: empty S_list");
  std::vector<long> nodes;
  for (double S : opts.S_list)
    nodes.push_back(
        node_index_of(S, opts.base.tau_flow, "verify_exponential_rate"));
  long stride = nodes[0];
  for (long n : nodes) stride = gcd_of(stride, n);

  FlowConfig cfg = opts.base;
  cfg.S = *std::max_element(opts.S_list.begin(), opts.S_list.end());
  cfg.store_stride = static_cast<int>(stride);
  FlowTrajectory traj = run_gradient_flow(spec, alpha0, w, cfg);

  StatePaths x_star = simulate_forward(spec, alpha_star, w);
  std::vector<double> cost_star = estimate_cost_per_path(spec, alpha_star, x_star);

  ExponentialReport report;
  report.eta = opts.eta;
  const int n_paths = alpha0.shape.n_paths;
  for (std::size_t i = 0; i < opts.S_list.size(); ++i) {
    const ControlField& a_S = traj.control_at_node(static_cast<int>(nodes[i]));
    StatePaths x_S = simulate_forward(spec, a_S, w);
    std::vector<double> cost_S = estimate_cost_per_path(spec, a_S, x_S);
    std::vector<double> gap_pp(n_paths);
    for (int j = 0; j < n_paths; ++j) gap_pp[j] = cost_S[j] - cost_star[j];

    ExponentialEntry e;
    e.S = opts.S_list[i];
    e.j_gap = mean_of(gap_pp);
    e.control_gap_sq = control_dist_sq(a_S, alpha_star);
    report.entries.push_back(e);
  }

  std::vector<double> Ss_j, gj, Ss_c, gc;
  for (const auto& e : report.entries) {
    if (e.j_gap > 0.0) {
      Ss_j.push_back(e.S);
      gj.push_back(e.j_gap);
    }
    if (e.control_gap_sq > 0.0) {
      Ss_c.push_back(e.S);
      gc.push_back(e.control_gap_sq);
    }
  }
  if (Ss_j.size() >= 3) {
    report.j_fit = fit_exponential(Ss_j, gj);
    report.j_fit_valid = true;
  }
  if (Ss_c.size() >= 3) {
    report.gap_fit = fit_exponential(Ss_c, gc);
    report.gap_fit_valid = true;
  }
  return report;
}

GradientVanishingReport verify_gradient_vanishing(
    const ProblemSpec& spec, const ControlField& alpha0,
    const BrownianEnsemble& w, const GradientVanishingOptions& opts) {
  FlowConfig cfg = opts.base;
  cfg.S = opts.S;
  FlowTrajectory traj = run_gradient_flow(spec, alpha0, w, cfg);

  GradientVanishingReport rep;
  rep.final_grad_norm_sq = traj.grad_norm_sq_trace.back();
  rep.J0 = traj.J_trace.front();
  rep.min_J = *std::min_element(traj.J_trace.begin(), traj.J_trace.end());
  for (std::size_t i = 0; i + 1 < traj.s_nodes.size(); ++i)
    rep.integral +=
        traj.grad_norm_sq_trace[i] * (traj.s_nodes[i + 1] - traj.s_nodes[i]);
  rep.decrement = rep.J0 - rep.min_J;
  rep.rel_err = std::abs(rep.integral - rep.decrement) /
                std::max(std::abs(rep.decrement), 1e-12);
  return rep;
}

GateauxReport gateaux_check(const ProblemSpec& spec, const ControlField& alpha,
                            const BrownianEnsemble& w,
                            const GateauxOptions& opts) {
  if (opts.eps <= 0.0)
    throw std::invalid_argument("gateaux_check: eps must be positive");
  if (opts.n_directions < 1)
    throw std::invalid_argument("gateaux_check: need >= 1 direction");

  StatePaths x = simulate_forward(spec, alpha, w);
  AdjointSolution sol = solve_adjoint_lsmc(spec, alpha, x, w, opts.basis, opts.lsmc);
  ControlField grad = gradient_field(spec, alpha, x, sol);

  const int n_paths = alpha.shape.n_paths;
  const int n_steps = alpha.grid.n_steps;
  const int p = alpha.shape.p;
  const double dt = alpha.grid.dt;

  GateauxReport report;
  report.ok = true;
  for (int dir = 0; dir < opts.n_directions; ++dir) {
    ControlField v = gaussian_control_field(
        alpha.shape, alpha.grid, opts.seed + static_cast<std::uint64_t>(dir),
        opts.direction_scale);

    ControlField a_plus = control_axpy(alpha, opts.eps, v);
    ControlField a_minus = control_axpy(alpha, -opts.eps, v);
    StatePaths x_plus = simulate_forward(spec, a_plus, w);
    StatePaths x_minus = simulate_forward(spec, a_minus, w);
    std::vector<double> c_plus = estimate_cost_per_path(spec, a_plus, x_plus);
    std::vector<double> c_minus = estimate_cost_per_path(spec, a_minus, x_minus);

    std::vector<double> fd(n_paths), inner(n_paths), d(n_paths);
    for (int i = 0; i < n_paths; ++i) {
      fd[i] = (c_plus[i] - c_minus[i]) / (2.0 * opts.eps);
      double acc = 0.0;
      for (int k = 0; k < n_steps; ++k) {
        const double* gik = grad.at(i, k);
        const double* vik = v.at(i, k);
        for (int l = 0; l < p; ++l) acc += gik[l] * vik[l];
      }
      inner[i] = acc * dt;
      d[i] = fd[i] - inner[i];
    }

    GateauxDirection rec;
    rec.fd = mean_of(fd);
    rec.inner = mean_of(inner);
    rec.diff = mean_of(d);
    rec.se = se_of(d, rec.diff);
    rec.ok = std::abs(rec.diff) <= std::max(opts.tol_abs, 3.0 * rec.se);
    report.max_abs_diff = std::max(report.max_abs_diff, std::abs(rec.diff));
    report.ok = report.ok && rec.ok;
    report.directions.push_back(rec);
  }
  return report;
}

}  // namespace msaflow
