#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "msaflow/analysis.hpp"
#include "msaflow/cli.hpp"
#include "msaflow/errors.hpp"
#include "msaflow/examples.hpp"
#include "msaflow/flow.hpp"
#include "msaflow/msa.hpp"
#include "msaflow/sde.hpp"

namespace py = pybind11;
using namespace msaflow;

namespace {

// Problem construction goes through the same validated path as the CLI so
// python callers get the identical parameter handling and error messages.
ProblemSpec make_problem(const std::string& kind,
                         const std::map<std::string, double>& params) {
  RunConfig cfg = default_config();
  cfg.problem.kind = kind;
  cfg.problem.params = params;
  // re-validate kind and parameter names
  RunConfig checked = parse_config(serialize_config(cfg));
  return build_problem(checked);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() =
      "Finite-horizon stochastic optimal control: proximal successive "
      "approximation, control-space gradient flow, and convergence "
      "diagnostics";

  py::register_exception<NumericalBlowup>(m, "NumericalBlowup",
                                          PyExc_RuntimeError);
  py::register_exception<ConvergenceFailure>(m, "ConvergenceFailure",
                                             PyExc_RuntimeError);
  py::register_exception<StalledIteration>(m, "StalledIteration",
                                           PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  py::class_<TimeGrid>(m, "TimeGrid")
      .def_readonly("horizon", &TimeGrid::horizon)
      .def_readonly("n_steps", &TimeGrid::n_steps)
      .def_readonly("dt", &TimeGrid::dt)
      .def_readonly("nodes", &TimeGrid::nodes);
  m.def("make_time_grid", &make_time_grid, py::arg("horizon"),
        py::arg("n_steps"));

  py::class_<EnsembleShape>(m, "EnsembleShape")
      .def(py::init([](int n_paths, int d, int d_w, int p) {
             EnsembleShape s;
             s.n_paths = n_paths;
             s.d = d;
             s.d_w = d_w;
             s.p = p;
             validate_shape(s);
             return s;
           }),
           py::arg("n_paths"), py::arg("d") = 1, py::arg("d_w") = 1,
           py::arg("p") = 1)
      .def_readonly("n_paths", &EnsembleShape::n_paths)
      .def_readonly("d", &EnsembleShape::d)
      .def_readonly("d_w", &EnsembleShape::d_w)
      .def_readonly("p", &EnsembleShape::p);

  py::class_<BrownianEnsemble>(m, "BrownianEnsemble")
      .def_readonly("shape", &BrownianEnsemble::shape)
      .def_readonly("grid", &BrownianEnsemble::grid)
      .def_readonly("seed", &BrownianEnsemble::seed)
      .def("dw", &BrownianEnsemble::dw, py::arg("path"), py::arg("step"),
           py::arg("component") = 0);
  m.def("sample_brownian", &sample_brownian, py::arg("shape"), py::arg("grid"),
        py::arg("seed"));

  py::class_<ControlField>(m, "ControlField")
      .def_readonly("shape", &ControlField::shape)
      .def_readonly("grid", &ControlField::grid)
      .def_readonly("values", &ControlField::values)
      .def("value",
           [](const ControlField& a, int path, int step, int component) {
             return a.at(path, step)[component];
           },
           py::arg("path"), py::arg("step"), py::arg("component") = 0);
  m.def("constant_control", &constant_control, py::arg("shape"),
        py::arg("grid"), py::arg("value"));
  m.def("gaussian_control_field", &gaussian_control_field, py::arg("shape"),
        py::arg("grid"), py::arg("seed"), py::arg("scale"));
  m.def("control_norm_sq", &control_norm_sq, py::arg("a"));
  m.def("control_inner", &control_inner, py::arg("a"), py::arg("b"));
  m.def("control_dist_sq", &control_dist_sq, py::arg("a"), py::arg("b"));
  m.def("control_axpy", &control_axpy, py::arg("a"), py::arg("scale"),
        py::arg("v"));

  py::class_<StatePaths>(m, "StatePaths")
      .def_readonly("shape", &StatePaths::shape)
      .def_readonly("grid", &StatePaths::grid)
      .def_readonly("values", &StatePaths::values)
      .def("value",
           [](const StatePaths& x, int path, int node, int component) {
             return x.at(path, node)[component];
           },
           py::arg("path"), py::arg("node"), py::arg("component") = 0);

  py::class_<AdjointSolution>(m, "AdjointSolution")
      .def_readonly("rank_warning", &AdjointSolution::rank_warning)
      .def("y_value",
           [](const AdjointSolution& s, int path, int node, int component) {
             return s.y_at(path, node)[component];
           },
           py::arg("path"), py::arg("node"), py::arg("component") = 0)
      .def("z_value",
           [](const AdjointSolution& s, int path, int step, int component) {
             return s.z_at(path, step)[component];
           },
           py::arg("path"), py::arg("step"), py::arg("component") = 0);

  py::class_<ProblemSpec>(m, "ProblemSpec")
      .def_readonly("name", &ProblemSpec::name)
      .def_readonly("d", &ProblemSpec::d)
      .def_readonly("d_w", &ProblemSpec::d_w)
      .def_readonly("p", &ProblemSpec::p)
      .def_readonly("lambda_hint", &ProblemSpec::lambda_hint);
  m.def("make_problem", &make_problem, py::arg("kind"),
        py::arg("params") = std::map<std::string, double>{},
        "Built-in problem by kind: lq_modified, quartic, logistic, or "
        "toy_quadratic; params override that problem's defaults.");

  m.def("simulate_forward", &simulate_forward, py::arg("spec"),
        py::arg("alpha"), py::arg("w"));
  m.def("estimate_cost", &estimate_cost, py::arg("spec"), py::arg("alpha"),
        py::arg("x"));
  m.def("estimate_cost_per_path", &estimate_cost_per_path, py::arg("spec"),
        py::arg("alpha"), py::arg("x"));

  py::class_<RegressionBasis>(m, "RegressionBasis")
      .def(py::init<>())
      .def_readwrite("degree", &RegressionBasis::degree)
      .def_readwrite("include_control", &RegressionBasis::include_control);
  py::class_<LsmcFlags>(m, "LsmcFlags")
      .def(py::init<>())
      .def_readwrite("center_z", &LsmcFlags::center_z)
      .def_readwrite("extra_picard_sweep", &LsmcFlags::extra_picard_sweep);
  m.def("solve_adjoint_lsmc", &solve_adjoint_lsmc, py::arg("spec"),
        py::arg("alpha"), py::arg("x"), py::arg("w"),
        py::arg("basis") = RegressionBasis{}, py::arg("flags") = LsmcFlags{});
  m.def("gradient_field", &gradient_field, py::arg("spec"), py::arg("alpha"),
        py::arg("x"), py::arg("sol"));
  m.def("grad_norm_estimator", &grad_norm_estimator, py::arg("spec"),
        py::arg("alpha"), py::arg("x"), py::arg("sol"));

  py::class_<ProxOptions>(m, "ProxOptions")
      .def(py::init<>())
      .def_readwrite("tol", &ProxOptions::tol)
      .def_readwrite("max_iter", &ProxOptions::max_iter)
      .def_readwrite("max_backtracks", &ProxOptions::max_backtracks);

  py::enum_<UpdateMode>(m, "UpdateMode")
      .value("PROX", UpdateMode::kProx)
      .value("EXPLICIT", UpdateMode::kExplicit);
  py::enum_<MsaTermination>(m, "MsaTermination")
      .value("CONVERGED", MsaTermination::kConverged)
      .value("MAX_OUTER", MsaTermination::kMaxOuter);

  py::class_<MsaConfig>(m, "MsaConfig")
      .def(py::init<>())
      .def_readwrite("tau0", &MsaConfig::tau0)
      .def_readwrite("max_outer", &MsaConfig::max_outer)
      .def_readwrite("stop_dJ", &MsaConfig::stop_dJ)
      .def_readwrite("backtrack", &MsaConfig::backtrack)
      .def_readwrite("tau_min", &MsaConfig::tau_min)
      .def_readwrite("mode", &MsaConfig::mode)
      .def_readwrite("basis", &MsaConfig::basis)
      .def_readwrite("lsmc", &MsaConfig::lsmc)
      .def_readwrite("prox", &MsaConfig::prox);

  py::class_<MsaIterationRecord>(m, "MsaIterationRecord")
      .def_readonly("iter", &MsaIterationRecord::iter)
      .def_readonly("J", &MsaIterationRecord::J)
      .def_readonly("grad_norm_sq", &MsaIterationRecord::grad_norm_sq)
      .def_readonly("step_norm_sq", &MsaIterationRecord::step_norm_sq)
      .def_readonly("tau_used", &MsaIterationRecord::tau_used);

  py::class_<RunReport>(m, "RunReport")
      .def_readonly("iterations", &RunReport::iterations)
      .def_readonly("final_control", &RunReport::final_control)
      .def_readonly("final_J", &RunReport::final_J)
      .def_readonly("termination", &RunReport::termination)
      .def_readonly("rank_warning", &RunReport::rank_warning);
  m.def("run_msa", &run_msa, py::arg("spec"), py::arg("alpha0"), py::arg("w"),
        py::arg("config") = MsaConfig{},
        py::call_guard<py::gil_scoped_release>());

  py::enum_<FlowScheme>(m, "FlowScheme")
      .value("EXPLICIT", FlowScheme::kExplicit)
      .value("IMPLICIT", FlowScheme::kImplicit);

  py::class_<FlowConfig>(m, "FlowConfig")
      .def(py::init<>())
      .def_readwrite("S", &FlowConfig::S)
      .def_readwrite("tau_flow", &FlowConfig::tau_flow)
      .def_readwrite("scheme", &FlowConfig::scheme)
      .def_readwrite("store_stride", &FlowConfig::store_stride)
      .def_readwrite("backtrack", &FlowConfig::backtrack)
      .def_readwrite("tau_min", &FlowConfig::tau_min)
      .def_readwrite("basis", &FlowConfig::basis)
      .def_readwrite("lsmc", &FlowConfig::lsmc)
      .def_readwrite("prox", &FlowConfig::prox);

  py::class_<FlowTrajectory>(m, "FlowTrajectory")
      .def_readonly("scheme", &FlowTrajectory::scheme)
      .def_readonly("tau_flow", &FlowTrajectory::tau_flow)
      .def_readonly("s_nodes", &FlowTrajectory::s_nodes)
      .def_readonly("J_trace", &FlowTrajectory::J_trace)
      .def_readonly("grad_norm_sq_trace", &FlowTrajectory::grad_norm_sq_trace)
      .def_readonly("stored_nodes", &FlowTrajectory::stored_nodes)
      .def_readonly("controls", &FlowTrajectory::controls)
      .def_readonly("rank_warning", &FlowTrajectory::rank_warning)
      .def("has_control", &FlowTrajectory::has_control, py::arg("node"))
      .def("control_at_node", &FlowTrajectory::control_at_node,
           py::arg("node"));
  m.def("run_gradient_flow", &run_gradient_flow, py::arg("spec"),
        py::arg("alpha0"), py::arg("w"), py::arg("config") = FlowConfig{},
        py::call_guard<py::gil_scoped_release>());

  py::enum_<InterpMode>(m, "InterpMode")
      .value("PIECEWISE_LINEAR", InterpMode::kPiecewiseLinear)
      .value("CONST_RIGHT", InterpMode::kConstRight)
      .value("CONST_LEFT", InterpMode::kConstLeft);
  m.def("interpolate_controls", &interpolate_controls, py::arg("trajectory"),
        py::arg("s"), py::arg("mode") = InterpMode::kPiecewiseLinear);

  py::class_<EnergyIdentityReport>(m, "EnergyIdentityReport")
      .def_readonly("nodes", &EnergyIdentityReport::nodes)
      .def_readonly("dJ_ds", &EnergyIdentityReport::dJ_ds)
      .def_readonly("grad_norm_sq", &EnergyIdentityReport::grad_norm_sq)
      .def_readonly("rel_err", &EnergyIdentityReport::rel_err)
      .def_readonly("max_rel_err", &EnergyIdentityReport::max_rel_err)
      .def_readonly("eligible_nodes", &EnergyIdentityReport::eligible_nodes)
      .def_readonly("no_eligible_nodes",
                    &EnergyIdentityReport::no_eligible_nodes);
  m.def("energy_identity_check", &energy_identity_check, py::arg("trajectory"),
        py::arg("floor") = 1e-6);

  py::class_<EnergyIntegralReport>(m, "EnergyIntegralReport")
      .def_readonly("integral", &EnergyIntegralReport::integral)
      .def_readonly("decrement", &EnergyIntegralReport::decrement)
      .def_readonly("rel_err", &EnergyIntegralReport::rel_err);
  m.def("energy_integral_check", &energy_integral_check, py::arg("trajectory"));

  py::class_<GapBoundReport>(m, "GapBoundReport")
      .def_readonly("lhs", &GapBoundReport::lhs)
      .def_readonly("rhs", &GapBoundReport::rhs)
      .def_readonly("se", &GapBoundReport::se)
      .def_readonly("satisfied", &GapBoundReport::satisfied);
  m.def("gap_bound_check", &gap_bound_check, py::arg("spec"), py::arg("beta"),
        py::arg("theta"), py::arg("w"), py::arg("basis") = RegressionBasis{},
        py::arg("flags") = LsmcFlags{});

  py::class_<RateFit>(m, "RateFit")
      .def_readonly("slope", &RateFit::slope)
      .def_readonly("intercept", &RateFit::intercept)
      .def_readonly("r_squared", &RateFit::r_squared)
      .def_readonly("n", &RateFit::n);
  m.def("fit_rate", &fit_rate, py::arg("h"), py::arg("err"));
  m.def("fit_exponential", &fit_exponential, py::arg("x"), py::arg("err"));

  py::class_<TauRateOptions>(m, "TauRateOptions")
      .def(py::init<>())
      .def_readwrite("S", &TauRateOptions::S)
      .def_readwrite("tau_list", &TauRateOptions::tau_list)
      .def_readwrite("ref_divisor", &TauRateOptions::ref_divisor)
      .def_readwrite("base", &TauRateOptions::base);
  py::class_<TauRateEntry>(m, "TauRateEntry")
      .def_readonly("tau", &TauRateEntry::tau)
      .def_readonly("err", &TauRateEntry::err);
  py::class_<TauRateReport>(m, "TauRateReport")
      .def_readonly("entries", &TauRateReport::entries)
      .def_readonly("fit", &TauRateReport::fit)
      .def_readonly("tau_ref", &TauRateReport::tau_ref);
  m.def("verify_tau_rate", &verify_tau_rate, py::arg("spec"),
        py::arg("alpha0"), py::arg("w"), py::arg("options") = TauRateOptions{},
        py::call_guard<py::gil_scoped_release>());

  py::class_<SublinearOptions>(m, "SublinearOptions")
      .def(py::init<>())
      .def_readwrite("S_list", &SublinearOptions::S_list)
      .def_readwrite("base", &SublinearOptions::base);
  py::class_<SublinearEntry>(m, "SublinearEntry")
      .def_readonly("S", &SublinearEntry::S)
      .def_readonly("gap", &SublinearEntry::gap)
      .def_readonly("envelope", &SublinearEntry::envelope)
      .def_readonly("slack_se", &SublinearEntry::slack_se)
      .def_readonly("ok", &SublinearEntry::ok);
  py::class_<SublinearReport>(m, "SublinearReport")
      .def_readonly("entries", &SublinearReport::entries)
      .def_readonly("J_star", &SublinearReport::J_star)
      .def_readonly("dist0_sq", &SublinearReport::dist0_sq)
      .def_readonly("fit", &SublinearReport::fit)
      .def_readonly("fit_valid", &SublinearReport::fit_valid)
      .def_readonly("all_ok", &SublinearReport::all_ok);
  m.def("verify_sublinear_rate", &verify_sublinear_rate, py::arg("spec"),
        py::arg("alpha0"), py::arg("alpha_star"), py::arg("w"),
        py::arg("options") = SublinearOptions{},
        py::call_guard<py::gil_scoped_release>());

  py::class_<ExponentialOptions>(m, "ExponentialOptions")
      .def(py::init<>())
      .def_readwrite("S_list", &ExponentialOptions::S_list)
      .def_readwrite("eta", &ExponentialOptions::eta)
      .def_readwrite("base", &ExponentialOptions::base);
  py::class_<ExponentialEntry>(m, "ExponentialEntry")
      .def_readonly("S", &ExponentialEntry::S)
      .def_readonly("j_gap", &ExponentialEntry::j_gap)
      .def_readonly("control_gap_sq", &ExponentialEntry::control_gap_sq);
  py::class_<ExponentialReport>(m, "ExponentialReport")
      .def_readonly("entries", &ExponentialReport::entries)
      .def_readonly("eta", &ExponentialReport::eta)
      .def_readonly("j_fit", &ExponentialReport::j_fit)
      .def_readonly("gap_fit", &ExponentialReport::gap_fit)
      .def_readonly("j_fit_valid", &ExponentialReport::j_fit_valid)
      .def_readonly("gap_fit_valid", &ExponentialReport::gap_fit_valid);
  m.def("verify_exponential_rate", &verify_exponential_rate, py::arg("spec"),
        py::arg("alpha0"), py::arg("alpha_star"), py::arg("w"),
        py::arg("options"), py::call_guard<py::gil_scoped_release>());

  py::class_<GradientVanishingOptions>(m, "GradientVanishingOptions")
      .def(py::init<>())
      .def_readwrite("S", &GradientVanishingOptions::S)
      .def_readwrite("base", &GradientVanishingOptions::base);
  py::class_<GradientVanishingReport>(m, "GradientVanishingReport")
      .def_readonly("final_grad_norm_sq",
                    &GradientVanishingReport::final_grad_norm_sq)
      .def_readonly("J0", &GradientVanishingReport::J0)
      .def_readonly("min_J", &GradientVanishingReport::min_J)
      .def_readonly("integral", &GradientVanishingReport::integral)
      .def_readonly("decrement", &GradientVanishingReport::decrement)
      .def_readonly("rel_err", &GradientVanishingReport::rel_err);
  m.def("verify_gradient_vanishing", &verify_gradient_vanishing,
        py::arg("spec"), py::arg("alpha0"), py::arg("w"),
        py::arg("options") = GradientVanishingOptions{},
        py::call_guard<py::gil_scoped_release>());

  py::class_<GateauxOptions>(m, "GateauxOptions")
      .def(py::init<>())
      .def_readwrite("eps", &GateauxOptions::eps)
      .def_readwrite("n_directions", &GateauxOptions::n_directions)
      .def_readwrite("tol_abs", &GateauxOptions::tol_abs)
      .def_readwrite("direction_scale", &GateauxOptions::direction_scale)
      .def_readwrite("seed", &GateauxOptions::seed)
      .def_readwrite("basis", &GateauxOptions::basis)
      .def_readwrite("lsmc", &GateauxOptions::lsmc);
  py::class_<GateauxDirection>(m, "GateauxDirection")
      .def_readonly("fd", &GateauxDirection::fd)
      .def_readonly("inner", &GateauxDirection::inner)
      .def_readonly("diff", &GateauxDirection::diff)
      .def_readonly("se", &GateauxDirection::se)
      .def_readonly("ok", &GateauxDirection::ok);
  py::class_<GateauxReport>(m, "GateauxReport")
      .def_readonly("directions", &GateauxReport::directions)
      .def_readonly("max_abs_diff", &GateauxReport::max_abs_diff)
      .def_readonly("ok", &GateauxReport::ok);
  m.def("gateaux_check", &gateaux_check, py::arg("spec"), py::arg("alpha"),
        py::arg("w"), py::arg("options") = GateauxOptions{},
        py::call_guard<py::gil_scoped_release>());

  // Config and command layer, mirroring the command line tool. Configs are
  // JSON documents; load_config validates and fills defaults.
  py::class_<RunConfig>(m, "RunConfig");
  m.def("load_config", &parse_config, py::arg("text"));
  m.def("default_config", &default_config);
  m.def("config_json", &serialize_config, py::arg("config"));
  m.def("build_problem", &build_problem, py::arg("config"));
  m.def("make_msa_config", &make_msa_config, py::arg("config"));
  m.def("make_flow_config", &make_flow_config, py::arg("config"));
  m.def("cmd_run_msa", &cmd_run_msa, py::arg("config"),
        py::call_guard<py::gil_scoped_release>());
  m.def("cmd_run_flow", &cmd_run_flow, py::arg("config"),
        py::call_guard<py::gil_scoped_release>());
  m.def("cmd_verify", &cmd_verify, py::arg("config"), py::arg("check"),
        py::call_guard<py::gil_scoped_release>());
  m.def("cmd_validate_bsde", &cmd_validate_bsde, py::arg("config"),
        py::call_guard<py::gil_scoped_release>());
}
