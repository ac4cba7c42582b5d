#ifndef MSAFLOW_CORE_HPP
#define MSAFLOW_CORE_HPP

#include <cstdint>
#include <vector>

#include "msaflow/errors.hpp"

namespace msaflow {

/// Uniform grid 0 = t_0 < ... < t_N = T with dt = T / n_steps.
struct TimeGrid {
  double horizon = 0.0;
  int n_steps = 0;
  double dt = 0.0;
  std::vector<double> nodes;  // n_steps + 1 nodes, first 0, last exactly T
};

TimeGrid make_time_grid(double horizon, int n_steps);

/// Dimensions shared by every ensemble object: n_paths Monte Carlo paths,
/// state dimension d, Brownian dimension d_w, control dimension p.
struct EnsembleShape {
  int n_paths = 0;
  int d = 1;
  int d_w = 1;
  int p = 1;

  bool operator==(const EnsembleShape&) const = default;
};

void validate_shape(const EnsembleShape& shape);

/// Brownian increments for a path ensemble, laid out [path][step][d_w].
/// Generation is counter-based on (seed, path, step, component): any single
/// increment can be regenerated independently of the others.
struct BrownianEnsemble {
  EnsembleShape shape;
  TimeGrid grid;
  std::uint64_t seed = 0;
  std::vector<double> increments;

  double dw(int path, int step, int j) const {
    return increments[(static_cast<std::size_t>(path) * grid.n_steps + step) *
                          shape.d_w +
                      j];
  }
  double* at(int path, int step) {
    return increments.data() +
           (static_cast<std::size_t>(path) * grid.n_steps + step) * shape.d_w;
  }
  const double* at(int path, int step) const {
    return increments.data() +
           (static_cast<std::size_t>(path) * grid.n_steps + step) * shape.d_w;
  }
};

BrownianEnsemble sample_brownian(const EnsembleShape& shape,
                                 const TimeGrid& grid, std::uint64_t seed);

/// Open-loop control values on the time grid, laid out [path][step][p].
/// Values at step k apply on [t_k, t_{k+1}); there are n_steps of them.
struct ControlField {
  EnsembleShape shape;
  TimeGrid grid;
  std::vector<double> values;

  ControlField() = default;
  ControlField(const EnsembleShape& shape, const TimeGrid& grid);

  double* at(int path, int step) {
    return values.data() +
           (static_cast<std::size_t>(path) * grid.n_steps + step) * shape.p;
  }
  const double* at(int path, int step) const {
    return values.data() +
           (static_cast<std::size_t>(path) * grid.n_steps + step) * shape.p;
  }
};

/// State trajectories on the full node set, laid out [path][k][d], k = 0..N.
struct StatePaths {
  EnsembleShape shape;
  TimeGrid grid;
  std::vector<double> values;

  StatePaths() = default;
  StatePaths(const EnsembleShape& shape, const TimeGrid& grid);

  double* at(int path, int k) {
    return values.data() +
           (static_cast<std::size_t>(path) * (grid.n_steps + 1) + k) * shape.d;
  }
  const double* at(int path, int k) const {
    return values.data() +
           (static_cast<std::size_t>(path) * (grid.n_steps + 1) + k) * shape.d;
  }
};

/// Adjoint pair: y on nodes 0..N ([path][k][d]), z on steps 0..N-1
/// ([path][k][d*d_w], row-major over (i, j)).
struct AdjointSolution {
  EnsembleShape shape;
  TimeGrid grid;
  std::vector<double> y;
  std::vector<double> z;
  bool rank_warning = false;

  AdjointSolution() = default;
  AdjointSolution(const EnsembleShape& shape, const TimeGrid& grid);

  double* y_at(int path, int k) {
    return y.data() +
           (static_cast<std::size_t>(path) * (grid.n_steps + 1) + k) * shape.d;
  }
  const double* y_at(int path, int k) const {
    return y.data() +
           (static_cast<std::size_t>(path) * (grid.n_steps + 1) + k) * shape.d;
  }
  double* z_at(int path, int k) {
    return z.data() + (static_cast<std::size_t>(path) * grid.n_steps + k) *
                          (shape.d * shape.d_w);
  }
  const double* z_at(int path, int k) const {
    return z.data() + (static_cast<std::size_t>(path) * grid.n_steps + k) *
                          (shape.d * shape.d_w);
  }
};

/// Fixed-topology pairwise sum; deterministic regardless of worker count.
double pairwise_sum(const double* x, std::size_t n);
double pairwise_sum(const std::vector<double>& x);

/// ||alpha||^2 = mean over paths of sum_k |alpha_k|^2 dt  (L^2(dt x dP) norm
/// squared of the piecewise-constant control).
double control_norm_sq(const ControlField& a);

/// Per-path integral sum_k |alpha_k|^2 dt, one entry per path.
std::vector<double> control_norm_sq_per_path(const ControlField& a);

/// <a, b> = mean over paths of sum_k a_k . b_k dt.
double control_inner(const ControlField& a, const ControlField& b);

/// ||a - b||^2 without materializing the difference field.
double control_dist_sq(const ControlField& a, const ControlField& b);
std::vector<double> control_dist_sq_per_path(const ControlField& a,
                                             const ControlField& b);

/// Elementwise a + scale * v (shapes must match).
ControlField control_axpy(const ControlField& a, double scale,
                          const ControlField& v);

/// Constant field a_t = value componentwise.
ControlField constant_control(const EnsembleShape& shape, const TimeGrid& grid,
                              double value);

/// Mean-zero Gaussian field with iid N(0, scale^2) entries, counter-based on
/// (seed, path, step, component) in a stream separate from Brownian draws.
ControlField gaussian_control_field(const EnsembleShape& shape,
                                    const TimeGrid& grid, std::uint64_t seed,
                                    double scale);

}  // namespace msaflow

#endif
