#include "msaflow/core.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "msaflow/rng.hpp"

namespace msaflow {

TimeGrid make_time_grid(double horizon, int n_steps) {
  if (!(horizon > 0.0) || !std::isfinite(horizon))
    throw std::invalid_argument("make_time_grid: horizon must be positive");
  if (n_steps < 1)
    throw std::invalid_argument("make_time_grid: n_steps must be >= 1");
  TimeGrid g;
  g.horizon = horizon;
  g.n_steps = n_steps;
  g.dt = horizon / n_steps;
  g.nodes.resize(n_steps + 1);
  for (int k = 0; k <= n_steps; ++k) g.nodes[k] = k * g.dt;
  g.nodes[n_steps] = horizon;  // exact endpoint, no accumulated rounding
  return g;
}

void validate_shape(const EnsembleShape& shape) {
  if (shape.n_paths < 1 || shape.d < 1 || shape.d_w < 1 || shape.p < 1)
    throw std::invalid_argument(
        "EnsembleShape: n_paths, d, d_w, p must all be >= 1");
}

BrownianEnsemble sample_brownian(const EnsembleShape& shape,
                                 const TimeGrid& grid, std::uint64_t seed) {
  validate_shape(shape);
  if (grid.n_steps < 1)
    throw std::invalid_argument("sample_brownian: empty time grid");
  BrownianEnsemble w;
  w.shape = shape;
  w.grid = grid;
  w.seed = seed;
  const double sqrt_dt = std::sqrt(grid.dt);
  w.increments.resize(static_cast<std::size_t>(shape.n_paths) * grid.n_steps *
                      shape.d_w);
  std::size_t idx = 0;
  for (int path = 0; path < shape.n_paths; ++path)
    for (int step = 0; step < grid.n_steps; ++step)
      for (int j = 0; j < shape.d_w; ++j)
        w.increments[idx++] =
            sqrt_dt * rng::normal(seed, rng::kBrownian, path, step, j);
  return w;
}

ControlField::ControlField(const EnsembleShape& shape, const TimeGrid& grid)
    : shape(shape), grid(grid) {
  validate_shape(shape);
  values.assign(
      static_cast<std::size_t>(shape.n_paths) * grid.n_steps * shape.p, 0.0);
}

StatePaths::StatePaths(const EnsembleShape& shape, const TimeGrid& grid)
    : shape(shape), grid(grid) {
  validate_shape(shape);
  values.assign(
      static_cast<std::size_t>(shape.n_paths) * (grid.n_steps + 1) * shape.d,
      0.0);
}

AdjointSolution::AdjointSolution(const EnsembleShape& shape,
                                 const TimeGrid& grid)
    : shape(shape), grid(grid) {
  validate_shape(shape);
  y.assign(
      static_cast<std::size_t>(shape.n_paths) * (grid.n_steps + 1) * shape.d,
      0.0);
  z.assign(static_cast<std::size_t>(shape.n_paths) * grid.n_steps * shape.d *
               shape.d_w,
           0.0);
}

double pairwise_sum(const double* x, std::size_t n) {
  if (n <= 32) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(x, half) + pairwise_sum(x + half, n - half);
}

double pairwise_sum(const std::vector<double>& x) {
  return pairwise_sum(x.data(), x.size());
}

namespace {

void require_same_layout(const ControlField& a, const ControlField& b,
                         const char* who) {
  if (!(a.shape == b.shape) || a.grid.n_steps != b.grid.n_steps ||
      a.grid.horizon != b.grid.horizon)
    throw std::invalid_argument(std::string(who) +
                                ": control fields have mismatched layout");
}

}  // namespace

std::vector<double> control_norm_sq_per_path(const ControlField& a) {
  const std::size_t per_path =
      static_cast<std::size_t>(a.grid.n_steps) * a.shape.p;
  std::vector<double> out(a.shape.n_paths);
  for (int path = 0; path < a.shape.n_paths; ++path) {
    const double* v = a.values.data() + per_path * path;
    double s = 0.0;
    for (std::size_t i = 0; i < per_path; ++i) s += v[i] * v[i];
    out[path] = s * a.grid.dt;
  }
  return out;
}

double control_norm_sq(const ControlField& a) {
  const std::vector<double> per_path = control_norm_sq_per_path(a);
  return pairwise_sum(per_path) / a.shape.n_paths;
}

double control_inner(const ControlField& a, const ControlField& b) {
  require_same_layout(a, b, "control_inner");
  const std::size_t per_path =
      static_cast<std::size_t>(a.grid.n_steps) * a.shape.p;
  std::vector<double> sums(a.shape.n_paths);
  for (int path = 0; path < a.shape.n_paths; ++path) {
    const double* va = a.values.data() + per_path * path;
    const double* vb = b.values.data() + per_path * path;
    double s = 0.0;
    for (std::size_t i = 0; i < per_path; ++i) s += va[i] * vb[i];
    sums[path] = s * a.grid.dt;
  }
  return pairwise_sum(sums) / a.shape.n_paths;
}

std::vector<double> control_dist_sq_per_path(const ControlField& a,
                                             const ControlField& b) {
  require_same_layout(a, b, "control_dist_sq");
  const std::size_t per_path =
      static_cast<std::size_t>(a.grid.n_steps) * a.shape.p;
  std::vector<double> out(a.shape.n_paths);
  for (int path = 0; path < a.shape.n_paths; ++path) {
    const double* va = a.values.data() + per_path * path;
    const double* vb = b.values.data() + per_path * path;
    double s = 0.0;
    for (std::size_t i = 0; i < per_path; ++i) {
      const double diff = va[i] - vb[i];
      s += diff * diff;
    }
    out[path] = s * a.grid.dt;
  }
  return out;
}

double control_dist_sq(const ControlField& a, const ControlField& b) {
  const std::vector<double> per_path = control_dist_sq_per_path(a, b);
  return pairwise_sum(per_path) / a.shape.n_paths;
}

ControlField control_axpy(const ControlField& a, double scale,
                          const ControlField& v) {
  require_same_layout(a, v, "control_axpy");
  ControlField out = a;
  for (std::size_t i = 0; i < out.values.size(); ++i)
    out.values[i] += scale * v.values[i];
  return out;
}

ControlField constant_control(const EnsembleShape& shape, const TimeGrid& grid,
                              double value) {
  ControlField out(shape, grid);
  for (double& v : out.values) v = value;
  return out;
}

ControlField gaussian_control_field(const EnsembleShape& shape,
                                    const TimeGrid& grid, std::uint64_t seed,
                                    double scale) {
  ControlField out(shape, grid);
  std::size_t idx = 0;
  for (int path = 0; path < shape.n_paths; ++path)
    for (int step = 0; step < grid.n_steps; ++step)
      for (int i = 0; i < shape.p; ++i)
        out.values[idx++] =
            scale * rng::normal(seed, rng::kField, path, step, i);
  return out;
}

}  // namespace msaflow
