#ifndef MSAFLOW_ERRORS_HPP
#define MSAFLOW_ERRORS_HPP

#include <stdexcept>
#include <string>
#include <vector>

namespace msaflow {

/// A simulated path left the sane numeric range (non-finite or |x| > threshold).
class NumericalBlowup : public std::runtime_error {
 public:
  NumericalBlowup(const std::string& what, int path, int step)
      : std::runtime_error(what), path(path), step(step) {}
  int path;
  int step;
};

/// A pointwise nonlinear solve failed to reach tolerance.
class ConvergenceFailure : public std::runtime_error {
 public:
  ConvergenceFailure(const std::string& what, double t, std::vector<double> x,
                     double residual)
      : std::runtime_error(what), t(t), x(std::move(x)), residual(residual) {}
  double t;
  std::vector<double> x;
  double residual;
};

/// An outer iteration could not make progress (backtracking exhausted).
class StalledIteration : public std::runtime_error {
 public:
  StalledIteration(const std::string& what, int iter, double cost)
      : std::runtime_error(what), iter(iter), cost(cost) {}
  int iter;
  double cost;
};

}  // namespace msaflow

#endif
