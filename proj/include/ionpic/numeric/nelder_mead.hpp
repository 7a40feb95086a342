#pragma once

#include <functional>
#include <vector>

namespace ionpic::numeric {

struct NelderMeadOptions {
  double f_tolerance = 1e-10;     ///< stop when simplex f-spread falls below this
  double x_tolerance = 1e-12;
  int max_evaluations = 20000;
  int max_restarts = 8;           ///< restart from the best vertex until no gain
};

struct NelderMeadResult {
  std::vector<double> x;
  double value = 0.0;
  int evaluations = 0;
  int restarts = 0;
  bool converged = false;
  std::vector<double> trace;      ///< best value after each restart
};

/// Derivative-free simplex minimization with restarts. Bounds, if any, are
/// the caller's job (penalize inside `f`).
NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                             std::vector<double> start, std::vector<double> step,
                             const NelderMeadOptions& options = {});

}  // namespace ionpic::numeric
