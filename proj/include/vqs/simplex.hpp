#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace vqs {

struct SimplexOptions {
  std::size_t max_iterations = 2000;
  double diameter_tolerance = 1e-10;
  // Per-coordinate initial step; coordinates with step 0 get `default_step`.
  std::vector<double> steps;
  double default_step = 0.1;
};

struct SimplexResult {
  std::vector<double> x;
  double value = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

// Nelder-Mead downhill simplex with the standard coefficients
// (reflection 1, expansion 2, contraction 0.5, shrink 0.5).
SimplexResult nelder_mead(const std::function<double(const std::vector<double>&)>& objective,
                          std::vector<double> start, const SimplexOptions& options = {});

}  // namespace vqs
