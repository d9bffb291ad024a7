#include "vqs/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "vqs/common.hpp"

namespace vqs {

namespace {

double safe(double v) { return std::isnan(v) ? std::numeric_limits<double>::infinity() : v; }

}  // namespace

SimplexResult nelder_mead(const std::function<double(const std::vector<double>&)>& objective,
                          std::vector<double> start, const SimplexOptions& options) {
  const std::size_t n = start.size();
  if (n == 0) throw Error(ErrorKind::invalid_argument, "simplex needs at least one coordinate");

  std::vector<std::vector<double>> vertex(n + 1, start);
  for (std::size_t i = 0; i < n; ++i) {
    double step = i < options.steps.size() ? options.steps[i] : 0.0;
    if (step == 0.0) step = options.default_step;
    vertex[i + 1][i] += step;
  }
  std::vector<double> value(n + 1);
  for (std::size_t i = 0; i <= n; ++i) value[i] = safe(objective(vertex[i]));

  std::vector<std::size_t> order(n + 1);
  std::vector<double> centroid(n);
  std::vector<double> trial(n);
  auto point_along = [&](double t, const std::vector<double>& worst) {
    for (std::size_t d = 0; d < n; ++d) trial[d] = centroid[d] + t * (worst[d] - centroid[d]);
    return safe(objective(trial));
  };

  SimplexResult result;
  std::size_t it = 0;
  for (; it < options.max_iterations; ++it) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return value[a] < value[b]; });
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second = order[n - 1];

    double diameter = 0.0;
    for (std::size_t i = 0; i <= n; ++i) {
      double dist = 0.0;
      for (std::size_t d = 0; d < n; ++d) dist = std::max(dist, std::abs(vertex[i][d] - vertex[best][d]));
      diameter = std::max(diameter, dist);
    }
    if (diameter < options.diameter_tolerance) {
      result.converged = true;
      break;
    }

    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (std::size_t i = 0; i <= n; ++i) {
      if (i == worst) continue;
      for (std::size_t d = 0; d < n; ++d) centroid[d] += vertex[i][d];
    }
    for (auto& c : centroid) c /= static_cast<double>(n);

    const double reflected = point_along(-1.0, vertex[worst]);
    if (reflected < value[best]) {
      const std::vector<double> reflected_point = trial;
      const double expanded = point_along(-2.0, vertex[worst]);
      if (expanded < reflected) {
        vertex[worst] = trial;
        value[worst] = expanded;
      } else {
        vertex[worst] = reflected_point;
        value[worst] = reflected;
      }
      continue;
    }
    if (reflected < value[second]) {
      vertex[worst] = trial;
      value[worst] = reflected;
      continue;
    }
    const bool outside = reflected < value[worst];
    const double contracted = point_along(outside ? -0.5 : 0.5, vertex[worst]);
    if (contracted < (outside ? reflected : value[worst])) {
      vertex[worst] = trial;
      value[worst] = contracted;
      continue;
    }
    for (std::size_t i = 0; i <= n; ++i) {
      if (i == best) continue;
      for (std::size_t d = 0; d < n; ++d) vertex[i][d] = vertex[best][d] + 0.5 * (vertex[i][d] - vertex[best][d]);
      value[i] = safe(objective(vertex[i]));
    }
  }

  const auto best = static_cast<std::size_t>(std::min_element(value.begin(), value.end()) - value.begin());
  result.x = vertex[best];
  result.value = value[best];
  result.iterations = it;
  return result;
}

}  // namespace vqs
