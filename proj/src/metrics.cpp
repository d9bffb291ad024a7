#include "vqs/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_map>

#include <Eigen/Dense>

#include "vqs/common.hpp"
#include "vqs/simplex.hpp"

namespace vqs {

const char* to_string(View view) {
  switch (view) {
    case View::left: return "left";
    case View::right: return "right";
    case View::fusion: return "fusion";
  }
  return "unknown";
}

View parse_view(const std::string& text) {
  if (text == "left") return View::left;
  if (text == "right") return View::right;
  if (text == "fusion") return View::fusion;
  throw Error(ErrorKind::invalid_argument, "unknown view '" + text + "' (expected left, right or fusion)");
}

namespace {

void require_pair(std::span<const double> x, std::span<const double> y, std::size_t min_size, const char* what) {
  if (x.size() != y.size()) {
    throw Error(ErrorKind::shape_mismatch, std::string(what) + ": inputs differ in length (" +
                                               std::to_string(x.size()) + " vs " + std::to_string(y.size()) + ")");
  }
  if (x.size() < min_size) {
    throw Error(ErrorKind::invalid_argument,
                std::string(what) + " needs at least " + std::to_string(min_size) + " samples");
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) {
      throw Error(ErrorKind::non_finite, std::string(what) + ": non-finite input at index " + std::to_string(i));
    }
  }
}

// Counts inversions of `v` while merge-sorting it.
std::int64_t sort_and_count(std::vector<double>& v, std::vector<double>& scratch, std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::int64_t swaps = sort_and_count(v, scratch, lo, mid) + sort_and_count(v, scratch, mid, hi);
  std::size_t i = lo;
  std::size_t j = mid;
  std::size_t k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      swaps += static_cast<std::int64_t>(mid - i);
      scratch[k++] = v[j++];
    } else {
      scratch[k++] = v[i++];
    }
  }
  while (i < mid) scratch[k++] = v[i++];
  while (j < hi) scratch[k++] = v[j++];
  std::copy(scratch.begin() + static_cast<std::ptrdiff_t>(lo), scratch.begin() + static_cast<std::ptrdiff_t>(hi),
            v.begin() + static_cast<std::ptrdiff_t>(lo));
  return swaps;
}

// Pairs sharing a value, summed over runs of equal adjacent entries.
template <typename Equal>
std::int64_t tied_pairs(std::size_t n, Equal equal) {
  std::int64_t total = 0;
  std::int64_t run = 1;
  for (std::size_t i = 1; i <= n; ++i) {
    if (i < n && equal(i - 1, i)) {
      ++run;
    } else {
      total += run * (run - 1) / 2;
      run = 1;
    }
  }
  return total;
}

double sse_of(const LogisticParams& beta, std::span<const double> y, std::span<const double> t) {
  double sse = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = logistic5(beta, y[i]) - t[i];
    sse += r * r;
  }
  return sse;
}

// Ordinary least squares line t = slope * y + intercept.
std::pair<double, double> ols_line(std::span<const double> y, std::span<const double> t) {
  const auto n = static_cast<double>(y.size());
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  const double mt = std::accumulate(t.begin(), t.end(), 0.0) / n;
  double syy = 0.0;
  double syt = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    syy += (y[i] - my) * (y[i] - my);
    syt += (y[i] - my) * (t[i] - mt);
  }
  const double slope = syt / syy;
  return {slope, mt - slope * my};
}

// Optimal (b1, b4, b5) for fixed (b2, b3): a 3-column linear least squares.
LogisticParams project_linear(const LogisticParams& beta, std::span<const double> y, std::span<const double> t) {
  const auto n = static_cast<Eigen::Index>(y.size());
  Eigen::MatrixXd basis(n, 3);
  Eigen::VectorXd rhs(n);
  const LogisticParams shape{1.0, beta[1], beta[2], 0.0, 0.0};
  for (Eigen::Index i = 0; i < n; ++i) {
    basis(i, 0) = logistic5(shape, y[static_cast<std::size_t>(i)]);
    basis(i, 1) = y[static_cast<std::size_t>(i)];
    basis(i, 2) = 1.0;
    rhs(i) = t[static_cast<std::size_t>(i)];
  }
  const Eigen::Vector3d coef = basis.colPivHouseholderQr().solve(rhs);
  LogisticParams out = beta;
  out[0] = coef(0);
  out[3] = coef(1);
  out[4] = coef(2);
  return out;
}

bool is_monotone(const LogisticParams& beta, double lo, double hi) {
  constexpr int kGrid = 256;
  double prev = logistic5(beta, lo);
  double scale = std::abs(prev);
  bool up = false;
  bool down = false;
  std::vector<double> values(kGrid + 1);
  for (int g = 0; g <= kGrid; ++g) {
    values[static_cast<std::size_t>(g)] = logistic5(beta, lo + (hi - lo) * g / kGrid);
    scale = std::max(scale, std::abs(values[static_cast<std::size_t>(g)]));
  }
  const double tol = 1e-12 * std::max(1.0, scale);
  for (int g = 1; g <= kGrid; ++g) {
    const double d = values[static_cast<std::size_t>(g)] - prev;
    if (d > tol) up = true;
    if (d < -tol) down = true;
    prev = values[static_cast<std::size_t>(g)];
  }
  return !(up && down);
}

}  // namespace

std::vector<double> midranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i + 1;
    while (j < order.size() && x[order[j]] == x[order[i]]) ++j;
    // positions i..j-1 share the midrank of 1-based ranks i+1..j
    const double rank = static_cast<double>(i + 1 + j) / 2.0;
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = rank;
    i = j;
  }
  return ranks;
}

double plcc(std::span<const double> x, std::span<const double> y) {
  require_pair(x, y, 3, "plcc");
  const auto n = static_cast<double>(x.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) {
    throw Error(ErrorKind::undefined_correlation, "correlation is undefined for a constant input");
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double srcc(std::span<const double> x, std::span<const double> y) {
  require_pair(x, y, 3, "srcc");
  const std::vector<double> rx = midranks(x);
  const std::vector<double> ry = midranks(y);
  return plcc(rx, ry);
}

double krcc(std::span<const double> x, std::span<const double> y) {
  require_pair(x, y, 3, "krcc");
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) {
    return x[a] < x[b] || (x[a] == x[b] && y[a] < y[b]);
  });

  const auto pairs = static_cast<std::int64_t>(n) * static_cast<std::int64_t>(n - 1) / 2;
  const std::int64_t x_ties = tied_pairs(n, [&](auto i, auto j) { return x[order[i]] == x[order[j]]; });
  const std::int64_t joint_ties = tied_pairs(
      n, [&](auto i, auto j) { return x[order[i]] == x[order[j]] && y[order[i]] == y[order[j]]; });

  std::vector<double> ys(n);
  for (std::size_t i = 0; i < n; ++i) ys[i] = y[order[i]];
  std::vector<double> scratch(n);
  const std::int64_t discordant = sort_and_count(ys, scratch, 0, n);
  const std::int64_t y_ties = tied_pairs(n, [&](auto i, auto j) { return ys[i] == ys[j]; });

  if (pairs == x_ties || pairs == y_ties) {
    throw Error(ErrorKind::undefined_correlation, "correlation is undefined for a constant input");
  }
  const std::int64_t numerator = pairs - x_ties - y_ties + joint_ties - 2 * discordant;
  return static_cast<double>(numerator) /
         std::sqrt(static_cast<double>(pairs - x_ties) * static_cast<double>(pairs - y_ties));
}

double rmse(std::span<const double> x, std::span<const double> y) {
  require_pair(x, y, 1, "rmse");
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(x.size()));
}

double logistic5(const LogisticParams& beta, double y) {
  const double arg = std::clamp(beta[1] * (y - beta[2]), -500.0, 500.0);
  return beta[0] * (0.5 - 1.0 / (1.0 + std::exp(arg))) + beta[3] * y + beta[4];
}

LogisticFit fit_logistic5(std::span<const double> predicted, std::span<const double> targets) {
  require_pair(predicted, targets, 6, "fit_logistic5");
  const auto [ymin_it, ymax_it] = std::minmax_element(predicted.begin(), predicted.end());
  const double ymin = *ymin_it;
  const double ymax = *ymax_it;
  if (!(ymax > ymin)) throw Error(ErrorKind::invalid_argument, "fit_logistic5: predictions are constant");
  const auto [tmin_it, tmax_it] = std::minmax_element(targets.begin(), targets.end());
  const double tmin = *tmin_it;
  const double trange = *tmax_it - tmin;

  // Work on unit-range copies; the model family is closed under affine maps
  // of both axes, so the parameters transform back exactly.
  const double yscale = ymax - ymin;
  const double tscale = trange > 0.0 ? trange : 1.0;
  const std::size_t n = predicted.size();
  std::vector<double> u(n);
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) {
    u[i] = (predicted[i] - ymin) / yscale;
    s[i] = (targets[i] - tmin) / tscale;
  }
  auto to_raw = [&](const LogisticParams& g) {
    return LogisticParams{tscale * g[0], g[1] / yscale, ymin + yscale * g[2], tscale * g[3] / yscale,
                          tscale * (g[4] - g[3] * ymin / yscale) + tmin};
  };

  const auto [lin_slope, lin_intercept] = ols_line(u, s);
  const double sign = lin_slope < 0.0 ? -1.0 : 1.0;
  const double umean = std::accumulate(u.begin(), u.end(), 0.0) / static_cast<double>(n);
  const LogisticParams initial{1.0, sign * 4.0, umean, lin_slope, lin_intercept};

  // The model is linear in (b1, b4, b5) once (b2, b3) are fixed, so the
  // simplex searches the nonlinear pair and the rest is solved exactly.
  auto projected = [&](double b2, double b3) { return project_linear({1.0, b2, b3, 0.0, 0.0}, u, s); };
  auto pair_objective = [&](const std::vector<double>& g) { return sse_of(projected(g[0], g[1]), u, s); };
  auto full_objective = [&](const std::vector<double>& g) {
    return sse_of(LogisticParams{g[0], g[1], g[2], g[3], g[4]}, u, s);
  };

  // Starts: the textbook initialization, the best point of a coarse grid,
  // and seeded perturbations of the initialization.
  constexpr int kStarts = 5;
  std::vector<std::array<double, 2>> starts{{initial[1], initial[2]}};
  {
    std::array<double, 2> grid_best = starts[0];
    double grid_sse = pair_objective({grid_best[0], grid_best[1]});
    for (double b2 = 0.5; b2 <= 512.0; b2 *= 2.0) {
      for (int k = 0; k <= 20; ++k) {
        const std::vector<double> g{sign * b2, k / 20.0};
        const double v = pair_objective(g);
        if (v < grid_sse) {
          grid_sse = v;
          grid_best = {g[0], g[1]};
        }
      }
    }
    starts.push_back(grid_best);
  }
  Rng rng(0x10915c5eedULL);
  while (starts.size() < kStarts) starts.push_back({initial[1] * std::exp(rng.uniform(-1.0, 2.5)), rng.uniform(0.0, 1.0)});

  auto descend = [](const auto& objective, std::vector<double> x, std::vector<double> steps) {
    constexpr int kMaxRestarts = 25;
    SimplexOptions options;
    options.steps = std::move(steps);
    double value = objective(x);
    for (int restart = 0; restart < kMaxRestarts; ++restart) {
      const SimplexResult r = nelder_mead(objective, x, options);
      const bool improved = r.value < value * (1.0 - 1e-12) && r.value < value - 1e-300;
      x = r.x;
      value = r.value;
      if (!improved || value == 0.0) break;
      for (auto& step : options.steps) step = std::max(1e-6, 0.1 * std::abs(step));
    }
    return std::pair{x, value};
  };

  LogisticParams best = initial;
  double best_sse = sse_of(initial, u, s);
  for (const auto& st : starts) {
    const auto [x, value] = descend(pair_objective, {st[0], st[1]}, {0.25 * std::abs(st[0]) + 0.5, 0.1});
    if (value < best_sse) {
      best_sse = value;
      best = projected(x[0], x[1]);
    }
  }
  {
    const auto [x, value] = descend(full_objective, std::vector<double>(best.begin(), best.end()),
                                    {0.01, 0.01 * std::abs(best[1]) + 0.01, 0.01, 0.01, 0.01});
    if (value < best_sse) {
      best_sse = value;
      std::copy(x.begin(), x.end(), best.begin());
    }
  }
  const LogisticParams polished = project_linear(best, u, s);
  if (sse_of(polished, u, s) < best_sse) best = polished;

  LogisticFit fit;
  fit.beta = to_raw(best);
  fit.sse = sse_of(fit.beta, predicted, targets);

  const auto [slope, intercept] = ols_line(predicted, targets);
  const LogisticParams linear{0.0, fit.beta[1], fit.beta[2], slope, intercept};
  const double linear_sse = sse_of(linear, predicted, targets);
  if (!(fit.sse < linear_sse)) {
    fit.beta = linear;
    fit.sse = linear_sse;
    fit.linear_fallback = true;
  }
  fit.mapped.resize(n);
  for (std::size_t i = 0; i < n; ++i) fit.mapped[i] = logistic5(fit.beta, predicted[i]);
  fit.monotone = is_monotone(fit.beta, ymin, ymax);
  return fit;
}

PredictionSet fuse_views(const PredictionSet& left, const PredictionSet& right) {
  if (left.videos.size() != left.scores.size() || right.videos.size() != right.scores.size()) {
    throw Error(ErrorKind::shape_mismatch, "prediction set has mismatched ids and scores");
  }
  std::unordered_map<std::string, double> right_scores;
  for (std::size_t i = 0; i < right.videos.size(); ++i) {
    if (!right_scores.emplace(right.videos[i], right.scores[i]).second) {
      throw Error(ErrorKind::identifier_mismatch, "duplicate video '" + right.videos[i] + "' in right view");
    }
  }
  std::set<std::string> left_ids(left.videos.begin(), left.videos.end());
  if (left_ids.size() != left.videos.size()) {
    throw Error(ErrorKind::identifier_mismatch, "duplicate video id in left view");
  }
  std::vector<std::string> only_left;
  std::vector<std::string> only_right;
  for (const auto& id : left_ids) {
    if (!right_scores.contains(id)) only_left.push_back(id);
  }
  for (const auto& [id, _] : right_scores) {
    if (!left_ids.contains(id)) only_right.push_back(id);
  }
  if (!only_left.empty() || !only_right.empty()) {
    std::sort(only_right.begin(), only_right.end());
    std::string msg = "left and right views cover different videos;";
    auto list = [&](const char* label, const std::vector<std::string>& ids) {
      if (ids.empty()) return;
      msg += std::string(" only in ") + label + ":";
      for (const auto& id : ids) msg += " " + id;
      msg += ";";
    };
    list("left", only_left);
    list("right", only_right);
    msg.pop_back();
    throw Error(ErrorKind::identifier_mismatch, msg);
  }

  PredictionSet fused;
  fused.view = View::fusion;
  fused.videos = left.videos;
  fused.scores.resize(left.scores.size());
  for (std::size_t i = 0; i < left.videos.size(); ++i) {
    fused.scores[i] = (left.scores[i] + right_scores.at(left.videos[i])) * 0.5;
  }
  return fused;
}

EvalReport evaluate(const PredictionSet& pred, const MosTable& mos) {
  if (pred.videos.size() != pred.scores.size()) {
    throw Error(ErrorKind::shape_mismatch, "prediction set has mismatched ids and scores");
  }
  std::unordered_map<std::string, double> targets_by_id;
  for (const auto& e : mos.entries) targets_by_id.emplace(e.video, e.mos);
  std::vector<double> targets;
  std::vector<std::string> unknown;
  std::set<std::string> seen;
  for (const auto& id : pred.videos) {
    if (!seen.insert(id).second) throw Error(ErrorKind::identifier_mismatch, "duplicate prediction for '" + id + "'");
    auto it = targets_by_id.find(id);
    if (it == targets_by_id.end()) {
      unknown.push_back(id);
    } else {
      targets.push_back(it->second);
    }
  }
  if (!unknown.empty()) {
    std::string msg = "predictions reference videos without a MOS:";
    for (const auto& id : unknown) msg += " " + id;
    throw Error(ErrorKind::identifier_mismatch, msg);
  }
  if (pred.scores.size() < 6) throw Error(ErrorKind::invalid_argument, "evaluation needs at least 6 videos");

  EvalReport report;
  report.view = pred.view;
  report.count = pred.scores.size();
  report.srcc = srcc(pred.scores, targets);
  report.krcc = krcc(pred.scores, targets);
  report.plcc_unmapped = plcc(pred.scores, targets);
  const LogisticFit fit = fit_logistic5(pred.scores, targets);
  report.beta = fit.beta;
  report.plcc = plcc(fit.mapped, targets);
  report.rmse_raw = rmse(fit.mapped, targets);
  report.rmse = report.rmse_raw / 100.0;
  if (!fit.monotone) report.warnings.emplace_back("non_monotone_fit");
  return report;
}

SplitResult make_split(const std::vector<std::string>& videos, const std::vector<std::string>& sources,
                       SplitRatio ratio, std::uint64_t seed, bool group_by_source) {
  if (videos.empty()) throw Error(ErrorKind::invalid_argument, "cannot split an empty video list");
  if (ratio.train == 0 || ratio.test == 0) throw Error(ErrorKind::invalid_argument, "split ratio parts must be positive");
  if (group_by_source && sources.size() != videos.size()) {
    throw Error(ErrorKind::invalid_argument, "grouped split needs a source key for every video");
  }

  // Group index per video; groups numbered by first appearance.
  std::vector<std::size_t> group_of(videos.size());
  std::size_t groups = 0;
  if (group_by_source) {
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < videos.size(); ++i) {
      auto [it, inserted] = index.emplace(sources[i], groups);
      if (inserted) ++groups;
      group_of[i] = it->second;
    }
  } else {
    std::iota(group_of.begin(), group_of.end(), std::size_t{0});
    groups = videos.size();
  }

  std::vector<std::size_t> order(groups);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);
  const std::size_t parts = ratio.train + ratio.test;
  const std::size_t train_groups = (groups * ratio.train + parts / 2) / parts;
  std::vector<bool> in_train(groups, false);
  for (std::size_t k = 0; k < train_groups; ++k) in_train[order[k]] = true;

  SplitResult split;
  for (std::size_t i = 0; i < videos.size(); ++i) {
    (in_train[group_of[i]] ? split.train : split.test).push_back(videos[i]);
  }
  return split;
}

}  // namespace vqs
