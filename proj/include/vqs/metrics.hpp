#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vqs/ratings.hpp"

namespace vqs {

enum class View { left, right, fusion };

const char* to_string(View view);
View parse_view(const std::string& text);

struct PredictionSet {
  View view = View::fusion;
  std::vector<std::string> videos;
  std::vector<double> scores;
};

// Midranks (1-based, ties averaged), in input order.
std::vector<double> midranks(std::span<const double> x);

double srcc(std::span<const double> x, std::span<const double> y);
// Kendall tau-b, O(n log n).
double krcc(std::span<const double> x, std::span<const double> y);
double plcc(std::span<const double> x, std::span<const double> y);
double rmse(std::span<const double> x, std::span<const double> y);

using LogisticParams = std::array<double, 5>;

// b1 * (0.5 - 1 / (1 + exp(b2 (y - b3)))) + b4 y + b5, exponent clamped to +-500.
double logistic5(const LogisticParams& beta, double y);

struct LogisticFit {
  LogisticParams beta{};
  std::vector<double> mapped;
  double sse = 0.0;
  bool monotone = true;  // mapped curve monotone over [min y, max y]
  bool linear_fallback = false;
};

// Least-squares fit of the five-parameter logistic mapping predictions onto
// targets. Never worse than the best straight line.
LogisticFit fit_logistic5(std::span<const double> predicted, std::span<const double> targets);

PredictionSet fuse_views(const PredictionSet& left, const PredictionSet& right);

struct EvalReport {
  View view = View::fusion;
  std::size_t count = 0;
  double srcc = 0.0;
  double krcc = 0.0;
  double plcc = 0.0;
  double rmse = 0.0;      // MOS rescaled to [0, 1]
  double rmse_raw = 0.0;  // MOS scale
  double plcc_unmapped = 0.0;
  LogisticParams beta{};
  std::vector<std::string> warnings;
};

// Rank metrics on raw predictions, PLCC/RMSE after the logistic mapping.
EvalReport evaluate(const PredictionSet& pred, const MosTable& mos);

struct SplitResult {
  std::vector<std::string> train;
  std::vector<std::string> test;
};

struct SplitRatio {
  std::size_t train = 4;
  std::size_t test = 1;
};

// Seeded split. With `sources` given, whole source groups are assigned to one
// side; `sources` must then be parallel to `videos`.
SplitResult make_split(const std::vector<std::string>& videos, const std::vector<std::string>& sources,
                       SplitRatio ratio, std::uint64_t seed, bool group_by_source);

}  // namespace vqs
