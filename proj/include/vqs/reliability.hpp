#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "vqs/ratings.hpp"

namespace vqs {

enum class WilcoxonMethod { automatic, exact, normal };

const char* to_string(WilcoxonMethod method);

struct TestResult {
  double statistic = 0.0;  // rank sum of the first sample (midranks)
  double p_value = 1.0;
  WilcoxonMethod method = WilcoxonMethod::exact;
  bool significant = false;
};

// Combined sample size at or below which the exact null distribution is used.
inline constexpr std::size_t kExactThreshold = 12;

// Two-sided Wilcoxon rank-sum (Mann-Whitney) test with midranks for ties.
// automatic: exact when |a| + |b| <= kExactThreshold, otherwise the normal
// approximation with tie-corrected variance and 0.5 continuity correction.
TestResult wilcoxon_ranksum(std::span<const double> a, std::span<const double> b,
                            double alpha = 0.05,
                            WilcoxonMethod method = WilcoxonMethod::automatic);

// Same test on samples that are already sorted ascending.
TestResult wilcoxon_ranksum_sorted(std::span<const double> a, std::span<const double> b,
                                   double alpha, WilcoxonMethod method);

// Fraction of unordered sample pairs that differ significantly at alpha.
// Pairs are split across `workers` threads (0 = hardware concurrency); the
// count is merged exactly, so the result does not depend on `workers`.
double discriminability(const std::vector<std::vector<double>>& samples, double alpha = 0.05,
                        unsigned workers = 1);

enum class CiPolicy {
  standard_error,  // z * sigma / sqrt(n)
  spread_only,     // z * sigma
};

double mean_ci(const MosTable& mos, double level = 0.95,
               CiPolicy policy = CiPolicy::standard_error);

struct ReliabilityCurvePoint {
  std::size_t participants = 0;
  double discriminability = 0.0;
  double mean_ci = 0.0;
  std::size_t trials = 0;
};

struct SubsampleOptions {
  std::vector<std::size_t> participant_counts;
  std::size_t trials = 100;
  double alpha = 0.05;
  double level = 0.95;
  std::uint64_t seed = 0;
  CiPolicy ci_policy = CiPolicy::standard_error;
  unsigned workers = 1;
};

// Reliability of the MOS as a function of how many participants are kept.
// For each k, `trials` subject subsets are drawn without replacement and the
// whole normalization/MOS chain is recomputed on each. When k equals the
// subject count only one subset exists and it is evaluated once.
std::vector<ReliabilityCurvePoint> subsample_curve(const RatingMatrix& screened,
                                                   const SubsampleOptions& options);

// Per-video rescaled samples, the input to discriminability.
std::vector<std::vector<double>> video_samples(const ScoreTable& rescaled);

}  // namespace vqs
