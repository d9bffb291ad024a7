#include "vqs/reliability.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <thread>

#include "vqs/common.hpp"

namespace vqs {

const char* to_string(WilcoxonMethod method) {
  switch (method) {
    case WilcoxonMethod::automatic: return "automatic";
    case WilcoxonMethod::exact: return "exact";
    case WilcoxonMethod::normal: return "normal-approximation";
  }
  return "unknown";
}

namespace {

// Ranks are kept doubled so that midranks stay integral.
struct RankSummary {
  std::int64_t doubled_sum_a = 0;
  double tie_term = 0.0;  // sum over tie groups of t^3 - t
  std::vector<std::int64_t> doubled_ranks;  // all combined ranks, exact path only
};

RankSummary summarize(std::span<const double> a, std::span<const double> b, bool keep_ranks) {
  RankSummary out;
  std::size_t i = 0;
  std::size_t j = 0;
  std::int64_t pos = 0;
  while (i < a.size() || j < b.size()) {
    double v;
    if (j >= b.size() || (i < a.size() && a[i] <= b[j])) {
      v = a[i];
    } else {
      v = b[j];
    }
    std::int64_t ca = 0;
    std::int64_t cb = 0;
    while (i < a.size() && a[i] == v) ++i, ++ca;
    while (j < b.size() && b[j] == v) ++j, ++cb;
    const std::int64_t t = ca + cb;
    const std::int64_t doubled_midrank = 2 * pos + t + 1;
    out.doubled_sum_a += ca * doubled_midrank;
    const auto td = static_cast<double>(t);
    out.tie_term += td * td * td - td;
    if (keep_ranks) out.doubled_ranks.insert(out.doubled_ranks.end(), static_cast<std::size_t>(t), doubled_midrank);
    pos += t;
  }
  return out;
}

// P(|S - E| >= |observed - E|) under random assignment of na of the ranks to
// the first sample, via a subset-sum count over doubled ranks.
double exact_p(const std::vector<std::int64_t>& doubled_ranks, std::size_t na, std::int64_t observed) {
  const std::size_t n = doubled_ranks.size();
  std::int64_t max_sum = 0;
  for (auto r : doubled_ranks) max_sum += r;
  const auto width = static_cast<std::size_t>(max_sum + 1);
  // ways[k][s]: subsets of size k with doubled rank sum s.
  std::vector<std::vector<std::uint64_t>> ways(na + 1, std::vector<std::uint64_t>(width, 0));
  ways[0][0] = 1;
  for (std::size_t idx = 0; idx < n; ++idx) {
    const auto r = static_cast<std::size_t>(doubled_ranks[idx]);
    const std::size_t top = std::min(na, idx + 1);
    for (std::size_t k = top; k >= 1; --k) {
      for (std::size_t s = width; s-- > r;) ways[k][s] += ways[k - 1][s - r];
    }
  }
  const auto expected2 = static_cast<std::int64_t>(na) * static_cast<std::int64_t>(n + 1);
  const std::int64_t observed_dev = std::abs(observed - expected2);
  std::uint64_t total = 0;
  std::uint64_t extreme = 0;
  for (std::size_t s = 0; s < width; ++s) {
    const std::uint64_t c = ways[na][s];
    if (c == 0) continue;
    total += c;
    if (std::abs(static_cast<std::int64_t>(s) - expected2) >= observed_dev) extreme += c;
  }
  return static_cast<double>(extreme) / static_cast<double>(total);
}

double normal_p(std::size_t na, std::size_t nb, double rank_sum_a, double tie_term) {
  const auto n1 = static_cast<double>(na);
  const auto n2 = static_cast<double>(nb);
  const double n = n1 + n2;
  const double mean = n1 * (n + 1.0) / 2.0;
  const double tie_adjust = n > 1.0 ? tie_term / (n * (n - 1.0)) : 0.0;
  const double variance = n1 * n2 / 12.0 * ((n + 1.0) - tie_adjust);
  if (!(variance > 0.0)) return 1.0;
  const double z = std::max(0.0, std::abs(rank_sum_a - mean) - 0.5) / std::sqrt(variance);
  return std::min(1.0, std::erfc(z / std::numbers::sqrt2));
}

void require_samples(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw Error(ErrorKind::invalid_argument, "Wilcoxon test needs two non-empty samples");
  for (double x : a) {
    if (!std::isfinite(x)) throw Error(ErrorKind::non_finite, "non-finite value in first sample");
  }
  for (double x : b) {
    if (!std::isfinite(x)) throw Error(ErrorKind::non_finite, "non-finite value in second sample");
  }
}

}  // namespace

TestResult wilcoxon_ranksum_sorted(std::span<const double> a, std::span<const double> b, double alpha,
                                   WilcoxonMethod method) {
  require_samples(a, b);
  if (method == WilcoxonMethod::automatic) {
    method = a.size() + b.size() <= kExactThreshold ? WilcoxonMethod::exact : WilcoxonMethod::normal;
  }
  const bool exact = method == WilcoxonMethod::exact;
  const RankSummary ranks = summarize(a, b, exact);

  TestResult result;
  result.method = method;
  result.statistic = static_cast<double>(ranks.doubled_sum_a) / 2.0;
  result.p_value = exact ? exact_p(ranks.doubled_ranks, a.size(), ranks.doubled_sum_a)
                         : normal_p(a.size(), b.size(), result.statistic, ranks.tie_term);
  result.significant = result.p_value < alpha;
  return result;
}

TestResult wilcoxon_ranksum(std::span<const double> a, std::span<const double> b, double alpha,
                            WilcoxonMethod method) {
  std::vector<double> sa(a.begin(), a.end());
  std::vector<double> sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  return wilcoxon_ranksum_sorted(sa, sb, alpha, method);
}

double discriminability(const std::vector<std::vector<double>>& samples, double alpha, unsigned workers) {
  const std::size_t nv = samples.size();
  if (nv < 2) throw Error(ErrorKind::invalid_argument, "discriminability needs at least 2 videos");
  std::vector<std::vector<double>> sorted = samples;
  for (std::size_t v = 0; v < nv; ++v) {
    if (sorted[v].empty()) {
      throw Error(ErrorKind::missing_data, "video " + std::to_string(v) + " has no scores");
    }
    std::sort(sorted[v].begin(), sorted[v].end());
  }

  const std::size_t rows = nv - 1;
  auto count_rows = [&](std::size_t first, std::size_t stride) {
    std::size_t significant = 0;
    for (std::size_t i = first; i < rows; i += stride) {
      for (std::size_t j = i + 1; j < nv; ++j) {
        if (wilcoxon_ranksum_sorted(sorted[i], sorted[j], alpha, WilcoxonMethod::automatic).significant) {
          ++significant;
        }
      }
    }
    return significant;
  };

  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, rows));
  std::size_t significant = 0;
  if (workers <= 1) {
    significant = count_rows(0, 1);
  } else {
    std::atomic<std::size_t> total{0};
    {
      std::vector<std::jthread> pool;
      for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] { total += count_rows(w, workers); });
      }
    }
    significant = total.load();
  }
  const double pairs = static_cast<double>(nv) * static_cast<double>(nv - 1) / 2.0;
  return static_cast<double>(significant) / pairs;
}

double mean_ci(const MosTable& mos, double level, CiPolicy policy) {
  if (mos.entries.empty()) throw Error(ErrorKind::invalid_argument, "mean CI of an empty MOS table");
  const double z = z_for_level(level);
  double sum = 0.0;
  for (const auto& e : mos.entries) {
    if (e.count < 2) {
      throw Error(ErrorKind::missing_data,
                  "video '" + e.video + "' has " + std::to_string(e.count) + " rating(s); CI needs 2");
    }
    double half = z * e.stddev;
    if (policy == CiPolicy::standard_error) half /= std::sqrt(static_cast<double>(e.count));
    sum += half;
  }
  return sum / static_cast<double>(mos.entries.size());
}

std::vector<std::vector<double>> video_samples(const ScoreTable& rescaled) {
  std::vector<std::vector<double>> out;
  out.reserve(rescaled.videos.size());
  for (std::size_t j = 0; j < rescaled.videos.size(); ++j) out.push_back(rescaled.column(j));
  return out;
}

std::vector<ReliabilityCurvePoint> subsample_curve(const RatingMatrix& screened, const SubsampleOptions& options) {
  const std::size_t ns = screened.subject_count();
  if (options.trials == 0) throw Error(ErrorKind::invalid_argument, "subsample curve needs at least one trial");
  for (std::size_t k : options.participant_counts) {
    if (k < 2) throw Error(ErrorKind::invalid_argument, "participant count must be at least 2");
    if (k > ns) {
      throw Error(ErrorKind::invalid_argument, "participant count " + std::to_string(k) + " exceeds the " +
                                                   std::to_string(ns) + " available subjects");
    }
  }

  auto evaluate = [&](const RatingMatrix& m) {
    const ScoreTable rescaled = zscore_rescale(m, subject_stats(m));
    const MosTable mos = compute_mos(rescaled, options.level);
    return std::pair{discriminability(video_samples(rescaled), options.alpha, options.workers),
                     mean_ci(mos, options.level, options.ci_policy)};
  };

  std::vector<ReliabilityCurvePoint> curve;
  for (std::size_t idx = 0; idx < options.participant_counts.size(); ++idx) {
    const std::size_t k = options.participant_counts[idx];
    ReliabilityCurvePoint point;
    point.participants = k;
    point.trials = options.trials;
    if (k == ns) {
      std::tie(point.discriminability, point.mean_ci) = evaluate(screened);
      curve.push_back(point);
      continue;
    }
    Rng rng(derive_seed(options.seed, k));
    std::vector<std::size_t> order(ns);
    double disc_sum = 0.0;
    double ci_sum = 0.0;
    for (std::size_t t = 0; t < options.trials; ++t) {
      for (std::size_t i = 0; i < ns; ++i) order[i] = i;
      // Partial Fisher-Yates: the first k slots are a uniform subset.
      for (std::size_t i = 0; i < k; ++i) {
        const auto pick = i + static_cast<std::size_t>(rng.below(ns - i));
        std::swap(order[i], order[pick]);
      }
      std::vector<std::size_t> rows(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
      std::sort(rows.begin(), rows.end());
      const auto [disc, ci] = evaluate(screened.select_subjects(rows));
      disc_sum += disc;
      ci_sum += ci;
    }
    point.discriminability = disc_sum / static_cast<double>(options.trials);
    point.mean_ci = ci_sum / static_cast<double>(options.trials);
    curve.push_back(point);
  }
  return curve;
}

}  // namespace vqs
