#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace vqs {

struct ScaleBounds {
  double min = 1.0;
  double max = 10.0;
};

// Subject x video opinion scores with a presence mask. Immutable once built;
// the constructor enforces the identifier and scale invariants.
class RatingMatrix {
 public:
  RatingMatrix(std::vector<std::string> subjects, std::vector<std::string> videos,
               std::vector<double> scores, std::vector<std::uint8_t> present,
               ScaleBounds scale = {});

  // Fully populated matrix with generated ids "s<i>" / "v<j>".
  static RatingMatrix full(const std::vector<std::vector<double>>& rows, ScaleBounds scale = {});

  std::size_t subject_count() const { return subjects_.size(); }
  std::size_t video_count() const { return videos_.size(); }
  std::size_t rating_count() const;

  const std::vector<std::string>& subjects() const { return subjects_; }
  const std::vector<std::string>& videos() const { return videos_; }
  const ScaleBounds& scale() const { return scale_; }

  bool present(std::size_t subject, std::size_t video) const {
    return present_[subject * videos_.size() + video] != 0;
  }
  // Undefined when the entry is missing; check present() first.
  double score(std::size_t subject, std::size_t video) const {
    return scores_[subject * videos_.size() + video];
  }
  std::optional<double> at(std::size_t subject, std::size_t video) const;

  // Copy restricted to the given subject rows, in the given order.
  RatingMatrix select_subjects(const std::vector<std::size_t>& rows) const;

 private:
  std::vector<std::string> subjects_;
  std::vector<std::string> videos_;
  std::vector<double> scores_;
  std::vector<std::uint8_t> present_;
  ScaleBounds scale_;
};

struct SubjectStats {
  std::vector<double> mean;
  std::vector<double> stddev;  // sample (n-1) estimator
  std::vector<std::size_t> count;
};

struct ScreeningPolicy {
  double kurtosis_low = 2.0;
  double kurtosis_high = 4.0;
  double normal_multiplier = 2.0;
  double non_normal_multiplier = 4.47213595499957939282;  // sqrt(20)
  double reject_fraction = 0.05;
  double asymmetry_limit = 0.3;

  void validate() const;
};

struct SubjectScreening {
  std::string subject;
  std::size_t above = 0;  // P
  std::size_t below = 0;  // Q
  std::size_t rated = 0;
  bool rejected = false;
};

struct ScreeningReport {
  std::vector<SubjectScreening> subjects;
  std::vector<double> video_kurtosis;  // NaN where the video has no spread

  std::size_t rejected_count() const;
};

// Per-present-entry table sharing the shape and mask of the source matrix.
struct ScoreTable {
  std::vector<std::string> subjects;
  std::vector<std::string> videos;
  std::vector<double> values;
  std::vector<std::uint8_t> present;

  bool has(std::size_t subject, std::size_t video) const {
    return present[subject * videos.size() + video] != 0;
  }
  double value(std::size_t subject, std::size_t video) const {
    return values[subject * videos.size() + video];
  }
  // Present values of one video, in subject order.
  std::vector<double> column(std::size_t video) const;
};

struct MosEntry {
  std::string video;
  double mos = 0.0;
  double stddev = 0.0;
  std::size_t count = 0;
  double ci = 0.0;  // half-width at the table's confidence level
};

struct MosTable {
  std::vector<MosEntry> entries;
  double level = 0.95;
};

SubjectStats subject_stats(const RatingMatrix& raw);

ScreeningReport screen_subjects(const RatingMatrix& raw, const ScreeningPolicy& policy = {});

// Drops the subjects flagged in `report`.
RatingMatrix exclude_rejected(const RatingMatrix& raw, const ScreeningReport& report);

// Unclipped z_ij. Throws constant_rater for a subject with sigma == 0.
ScoreTable zscores(const RatingMatrix& raw, const SubjectStats& stats);

// z'_ij = 100 (z_ij + 3) / 6, clipped to [0, 100].
ScoreTable zscore_rescale(const RatingMatrix& raw, const SubjectStats& stats);

// Per-video MOS over present rescaled entries. Videos with a single rating get
// stddev = ci = 0.
MosTable compute_mos(const ScoreTable& rescaled, double level = 0.95);

// subject_stats -> zscore_rescale -> compute_mos.
MosTable mos_from_ratings(const RatingMatrix& raw, double level = 0.95);

// Two-sided standard normal quantile for a confidence level, e.g. 0.95 -> 1.959964.
double z_for_level(double level);

}  // namespace vqs
