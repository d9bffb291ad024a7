#include "vqs/ratings.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include <boost/math/distributions/normal.hpp>

#include "vqs/common.hpp"

namespace vqs {

namespace {

void require_unique(const std::vector<std::string>& ids, const char* what) {
  std::unordered_set<std::string> seen;
  for (const auto& id : ids) {
    if (!seen.insert(id).second) {
      throw Error(ErrorKind::invalid_argument, std::string("duplicate ") + what + " id '" + id + "'");
    }
  }
}

struct Moments {
  std::size_t n = 0;
  double mean = 0.0;
  double sample_sd = 0.0;
  double kurtosis = std::numeric_limits<double>::quiet_NaN();
};

Moments moments(const std::vector<double>& xs) {
  Moments m;
  m.n = xs.size();
  if (m.n == 0) return m;
  double sum = 0.0;
  for (double x : xs) sum += x;
  m.mean = sum / static_cast<double>(m.n);
  double m2 = 0.0;
  double m4 = 0.0;
  for (double x : xs) {
    const double d = x - m.mean;
    m2 += d * d;
    m4 += d * d * d * d;
  }
  if (m.n > 1) m.sample_sd = std::sqrt(m2 / static_cast<double>(m.n - 1));
  const double n = static_cast<double>(m.n);
  if (m2 > 0.0) m.kurtosis = (m4 / n) / ((m2 / n) * (m2 / n));
  return m;
}

}  // namespace

RatingMatrix::RatingMatrix(std::vector<std::string> subjects, std::vector<std::string> videos,
                           std::vector<double> scores, std::vector<std::uint8_t> present,
                           ScaleBounds scale)
    : subjects_(std::move(subjects)),
      videos_(std::move(videos)),
      scores_(std::move(scores)),
      present_(std::move(present)),
      scale_(scale) {
  if (!(scale_.min < scale_.max)) {
    throw Error(ErrorKind::invalid_argument, "scale minimum must be below maximum");
  }
  const std::size_t cells = subjects_.size() * videos_.size();
  if (scores_.size() != cells || present_.size() != cells) {
    throw Error(ErrorKind::shape_mismatch, "score table size does not match " +
                                               std::to_string(subjects_.size()) + " subjects x " +
                                               std::to_string(videos_.size()) + " videos");
  }
  require_unique(subjects_, "subject");
  require_unique(videos_, "video");
  for (std::size_t k = 0; k < cells; ++k) {
    if (!present_[k]) continue;
    const double s = scores_[k];
    if (!std::isfinite(s) || s < scale_.min || s > scale_.max) {
      throw Error(ErrorKind::invalid_argument,
                  "score " + std::to_string(s) + " of subject '" + subjects_[k / videos_.size()] +
                      "' on video '" + videos_[k % videos_.size()] + "' is outside the scale");
    }
  }
}

RatingMatrix RatingMatrix::full(const std::vector<std::vector<double>>& rows, ScaleBounds scale) {
  std::vector<std::string> subjects;
  std::vector<std::string> videos;
  const std::size_t n_videos = rows.empty() ? 0 : rows.front().size();
  for (std::size_t i = 0; i < rows.size(); ++i) subjects.push_back("s" + std::to_string(i));
  for (std::size_t j = 0; j < n_videos; ++j) videos.push_back("v" + std::to_string(j));
  std::vector<double> scores;
  for (const auto& row : rows) {
    if (row.size() != n_videos) throw Error(ErrorKind::shape_mismatch, "ragged rating rows");
    scores.insert(scores.end(), row.begin(), row.end());
  }
  std::vector<std::uint8_t> present(scores.size(), 1);
  return RatingMatrix(std::move(subjects), std::move(videos), std::move(scores), std::move(present),
                      scale);
}

std::size_t RatingMatrix::rating_count() const {
  return static_cast<std::size_t>(std::count(present_.begin(), present_.end(), std::uint8_t{1}));
}

std::optional<double> RatingMatrix::at(std::size_t subject, std::size_t video) const {
  if (subject >= subjects_.size() || video >= videos_.size()) {
    throw Error(ErrorKind::invalid_argument, "rating index out of range");
  }
  if (!present(subject, video)) return std::nullopt;
  return score(subject, video);
}

RatingMatrix RatingMatrix::select_subjects(const std::vector<std::size_t>& rows) const {
  std::vector<std::string> subjects;
  std::vector<double> scores;
  std::vector<std::uint8_t> present;
  const std::size_t nv = videos_.size();
  for (std::size_t r : rows) {
    if (r >= subjects_.size()) throw Error(ErrorKind::invalid_argument, "subject row out of range");
    subjects.push_back(subjects_[r]);
    scores.insert(scores.end(), scores_.begin() + static_cast<std::ptrdiff_t>(r * nv),
                  scores_.begin() + static_cast<std::ptrdiff_t>((r + 1) * nv));
    present.insert(present.end(), present_.begin() + static_cast<std::ptrdiff_t>(r * nv),
                   present_.begin() + static_cast<std::ptrdiff_t>((r + 1) * nv));
  }
  return RatingMatrix(std::move(subjects), videos_, std::move(scores), std::move(present), scale_);
}

std::vector<double> ScoreTable::column(std::size_t video) const {
  std::vector<double> out;
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    if (has(i, video)) out.push_back(value(i, video));
  }
  return out;
}

SubjectStats subject_stats(const RatingMatrix& raw) {
  SubjectStats stats;
  std::vector<double> xs;
  for (std::size_t i = 0; i < raw.subject_count(); ++i) {
    xs.clear();
    for (std::size_t j = 0; j < raw.video_count(); ++j) {
      if (raw.present(i, j)) xs.push_back(raw.score(i, j));
    }
    if (xs.size() < 2) {
      throw Error(ErrorKind::degenerate_subject,
                  "subject '" + raw.subjects()[i] + "' has " + std::to_string(xs.size()) +
                      " rating(s); at least 2 are required");
    }
    const Moments m = moments(xs);
    stats.mean.push_back(m.mean);
    stats.stddev.push_back(m.sample_sd);
    stats.count.push_back(m.n);
  }
  return stats;
}

void ScreeningPolicy::validate() const {
  const bool positive = kurtosis_low > 0 && kurtosis_high > 0 && normal_multiplier > 0 &&
                        non_normal_multiplier > 0 && reject_fraction > 0 && asymmetry_limit > 0;
  if (!positive) throw Error(ErrorKind::invalid_argument, "screening thresholds must be positive");
  if (!(kurtosis_low < kurtosis_high)) {
    throw Error(ErrorKind::invalid_argument, "kurtosis window lower bound must be below upper bound");
  }
}

std::size_t ScreeningReport::rejected_count() const {
  return static_cast<std::size_t>(
      std::count_if(subjects.begin(), subjects.end(), [](const auto& s) { return s.rejected; }));
}

ScreeningReport screen_subjects(const RatingMatrix& raw, const ScreeningPolicy& policy) {
  policy.validate();
  if (raw.subject_count() == 0 || raw.video_count() == 0 || raw.rating_count() == 0) {
    throw Error(ErrorKind::invalid_argument, "cannot screen an empty rating matrix");
  }
  const std::size_t ns = raw.subject_count();
  const std::size_t nv = raw.video_count();

  ScreeningReport report;
  report.subjects.resize(ns);
  for (std::size_t i = 0; i < ns; ++i) report.subjects[i].subject = raw.subjects()[i];
  report.video_kurtosis.resize(nv);

  std::vector<double> column;
  for (std::size_t j = 0; j < nv; ++j) {
    column.clear();
    for (std::size_t i = 0; i < ns; ++i) {
      if (raw.present(i, j)) column.push_back(raw.score(i, j));
    }
    const Moments m = moments(column);
    report.video_kurtosis[j] = m.kurtosis;
    for (std::size_t i = 0; i < ns; ++i) {
      if (raw.present(i, j)) ++report.subjects[i].rated;
    }
    // No spread means no outliers on this video.
    if (!(m.sample_sd > 0.0)) continue;
    const bool normal = m.kurtosis >= policy.kurtosis_low && m.kurtosis <= policy.kurtosis_high;
    const double band = (normal ? policy.normal_multiplier : policy.non_normal_multiplier) * m.sample_sd;
    for (std::size_t i = 0; i < ns; ++i) {
      if (!raw.present(i, j)) continue;
      const double r = raw.score(i, j);
      if (r >= m.mean + band) ++report.subjects[i].above;
      if (r <= m.mean - band) ++report.subjects[i].below;
    }
  }

  for (auto& s : report.subjects) {
    const std::size_t flagged = s.above + s.below;
    if (flagged == 0 || s.rated == 0) continue;
    const double fraction = static_cast<double>(flagged) / static_cast<double>(s.rated);
    const double asymmetry =
        std::abs(static_cast<double>(s.above) - static_cast<double>(s.below)) / static_cast<double>(flagged);
    s.rejected = fraction > policy.reject_fraction && asymmetry < policy.asymmetry_limit;
  }
  return report;
}

RatingMatrix exclude_rejected(const RatingMatrix& raw, const ScreeningReport& report) {
  if (report.subjects.size() != raw.subject_count()) {
    throw Error(ErrorKind::shape_mismatch, "screening report does not match the rating matrix");
  }
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < raw.subject_count(); ++i) {
    if (!report.subjects[i].rejected) keep.push_back(i);
  }
  return raw.select_subjects(keep);
}

ScoreTable zscores(const RatingMatrix& raw, const SubjectStats& stats) {
  if (stats.mean.size() != raw.subject_count() || stats.stddev.size() != raw.subject_count()) {
    throw Error(ErrorKind::shape_mismatch, "subject statistics do not match the rating matrix");
  }
  ScoreTable table;
  table.subjects = raw.subjects();
  table.videos = raw.videos();
  table.values.assign(raw.subject_count() * raw.video_count(), 0.0);
  table.present.assign(table.values.size(), 0);
  for (std::size_t i = 0; i < raw.subject_count(); ++i) {
    const double sigma = stats.stddev[i];
    if (!(sigma > 0.0)) {
      throw Error(ErrorKind::constant_rater,
                  "subject '" + raw.subjects()[i] + "' gave identical scores (sigma = 0)");
    }
    for (std::size_t j = 0; j < raw.video_count(); ++j) {
      if (!raw.present(i, j)) continue;
      const std::size_t k = i * raw.video_count() + j;
      table.values[k] = (raw.score(i, j) - stats.mean[i]) / sigma;
      table.present[k] = 1;
    }
  }
  return table;
}

ScoreTable zscore_rescale(const RatingMatrix& raw, const SubjectStats& stats) {
  ScoreTable table = zscores(raw, stats);
  for (std::size_t k = 0; k < table.values.size(); ++k) {
    if (!table.present[k]) continue;
    table.values[k] = std::clamp(100.0 * (table.values[k] + 3.0) / 6.0, 0.0, 100.0);
  }
  return table;
}

MosTable compute_mos(const ScoreTable& rescaled, double level) {
  const double z = z_for_level(level);
  MosTable table;
  table.level = level;
  for (std::size_t j = 0; j < rescaled.videos.size(); ++j) {
    const std::vector<double> column = rescaled.column(j);
    if (column.empty()) {
      throw Error(ErrorKind::missing_data, "video '" + rescaled.videos[j] + "' has no ratings");
    }
    const Moments m = moments(column);
    MosEntry e;
    e.video = rescaled.videos[j];
    e.mos = m.mean;
    e.stddev = m.sample_sd;
    e.count = m.n;
    e.ci = m.n > 1 ? z * m.sample_sd / std::sqrt(static_cast<double>(m.n)) : 0.0;
    table.entries.push_back(std::move(e));
  }
  return table;
}

MosTable mos_from_ratings(const RatingMatrix& raw, double level) {
  return compute_mos(zscore_rescale(raw, subject_stats(raw)), level);
}

double z_for_level(double level) {
  if (!(level > 0.0 && level < 1.0)) {
    throw Error(ErrorKind::invalid_argument, "confidence level must lie in (0, 1)");
  }
  const boost::math::normal_distribution<double> standard;
  return boost::math::quantile(standard, 0.5 + level / 2.0);
}

}  // namespace vqs
