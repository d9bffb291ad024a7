#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "vqs/common.hpp"
#include "vqs/metrics.hpp"
#include "vqs/ratings.hpp"

namespace vqs {

struct VideoRecord {
  std::string id;
  std::string source;
  std::string bitrate;
  std::vector<View> views;
};

// Study description: which videos exist, which source each one was encoded
// from, who rated, and the rating scale.
struct StudyManifest {
  ScaleBounds scale;
  std::vector<std::string> subjects;
  std::vector<VideoRecord> videos;
  nlohmann::json metadata = nlohmann::json::object();

  void validate() const;
  const VideoRecord* find(const std::string& id) const;

  static StudyManifest from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
  static StudyManifest load(const std::string& path);
};

struct IngestIssue {
  std::size_t row = 0;   // 1-based data row, header excluded
  std::size_t line = 0;  // 1-based file line
  std::string kind;      // parse | out_of_scale | unknown_video | unknown_subject | duplicate | bad_view
  std::string message;
};

// Carries every row-level problem found in one file.
class IngestError : public Error {
 public:
  IngestError(const std::string& source, std::vector<IngestIssue> issues);
  const std::vector<IngestIssue>& issues() const { return issues_; }

 private:
  std::vector<IngestIssue> issues_;
};

struct RatingsIngest {
  std::optional<RatingMatrix> matrix;
  std::vector<IngestIssue> issues;
  std::size_t rows = 0;
  std::size_t loaded = 0;
  std::size_t rejected = 0;

  bool ok() const { return issues.empty(); }
};

// `subject_id,video_id,score` rows. With a manifest, its scale, video order and
// subject roster are used and every id is checked against it.
RatingsIngest ingest_ratings(std::istream& in, const StudyManifest* manifest = nullptr);
RatingsIngest ingest_ratings_file(const std::string& path, const StudyManifest* manifest = nullptr);

struct PredictionsIngest {
  std::map<View, PredictionSet> views;
  std::vector<IngestIssue> issues;
  std::size_t rows = 0;
  std::size_t loaded = 0;
  std::size_t rejected = 0;

  bool ok() const { return issues.empty(); }
};

// `video_id,view,score` rows.
PredictionsIngest ingest_predictions(std::istream& in, const StudyManifest* manifest = nullptr);
PredictionsIngest ingest_predictions_file(const std::string& path, const StudyManifest* manifest = nullptr);

// `video_id,mos,std,n,ci`. Values are written in shortest round-trip form, so
// reading a written table back reproduces it exactly.
void write_mos_csv(std::ostream& out, const MosTable& mos);
MosTable read_mos_csv(std::istream& in, double level = 0.95);
MosTable read_mos_file(const std::string& path, double level = 0.95);

std::string format_number(double value);
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

nlohmann::json to_json(const MosTable& mos);
nlohmann::json to_json(const EvalReport& report);
nlohmann::json to_json(const ScreeningReport& report);
nlohmann::json to_json(const IngestIssue& issue);

}  // namespace vqs
