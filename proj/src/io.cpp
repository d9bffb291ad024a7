#include "vqs/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_map>

namespace vqs {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    fields.push_back(trim(std::string_view(line).substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return fields;
}

std::optional<double> parse_number(const std::string& text) {
  double value = 0.0;
  const char* first = text.data();
  const char* last = first + text.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || !std::isfinite(value)) return std::nullopt;
  return value;
}

struct Table {
  std::vector<std::string> header;
  struct Row {
    std::size_t row;
    std::size_t line;
    std::vector<std::string> fields;
  };
  std::vector<Row> rows;
};

// Blank lines are skipped; they are not rows.
Table read_table(std::istream& in, const std::vector<std::string>& expected_header, const char* what) {
  Table table;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
    if (trim(line).empty()) continue;
    if (!have_header) {
      table.header = split_fields(line);
      if (table.header != expected_header) {
        std::string want;
        for (const auto& h : expected_header) want += (want.empty() ? "" : ",") + h;
        throw Error(ErrorKind::ingest, std::string(what) + ": expected header '" + want + "'");
      }
      have_header = true;
      continue;
    }
    table.rows.push_back({table.rows.size() + 1, line_no, split_fields(line)});
  }
  if (!have_header) throw Error(ErrorKind::ingest, std::string(what) + ": file is empty");
  return table;
}

IngestIssue issue(const Table::Row& r, std::string kind, std::string message) {
  return IngestIssue{r.row, r.line, std::move(kind),
                     "row " + std::to_string(r.row) + " (line " + std::to_string(r.line) + "): " + std::move(message)};
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open '" + path + "'");
  return in;
}

}  // namespace

IngestError::IngestError(const std::string& source, std::vector<IngestIssue> issues)
    : Error(ErrorKind::ingest, source + ": " + std::to_string(issues.size()) + " invalid row(s)" +
                                   (issues.empty() ? "" : "; first: " + issues.front().message)),
      issues_(std::move(issues)) {}

// ---------------------------------------------------------------------------

void StudyManifest::validate() const {
  if (!(scale.min < scale.max)) throw Error(ErrorKind::invalid_argument, "manifest scale minimum must be below maximum");
  std::set<std::string> ids;
  for (const auto& v : videos) {
    if (v.id.empty()) throw Error(ErrorKind::invalid_argument, "manifest video with an empty id");
    if (!ids.insert(v.id).second) throw Error(ErrorKind::invalid_argument, "manifest lists video '" + v.id + "' twice");
  }
  std::set<std::string> roster;
  for (const auto& s : subjects) {
    if (!roster.insert(s).second) throw Error(ErrorKind::invalid_argument, "manifest lists subject '" + s + "' twice");
  }
}

const VideoRecord* StudyManifest::find(const std::string& id) const {
  for (const auto& v : videos) {
    if (v.id == id) return &v;
  }
  return nullptr;
}

StudyManifest StudyManifest::from_json(const nlohmann::json& doc) {
  StudyManifest m;
  try {
    if (doc.contains("scale")) {
      m.scale.min = doc.at("scale").at("min").get<double>();
      m.scale.max = doc.at("scale").at("max").get<double>();
    }
    if (doc.contains("subjects")) m.subjects = doc.at("subjects").get<std::vector<std::string>>();
    for (const auto& v : doc.at("videos")) {
      VideoRecord r;
      r.id = v.at("id").get<std::string>();
      r.source = v.value("source", r.id);
      r.bitrate = v.value("bitrate", "");
      for (const auto& view : v.value("views", std::vector<std::string>{"left", "right"})) r.views.push_back(parse_view(view));
      m.videos.push_back(std::move(r));
    }
    if (doc.contains("metadata")) m.metadata = doc.at("metadata");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ingest, std::string("malformed manifest: ") + e.what());
  }
  m.validate();
  return m;
}

nlohmann::json StudyManifest::to_json() const {
  nlohmann::json doc;
  doc["scale"] = {{"min", scale.min}, {"max", scale.max}};
  doc["subjects"] = subjects;
  doc["videos"] = nlohmann::json::array();
  for (const auto& v : videos) {
    std::vector<std::string> views;
    for (View view : v.views) views.emplace_back(vqs::to_string(view));
    doc["videos"].push_back({{"id", v.id}, {"source", v.source}, {"bitrate", v.bitrate}, {"views", views}});
  }
  doc["metadata"] = metadata;
  return doc;
}

StudyManifest StudyManifest::load(const std::string& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ingest, "manifest '" + path + "' is not valid JSON: " + e.what());
  }
  return from_json(doc);
}

// ---------------------------------------------------------------------------

RatingsIngest ingest_ratings(std::istream& in, const StudyManifest* manifest) {
  const Table table = read_table(in, {"subject_id", "video_id", "score"}, "ratings");
  const ScaleBounds scale = manifest ? manifest->scale : ScaleBounds{};

  RatingsIngest result;
  result.rows = table.rows.size();

  std::vector<std::string> subjects;
  std::vector<std::string> videos;
  std::unordered_map<std::string, std::size_t> subject_index;
  std::unordered_map<std::string, std::size_t> video_index;
  const bool fixed_roster = manifest && !manifest->subjects.empty();
  if (manifest) {
    for (const auto& v : manifest->videos) video_index.emplace(v.id, videos.size()), videos.push_back(v.id);
  }
  if (fixed_roster) {
    for (const auto& s : manifest->subjects) subject_index.emplace(s, subjects.size()), subjects.push_back(s);
  }

  struct Accepted {
    std::size_t subject;
    std::size_t video;
    double score;
  };
  std::vector<Accepted> accepted;
  std::map<std::pair<std::string, std::string>, std::size_t> first_row;

  for (const auto& r : table.rows) {
    if (r.fields.size() != 3) {
      result.issues.push_back(issue(r, "parse", "expected 3 fields, found " + std::to_string(r.fields.size())));
      continue;
    }
    const std::string& subject = r.fields[0];
    const std::string& video = r.fields[1];
    if (subject.empty() || video.empty()) {
      result.issues.push_back(issue(r, "parse", "empty subject or video id"));
      continue;
    }
    const auto score = parse_number(r.fields[2]);
    if (!score) {
      result.issues.push_back(issue(r, "parse", "score '" + r.fields[2] + "' is not a number"));
      continue;
    }
    if (*score < scale.min || *score > scale.max) {
      result.issues.push_back(issue(r, "out_of_scale", "score " + r.fields[2] + " is outside the scale [" +
                                                           format_number(scale.min) + ", " + format_number(scale.max) + "]"));
      continue;
    }
    if (manifest && !video_index.contains(video)) {
      result.issues.push_back(issue(r, "unknown_video", "video '" + video + "' is not in the manifest"));
      continue;
    }
    if (fixed_roster && !subject_index.contains(subject)) {
      result.issues.push_back(issue(r, "unknown_subject", "subject '" + subject + "' is not in the manifest roster"));
      continue;
    }
    auto [it, inserted] = first_row.emplace(std::pair{subject, video}, r.row);
    if (!inserted) {
      result.issues.push_back(issue(r, "duplicate", "subject '" + subject + "' rated video '" + video +
                                                        "' again (first at row " + std::to_string(it->second) + ")"));
      continue;
    }
    if (!subject_index.contains(subject)) subject_index.emplace(subject, subjects.size()), subjects.push_back(subject);
    if (!video_index.contains(video)) video_index.emplace(video, videos.size()), videos.push_back(video);
    accepted.push_back({subject_index.at(subject), video_index.at(video), *score});
  }
  result.loaded = accepted.size();
  result.rejected = result.rows - result.loaded;
  if (!result.ok()) return result;

  std::vector<double> scores(subjects.size() * videos.size(), 0.0);
  std::vector<std::uint8_t> present(scores.size(), 0);
  for (const auto& a : accepted) {
    scores[a.subject * videos.size() + a.video] = a.score;
    present[a.subject * videos.size() + a.video] = 1;
  }
  result.matrix.emplace(std::move(subjects), std::move(videos), std::move(scores), std::move(present), scale);
  return result;
}

RatingsIngest ingest_ratings_file(const std::string& path, const StudyManifest* manifest) {
  auto in = open_input(path);
  return ingest_ratings(in, manifest);
}

PredictionsIngest ingest_predictions(std::istream& in, const StudyManifest* manifest) {
  const Table table = read_table(in, {"video_id", "view", "score"}, "predictions");
  PredictionsIngest result;
  result.rows = table.rows.size();
  std::map<std::pair<std::string, View>, std::size_t> first_row;
  for (const auto& r : table.rows) {
    if (r.fields.size() != 3) {
      result.issues.push_back(issue(r, "parse", "expected 3 fields, found " + std::to_string(r.fields.size())));
      continue;
    }
    const std::string& video = r.fields[0];
    View view;
    try {
      view = parse_view(r.fields[1]);
    } catch (const Error&) {
      result.issues.push_back(issue(r, "bad_view", "view '" + r.fields[1] + "' is not left, right or fusion"));
      continue;
    }
    const auto score = parse_number(r.fields[2]);
    if (!score) {
      result.issues.push_back(issue(r, "parse", "score '" + r.fields[2] + "' is not a number"));
      continue;
    }
    if (video.empty()) {
      result.issues.push_back(issue(r, "parse", "empty video id"));
      continue;
    }
    if (manifest && !manifest->find(video)) {
      result.issues.push_back(issue(r, "unknown_video", "video '" + video + "' is not in the manifest"));
      continue;
    }
    auto [it, inserted] = first_row.emplace(std::pair{video, view}, r.row);
    if (!inserted) {
      result.issues.push_back(issue(r, "duplicate", std::string(to_string(view)) + " prediction for video '" + video +
                                                        "' repeated (first at row " + std::to_string(it->second) + ")"));
      continue;
    }
    auto& set = result.views[view];
    set.view = view;
    set.videos.push_back(video);
    set.scores.push_back(*score);
    ++result.loaded;
  }
  result.rejected = result.rows - result.loaded;
  return result;
}

PredictionsIngest ingest_predictions_file(const std::string& path, const StudyManifest* manifest) {
  auto in = open_input(path);
  return ingest_predictions(in, manifest);
}

// ---------------------------------------------------------------------------

std::string format_number(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc()) throw Error(ErrorKind::io, "cannot format number");
  return std::string(buf, ptr);
}

void write_mos_csv(std::ostream& out, const MosTable& mos) {
  out << "video_id,mos,std,n,ci\n";
  for (const auto& e : mos.entries) {
    out << e.video << ',' << format_number(e.mos) << ',' << format_number(e.stddev) << ',' << e.count << ','
        << format_number(e.ci) << '\n';
  }
}

MosTable read_mos_csv(std::istream& in, double level) {
  const Table table = read_table(in, {"video_id", "mos", "std", "n", "ci"}, "MOS table");
  MosTable mos;
  mos.level = level;
  std::vector<IngestIssue> issues;
  std::set<std::string> seen;
  for (const auto& r : table.rows) {
    if (r.fields.size() != 5) {
      issues.push_back(issue(r, "parse", "expected 5 fields, found " + std::to_string(r.fields.size())));
      continue;
    }
    const auto m = parse_number(r.fields[1]);
    const auto s = parse_number(r.fields[2]);
    const auto n = parse_number(r.fields[3]);
    const auto c = parse_number(r.fields[4]);
    if (!m || !s || !n || !c || *n < 0 || std::floor(*n) != *n) {
      issues.push_back(issue(r, "parse", "malformed MOS row"));
      continue;
    }
    if (!seen.insert(r.fields[0]).second) {
      issues.push_back(issue(r, "duplicate", "video '" + r.fields[0] + "' listed twice"));
      continue;
    }
    mos.entries.push_back({r.fields[0], *m, *s, static_cast<std::size_t>(*n), *c});
  }
  if (!issues.empty()) throw IngestError("MOS table", std::move(issues));
  return mos;
}

MosTable read_mos_file(const std::string& path, double level) {
  auto in = open_input(path);
  return read_mos_csv(in, level);
}

std::string read_file(const std::string& path) {
  auto in = open_input(path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot open '" + path + "' for writing");
  out << contents;
  if (!out) throw Error(ErrorKind::io, "failed writing '" + path + "'");
}

// ---------------------------------------------------------------------------

nlohmann::json to_json(const MosTable& mos) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& e : mos.entries) {
    rows.push_back({{"video_id", e.video}, {"mos", e.mos}, {"std", e.stddev}, {"n", e.count}, {"ci", e.ci}});
  }
  return rows;
}

nlohmann::json to_json(const EvalReport& report) {
  return {{"view", to_string(report.view)}, {"n", report.count},         {"srcc", report.srcc},
          {"krcc", report.krcc},            {"plcc", report.plcc},       {"rmse", report.rmse},
          {"rmse_raw", report.rmse_raw},    {"beta", report.beta},       {"warnings", report.warnings},
          {"plcc_unmapped", report.plcc_unmapped}};
}

nlohmann::json to_json(const ScreeningReport& report) {
  nlohmann::json subjects = nlohmann::json::array();
  for (const auto& s : report.subjects) {
    subjects.push_back({{"subject_id", s.subject}, {"p", s.above}, {"q", s.below}, {"rated", s.rated},
                        {"rejected", s.rejected}});
  }
  nlohmann::json kurtosis = nlohmann::json::array();
  for (double k : report.video_kurtosis) kurtosis.push_back(std::isfinite(k) ? nlohmann::json(k) : nlohmann::json());
  return {{"subjects", subjects}, {"video_kurtosis", kurtosis}, {"rejected_count", report.rejected_count()}};
}

nlohmann::json to_json(const IngestIssue& i) {
  return {{"row", i.row}, {"line", i.line}, {"kind", i.kind}, {"message", i.message}};
}

}  // namespace vqs
