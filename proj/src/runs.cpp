#include "vqs/runs.hpp"

#include <cstdio>
#include <filesystem>
#include <set>
#include <sstream>

#include "vqs/common.hpp"
#include "vqs/fusion.hpp"
#include "vqs/io.hpp"
#include "vqs/reliability.hpp"

namespace vqs {

namespace {

namespace fs = std::filesystem;

std::optional<StudyManifest> load_manifest(const RunConfig& config) {
  if (!config.manifest) return std::nullopt;
  return StudyManifest::load(*config.manifest);
}

const std::string& require_path(const std::optional<std::string>& path, const char* flag, const RunConfig& config) {
  if (!path) throw Error(ErrorKind::invalid_argument, "'" + config.command + "' needs " + flag);
  return *path;
}

RatingMatrix load_ratings(const RunConfig& config, const std::optional<StudyManifest>& manifest) {
  const std::string& path = require_path(config.ratings, "--ratings", config);
  RatingsIngest ingest = ingest_ratings_file(path, manifest ? &*manifest : nullptr);
  if (!ingest.ok()) throw IngestError(path, std::move(ingest.issues));
  return std::move(*ingest.matrix);
}

nlohmann::json header(const RunConfig& config) {
  return {{"command", config.command}, {"seed", config.seed}, {"config_hash", config.hash()}};
}

std::string out_path(const RunConfig& config, const std::string& name) {
  fs::create_directories(config.out);
  return (fs::path(config.out) / name).string();
}

void write_json(const RunConfig& config, const std::string& name, const nlohmann::json& doc) {
  write_file(out_path(config, name), doc.dump(2) + "\n");
}

struct ScreenedStudy {
  RatingMatrix raw;
  ScreeningReport screening;
  RatingMatrix kept;
};

ScreenedStudy screen_study(const RunConfig& config) {
  const auto manifest = load_manifest(config);
  RatingMatrix raw = load_ratings(config, manifest);
  ScreeningReport report = screen_subjects(raw, config.policy);
  RatingMatrix kept = exclude_rejected(raw, report);
  return {std::move(raw), std::move(report), std::move(kept)};
}

nlohmann::json rejected_ids(const ScreeningReport& report) {
  nlohmann::json ids = nlohmann::json::array();
  for (const auto& s : report.subjects) {
    if (s.rejected) ids.push_back(s.subject);
  }
  return ids;
}

}  // namespace

nlohmann::json RunConfig::to_json() const {
  auto content_hash = [](const std::optional<std::string>& path) -> nlohmann::json {
    if (!path) return nullptr;
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(read_file(*path))));
    return buf;
  };
  std::vector<std::string> view_names;
  for (View v : views) view_names.emplace_back(to_string(v));
  return {
      {"command", command},
      {"inputs",
       {{"ratings", content_hash(ratings)},
        {"predictions", content_hash(predictions)},
        {"manifest", content_hash(manifest)},
        {"mos", content_hash(mos)}}},
      {"seed", seed},
      {"alpha", alpha},
      {"level", level},
      {"policy",
       {{"kurtosis_low", policy.kurtosis_low},
        {"kurtosis_high", policy.kurtosis_high},
        {"normal_multiplier", policy.normal_multiplier},
        {"non_normal_multiplier", policy.non_normal_multiplier},
        {"reject_fraction", policy.reject_fraction},
        {"asymmetry_limit", policy.asymmetry_limit}}},
      {"ratio", {ratio.train, ratio.test}},
      {"group_by_source", group_by_source},
      {"participant_counts", participant_counts},
      {"trials", trials},
      {"views", view_names},
      {"ci_spread_only", ci_spread_only},
      {"frames", frames},
      {"size", size},
  };
}

std::string RunConfig::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(to_json().dump())));
  return buf;
}

std::string run_mos(const RunConfig& config) {
  const ScreenedStudy study = screen_study(config);
  const MosTable mos = mos_from_ratings(study.kept, config.level);

  std::ostringstream csv;
  write_mos_csv(csv, mos);
  write_file(out_path(config, "mos.csv"), csv.str());

  nlohmann::json doc = header(config);
  doc["level"] = config.level;
  doc["ratings"] = study.raw.rating_count();
  doc["subjects"] = study.kept.subject_count();
  doc["rejected_subjects"] = rejected_ids(study.screening);
  doc["videos"] = to_json(mos);
  write_json(config, "mos.json", doc);

  return "mos: " + std::to_string(mos.entries.size()) + " videos, " + std::to_string(study.kept.subject_count()) +
         " subjects kept, " + std::to_string(study.screening.rejected_count()) + " rejected";
}

std::string run_screen(const RunConfig& config) {
  const ScreenedStudy study = screen_study(config);
  std::ostringstream csv;
  csv << "subject_id,p,q,rated,rejected\n";
  for (const auto& s : study.screening.subjects) {
    csv << s.subject << ',' << s.above << ',' << s.below << ',' << s.rated << ',' << (s.rejected ? 1 : 0) << '\n';
  }
  write_file(out_path(config, "screening.csv"), csv.str());

  nlohmann::json doc = header(config);
  doc["screening"] = to_json(study.screening);
  doc["videos"] = study.raw.videos();
  write_json(config, "screening.json", doc);
  return "screen: " + std::to_string(study.screening.rejected_count()) + " of " +
         std::to_string(study.raw.subject_count()) + " subjects rejected";
}

std::string run_reliability(const RunConfig& config) {
  const ScreenedStudy study = screen_study(config);
  SubsampleOptions options;
  options.participant_counts = config.participant_counts;
  if (options.participant_counts.empty()) {
    for (std::size_t k = 2; k <= study.kept.subject_count(); ++k) options.participant_counts.push_back(k);
  }
  options.trials = config.trials;
  options.alpha = config.alpha;
  options.level = config.level;
  options.seed = config.seed;
  options.ci_policy = config.ci_spread_only ? CiPolicy::spread_only : CiPolicy::standard_error;
  options.workers = 0;
  const auto curve = subsample_curve(study.kept, options);

  std::ostringstream csv;
  csv << "k,discriminability_mean,ci_mean,trials\n";
  nlohmann::json points = nlohmann::json::array();
  for (const auto& p : curve) {
    csv << p.participants << ',' << format_number(p.discriminability) << ',' << format_number(p.mean_ci) << ','
        << p.trials << '\n';
    points.push_back({{"k", p.participants},
                      {"discriminability_mean", p.discriminability},
                      {"ci_mean", p.mean_ci},
                      {"trials", p.trials}});
  }
  write_file(out_path(config, "reliability_curve.csv"), csv.str());

  nlohmann::json doc = header(config);
  doc["alpha"] = config.alpha;
  doc["level"] = config.level;
  doc["ci_policy"] = config.ci_spread_only ? "spread_only" : "standard_error";
  doc["rejected_subjects"] = rejected_ids(study.screening);
  doc["curve"] = points;
  write_json(config, "reliability.json", doc);
  return "reliability: " + std::to_string(curve.size()) + " curve points";
}

std::string run_evaluate(const RunConfig& config) {
  const auto manifest = load_manifest(config);
  MosTable mos;
  if (config.mos) {
    mos = read_mos_file(*config.mos, config.level);
  } else {
    const ScreenedStudy study = screen_study(config);
    mos = mos_from_ratings(study.kept, config.level);
  }

  const std::string& path = require_path(config.predictions, "--predictions", config);
  PredictionsIngest ingest = ingest_predictions_file(path, manifest ? &*manifest : nullptr);
  if (!ingest.ok()) throw IngestError(path, std::move(ingest.issues));

  std::map<View, PredictionSet> sets = ingest.views;
  if (!sets.contains(View::fusion) && sets.contains(View::left) && sets.contains(View::right)) {
    sets[View::fusion] = fuse_views(sets.at(View::left), sets.at(View::right));
  }
  std::vector<View> wanted = config.views;
  if (wanted.empty()) {
    for (const auto& [view, _] : sets) wanted.push_back(view);
  }
  if (wanted.empty()) throw Error(ErrorKind::invalid_argument, "prediction file has no rows");

  std::ostringstream csv;
  csv << "view,n,srcc,krcc,plcc,rmse,rmse_raw,beta1,beta2,beta3,beta4,beta5,warnings\n";
  nlohmann::json summary = header(config);
  summary["reports"] = nlohmann::json::array();
  for (View view : wanted) {
    auto it = sets.find(view);
    if (it == sets.end()) {
      throw Error(ErrorKind::invalid_argument,
                  std::string("view '") + to_string(view) + "' was requested but the predictions do not provide it");
    }
    EvalReport report;
    try {
      report = evaluate(it->second, mos);
    } catch (const Error& e) {
      throw Error(e.kind(), std::string(to_string(view)) + " view: " + e.what());
    }
    nlohmann::json doc = header(config);
    doc.update(to_json(report));
    write_json(config, std::string("eval_") + to_string(view) + ".json", doc);
    summary["reports"].push_back(to_json(report));

    std::string warnings;
    for (const auto& w : report.warnings) warnings += (warnings.empty() ? "" : ";") + w;
    csv << to_string(view) << ',' << report.count << ',' << format_number(report.srcc) << ','
        << format_number(report.krcc) << ',' << format_number(report.plcc) << ',' << format_number(report.rmse) << ','
        << format_number(report.rmse_raw);
    for (double b : report.beta) csv << ',' << format_number(b);
    csv << ',' << warnings << '\n';
  }
  write_file(out_path(config, "evaluation.csv"), csv.str());
  write_json(config, "evaluation.json", summary);
  return "evaluate: " + std::to_string(wanted.size()) + " view report(s)";
}

std::string run_split(const RunConfig& config) {
  const auto manifest = load_manifest(config);
  std::vector<std::string> videos;
  std::vector<std::string> sources;
  if (manifest) {
    for (const auto& v : manifest->videos) {
      videos.push_back(v.id);
      sources.push_back(v.source);
    }
  } else if (config.ratings) {
    if (config.group_by_source) {
      throw Error(ErrorKind::invalid_argument, "--group-by-source needs a --manifest with source keys");
    }
    videos = load_ratings(config, std::nullopt).videos();
    sources = videos;
  } else {
    throw Error(ErrorKind::invalid_argument, "'split' needs --manifest or --ratings");
  }
  const SplitResult split = make_split(videos, sources, config.ratio, config.seed, config.group_by_source);

  std::set<std::string> train(split.train.begin(), split.train.end());
  std::ostringstream csv;
  csv << "video_id,source,set\n";
  for (std::size_t i = 0; i < videos.size(); ++i) {
    csv << videos[i] << ',' << sources[i] << ',' << (train.contains(videos[i]) ? "train" : "test") << '\n';
  }
  write_file(out_path(config, "split.csv"), csv.str());

  std::set<std::string> train_sources;
  std::set<std::string> test_sources;
  for (std::size_t i = 0; i < videos.size(); ++i) {
    (train.contains(videos[i]) ? train_sources : test_sources).insert(sources[i]);
  }
  nlohmann::json doc = header(config);
  doc["ratio"] = {config.ratio.train, config.ratio.test};
  doc["group_by_source"] = config.group_by_source;
  doc["train"] = {{"videos", split.train.size()}, {"sources", train_sources.size()}, {"ids", split.train}};
  doc["test"] = {{"videos", split.test.size()}, {"sources", test_sources.size()}, {"ids", split.test}};
  write_json(config, "split.json", doc);
  return "split: " + std::to_string(split.train.size()) + " train / " + std::to_string(split.test.size()) + " test";
}

std::string run_fusion_demo(const RunConfig& config) {
  using namespace fusion;
  NetworkConfig net_config;
  net_config.key_frames = std::min<std::size_t>(4, config.frames);
  net_config.plan = StagePlan::reference(8, 8);
  if (config.size == 0 || config.size % 16 != 0) {
    throw Error(ErrorKind::invalid_argument, "--size must be a positive multiple of 16 (four factor-2 stages)");
  }
  if (config.frames == 0) throw Error(ErrorKind::invalid_argument, "--frames must be positive");

  Rng rng(config.seed);
  const FeatureMap left = FeatureMap::random(config.frames, 3, config.size, config.size, rng);
  std::vector<double> shifted = left.values();
  for (auto& v : shifted) v += 0.1 * rng.normal();
  const FeatureMap right(config.frames, 3, config.size, config.size, std::move(shifted));

  const QualityNet net(net_config, derive_seed(config.seed, 0x6e6574));
  const double q = net.predict(left, right);
  const double q_left = net.predict_single(left);
  const double q_right = net.predict_single(right);

  write_tensor_file(out_path(config, "fusion_left.bin"), to_tensor(left));
  write_tensor_file(out_path(config, "fusion_right.bin"), to_tensor(right));
  nlohmann::json doc = header(config);
  doc["q_hat"] = q;
  doc["q_hat_left"] = q_left;
  doc["q_hat_right"] = q_right;
  doc["frames"] = config.frames;
  doc["size"] = config.size;
  doc["key_frames"] = sample_key_frames(config.frames, net_config.key_frames);
  write_json(config, "fusion.json", doc);
  return "Q_hat " + format_number(q);
}

std::string run_command(const RunConfig& config) {
  if (config.command == "mos") return run_mos(config);
  if (config.command == "screen") return run_screen(config);
  if (config.command == "reliability") return run_reliability(config);
  if (config.command == "evaluate") return run_evaluate(config);
  if (config.command == "split") return run_split(config);
  if (config.command == "fusion-demo") return run_fusion_demo(config);
  throw Error(ErrorKind::invalid_argument, "unknown command '" + config.command + "'");
}

nlohmann::json error_document(const std::exception& e) {
  nlohmann::json err{{"message", e.what()}};
  if (const auto* ie = dynamic_cast<const IngestError*>(&e)) {
    err["kind"] = to_string(ie->kind());
    err["issues"] = nlohmann::json::array();
    for (const auto& i : ie->issues()) err["issues"].push_back(to_json(i));
  } else if (const auto* ve = dynamic_cast<const Error*>(&e)) {
    err["kind"] = to_string(ve->kind());
  } else {
    err["kind"] = "internal";
  }
  return {{"error", err}};
}

}  // namespace vqs
