// vqs: subjective study statistics and quality-model evaluation.
//
//   vqs mos         --ratings r.csv [--manifest m.json] --out dir
//   vqs screen      --ratings r.csv --out dir
//   vqs reliability --ratings r.csv --seed 1 --ks 2,5,10,20 --trials 100 --out dir
//   vqs evaluate    --predictions p.csv (--mos mos.csv | --ratings r.csv) --out dir
//   vqs split       --manifest m.json --ratio 4:1 --group-by-source --seed 1 --out dir
//   vqs fusion-demo --seed 1
//
// On failure a JSON error document is printed to stderr and the exit status
// is 1 (2 for command-line usage errors).

#include <iostream>

#include "CLI11.hpp"

#include "vqs/runs.hpp"

namespace {

vqs::SplitRatio parse_ratio(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw CLI::ValidationError("--ratio", "expected TRAIN:TEST, e.g. 4:1");
  try {
    return {std::stoul(text.substr(0, colon)), std::stoul(text.substr(colon + 1))};
  } catch (const std::exception&) {
    throw CLI::ValidationError("--ratio", "expected TRAIN:TEST, e.g. 4:1");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Subjective video-quality study statistics and model evaluation"};
  app.require_subcommand(1);

  vqs::RunConfig config;
  std::string ratio = "4:1";
  std::vector<std::string> views;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--out", config.out, "Output directory")->default_val(".");
    sub->add_option("--seed", config.seed, "Random seed")->default_val(0);
  };
  auto add_study = [&](CLI::App* sub) {
    sub->add_option("--ratings", config.ratings, "Ratings table (subject_id,video_id,score)");
    sub->add_option("--manifest", config.manifest, "Study manifest (JSON)");
    sub->add_option("--level", config.level, "Confidence level")->default_val(0.95);
    sub->add_option("--alpha", config.alpha, "Significance level")->default_val(0.05);
  };

  auto* mos = app.add_subcommand("mos", "Screen subjects and compute per-video MOS");
  add_common(mos);
  add_study(mos);
  mos->callback([&] { config.command = "mos"; });

  auto* screen = app.add_subcommand("screen", "Outlier screening report");
  add_common(screen);
  add_study(screen);
  screen->callback([&] { config.command = "screen"; });

  auto* reliability = app.add_subcommand("reliability", "Discriminability and mean-CI curve over participant counts");
  add_common(reliability);
  add_study(reliability);
  reliability->add_option("--ks", config.participant_counts, "Participant counts (default 2..N)")->delimiter(',');
  reliability->add_option("--trials", config.trials, "Subsets drawn per participant count")->default_val(100);
  reliability->add_flag("--ci-spread-only", config.ci_spread_only, "CI half-width z*sigma instead of z*sigma/sqrt(n)");
  reliability->callback([&] { config.command = "reliability"; });

  auto* evaluate = app.add_subcommand("evaluate", "SRCC/KRCC/PLCC/RMSE per view strategy");
  add_common(evaluate);
  add_study(evaluate);
  evaluate->add_option("--predictions", config.predictions, "Predictions (video_id,view,score)")->required();
  evaluate->add_option("--mos", config.mos, "MOS table written by 'mos' (instead of --ratings)");
  evaluate->add_option("--views", views, "Views to report (left,right,fusion)")->delimiter(',');
  evaluate->callback([&] { config.command = "evaluate"; });

  auto* split = app.add_subcommand("split", "Seeded train/test split");
  add_common(split);
  split->add_option("--manifest", config.manifest, "Study manifest (JSON)");
  split->add_option("--ratings", config.ratings, "Ratings table, used for the video list without a manifest");
  split->add_option("--ratio", ratio, "TRAIN:TEST")->default_val("4:1");
  split->add_flag("--group-by-source", config.group_by_source, "Keep all versions of a source on one side");
  split->callback([&] { config.command = "split"; });

  auto* demo = app.add_subcommand("fusion-demo", "Toy binocular forward pass; prints Q_hat");
  add_common(demo);
  demo->add_option("--frames", config.frames, "Frames per view")->default_val(8);
  demo->add_option("--size", config.size, "Frame height and width (multiple of 16)")->default_val(32);
  demo->callback([&] { config.command = "fusion-demo"; });

  try {
    app.parse(argc, argv);
    config.ratio = parse_ratio(ratio);
    for (const auto& v : views) config.views.push_back(vqs::parse_view(v));
  } catch (const CLI::ParseError& e) {
    // --help and --version come through here with a zero code.
    return app.exit(e) == 0 ? 0 : 2;
  } catch (const std::exception& e) {
    std::cerr << vqs::error_document(e).dump(2) << '\n';
    return 2;
  }

  try {
    std::cout << vqs::run_command(config) << '\n';
  } catch (const std::exception& e) {
    std::cerr << vqs::error_document(e).dump(2) << '\n';
    return 1;
  }
  return 0;
}
