#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "vqs/metrics.hpp"
#include "vqs/ratings.hpp"

namespace vqs {

// Everything a subcommand needs. Reports embed the seed and a hash of this
// config (input files enter the hash by content, and the output directory is
// left out), so reruns of the same study produce byte-identical files.
struct RunConfig {
  std::string command;
  std::optional<std::string> ratings;
  std::optional<std::string> predictions;
  std::optional<std::string> manifest;
  std::optional<std::string> mos;
  std::uint64_t seed = 0;
  double alpha = 0.05;
  double level = 0.95;
  ScreeningPolicy policy;
  SplitRatio ratio;
  bool group_by_source = false;
  std::string out = ".";
  std::vector<std::size_t> participant_counts;  // reliability; empty = 2..N
  std::size_t trials = 100;
  std::vector<View> views;  // evaluate; empty = all available
  bool ci_spread_only = false;
  std::size_t frames = 8;  // fusion-demo
  std::size_t size = 32;

  nlohmann::json to_json() const;
  std::string hash() const;
};

// Each run writes its files under config.out and returns a short summary
// suitable for printing.
std::string run_mos(const RunConfig& config);
std::string run_screen(const RunConfig& config);
std::string run_reliability(const RunConfig& config);
std::string run_evaluate(const RunConfig& config);
std::string run_split(const RunConfig& config);
std::string run_fusion_demo(const RunConfig& config);

std::string run_command(const RunConfig& config);

// Machine-readable failure document for any exception escaping a run.
nlohmann::json error_document(const std::exception& e);

}  // namespace vqs
