#pragma once

// Experiment configuration and its JSON form (docs/config.schema.json).

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dag/conditions.hpp"
#include "dag/diffusion.hpp"
#include "dag/sampler.hpp"
#include "dag/scene.hpp"

namespace dag {

enum class Metric { kIou, kSoaProxy, kMeanDistance, kIfProxy };

inline constexpr std::array<Metric, 4> kMetrics = {Metric::kIou, Metric::kSoaProxy,
                                                   Metric::kMeanDistance, Metric::kIfProxy};

std::string_view name(Metric m);
Metric parse_metric(std::string_view s);

struct MixtureConfig {
  std::vector<SceneSpec> modes;
  // Empty means uniform.
  std::vector<double> weights;
  double mode_stddev = kDefaultModeStddev;
};

struct ExperimentConfig {
  int steps = kDefaultSteps;
  double beta_min = kDefaultBetaMin;
  double beta_max = kDefaultBetaMax;
  double guidance_window = kDefaultGuidanceWindow;
  ModuleWeights weights;

  MixtureConfig mixture;

  SceneSpec scene;
  bool use_text = true;
  bool use_layout = true;
  std::vector<DragPoint> drags;
  std::optional<Box> editable_box;

  // nullopt: every module whose condition unit is present.
  std::optional<std::vector<Module>> modules;
  // nullopt: every metric whose condition unit is present.
  std::optional<std::vector<Metric>> metrics;
  std::vector<std::uint64_t> seeds{0};
  std::string output_dir = "out";
  // 0 picks the hardware concurrency.
  int workers = 0;

  // Throws ConfigError.
  void validate() const;
};

// Throws ConfigError naming the offending key.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string to_json(const ExperimentConfig& config);

Schedule make_schedule(const ExperimentConfig& config);
MixtureModel make_mixture(const ExperimentConfig& config);
ConditionSet make_conditions(const ExperimentConfig& config);
std::vector<Module> active_modules(const ExperimentConfig& config, const ConditionSet& conditions);

// "N" or "N..M" (inclusive).
std::vector<std::uint64_t> parse_seed_range(std::string_view text);

}  // namespace dag
