#pragma once

// Paired baseline/guided runs, desk-scale metrics, report assembly and
// artifact export.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dag/config.hpp"
#include "dag/gradcheck.hpp"
#include "dag/sampler.hpp"

namespace dag {

inline constexpr double kSoaMinArea = 25.0;
inline constexpr double kMaskThreshold = 0.5;
inline constexpr const char* kMetricsSchemaId = "dag.metrics/1";
inline constexpr const char* kStepsSchemaId = "dag.steps/1";

// Metric values for one final image; absent entries did not apply.
struct Metrics {
  std::map<std::string, double> values;

  std::optional<double> get(const std::string& key) const;
};

struct SeedEntry {
  std::uint64_t seed = 0;
  Metrics baseline;
  Metrics guided;
};

struct MetricsReport {
  int steps = 0;
  ModuleWeights weights;
  std::vector<Module> modules;
  std::vector<SeedEntry> seeds;
  std::vector<std::string> notices;
};

struct Summary {
  double mean = 0.0;
  double median = 0.0;
};

Summary summarize(std::vector<double> values);
// Per-metric aggregates of baseline, guided and guided - baseline.
std::map<std::string, std::map<std::string, Summary>> aggregate(const MetricsReport& report);

std::string to_json(const MetricsReport& report);
// Schema problems in a metrics.json document; empty when valid. Checks
// required keys and types, finiteness, and that aggregates match the
// per-seed entries to 1e-12.
std::vector<std::string> validate_metrics_json(const std::string& text);

// ---------------------------------------------------------------------------
// Metrics

// Hard per-object masks: oracle segmentation thresholded at 0.5, split among
// same-color objects around the target centroids.
std::vector<Image> detect_objects(const Image& image, const LayoutTarget& target);
double layout_iou(const Image& image, const LayoutTarget& target);
double soa_proxy(const Image& image, const LayoutTarget& target);
double mean_distance(const std::vector<Point>& tracked, const std::vector<DragPoint>& drags);
// Mean over pixels of the L2 distance between semantic features.
double feature_distance(const Image& a, const Image& b);
double if_proxy(const Image& reference, const Image& result);

// Normalizer for the IF proxy: largest feature distance between any two
// scenes of the calibration set.
struct IfCalibration {
  std::uint64_t seed = 0;
  int scenes = 0;
  int height = 32;
  int width = 32;
  int objects = 2;
  double max_feature_distance = 1.0;
};
const IfCalibration& if_calibration();
double calibrate_if(const IfCalibration& set);

// Metrics of `final` with `baseline` as the IF reference; `tracked` are the
// final drag points. Metrics without their condition unit are skipped and
// a notice is appended.
Metrics compute_metrics(const Image& final, const Image& baseline, const ConditionSet& conditions,
                        const std::vector<Point>& tracked, const std::vector<Metric>& requested,
                        std::vector<std::string>* notices = nullptr);
std::vector<Metric> default_metrics(const ConditionSet& conditions);

// ---------------------------------------------------------------------------
// Runs

struct SeedRun {
  std::uint64_t seed = 0;
  Image initial;
  SampleTrace baseline;
  SampleTrace guided;
};

struct ExperimentResult {
  MetricsReport report;
  std::vector<SeedRun> runs;
};

struct RunOptions {
  bool write_artifacts = true;
  bool dump_raw = false;
};

// Validates the config and output directory, then runs every seed
// (baseline and guided from one shared x_T) across worker threads.
ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

std::string steps_json(const SeedRun& run, const ExperimentConfig& config, const std::vector<Module>& modules);

// One seed: final.png, baseline.png, steps.json in `dir` (plus raw dumps).
// Several seeds: metrics.json in `out_dir` and the rest in seed_<n>/.
void export_artifacts(const ExperimentResult& result, const ExperimentConfig& config,
                      const std::filesystem::path& out_dir, bool dump_raw);
std::filesystem::path seed_dir(const std::filesystem::path& out_dir, std::uint64_t seed, std::size_t seed_count);

// Recomputes the report from images on disk (raw dumps when present,
// otherwise PNGs) and the final points recorded in steps.json.
MetricsReport evaluate_outputs(const ExperimentConfig& config, const std::filesystem::path& out_dir);

// ---------------------------------------------------------------------------
// Gradient checks

struct GradCheckCase {
  std::string name;
  EnergyBuilder energy;
  Image point;
};

struct GradCheckResult {
  std::string name;
  GradCheckReport report;
  double seconds = 0.0;
};

std::vector<GradCheckCase> gradcheck_cases(int size = 16, std::uint64_t seed = 7);
std::vector<GradCheckResult> run_gradcheck_suite(const GradCheckOptions& options = {}, int size = 16);

}  // namespace dag
