#include "dag/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <numbers>
#include <random>
#include <set>
#include <thread>

#include "dag/error.hpp"
#include "dag/io.hpp"
#include "dag_if_calibration.inc"
#include "json.hpp"

namespace dag {

namespace {

using json = nlohmann::json;

constexpr double kAggregateTolerance = 1e-12;

json point_json(Point p) { return json::array({p.x, p.y}); }

json points_json(const std::vector<Point>& points) {
  json out = json::array();
  for (Point p : points) out.push_back(point_json(p));
  return out;
}

std::vector<Point> points_from_json(const json& j) {
  std::vector<Point> out;
  for (const json& p : j) out.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  return out;
}

json metrics_json(const Metrics& m) {
  json out = json::object();
  for (const auto& [k, v] : m.values) out[k] = v;
  return out;
}

Metrics delta(const Metrics& baseline, const Metrics& guided) {
  Metrics d;
  for (const auto& [k, v] : guided.values) {
    auto it = baseline.values.find(k);
    if (it != baseline.values.end()) d.values[k] = v - it->second;
  }
  return d;
}

Image load_image(const std::filesystem::path& dir, const std::string& stem) {
  const std::filesystem::path raw = dir / (stem + ".f32");
  if (std::filesystem::exists(raw)) return read_raw(raw);
  return read_png(dir / (stem + ".png"));
}

double energy_on(const Image& image, const ConditionSet& conditions, Module module) {
  ad::Tape tape;
  ad::Var x = tape.constant(image);
  if (module == Module::kDca) {
    const TextConcepts text = build_text_concepts(conditions);
    return dca_energy(text, build_visual_concepts(x, text, conditions)).energy.item();
  }
  const LayoutTarget target = make_layout_target(conditions.layout);
  return dga_energy(predict_layout(x, target), target).energy.item();
}

}  // namespace

std::optional<double> Metrics::get(const std::string& key) const {
  auto it = values.find(key);
  if (it == values.end()) return std::nullopt;
  return it->second;
}

Summary summarize(std::vector<double> values) {
  if (values.empty()) throw ContractError("summarize: no values");
  Summary s;
  double total = 0.0;
  for (double v : values) total += v;
  s.mean = total / static_cast<double>(values.size());
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  s.median = n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
  return s;
}

std::map<std::string, std::map<std::string, Summary>> aggregate(const MetricsReport& report) {
  std::map<std::string, std::map<std::string, std::vector<double>>> columns;
  for (const SeedEntry& e : report.seeds) {
    for (const auto& [k, v] : e.baseline.values) columns["baseline"][k].push_back(v);
    for (const auto& [k, v] : e.guided.values) columns["guided"][k].push_back(v);
    for (const auto& [k, v] : delta(e.baseline, e.guided).values) columns["delta"][k].push_back(v);
  }
  std::map<std::string, std::map<std::string, Summary>> out;
  for (const auto& [variant, metrics] : columns)
    for (const auto& [k, values] : metrics) out[variant][k] = summarize(values);
  return out;
}

std::string to_json(const MetricsReport& report) {
  json seeds = json::array();
  for (const SeedEntry& e : report.seeds) {
    seeds.push_back({{"seed", e.seed},
                     {"baseline", metrics_json(e.baseline)},
                     {"guided", metrics_json(e.guided)},
                     {"delta", metrics_json(delta(e.baseline, e.guided))}});
  }
  json agg = {{"baseline", json::object()}, {"guided", json::object()}, {"delta", json::object()}};
  for (const auto& [variant, metrics] : aggregate(report))
    for (const auto& [k, s] : metrics) agg[variant][k] = {{"mean", s.mean}, {"median", s.median}};
  json modules = json::array();
  for (Module m : report.modules) modules.push_back(name(m));
  json doc = {{"schema", kMetricsSchemaId},
              {"steps", report.steps},
              {"weights", {{"dca", report.weights.dca}, {"dga", report.weights.dga}, {"dma", report.weights.dma}}},
              {"modules", modules},
              {"seeds", seeds},
              {"aggregate", agg},
              {"notices", report.notices}};
  return doc.dump(2) + "\n";
}

std::vector<std::string> validate_metrics_json(const std::string& text) {
  std::vector<std::string> problems;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    return {std::string("not valid JSON: ") + e.what()};
  }
  auto fail = [&](const std::string& p) { problems.push_back(p); };
  if (!doc.is_object()) return {"document is not an object"};
  const std::set<std::string> top = {"schema", "steps", "weights", "modules", "seeds", "aggregate", "notices"};
  for (const std::string& k : top)
    if (!doc.contains(k)) fail("missing key '" + k + "'");
  for (auto it = doc.begin(); it != doc.end(); ++it)
    if (!top.count(it.key())) fail("unknown key '" + it.key() + "'");
  if (!problems.empty()) return problems;

  if (doc["schema"] != kMetricsSchemaId) fail("schema must be \"" + std::string(kMetricsSchemaId) + "\"");
  if (!doc["steps"].is_number_integer() || doc["steps"].get<int>() < 2) fail("steps must be an integer >= 2");
  const json& w = doc["weights"];
  if (!w.is_object() || w.size() != 3) {
    fail("weights must hold dca, dga and dma");
  } else {
    for (const char* k : {"dca", "dga", "dma"})
      if (!w.contains(k) || !w[k].is_number() || !std::isfinite(w[k].get<double>()))
        fail(std::string("weights.") + k + " must be a finite number");
  }
  if (!doc["modules"].is_array()) {
    fail("modules must be an array");
  } else {
    for (const json& m : doc["modules"]) {
      if (!m.is_string()) {
        fail("modules entries must be strings");
        continue;
      }
      try {
        parse_module(m.get<std::string>());
      } catch (const ConfigError&) {
        fail("unknown module '" + m.get<std::string>() + "'");
      }
    }
  }
  if (!doc["notices"].is_array() ||
      !std::all_of(doc["notices"].begin(), doc["notices"].end(), [](const json& n) { return n.is_string(); }))
    fail("notices must be an array of strings");

  const std::set<std::string> known = {"iou", "soa_proxy", "mean_distance", "if_proxy", "energy_dca", "energy_dga"};
  auto read_metrics = [&](const json& j, const std::string& where, Metrics& out) {
    if (!j.is_object()) {
      fail(where + " must be an object");
      return;
    }
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (!known.count(it.key())) fail(where + ": unknown metric '" + it.key() + "'");
      if (!it.value().is_number() || !std::isfinite(it.value().get<double>())) {
        fail(where + "." + it.key() + " must be a finite number");
        continue;
      }
      out.values[it.key()] = it.value().get<double>();
    }
  };

  MetricsReport recomputed;
  const json& seeds = doc["seeds"];
  if (!seeds.is_array() || seeds.empty()) {
    fail("seeds must be a nonempty array");
  } else {
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      const std::string where = "seeds[" + std::to_string(i) + "]";
      const json& e = seeds[i];
      if (!e.is_object() || !e.contains("seed") || !e.contains("baseline") || !e.contains("guided") ||
          !e.contains("delta") || e.size() != 4) {
        fail(where + " must hold exactly seed, baseline, guided and delta");
        continue;
      }
      if (!e["seed"].is_number_unsigned()) fail(where + ".seed must be a nonnegative integer");
      SeedEntry entry;
      Metrics given_delta;
      read_metrics(e["baseline"], where + ".baseline", entry.baseline);
      read_metrics(e["guided"], where + ".guided", entry.guided);
      read_metrics(e["delta"], where + ".delta", given_delta);
      const Metrics expected = delta(entry.baseline, entry.guided);
      if (expected.values.size() != given_delta.values.size()) fail(where + ".delta has the wrong keys");
      for (const auto& [k, v] : expected.values) {
        const auto got = given_delta.get(k);
        if (!got || std::abs(*got - v) > kAggregateTolerance) fail(where + ".delta." + k + " != guided - baseline");
      }
      recomputed.seeds.push_back(entry);
    }
  }

  const json& agg = doc["aggregate"];
  if (!agg.is_object()) {
    fail("aggregate must be an object");
  } else if (problems.empty()) {
    const auto expected = aggregate(recomputed);
    for (const char* variant : {"baseline", "guided", "delta"}) {
      if (!agg.contains(variant) || !agg[variant].is_object()) {
        fail(std::string("aggregate.") + variant + " missing");
        continue;
      }
      const json& a = agg[variant];
      auto ev = expected.find(variant);
      const std::size_t expected_keys = ev == expected.end() ? 0 : ev->second.size();
      if (a.size() != expected_keys) fail(std::string("aggregate.") + variant + " has the wrong metrics");
      if (ev == expected.end()) continue;
      for (const auto& [k, s] : ev->second) {
        const std::string where = std::string("aggregate.") + variant + "." + k;
        if (!a.contains(k) || !a[k].is_object() || !a[k].contains("mean") || !a[k].contains("median") ||
            !a[k]["mean"].is_number() || !a[k]["median"].is_number()) {
          fail(where + " must hold numeric mean and median");
          continue;
        }
        if (std::abs(a[k]["mean"].get<double>() - s.mean) > kAggregateTolerance) fail(where + ".mean mismatch");
        if (std::abs(a[k]["median"].get<double>() - s.median) > kAggregateTolerance) fail(where + ".median mismatch");
      }
    }
  }
  return problems;
}

// ---------------------------------------------------------------------------
// Metrics

std::vector<Image> detect_objects(const Image& image, const LayoutTarget& target) {
  ad::Tape tape;
  const LayoutPrediction pred = predict_layout(tape.constant(image), target);
  std::vector<Image> out;
  for (const ad::Var& m : pred.masks) {
    Image hard = m.value();
    for (double& v : hard.values()) v = v >= kMaskThreshold ? 1.0 : 0.0;
    out.push_back(std::move(hard));
  }
  return out;
}

double layout_iou(const Image& image, const LayoutTarget& target) {
  if (target.size() == 0) throw ContractError("layout_iou: empty layout");
  const std::vector<Image> detected = detect_objects(image, target);
  double total = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    double inter = 0.0, uni = 0.0;
    for (std::size_t p = 0; p < detected[i].size(); ++p) {
      const bool a = detected[i][p] > 0.5;
      const bool b = target.masks[i][p] > 0.5;
      inter += a && b;
      uni += a || b;
    }
    total += uni > 0.0 ? inter / uni : 1.0;
  }
  return total / static_cast<double>(target.size());
}

double soa_proxy(const Image& image, const LayoutTarget& target) {
  if (target.size() == 0) throw ContractError("soa_proxy: empty layout");
  const std::vector<Image> detected = detect_objects(image, target);
  int hits = 0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    double area = 0.0;
    Rgb mean;
    for (int y = 0; y < image.height(); ++y)
      for (int x = 0; x < image.width(); ++x) {
        if (detected[i].at(y, x) < 0.5) continue;
        area += 1.0;
        mean.r += image.at(y, x, 0);
        mean.g += image.at(y, x, 1);
        mean.b += image.at(y, x, 2);
      }
    if (area < kSoaMinArea) continue;
    mean = {mean.r / area, mean.g / area, mean.b / area};
    Color best = kColors.front();
    double best_d = INFINITY;
    for (Color c : kColors) {
      const Rgb p = palette(c);
      const double d = (mean.r - p.r) * (mean.r - p.r) + (mean.g - p.g) * (mean.g - p.g) + (mean.b - p.b) * (mean.b - p.b);
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    hits += best == target.classes[i];
  }
  return static_cast<double>(hits) / static_cast<double>(target.size());
}

double mean_distance(const std::vector<Point>& tracked, const std::vector<DragPoint>& drags) {
  if (tracked.size() != drags.size() || drags.empty())
    throw ContractError("mean_distance: need one tracked point per drag");
  double total = 0.0;
  for (std::size_t i = 0; i < drags.size(); ++i)
    total += std::hypot(tracked[i].x - drags[i].destination.x, tracked[i].y - drags[i].destination.y);
  return total / static_cast<double>(drags.size());
}

double feature_distance(const Image& a, const Image& b) {
  if (a.shape() != b.shape()) throw ContractError("feature_distance: shape mismatch");
  const Image fa = semantic_field(a);
  const Image fb = semantic_field(b);
  const int c = fa.channels();
  double total = 0.0;
  for (std::size_t p = 0; p < fa.size(); p += c) {
    double d2 = 0.0;
    for (int k = 0; k < c; ++k) d2 += (fa[p + k] - fb[p + k]) * (fa[p + k] - fb[p + k]);
    total += std::sqrt(d2);
  }
  return total / static_cast<double>(fa.size() / c);
}

const IfCalibration& if_calibration() {
  static const IfCalibration c{kIfCalibrationSeed, kIfCalibrationScenes, kIfCalibrationHeight,
                               kIfCalibrationWidth, kIfCalibrationObjects, kIfCalibrationMaxDistance};
  return c;
}

double calibrate_if(const IfCalibration& set) {
  if (set.scenes < 2) throw ContractError("calibrate_if: need at least two scenes");
  std::vector<Image> renders;
  for (int i = 0; i < set.scenes; ++i)
    renders.push_back(render_scene(random_scene(set.seed + static_cast<std::uint64_t>(i), set.height, set.width, set.objects)));
  double best = 0.0;
  for (int i = 0; i < set.scenes; ++i)
    for (int j = i + 1; j < set.scenes; ++j) best = std::max(best, feature_distance(renders[i], renders[j]));
  return best;
}

double if_proxy(const Image& reference, const Image& result) {
  const double d = feature_distance(reference, result) / if_calibration().max_feature_distance;
  return 1.0 - std::clamp(d, 0.0, 1.0);
}

std::vector<Metric> default_metrics(const ConditionSet& conditions) {
  std::vector<Metric> out;
  if (conditions.has_layout()) {
    out.push_back(Metric::kIou);
    out.push_back(Metric::kSoaProxy);
  }
  if (conditions.has_drag()) {
    out.push_back(Metric::kMeanDistance);
    out.push_back(Metric::kIfProxy);
  }
  return out;
}

Metrics compute_metrics(const Image& final, const Image& baseline, const ConditionSet& conditions,
                        const std::vector<Point>& tracked, const std::vector<Metric>& requested,
                        std::vector<std::string>* notices) {
  Metrics m;
  std::optional<LayoutTarget> target;
  auto note = [&](Metric metric, const char* unit) {
    if (notices) notices->push_back(std::string("metric ") + std::string(name(metric)) + " skipped: no " + unit + " condition");
  };
  for (Metric metric : requested) {
    switch (metric) {
      case Metric::kIou:
      case Metric::kSoaProxy:
        if (!conditions.has_layout()) {
          note(metric, "layout");
          break;
        }
        if (!target) target = make_layout_target(conditions.layout);
        m.values[std::string(name(metric))] =
            metric == Metric::kIou ? layout_iou(final, *target) : soa_proxy(final, *target);
        break;
      case Metric::kMeanDistance:
        if (!conditions.has_drag()) {
          note(metric, "drag");
          break;
        }
        m.values["mean_distance"] = mean_distance(tracked, conditions.drags);
        break;
      case Metric::kIfProxy:
        if (!conditions.has_drag()) {
          note(metric, "drag");
          break;
        }
        m.values["if_proxy"] = if_proxy(baseline, final);
        break;
    }
  }
  if (conditions.has_text() && !conditions.scene.objects.empty())
    m.values["energy_dca"] = energy_on(final, conditions, Module::kDca);
  if (conditions.has_layout()) m.values["energy_dga"] = energy_on(final, conditions, Module::kDga);
  return m;
}

// ---------------------------------------------------------------------------
// Runs

namespace {

std::vector<std::unique_ptr<Energy>> make_energies(const std::vector<Module>& modules,
                                                   const ConditionSet& conditions) {
  std::vector<std::unique_ptr<Energy>> out;
  for (Module m : modules) out.push_back(make_energy(m, conditions));
  return out;
}

void check_output_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  const std::filesystem::path probe = dir / ".write_probe";
  write_text(probe, "");
  std::filesystem::remove(probe, ec);
}

json step_json(const StepRecord& rec, const std::vector<Module>& modules, const ModuleWeights& weights) {
  json sigma = json::object();
  for (Module m : modules) sigma[std::string(name(m))] = rec.guided ? module_weight(m, weights) : 0.0;
  json energies = json::object();
  for (const ModuleReport& r : rec.report.modules) {
    json terms = json::object();
    for (const auto& [k, v] : r.terms) terms[k] = v;
    json series = json::object();
    for (const auto& [k, v] : r.series) series[k] = v;
    energies[r.module] = {{"energy", r.energy},
                          {"weight", r.weight},
                          {"gradient_norm", r.gradient_norm},
                          {"terms", terms},
                          {"series", series}};
  }
  return {{"iteration", rec.iteration},
          {"t", rec.t},
          {"alpha_bar", rec.alpha_bar},
          {"guided", rec.guided},
          {"sigma", sigma},
          {"energies", energies},
          {"tracked", points_json(rec.tracked)}};
}

}  // namespace

std::filesystem::path seed_dir(const std::filesystem::path& out_dir, std::uint64_t seed, std::size_t seed_count) {
  if (seed_count <= 1) return out_dir;
  return out_dir / ("seed_" + std::to_string(seed));
}

ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  const Schedule schedule = make_schedule(config);
  const MixtureModel mix = make_mixture(config);
  const ConditionSet conditions = make_conditions(config);
  const std::vector<Module> modules = active_modules(config, conditions);
  const std::vector<Metric> metrics = config.metrics ? *config.metrics : default_metrics(conditions);
  make_energies(modules, conditions);
  if (options.write_artifacts) check_output_dir(config.output_dir);

  ExperimentResult result;
  result.report.steps = schedule.steps();
  result.report.weights = schedule.weights;
  result.report.modules = modules;
  result.report.seeds.resize(config.seeds.size());
  result.runs.resize(config.seeds.size());
  std::vector<std::vector<std::string>> notices(config.seeds.size());

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    try {
      const std::vector<std::unique_ptr<Energy>> none;
      const std::vector<std::unique_ptr<Energy>> energies = make_energies(modules, conditions);
      for (std::size_t i = next++; i < config.seeds.size(); i = next++) {
        SeedRun& run = result.runs[i];
        run.seed = config.seeds[i];
        run.initial = initial_noise(mix.shape(), run.seed);
        const SampleOptions so{false};
        run.baseline = sample_loop_from(schedule, mix, conditions, none, run.initial, so);
        run.guided = energies.empty() ? run.baseline
                                      : sample_loop_from(schedule, mix, conditions, energies, run.initial, so);
        SeedEntry& e = result.report.seeds[i];
        e.seed = run.seed;
        e.baseline = compute_metrics(run.baseline.final_image, run.baseline.final_image, conditions,
                                     run.baseline.final_points, metrics, &notices[i]);
        e.guided = compute_metrics(run.guided.final_image, run.baseline.final_image, conditions,
                                   run.guided.final_points, metrics);
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(failure_mutex);
      if (!failure) failure = std::current_exception();
      next = config.seeds.size();
    }
  };
  std::size_t workers = config.workers > 0 ? static_cast<std::size_t>(config.workers)
                                           : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, config.seeds.size());
  std::vector<std::thread> threads;
  for (std::size_t w = 1; w < workers; ++w) threads.emplace_back(worker);
  worker();
  for (std::thread& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);

  result.report.notices = notices.front();
  if (options.write_artifacts) export_artifacts(result, config, config.output_dir, options.dump_raw);
  return result;
}

std::string steps_json(const SeedRun& run, const ExperimentConfig& config, const std::vector<Module>& modules) {
  const Schedule schedule = make_schedule(config);
  json guided = json::array();
  for (const StepRecord& r : run.guided.steps) guided.push_back(step_json(r, modules, schedule.weights));
  json baseline = json::array();
  for (const StepRecord& r : run.baseline.steps) baseline.push_back(step_json(r, {}, schedule.weights));
  json mods = json::array();
  for (Module m : modules) mods.push_back(name(m));
  json doc = {{"schema", kStepsSchemaId},
              {"seed", run.seed},
              {"steps", schedule.steps()},
              {"guided_iterations", schedule.guided_iterations()},
              {"weights", {{"dca", schedule.weights.dca}, {"dga", schedule.weights.dga}, {"dma", schedule.weights.dma}}},
              {"modules", mods},
              {"guided", guided},
              {"baseline", baseline},
              {"final_points",
               {{"baseline", points_json(run.baseline.final_points)}, {"guided", points_json(run.guided.final_points)}}}};
  return doc.dump(1) + "\n";
}

void export_artifacts(const ExperimentResult& result, const ExperimentConfig& config,
                      const std::filesystem::path& out_dir, bool dump_raw) {
  check_output_dir(out_dir);
  for (const SeedRun& run : result.runs) {
    const std::filesystem::path dir = seed_dir(out_dir, run.seed, result.runs.size());
    check_output_dir(dir);
    write_png(dir / "final.png", run.guided.final_image);
    write_png(dir / "baseline.png", run.baseline.final_image);
    write_text(dir / "steps.json", steps_json(run, config, result.report.modules));
    if (dump_raw) {
      write_raw(dir / "initial.f32", run.initial);
      write_raw(dir / "baseline.f32", run.baseline.final_image);
      write_raw(dir / "final.f32", run.guided.final_image);
    }
  }
  write_text(out_dir / "metrics.json", to_json(result.report));
}

MetricsReport evaluate_outputs(const ExperimentConfig& config, const std::filesystem::path& out_dir) {
  config.validate();
  const ConditionSet conditions = make_conditions(config);
  const std::vector<Metric> metrics = config.metrics ? *config.metrics : default_metrics(conditions);
  MetricsReport report;
  const Schedule schedule = make_schedule(config);
  report.steps = schedule.steps();
  report.weights = schedule.weights;
  report.modules = active_modules(config, conditions);
  for (std::size_t i = 0; i < config.seeds.size(); ++i) {
    const std::filesystem::path dir = seed_dir(out_dir, config.seeds[i], config.seeds.size());
    const Image final = load_image(dir, "final");
    const Image baseline = load_image(dir, "baseline");
    json steps;
    try {
      steps = json::parse(read_text(dir / "steps.json"));
      SeedEntry e;
      e.seed = config.seeds[i];
      e.baseline = compute_metrics(baseline, baseline, conditions,
                                   points_from_json(steps.at("final_points").at("baseline")), metrics,
                                   i == 0 ? &report.notices : nullptr);
      e.guided = compute_metrics(final, baseline, conditions,
                                 points_from_json(steps.at("final_points").at("guided")), metrics);
      report.seeds.push_back(std::move(e));
    } catch (const json::exception& ex) {
      throw IoError("bad steps.json in " + dir.string() + ": " + ex.what());
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Gradient checks

namespace {

Image random_image(Shape shape, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Image out(shape);
  for (double& v : out.values()) v = u(rng);
  return out;
}

Image jitter(Image base, std::mt19937_64& rng, double amplitude) {
  std::uniform_real_distribution<double> u(-amplitude, amplitude);
  for (double& v : base.values()) v += u(rng);
  return base;
}

// Scalar probe of a tensor output: <projection, out>.
ad::Var project(ad::Tape& tape, ad::Var out, const Image& projection) {
  return ad::dot(tape.constant(projection), out);
}

}  // namespace

std::vector<GradCheckCase> gradcheck_cases(int size, std::uint64_t seed) {
  if (size < 16 || size > 128) throw ContractError("gradcheck_cases: scene canvas must be within [16, 128]");
  std::mt19937_64 rng(seed);
  SceneSpec scene;
  scene.height = scene.width = size;
  const double s = size;
  scene.objects = {{Category::kDisk, Color::kRed, {0.3 * s, 0.35 * s}, 0.18 * s},
                   {Category::kSquare, Color::kBlue, {0.68 * s, 0.62 * s}, 0.16 * s}};
  scene.relations = {{0, 1, Predicate::kLeftOf}};
  const Image render = render_scene(scene);
  const Point drag_from = scene.objects[0].center;
  const ConditionSet conditions =
      scene_to_conditions(scene, {{drag_from, {drag_from.x + 2.0, drag_from.y + 1.0}}});
  const Image point = jitter(render, rng, 0.05);

  const int small = 8;
  const Shape rgb{small, small, 3};
  const Image small_point = jitter(render_scene(random_scene(seed, 16, 16, 2)), rng, 0.05);
  Image patch(rgb);
  for (int y = 0; y < small; ++y)
    for (int x = 0; x < small; ++x)
      for (int c = 0; c < 3; ++c) patch.at(y, x, c) = small_point.at(y + 3, x + 3, c);

  std::vector<GradCheckCase> cases;
  const std::vector<Color> vocab = {Color::kRed, Color::kBlue, Color::kGreen};

  {
    const Image proj = random_image({small, small, static_cast<int>(vocab.size()) + 1}, rng, -1, 1);
    cases.push_back({"soft_segment",
                     [vocab, proj](ad::Tape& t, ad::Var x) {
                       SoftMaskSet m = soft_segment(x, vocab);
                       std::vector<ad::Var> parts = m.masks;
                       parts.push_back(m.background);
                       return project(t, ad::concat_channels(parts), proj);
                     },
                     patch});
  }
  {
    const std::vector<Rgb> colors = {palette(Color::kRed), palette(Color::kYellow), kBackground};
    const Image proj = random_image({small, small, 3}, rng, -1, 1);
    cases.push_back({"color_logits",
                     [colors, proj](ad::Tape& t, ad::Var x) {
                       return project(t, color_logits(x, colors, kSegmentTemperature), proj);
                     },
                     patch});
  }
  {
    // Concentrated blob so the box stays inside the canvas.
    Image mask({small, small, 1});
    std::uniform_real_distribution<double> u(0.0, 0.05);
    for (int y = 0; y < small; ++y)
      for (int x = 0; x < small; ++x)
        mask.at(y, x) = std::exp(-((x - 4.3) * (x - 4.3) + (y - 5.1) * (y - 5.1)) / 3.0) + u(rng);
    cases.push_back({"soft_bbox",
                     [](ad::Tape&, ad::Var m) {
                       const SoftBox b = *soft_bbox(m);
                       return ad::add(ad::add(b.x_min, ad::scale(b.y_min, 0.7)),
                                      ad::add(ad::scale(b.x_max, -1.3), ad::scale(b.y_max, 0.4)));
                     },
                     mask});
    const Image proj = random_image({small, small, 1}, rng, -1, 1);
    cases.push_back({"box_weight",
                     [proj, small](ad::Tape& t, ad::Var m) {
                       return project(t, box_weight(*soft_bbox(m), small, small), proj);
                     },
                     mask});
  }
  {
    const Image weight = random_image({small, small, 1}, rng, 0.1, 1.0);
    const Image proj = random_image({1, 1, kEmbeddingDim}, rng, -1, 1);
    cases.push_back({"region_embed",
                     [weight, proj](ad::Tape& t, ad::Var x) {
                       return project(t, region_embed(x, t.constant(weight)), proj);
                     },
                     patch});
  }
  {
    const Image proj = random_image({small, small, kFeatureChannels}, rng, -1, 1);
    cases.push_back({"semantic_field",
                     [proj](ad::Tape& t, ad::Var x) { return project(t, semantic_field(x), proj); }, patch});
  }
  {
    const Image src = patch;
    const Image proj = random_image({small, small, 2}, rng, -1, 1);
    FlowOptions fo;
    fo.search_radius = 2;
    cases.push_back({"estimate_flow",
                     [src, proj, fo](ad::Tape& t, ad::Var x) {
                       return project(t, estimate_flow(t.constant(src), x, fo), proj);
                     },
                     jitter(patch, rng, 0.02)});
  }
  {
    // Bilinear warping is not differentiable at integer flow values.
    Image flow = random_image({small, small, 2}, rng, 0.1, 0.9);
    std::uniform_int_distribution<int> whole(-2, 1);
    for (double& v : flow.values()) v += whole(rng);
    const Image proj = random_image(rgb, rng, -1, 1);
    cases.push_back({"warp_image",
                     [flow, proj](ad::Tape& t, ad::Var x) { return project(t, warp_image(x, t.constant(flow)), proj); },
                     patch});
    const Image image = patch;
    cases.push_back({"warp_flow",
                     [image, proj](ad::Tape& t, ad::Var f) { return project(t, warp_image(t.constant(image), f), proj); },
                     flow});
  }

  const TextConcepts text = build_text_concepts(conditions);
  cases.push_back({"dca_energy",
                   [text, conditions](ad::Tape&, ad::Var x) {
                     return dca_energy(text, build_visual_concepts(x, text, conditions)).energy;
                   },
                   point});

  // Two-object 8x8 layout.
  const std::vector<Color> layout_colors = {Color::kRed, Color::kBlue};
  const LayoutTarget target = make_layout_target(layout_from_boxes(
      small, small, {{1, 1, 3, 3}, {4, 4, 6, 7}}, layout_colors, {Category::kSquare, Category::kSquare}));
  Image layout_point({small, small, 3}, kBackgroundLevel);
  for (std::size_t i = 0; i < target.size(); ++i) {
    const Rgb fill = palette(layout_colors[i]);
    for (int y = 0; y < small; ++y)
      for (int x = 0; x < small; ++x) {
        // Predicted boxes offset by one pixel from the target.
        const int tx = std::min(x + 1, small - 1);
        if (target.masks[i].at(y, tx) < 0.5) continue;
        layout_point.at(y, x, 0) = fill.r;
        layout_point.at(y, x, 1) = fill.g;
        layout_point.at(y, x, 2) = fill.b;
      }
  }
  layout_point = jitter(layout_point, rng, 0.05);
  cases.push_back({"coverage_loss",
                   [target](ad::Tape&, ad::Var x) { return coverage_loss(predict_layout(x, target), target); },
                   layout_point});
  cases.push_back({"size_loss",
                   [target](ad::Tape&, ad::Var x) { return size_loss(predict_layout(x, target), target); },
                   layout_point});
  cases.push_back({"dist_loss",
                   [target](ad::Tape&, ad::Var x) { return dist_loss(predict_layout(x, target), target); },
                   layout_point});

  const Image reference = jitter(render, rng, 0.05);
  std::vector<DragSignal> signals;
  for (const DragPoint& d : conditions.drags) {
    DragSignal sig = make_drag_signal(d, render);
    prepare_signal(sig, reference);
    signals.push_back(sig);
  }
  // Keep pixel and feature residuals against the warped reference away
  // from the Charbonnier kink, where step-1e-4 central differences carry
  // O(h^2 / eps^2) truncation error: quarter-phase sinusoids of unequal
  // amplitude along x and y never vanish on the pixel grid, under both
  // odd and even filters.
  Image motion_point = warp_image(reference, densify_drag_flow(signals.front()));
  for (int y = 0; y < motion_point.height(); ++y)
    for (int x = 0; x < motion_point.width(); ++x)
      for (int c = 0; c < 3; ++c) {
        const double phase = 0.25 * std::numbers::pi * (1 + 2 * c);
        motion_point.at(y, x, c) += 0.12 * std::sin(0.5 * std::numbers::pi * x + phase) +
                                    0.05 * std::sin(0.5 * std::numbers::pi * y + phase);
      }
  cases.push_back({"displacement_loss",
                   [reference, signals](ad::Tape&, ad::Var x) {
                     return displacement_loss(make_motion_pair(reference, x), signals);
                   },
                   point});
  cases.push_back({"appearance_loss",
                   [reference, signals](ad::Tape&, ad::Var x) {
                     return appearance_loss(make_motion_pair(reference, x), signals);
                   },
                   motion_point});
  cases.push_back({"semantic_loss",
                   [reference, signals](ad::Tape&, ad::Var x) {
                     return semantic_loss(make_motion_pair(reference, x), signals);
                   },
                   motion_point});
  return cases;
}

std::vector<GradCheckResult> run_gradcheck_suite(const GradCheckOptions& options, int size) {
  std::vector<GradCheckResult> out;
  for (const GradCheckCase& c : gradcheck_cases(size, options.seed)) {
    const auto t0 = std::chrono::steady_clock::now();
    GradCheckResult r{c.name, finite_diff_check(c.energy, c.point, options)};
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace dag
