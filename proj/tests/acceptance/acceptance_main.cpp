// Acceptance checks. One PASS/FAIL line per criterion; exit status 1 when
// any check fails.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include "json.hpp"
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "../support/fixtures.hpp"
#include "../support/temp_dir.hpp"
#include "dag/align_dca.hpp"
#include "dag/align_dga.hpp"
#include "dag/align_dma.hpp"
#include "dag/harness.hpp"
#include "dag/io.hpp"

namespace {

using namespace dag;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

double median(std::vector<double> v) { return summarize(std::move(v)).median; }

Outcome gradient_soundness() {
  const auto start = Clock::now();
  double worst = 0.0;
  std::string worst_name;
  std::size_t cases = 0;
  for (const GradCheckResult& r : run_gradcheck_suite()) {
    ++cases;
    if (r.report.max_relative_error >= worst) {
      worst = r.report.max_relative_error;
      worst_name = r.name;
    }
  }
  const double secs = seconds_since(start);
  return {worst <= 1e-4 && secs <= 120.0, std::to_string(cases) + " cases, max rel err " + fmt("%.3g", worst) +
                                              " (" + worst_name + "), " + fmt("%.1f", secs) + " s"};
}

Outcome sampler_exactness() {
  const Schedule schedule = make_schedule();
  SceneSpec scene;
  scene.objects = {{Category::kDisk, Color::kRed, {10, 10}, 5}, {Category::kSquare, Color::kBlue, {21, 21}, 5}};
  const Image mu = render_scene(scene);
  const MixtureModel mix{{mu}, {1.0}, 0.0};
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const SampleTrace trace = sample_loop(schedule, mix, scene_to_conditions(scene), {}, seed);
    worst = std::max(worst, max_abs_diff(trace.final_image, mu));
    // Closed-form trajectory: x_t = sqrt(a_t) mu + sqrt(1 - a_t) eps_T.
    const int t0 = schedule.timestep(0);
    const double a0 = schedule.alpha(t0);
    const Image eps_T = scaled(axpy(trace.initial, -std::sqrt(a0), mu), 1.0 / std::sqrt(1.0 - a0));
    for (const StepRecord& r : trace.steps) {
      const Image expected = axpy(scaled(mu, std::sqrt(r.alpha_bar)), std::sqrt(1.0 - r.alpha_bar), eps_T);
      worst = std::max(worst, max_abs_diff(r.x_t, expected));
    }
  }
  return {worst <= 1e-6, "10 seeds, sup-norm gap to mode/trajectory " + fmt("%.3g", worst)};
}

Outcome guidance_window() {
  ExperimentConfig c = testing::drag_suite(1);
  c.use_text = true;
  c.use_layout = true;
  c.modules.reset();
  const ConditionSet conditions = make_conditions(c);
  std::vector<std::unique_ptr<Energy>> energies;
  for (Module m : active_modules(c, conditions)) energies.push_back(make_energy(m, conditions));
  const Schedule schedule = make_schedule(c);
  const MixtureModel mix = make_mixture(c);
  int checked = 0, mismatched = 0, guided_changed = 0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const SampleTrace trace = sample_loop(schedule, mix, conditions, energies, seed);
    for (const StepRecord& r : trace.steps) {
      if (schedule.in_guidance_window(r.iteration)) {
        guided_changed += !(r.eps_tilde == r.eps_hat);
        continue;
      }
      ++checked;
      mismatched += !(r.eps_tilde == r.eps_hat);
    }
  }
  return {checked == 3 * 15 && mismatched == 0,
          std::to_string(checked) + " late steps checked with dca+dga+dma active, " + std::to_string(mismatched) +
              " differ; " + std::to_string(guided_changed) + " early steps guided"};
}

std::filesystem::path margin_baseline_path() { return std::filesystem::path(DAG_TEST_DATA_DIR) / "layout_margin.json"; }

Outcome dga_efficacy() {
  const auto start = Clock::now();
  ExperimentConfig c = testing::layout_suite(50);
  const ExperimentResult r = run_experiment(c, {false, false});
  int wins = 0;
  std::vector<double> margins;
  for (const SeedEntry& e : r.report.seeds) {
    const double g = *e.guided.get("iou"), b = *e.baseline.get("iou");
    wins += g > b;
    margins.push_back(g - b);
  }
  double mean = 0.0;
  for (double m : margins) mean += m / static_cast<double>(margins.size());
  const double secs = seconds_since(start);
  std::string detail = std::to_string(wins) + "/50 IoU wins, mean margin " + fmt("%.4f", mean) + ", " +
                       fmt("%.1f", secs) + " s";
  bool margin_ok = mean > 0.0;
  if (std::filesystem::exists(margin_baseline_path())) {
    const double recorded = json::parse(read_text(margin_baseline_path())).at("mean_iou_margin").get<double>();
    margin_ok = margin_ok && mean >= recorded - 1e-9;
    detail += ", recorded baseline " + fmt("%.4f", recorded);
  } else {
    write_text(margin_baseline_path(), json{{"mean_iou_margin", mean}, {"seeds", 50}}.dump(2) + "\n");
    detail += ", baseline recorded";
  }
  return {wins >= 45 && margin_ok && secs <= 600.0, detail};
}

LayoutTarget target_of(const std::vector<Image>& masks) {
  LayoutCondition c;
  c.masks = masks;
  for (std::size_t i = 0; i < masks.size(); ++i) {
    c.colors.push_back(kColors[i % kColors.size()]);
    c.categories.push_back(Category::kSquare);
  }
  return make_layout_target(c);
}

Image random_mask(int h, int w, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 0.95);
  Image m(Shape{h, w, 1});
  for (double& v : m.values()) v = u(rng);
  return m;
}

Outcome dga_identities() {
  std::mt19937_64 rng(5);
  bool ok = true;
  std::ostringstream out;

  // Disjoint hard masks predicted perfectly.
  const SceneSpec scene{32, 32, {{Category::kDisk, Color::kRed, {10, 10}, 5}, {Category::kSquare, Color::kBlue, {21, 21}, 5}}, {}};
  const GroundTruth gt = ground_truth(scene);
  {
    ad::Tape t;
    std::vector<ad::Var> vars;
    for (const Image& m : gt.masks) vars.push_back(t.leaf(m));
    const double cov = coverage_loss(make_layout_prediction(vars), target_of(gt.masks)).item();
    ok = ok && cov == 0.0;
    out << "coverage " << cov;
  }

  double size_gap = 0.0, dist_gap = 0.0, recomposition = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + trial % 3;
    std::vector<Image> pred, target;
    for (int i = 0; i < n; ++i) {
      pred.push_back(random_mask(12, 12, rng));
      target.push_back(random_mask(12, 12, rng));
    }
    const LayoutTarget tg = target_of(target);
    ad::Tape t;
    std::vector<ad::Var> base_vars, scaled_vars;
    for (const Image& m : pred) {
      base_vars.push_back(t.leaf(m));
      scaled_vars.push_back(t.leaf(scaled(m, 4.0)));
    }
    const LayoutPrediction p = make_layout_prediction(base_vars);
    size_gap = std::max(size_gap, std::abs(size_loss(p, tg).item() -
                                           size_loss(make_layout_prediction(scaled_vars), tg).item()));

    // Shift every predicted and target centroid by the same offset.
    LayoutPrediction moved = p;
    LayoutTarget moved_target = tg;
    const double dx = 2.75, dy = -1.5;
    for (std::size_t i = 0; i < moved.masks.size(); ++i) {
      moved.centroid_x[i] = ad::shift(p.centroid_x[i], dx);
      moved.centroid_y[i] = ad::shift(p.centroid_y[i], dy);
      moved_target.centroids[i] = {tg.centroids[i].x + dx, tg.centroids[i].y + dy};
    }
    dist_gap = std::max(dist_gap, std::abs(dist_loss(p, tg).item() - dist_loss(moved, moved_target).item()));

    const DgaTerms terms = dga_energy(p, tg);
    const double e = 0.75 * terms.coverage.item() + 0.25 * (terms.size.item() + terms.distance.item());
    recomposition = std::max(recomposition, std::abs(terms.energy.item() - e));
  }
  ok = ok && size_gap == 0.0 && dist_gap <= 1e-12 && recomposition <= 1e-12;
  out << ", size scaling gap " << size_gap << ", dist translation gap " << dist_gap << ", lambda recomposition "
      << recomposition;
  return {ok, out.str()};
}

Outcome dca_bounds_and_efficacy() {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> pixel(-1.0, 2.0);
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (int i = 0; i < 1000; ++i) {
    const SceneSpec scene = testing::separated_scene(rng);
    const ConditionSet c = scene_to_conditions(scene);
    Image img;
    if (i % 2 == 0) {
      img = Image(Shape{32, 32, 3});
      for (double& v : img.values()) v = pixel(rng);
    } else {
      img = render_scene(testing::separated_scene(rng));
    }
    const double e = testing::dca_value(c, build_text_concepts(c), img);
    lo = std::min(lo, e);
    hi = std::max(hi, e);
  }

  std::mt19937_64 paired(1);
  int wins = 0;
  for (int i = 0; i < 20; ++i) {
    const SceneSpec scene = testing::separated_scene(paired);
    const ConditionSet c = scene_to_conditions(scene);
    const TextConcepts text = build_text_concepts(c);
    wins += testing::dca_value(c, text, render_scene(scene)) <
            testing::dca_value(c, text, render_scene(testing::scrambled(scene)));
  }

  double recomposition = 0.0;
  for (int i = 0; i < 20; ++i) {
    const SceneSpec scene = testing::separated_scene(rng);
    const ConditionSet c = scene_to_conditions(scene);
    const TextConcepts text = build_text_concepts(c);
    ad::Tape t;
    const VisualConcepts visual =
        build_visual_concepts(t.constant(render_scene(testing::separated_scene(rng))), text, c);
    const DcaTerms terms = dca_energy(text, visual);
    const double e = -(0.7 * terms.scene.item() + 0.3 * (terms.attribute.item() + terms.relation.item()));
    recomposition = std::max(recomposition, std::abs(terms.energy.item() - e));
  }
  std::ostringstream out;
  out << "1000 inputs in [" << lo << ", " << hi << "], " << wins << "/20 ideal < scrambled, gamma recomposition "
      << recomposition;
  return {lo >= -1.3 && hi <= 1.3 && wins == 20 && recomposition <= 1e-12, out.str()};
}

Outcome dma_flow_and_tracking() {
  std::ostringstream out;
  bool exact = true;
  const std::vector<std::pair<SceneSpec, DragPoint>> drags{
      {SceneSpec{32, 32, {{Category::kDisk, Color::kRed, {12, 16}, 5}}, {}}, {{12, 16}, {16, 16}}},
      {SceneSpec{32, 32, {{Category::kSquare, Color::kGreen, {20, 10}, 6}}, {}}, {{18, 9}, {14, 15}}},
      {SceneSpec{32, 32, {{Category::kTriangle, Color::kYellow, {16, 18}, 7}}, {}}, {{16, 19}, {19, 22}}}};
  for (const auto& [scene, drag] : drags) {
    const DragSignal s = make_drag_signal(drag, render_scene(scene));
    const Image u = densify_drag_flow(s);
    const int ox = static_cast<int>(drag.origin.x), oy = static_cast<int>(drag.origin.y);
    exact = exact && u.at(oy, ox, 0) == drag.destination.x - drag.origin.x &&
            u.at(oy, ox, 1) == drag.destination.y - drag.origin.y;
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x)
        if (s.instance_mask.at(y, x) == 0.0) exact = exact && u.at(y, x, 0) == 0.0 && u.at(y, x, 1) == 0.0;
  }
  out << "densify exact " << (exact ? "yes" : "no");

  const ExperimentResult r = run_experiment(testing::drag_suite(25), {false, false});
  std::vector<double> reductions, base, guided;
  for (const SeedEntry& e : r.report.seeds) {
    const double b = *e.baseline.get("mean_distance"), g = *e.guided.get("mean_distance");
    base.push_back(b);
    guided.push_back(g);
    if (b > 0.0) reductions.push_back(1.0 - g / b);
    else reductions.push_back(g == 0.0 ? 1.0 : -std::numeric_limits<double>::infinity());
  }
  const double reduction = median(reductions);
  out << ", median MD " << median(base) << " -> " << median(guided) << ", median reduction "
      << fmt("%.3f", reduction);

  double recomposition = 0.0;
  {
    const SceneSpec scene{32, 32, {{Category::kDisk, Color::kRed, {12, 16}, 5}}, {}};
    const Image ref = render_scene(scene);
    SceneSpec moved = scene;
    moved.objects[0].center.x = 14;
    std::vector<DragSignal> signals{make_drag_signal({{12, 16}, {16, 16}}, ref)};
    ad::Tape t;
    const DmaTerms terms = dma_energy(make_motion_pair(ref, t.leaf(render_scene(moved))), signals);
    const double e = 0.98 * terms.displacement.item() + 0.02 * (terms.appearance.item() + terms.semantic.item());
    recomposition = std::abs(terms.energy.item() - e);
  }
  out << ", eta recomposition " << recomposition;
  return {exact && reduction >= 0.5 && recomposition <= 1e-12, out.str()};
}

int dagctl(const std::string& args) {
  const std::string cmd = std::string(DAGCTL_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome determinism() {
  testing::TempDir dir;
  const std::string config = std::string(DAG_CONFIG_DIR) + "/minimal.json";
  const std::string a = (dir / "a").string(), b = (dir / "b").string();
  if (dagctl("guide --config " + config + " --seed 3 --out " + a) != 0 ||
      dagctl("guide --config " + config + " --seed 3 --out " + b) != 0)
    return {false, "dagctl guide failed"};
  int identical = 0;
  for (const char* f : {"metrics.json", "final.png", "baseline.png"})
    identical += read_text(dir / "a" / f) == read_text(dir / "b" / f);
  return {identical == 3, std::to_string(identical) + "/3 files byte-identical across two runs"};
}

Outcome weight_defaults() {
  testing::TempDir dir;
  const std::filesystem::path config = dir / "fresh.json";
  write_text(config, R"({
  "conditions": {
    "scene": {
      "objects": [
        {"category": "disk", "color": "red", "center": [10, 12], "size": 5},
        {"category": "square", "color": "blue", "center": [22, 20], "size": 5}
      ],
      "relations": [{"subject": 0, "object": 1, "predicate": "left-of"}]
    },
    "drags": [{"origin": [10, 12], "destination": [13, 12]}]
  }
}
)");
  if (dagctl("guide --config " + config.string() + " --out " + (dir / "out").string()) != 0)
    return {false, "dagctl guide failed"};
  const json steps = json::parse(read_text(dir / "out" / "steps.json"));
  const json& w = steps.at("weights");
  bool ok = steps.at("steps") == 50 && w.at("dca") == 60.0 && w.at("dga") == 25.0 && w.at("dma") == 90.0 &&
            steps.at("modules") == json::array({"dca", "dga", "dma"}) && steps.at("guided").size() == 50;
  int guided = 0;
  for (const json& s : steps.at("guided")) {
    const bool g = s.at("guided").get<bool>();
    guided += g;
    const json& sigma = s.at("sigma");
    ok = ok && sigma.at("dca") == (g ? 60.0 : 0.0) && sigma.at("dga") == (g ? 25.0 : 0.0) &&
         sigma.at("dma") == (g ? 90.0 : 0.0);
  }
  ok = ok && guided == 35;
  return {ok, "T=" + steps.at("steps").dump() + ", weights " + w.dump() + ", " + std::to_string(guided) +
                  " guided steps"};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> checks{
      {"gradient soundness", gradient_soundness},
      {"sampler exactness", sampler_exactness},
      {"guidance window", guidance_window},
      {"layout guidance efficacy", dga_efficacy},
      {"layout term identities", dga_identities},
      {"concept alignment bounds and efficacy", dca_bounds_and_efficacy},
      {"motion flow and tracking", dma_flow_and_tracking},
      {"determinism", determinism},
      {"weight schedule defaults", weight_defaults},
  };
  int failures = 0;
  for (std::size_t i = 0; i < checks.size(); ++i) {
    Outcome o;
    try {
      o = checks[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, checks[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
