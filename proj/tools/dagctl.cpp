// dagctl: sample, guide, eval and gradcheck front end.

#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dag/config.hpp"
#include "dag/error.hpp"
#include "dag/harness.hpp"
#include "dag/io.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitGradcheckFailed = 1;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

constexpr double kGradcheckTolerance = 1e-4;

struct RunFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string seeds;
  std::string modules;
  std::string weights;
  std::optional<int> steps;
  std::string out;
  bool dump_raw = false;
};

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  return out;
}

double parse_weight(const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw dag::ConfigError("--weights: bad number '" + s + "'");
  }
}

dag::ExperimentConfig resolve(const RunFlags& f) {
  dag::ExperimentConfig c = dag::load_config(f.config);
  if (f.seed && !f.seeds.empty()) throw dag::ConfigError("--seed and --seeds are exclusive");
  if (f.seed) c.seeds = {*f.seed};
  if (!f.seeds.empty()) c.seeds = dag::parse_seed_range(f.seeds);
  if (!f.modules.empty()) {
    std::vector<dag::Module> mods;
    if (f.modules != "none")
      for (const std::string& m : split(f.modules, ',')) mods.push_back(dag::parse_module(m));
    c.modules = mods;
  }
  if (!f.weights.empty()) {
    const std::vector<std::string> w = split(f.weights, ',');
    if (w.size() != 3) throw dag::ConfigError("--weights expects three values dca,dga,dma");
    c.weights = {parse_weight(w[0]), parse_weight(w[1]), parse_weight(w[2])};
  }
  if (f.steps) c.steps = *f.steps;
  if (!f.out.empty()) c.output_dir = f.out;
  c.validate();
  return c;
}

void add_run_flags(CLI::App* cmd, RunFlags& f, bool with_modules) {
  cmd->add_option("--config", f.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "Single seed");
  cmd->add_option("--seeds", f.seeds, "Inclusive seed range N..M");
  if (with_modules) cmd->add_option("--modules", f.modules, "Comma list of dca,dga,dma, or none");
  cmd->add_option("--weights", f.weights, "Guidance weights dca,dga,dma");
  cmd->add_option("--steps", f.steps, "Sampling steps T");
  cmd->add_option("--out", f.out, "Output directory");
}

void print_summary(const dag::MetricsReport& report) {
  const auto agg = dag::aggregate(report);
  std::printf("%zu seed(s), T=%d, modules:", report.seeds.size(), report.steps);
  if (report.modules.empty()) std::printf(" none");
  for (dag::Module m : report.modules) std::printf(" %s", std::string(dag::name(m)).c_str());
  std::printf("\n%-14s %12s %12s %12s\n", "metric", "baseline", "guided", "delta");
  auto it = agg.find("guided");
  if (it == agg.end()) return;
  for (const auto& [k, s] : it->second) {
    std::printf("%-14s %12.4f %12.4f %12.4f  (means)\n", k.c_str(), agg.at("baseline").at(k).mean, s.mean,
                agg.at("delta").at(k).mean);
  }
  for (const std::string& n : report.notices) std::printf("notice: %s\n", n.c_str());
}

int run(const RunFlags& f, bool guided) {
  dag::ExperimentConfig c = resolve(f);
  if (!guided) c.modules = std::vector<dag::Module>{};
  const dag::ExperimentResult r = dag::run_experiment(c, {true, f.dump_raw});
  print_summary(r.report);
  std::printf("wrote %s\n", c.output_dir.c_str());
  return kExitOk;
}

int evaluate(const RunFlags& f) {
  const dag::ExperimentConfig c = resolve(f);
  std::cout << dag::to_json(dag::evaluate_outputs(c, c.output_dir));
  return kExitOk;
}

int gradcheck(int size, std::size_t samples, std::uint64_t seed) {
  dag::GradCheckOptions o;
  o.samples = samples;
  o.seed = seed;
  bool ok = true;
  double total = 0.0;
  for (const dag::GradCheckResult& r : dag::run_gradcheck_suite(o, size)) {
    const bool pass = r.report.max_relative_error <= kGradcheckTolerance;
    ok = ok && pass;
    total += r.seconds;
    std::printf("%-18s max rel err %.3e  %6.2fs  %s\n", r.name.c_str(), r.report.max_relative_error, r.seconds,
                pass ? "ok" : "FAIL");
  }
  std::printf("total %.2fs, %s\n", total, ok ? "all within 1e-4" : "failures");
  return ok ? kExitOk : kExitGradcheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Guided sampling on the synthetic testbed"};
  app.require_subcommand(1);

  RunFlags sample_flags, guide_flags, eval_flags;
  CLI::App* sample = app.add_subcommand("sample", "Unguided run");
  add_run_flags(sample, sample_flags, false);
  sample->add_flag("--dump-raw", sample_flags.dump_raw, "Also write float32 dumps");
  CLI::App* guide = app.add_subcommand("guide", "Guided run with paired baseline");
  add_run_flags(guide, guide_flags, true);
  guide->add_flag("--dump-raw", guide_flags.dump_raw, "Also write float32 dumps");
  CLI::App* eval = app.add_subcommand("eval", "Recompute metrics from an output directory");
  add_run_flags(eval, eval_flags, true);

  int gc_size = 16;
  std::size_t gc_samples = 16;
  std::uint64_t gc_seed = 7;
  CLI::App* gc = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  gc->add_option("--size", gc_size, "Scene canvas for energy checks")->check(CLI::Range(16, 128));
  gc->add_option("--samples", gc_samples, "Coordinates per check");
  gc->add_option("--seed", gc_seed, "Sampling seed");

  CLI::App* cal = app.add_subcommand("calibrate-if", "Recompute the IF proxy normalizer");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*sample) return run(sample_flags, false);
    if (*guide) return run(guide_flags, true);
    if (*eval) return evaluate(eval_flags);
    if (*gc) return gradcheck(gc_size, gc_samples, gc_seed);
    if (*cal) {
      const dag::IfCalibration& c = dag::if_calibration();
      std::printf("{\n  \"seed\": %llu,\n  \"scenes\": %d,\n  \"height\": %d,\n  \"width\": %d,\n  \"objects\": %d,\n"
                  "  \"max_feature_distance\": %.17g\n}\n",
                  static_cast<unsigned long long>(c.seed), c.scenes, c.height, c.width, c.objects,
                  dag::calibrate_if(c));
      return kExitOk;
    }
  } catch (const dag::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitOk;
}
