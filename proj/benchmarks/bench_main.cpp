#include <benchmark/benchmark.h>

#include "dag/align_dca.hpp"
#include "dag/align_dga.hpp"
#include "dag/align_dma.hpp"
#include "dag/sampler.hpp"

namespace {

using namespace dag;

SceneSpec two_objects(int size) {
  SceneSpec s;
  s.height = s.width = size;
  const double q = size / 4.0;
  s.objects = {{Category::kDisk, Color::kRed, {q, q}, q / 2}, {Category::kSquare, Color::kBlue, {3 * q, 3 * q}, q / 2}};
  return s;
}

MixtureModel shifted_modes(const SceneSpec& scene, int count) {
  std::vector<Image> modes;
  for (int k = 0; k < count; ++k) {
    SceneSpec m = scene;
    for (ObjectSpec& o : m.objects) o.center.x += k - count / 2;
    modes.push_back(render_scene(m));
  }
  return MixtureModel{modes, std::vector<double>(modes.size(), 1.0 / modes.size()), kDefaultModeStddev};
}

void BM_ExactEpsilon(benchmark::State& state) {
  const SceneSpec scene = two_objects(static_cast<int>(state.range(0)));
  const MixtureModel mix = shifted_modes(scene, static_cast<int>(state.range(1)));
  const Schedule s = make_schedule();
  const Image x = initial_noise(mix.shape(), 0);
  for (auto _ : state) benchmark::DoNotOptimize(exact_epsilon(x, s.timestep(10), mix, s));
}
BENCHMARK(BM_ExactEpsilon)->Args({32, 2})->Args({32, 9})->Args({64, 9});

void BM_DcaGradient(benchmark::State& state) {
  const SceneSpec scene = two_objects(static_cast<int>(state.range(0)));
  const ConditionSet c = scene_to_conditions(scene);
  const TextConcepts text = build_text_concepts(c);
  const Image img = render_scene(scene);
  for (auto _ : state) {
    ad::Tape t;
    ad::Var x = t.leaf(img);
    ad::Var e = dca_energy(text, build_visual_concepts(x, text, c)).energy;
    t.forward_eval(e);
    t.backward(e);
    benchmark::DoNotOptimize(t.adjoint(x));
  }
}
BENCHMARK(BM_DcaGradient)->Arg(32)->Arg(64);

void BM_DgaGradient(benchmark::State& state) {
  const SceneSpec scene = two_objects(static_cast<int>(state.range(0)));
  const LayoutTarget target = make_layout_target(scene_to_conditions(scene).layout);
  const Image img = render_scene(scene);
  for (auto _ : state) {
    ad::Tape t;
    ad::Var x = t.leaf(img);
    ad::Var e = dga_energy(predict_layout(x, target), target).energy;
    t.forward_eval(e);
    t.backward(e);
    benchmark::DoNotOptimize(t.adjoint(x));
  }
}
BENCHMARK(BM_DgaGradient)->Arg(32)->Arg(64);

void BM_DmaGradient(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  SceneSpec scene;
  scene.height = scene.width = size;
  scene.objects = {{Category::kDisk, Color::kRed, {size * 0.4, size * 0.5}, size / 6.0}};
  const Image ref = render_scene(scene);
  const std::vector<DragSignal> signals{
      make_drag_signal({{size * 0.4, size * 0.5}, {size * 0.4 + 4, size * 0.5}}, ref)};
  for (auto _ : state) {
    ad::Tape t;
    ad::Var x = t.leaf(ref);
    ad::Var e = dma_energy(make_motion_pair(ref, x), signals).energy;
    t.forward_eval(e);
    t.backward(e);
    benchmark::DoNotOptimize(t.adjoint(x));
  }
}
BENCHMARK(BM_DmaGradient)->Arg(32)->Arg(64);

void BM_FlowEstimate(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  SceneSpec a;
  a.height = a.width = size;
  a.objects = {{Category::kDisk, Color::kGreen, {size * 0.4, size * 0.5}, size / 8.0}};
  SceneSpec b = a;
  b.objects[0].center.x += 2;
  const Image src = render_scene(a), dst = render_scene(b);
  FlowOptions options;
  options.search_radius = static_cast<int>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(estimate_flow(src, dst, options));
}
BENCHMARK(BM_FlowEstimate)->Args({32, 3})->Args({32, 5})->Args({64, 5});

void BM_GuidedRun(benchmark::State& state) {
  const SceneSpec scene = two_objects(32);
  const MixtureModel mix = shifted_modes(scene, 2);
  ConditionSet c = scene_to_conditions(scene);
  std::vector<std::unique_ptr<Energy>> energies;
  energies.push_back(make_energy(Module::kDca, c));
  energies.push_back(make_energy(Module::kDga, c));
  const Schedule s = make_schedule(static_cast<int>(state.range(0)));
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(sample_loop(s, mix, c, energies, seed++, {false}).final_image);
}
BENCHMARK(BM_GuidedRun)->Arg(50)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
