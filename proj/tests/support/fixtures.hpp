#pragma once

// Scene generators shared by the unit tests and the acceptance checks.

#include <cmath>
#include <cstdint>
#include <random>

#include "dag/align_dca.hpp"
#include "dag/config.hpp"
#include "dag/scene.hpp"

namespace dag::testing {

// 1..4 non-touching random objects on 32x32; a relation between the first
// two when there are at least two.
inline SceneSpec separated_scene(std::mt19937_64& rng) {
  SceneSpec scene;
  std::uniform_int_distribution<int> count(1, 4), category(0, 3), color(0, 4);
  std::uniform_real_distribution<double> position(6, 25), size(3, 6);
  const int wanted = count(rng);
  for (int tries = 0; static_cast<int>(scene.objects.size()) < wanted && tries < 1000; ++tries) {
    ObjectSpec o{kCategories[category(rng)], kColors[color(rng)], {position(rng), position(rng)}, size(rng)};
    bool clear = true;
    for (const ObjectSpec& p : scene.objects)
      if (std::hypot(p.center.x - o.center.x, p.center.y - o.center.y) < p.size + o.size + 2) clear = false;
    if (clear) scene.objects.push_back(o);
  }
  if (scene.objects.size() >= 2) scene.relations.push_back({0, 1, kPredicates[category(rng)]});
  return scene;
}

// Same placements with every color and category moved to the next token.
inline SceneSpec scrambled(SceneSpec scene) {
  for (ObjectSpec& o : scene.objects) {
    o.color = kColors[(static_cast<int>(o.color) + 1) % kColors.size()];
    o.category = kCategories[(static_cast<int>(o.category) + 1) % kCategories.size()];
  }
  return scene;
}

inline double dca_value(const ConditionSet& conditions, const TextConcepts& text, const Image& image) {
  ad::Tape tape;
  const VisualConcepts visual = build_visual_concepts(tape.constant(image), text, conditions);
  return dca_energy(text, visual).energy.item();
}

// Red disk and blue square with the two mixture modes shifted diagonally
// away from the target layout.
inline ExperimentConfig layout_suite(int seeds) {
  ExperimentConfig c;
  c.scene.objects = {{Category::kDisk, Color::kRed, {10, 10}, 5}, {Category::kSquare, Color::kBlue, {21, 21}, 5}};
  SceneSpec plus = c.scene, minus = c.scene;
  for (ObjectSpec& o : plus.objects) o.center = {o.center.x + 2, o.center.y + 2};
  for (ObjectSpec& o : minus.objects) o.center = {o.center.x - 2, o.center.y - 2};
  c.mixture.modes = {plus, minus};
  c.use_text = false;
  c.modules = std::vector<Module>{Module::kDga};
  c.seeds.clear();
  for (int s = 0; s < seeds; ++s) c.seeds.push_back(static_cast<std::uint64_t>(s));
  return c;
}

// Red disk at (12,16) dragged 4 px right; modes are the disk shifted -4..4 px.
inline ExperimentConfig drag_suite(int seeds, double dma_weight = 10.0) {
  ExperimentConfig c;
  c.scene.objects = {{Category::kDisk, Color::kRed, {12, 16}, 5}};
  for (int dx = -4; dx <= 4; ++dx) {
    SceneSpec m = c.scene;
    m.objects[0].center.x += dx;
    c.mixture.modes.push_back(m);
  }
  c.use_text = false;
  c.use_layout = false;
  c.drags = {DragPoint{{12, 16}, {16, 16}}};
  c.weights.dma = dma_weight;
  c.modules = std::vector<Module>{Module::kDma};
  c.seeds.clear();
  for (int s = 0; s < seeds; ++s) c.seeds.push_back(static_cast<std::uint64_t>(s));
  return c;
}

}  // namespace dag::testing
