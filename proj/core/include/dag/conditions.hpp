#pragma once

// The three condition units (text, layout, drag) derived from a scene.

#include <optional>
#include <vector>

#include "dag/image.hpp"
#include "dag/scene.hpp"

namespace dag {

// Adjective-noun pair for one condition object.
struct AttributeConcept {
  Category category = Category::kDisk;
  Color color = Color::kRed;
  int object_index = 0;
};

struct RelationConcept {
  int subject = 0;
  int object = 1;
  RelationTriple triple;
};

// Target layout: one class (color, category) and one HxWx1 mask per object.
struct LayoutCondition {
  std::vector<Image> masks;
  std::vector<Color> colors;
  std::vector<Category> categories;

  std::size_t size() const { return masks.size(); }
};

struct DragPoint {
  Point origin;
  Point destination;
};

struct ConditionSet {
  int height = 32;
  int width = 32;
  // Scene the concepts and layout were extracted from; its render is the
  // ideal image used for the scene-level text embedding.
  SceneSpec scene;

  bool use_text = true;
  bool use_layout = true;
  bool use_drag = true;

  std::vector<AttributeConcept> attributes;
  std::vector<RelationConcept> relations;
  LayoutCondition layout;
  std::vector<DragPoint> drags;
  // Pixels outside this HxWx1 region are frozen to the unguided update.
  std::optional<Image> editable_region;

  bool has_text() const { return use_text; }
  bool has_layout() const { return use_layout && layout.size() > 0; }
  bool has_drag() const { return use_drag && !drags.empty(); }
};

ConditionSet scene_to_conditions(const SceneSpec& scene, std::vector<DragPoint> drags = {});

// Filled rectangle covering pixel centers inside the (inclusive) box.
Image box_mask(int height, int width, const Box& box);
LayoutCondition layout_from_boxes(int height, int width, const std::vector<Box>& boxes,
                                  const std::vector<Color>& colors,
                                  const std::vector<Category>& categories);

}  // namespace dag
