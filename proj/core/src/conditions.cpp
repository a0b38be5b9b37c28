#include "dag/conditions.hpp"

#include <cmath>

#include "dag/error.hpp"

namespace dag {

ConditionSet scene_to_conditions(const SceneSpec& scene, std::vector<DragPoint> drags) {
  scene.validate();
  ConditionSet c;
  c.height = scene.height;
  c.width = scene.width;
  c.scene = scene;
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const ObjectSpec& o = scene.objects[i];
    c.attributes.push_back(AttributeConcept{o.category, o.color, static_cast<int>(i)});
  }
  for (const RelationSpec& r : scene.relations) {
    const ObjectSpec& s = scene.objects[r.subject];
    const ObjectSpec& o = scene.objects[r.object];
    c.relations.push_back(RelationConcept{
        r.subject, r.object, RelationTriple{s.category, s.color, r.predicate, o.category, o.color}});
  }
  GroundTruth gt = ground_truth(scene);
  c.layout.masks = std::move(gt.masks);
  for (const ObjectSpec& o : scene.objects) {
    c.layout.colors.push_back(o.color);
    c.layout.categories.push_back(o.category);
  }
  for (const DragPoint& d : drags) {
    for (Point p : {d.origin, d.destination}) {
      if (p.x < 0 || p.y < 0 || p.x > scene.width - 1 || p.y > scene.height - 1) {
        throw ConfigError("drag point outside the canvas");
      }
    }
  }
  c.drags = std::move(drags);
  return c;
}

Image box_mask(int height, int width, const Box& box) {
  Image m(Shape{height, width, 1});
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      if (x >= box.x_min && x <= box.x_max && y >= box.y_min && y <= box.y_max) m.at(y, x) = 1.0;
  return m;
}

LayoutCondition layout_from_boxes(int height, int width, const std::vector<Box>& boxes,
                                  const std::vector<Color>& colors,
                                  const std::vector<Category>& categories) {
  if (boxes.size() != colors.size() || boxes.size() != categories.size()) {
    throw ConfigError("layout boxes, colors and categories must have equal length");
  }
  LayoutCondition l;
  for (const Box& b : boxes) l.masks.push_back(box_mask(height, width, b));
  l.colors = colors;
  l.categories = categories;
  return l;
}

}  // namespace dag
