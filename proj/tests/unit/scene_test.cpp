#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "dag/conditions.hpp"
#include "dag/error.hpp"
#include "dag/scene.hpp"

namespace dag {
namespace {

ObjectSpec object(Category cat, Color col, double x, double y, double size) {
  ObjectSpec o;
  o.category = cat;
  o.color = col;
  o.center = {x, y};
  o.size = size;
  return o;
}

SceneSpec scene(std::vector<ObjectSpec> objects, std::vector<RelationSpec> relations = {}) {
  SceneSpec s;
  s.objects = std::move(objects);
  s.relations = std::move(relations);
  return s;
}

TEST(Render, EmptySceneIsBackground) {
  const Image img = render_scene(scene({}));
  EXPECT_EQ(img.shape(), (Shape{32, 32, 3}));
  for (double v : img.values()) EXPECT_EQ(v, kBackgroundLevel);
}

TEST(Render, RedDiskCenterAndCorner) {
  const Image img = render_scene(scene({object(Category::kDisk, Color::kRed, 16, 16, 6)}));
  EXPECT_GE(img.at(16, 16, 0), 0.9);
  EXPECT_LE(img.at(0, 0, 0), 0.15);
}

TEST(Render, ValuesInUnitRange) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Image img = render_scene(random_scene(seed, 32, 32, 3));
    for (double v : img.values()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Render, MirroredPairIsSymmetric) {
  for (Category c : kCategories) {
    const SceneSpec s = scene({object(c, Color::kGreen, 9, 14, 4), object(c, Color::kGreen, 22, 14, 4)});
    const Image img = render_scene(s);
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x)
        for (int ch = 0; ch < 3; ++ch) ASSERT_EQ(img.at(y, x, ch), img.at(y, 31 - x, ch)) << name(c);
  }
}

TEST(Render, LaterObjectsOcclude) {
  const Image img = render_scene(scene({object(Category::kSquare, Color::kRed, 16, 16, 6),
                                        object(Category::kSquare, Color::kBlue, 16, 16, 3)}));
  const Rgb blue = palette(Color::kBlue);
  EXPECT_NEAR(img.at(16, 16, 0), blue.r, 1e-9);
  EXPECT_NEAR(img.at(16, 16, 2), blue.b, 1e-9);
}

TEST(Render, Pure) {
  const SceneSpec s = random_scene(3, 32, 32, 2);
  const Image a = render_scene(s);
  render_scene(random_scene(4, 32, 32, 2));
  EXPECT_EQ(a, render_scene(s));
}

TEST(Vocabulary, RoundTripsAndRejectsUnknown) {
  for (Category c : kCategories) EXPECT_EQ(parse_category(name(c)), c);
  for (Color c : kColors) EXPECT_EQ(parse_color(name(c)), c);
  for (Predicate p : kPredicates) EXPECT_EQ(parse_predicate(name(p)), p);
  try {
    parse_category("hexagon");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("disk"), std::string::npos);
  }
  EXPECT_THROW(parse_color("purple"), ConfigError);
  EXPECT_THROW(parse_predicate("behind"), ConfigError);
}

TEST(SceneSpecValidate, Invariants) {
  EXPECT_THROW(scene({object(Category::kDisk, Color::kRed, 16, 16, 1.5)}).validate(), ConfigError);
  SceneSpec bad_rel = scene({object(Category::kDisk, Color::kRed, 8, 8, 3)}, {{0, 0, Predicate::kLeftOf}});
  EXPECT_THROW(bad_rel.validate(), ConfigError);
  SceneSpec out_of_range =
      scene({object(Category::kDisk, Color::kRed, 8, 8, 3)}, {{0, 2, Predicate::kLeftOf}});
  EXPECT_THROW(out_of_range.validate(), ConfigError);
}

TEST(Conditions, SingleDisk) {
  const ConditionSet c = scene_to_conditions(scene({object(Category::kDisk, Color::kRed, 16, 16, 6)}));
  ASSERT_EQ(c.attributes.size(), 1u);
  EXPECT_EQ(c.attributes[0].color, Color::kRed);
  EXPECT_EQ(c.attributes[0].category, Category::kDisk);
  EXPECT_TRUE(c.relations.empty());
}

TEST(Conditions, RelationTriple) {
  const ConditionSet c = scene_to_conditions(scene({object(Category::kDisk, Color::kRed, 8, 16, 4),
                                                    object(Category::kSquare, Color::kBlue, 24, 16, 4)},
                                                   {{0, 1, Predicate::kLeftOf}}));
  EXPECT_EQ(c.attributes.size(), 2u);
  ASSERT_EQ(c.relations.size(), 1u);
  EXPECT_EQ(c.relations[0].triple.subject_category, Category::kDisk);
  EXPECT_EQ(c.relations[0].triple.predicate, Predicate::kLeftOf);
  EXPECT_EQ(c.relations[0].triple.object_category, Category::kSquare);
  EXPECT_EQ(c.layout.size(), 2u);
}

TEST(Conditions, UnitsToggle) {
  ConditionSet c = scene_to_conditions(scene({object(Category::kDisk, Color::kRed, 16, 16, 5)}),
                                       {DragPoint{{16, 16}, {20, 16}}});
  EXPECT_TRUE(c.has_text() && c.has_layout() && c.has_drag());
  c.use_layout = false;
  c.use_drag = false;
  EXPECT_FALSE(c.has_layout());
  EXPECT_FALSE(c.has_drag());
  EXPECT_TRUE(c.has_text());
}

TEST(GroundTruthMasks, DiskAreaNearPiRSquared) {
  for (double r : {4.0, 5.0, 6.0, 8.0}) {
    const GroundTruth gt = ground_truth(scene({object(Category::kDisk, Color::kRed, 16, 16, r)}));
    EXPECT_NEAR(gt.areas[0], std::numbers::pi * r * r, 0.05 * std::numbers::pi * r * r) << r;
  }
}

TEST(GroundTruthMasks, InvariantsHold) {
  const SceneSpec s = scene({object(Category::kDisk, Color::kRed, 8, 8, 4),
                             object(Category::kSquare, Color::kBlue, 22, 20, 5)});
  const GroundTruth gt = ground_truth(s);
  ASSERT_EQ(gt.masks.size(), 2u);
  for (std::size_t k = 0; k < 2; ++k) {
    double area = 0, mx = 0, my = 0;
    int x0 = 99, y0 = 99, x1 = -1, y1 = -1;
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) {
        const double m = gt.masks[k].at(y, x);
        EXPECT_TRUE(m == 0.0 || m == 1.0);
        if (m == 0.0) continue;
        area += 1;
        mx += x;
        my += y;
        x0 = std::min(x0, x), x1 = std::max(x1, x), y0 = std::min(y0, y), y1 = std::max(y1, y);
      }
    EXPECT_EQ(gt.areas[k], area);
    EXPECT_NEAR(gt.centroids[k].x, mx / area, 1e-12);
    EXPECT_NEAR(gt.centroids[k].y, my / area, 1e-12);
    EXPECT_EQ(gt.boxes[k].x_min, x0);
    EXPECT_EQ(gt.boxes[k].x_max, x1);
    EXPECT_EQ(gt.boxes[k].y_min, y0);
    EXPECT_EQ(gt.boxes[k].y_max, y1);
    EXPECT_NEAR(gt.centroids[k].x, s.objects[k].center.x, 0.5);
    EXPECT_NEAR(gt.centroids[k].y, s.objects[k].center.y, 0.5);
  }
  for (std::size_t i = 0; i < gt.masks[0].size(); ++i) EXPECT_EQ(gt.masks[0][i] * gt.masks[1][i], 0.0);
}

TEST(Prototypes, AttributeIsCenteredAtQuarterSize) {
  const SceneSpec s = prototype_scene(Category::kDisk, Color::kRed, 32, 32);
  ASSERT_EQ(s.objects.size(), 1u);
  EXPECT_EQ(s.objects[0].size, 8.0);
  const Image img = prototype_image(Category::kDisk, Color::kRed, 32, 32);
  EXPECT_EQ(img, render_scene(s));
  const Point c = ground_truth(s).centroids[0];
  EXPECT_NEAR(c.x, s.objects[0].center.x, 0.5);
  EXPECT_NEAR(c.y, s.objects[0].center.y, 0.5);
  EXPECT_NEAR(s.objects[0].center.x, 16.0, 0.5);
}

TEST(Prototypes, RelationLeftOf) {
  const RelationTriple t{Category::kDisk, Color::kWhite, Predicate::kLeftOf, Category::kSquare, Color::kWhite};
  const SceneSpec s = relation_scene(t, 32, 32);
  ASSERT_EQ(s.objects.size(), 2u);
  ASSERT_EQ(s.relations.size(), 1u);
  const RelationSpec& r = s.relations[0];
  EXPECT_EQ(s.objects[r.subject].category, Category::kDisk);
  EXPECT_LT(s.objects[r.subject].center.x, s.objects[r.object].center.x);
  EXPECT_EQ(prototype_image(t, 32, 32), prototype_image(t, 32, 32));
}

TEST(Prototypes, NeutralGrayWithoutColor) {
  const Image img = prototype_image(Category::kSquare, std::nullopt, 32, 32);
  const SceneSpec s = prototype_scene(Category::kSquare, std::nullopt, 32, 32);
  const int cx = static_cast<int>(s.objects[0].center.x), cy = static_cast<int>(s.objects[0].center.y);
  EXPECT_NEAR(img.at(cy, cx, 0), kNeutralGray.r, 1e-9);
  EXPECT_NEAR(img.at(cy, cx, 1), kNeutralGray.g, 1e-9);
}

TEST(RandomScene, SeededAndInside) {
  const SceneSpec a = random_scene(42, 32, 32, 3);
  const SceneSpec b = random_scene(42, 32, 32, 3);
  ASSERT_EQ(a.objects.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a.objects[i].center, b.objects[i].center);
    const ObjectSpec& o = a.objects[i];
    EXPECT_GE(o.size, 3.0);
    EXPECT_LE(o.size, 6.0);
    EXPECT_GE(o.center.x - o.size, 0.0);
    EXPECT_LE(o.center.x + o.size, 31.0);
  }
  EXPECT_NO_THROW(a.validate());
}

}  // namespace
}  // namespace dag
