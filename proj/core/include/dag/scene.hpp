#pragma once

// Synthetic scene vocabulary, deterministic rendering, and ground-truth
// extraction. Pixel (x, y) has its center at integer coordinates (x, y).

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dag/image.hpp"

namespace dag {

enum class Category { kDisk, kSquare, kTriangle, kBar };
enum class Color { kRed, kGreen, kBlue, kYellow, kWhite };
enum class Predicate { kLeftOf, kAbove, kInside, kOn };

inline constexpr std::array<Category, 4> kCategories = {Category::kDisk, Category::kSquare,
                                                        Category::kTriangle, Category::kBar};
inline constexpr std::array<Color, 5> kColors = {Color::kRed, Color::kGreen, Color::kBlue,
                                                 Color::kYellow, Color::kWhite};
inline constexpr std::array<Predicate, 4> kPredicates = {Predicate::kLeftOf, Predicate::kAbove,
                                                         Predicate::kInside, Predicate::kOn};

struct Rgb {
  double r = 0.0, g = 0.0, b = 0.0;
};

inline constexpr double kBackgroundLevel = 0.1;
inline constexpr Rgb kBackground{kBackgroundLevel, kBackgroundLevel, kBackgroundLevel};
// Fill for category-only prototypes; not a palette color.
inline constexpr Rgb kNeutralGray{0.5, 0.5, 0.5};
inline constexpr double kDefaultEdgeSoftness = 1.0;
// Rendered edges sit this far outside the shape boundary, so a pixel
// centered on the boundary is more than half covered. Ground-truth masks hold
// exactly the pixels with signed distance below it.
inline constexpr double kEdgeOffset = 0.05;

Rgb palette(Color c);

std::string_view name(Category c);
std::string_view name(Color c);
std::string_view name(Predicate p);
// Throw ConfigError naming the accepted vocabulary.
Category parse_category(std::string_view s);
Color parse_color(std::string_view s);
Predicate parse_predicate(std::string_view s);

struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

struct ObjectSpec {
  Category category = Category::kDisk;
  Color color = Color::kRed;
  Point center;
  double size = 4.0;  // radius or half-extent, px
};

struct RelationSpec {
  int subject = 0;
  int object = 1;
  Predicate predicate = Predicate::kLeftOf;
};

struct SceneSpec {
  int height = 32;
  int width = 32;
  std::vector<ObjectSpec> objects;
  std::vector<RelationSpec> relations;

  // Throws ConfigError on violated invariants.
  void validate() const;
};

struct Box {
  double x_min = 0.0, y_min = 0.0, x_max = 0.0, y_max = 0.0;
};

struct GroundTruth {
  std::vector<Image> masks;  // binary HxWx1, visible part of each object
  std::vector<Box> boxes;
  std::vector<Point> centroids;
  std::vector<double> areas;
};

// Signed distance (px, negative inside) from p to the object outline.
double signed_distance(const ObjectSpec& object, Point p);

// Anti-aliased RGB render; later objects occlude earlier ones.
Image render_scene(const SceneSpec& spec, double edge_softness = kDefaultEdgeSoftness);
// Render with explicit per-object fills (used for neutral-color prototypes).
Image render_objects(int height, int width, const std::vector<ObjectSpec>& objects,
                     const std::vector<Rgb>& fills, double edge_softness = kDefaultEdgeSoftness);

GroundTruth ground_truth(const SceneSpec& spec);
// Tight box, centroid and area of a binary or soft single-channel mask.
Box mask_box(const Image& mask);
Point mask_centroid(const Image& mask);

// Canonical prototypes: centered object of size H/4; relation renders use
// objects of size H/8 offset by H/4 from the canvas center.
SceneSpec prototype_scene(Category category, std::optional<Color> color, int height, int width);
// color == nullopt renders the shape in neutral gray.
Image prototype_image(Category category, std::optional<Color> color, int height, int width);

struct RelationTriple {
  Category subject_category = Category::kDisk;
  Color subject_color = Color::kWhite;
  Predicate predicate = Predicate::kLeftOf;
  Category object_category = Category::kSquare;
  Color object_color = Color::kWhite;
};
SceneSpec relation_scene(const RelationTriple& triple, int height, int width);

// Seeded scene with `objects` random objects of size 3..6 px placed fully
// inside the canvas, no relations.
SceneSpec random_scene(std::uint64_t seed, int height, int width, int objects);
Image prototype_image(const RelationTriple& triple, int height, int width);

}  // namespace dag
