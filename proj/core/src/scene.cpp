#include "dag/scene.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "dag/error.hpp"

namespace dag {

Rgb palette(Color c) {
  switch (c) {
    case Color::kRed: return {1.0, 0.0, 0.0};
    case Color::kGreen: return {0.0, 1.0, 0.0};
    case Color::kBlue: return {0.0, 0.0, 1.0};
    case Color::kYellow: return {1.0, 1.0, 0.0};
    case Color::kWhite: return {1.0, 1.0, 1.0};
  }
  return {};
}

std::string_view name(Category c) {
  switch (c) {
    case Category::kDisk: return "disk";
    case Category::kSquare: return "square";
    case Category::kTriangle: return "triangle";
    case Category::kBar: return "bar";
  }
  return "?";
}

std::string_view name(Color c) {
  switch (c) {
    case Color::kRed: return "red";
    case Color::kGreen: return "green";
    case Color::kBlue: return "blue";
    case Color::kYellow: return "yellow";
    case Color::kWhite: return "white";
  }
  return "?";
}

std::string_view name(Predicate p) {
  switch (p) {
    case Predicate::kLeftOf: return "left-of";
    case Predicate::kAbove: return "above";
    case Predicate::kInside: return "inside";
    case Predicate::kOn: return "on";
  }
  return "?";
}

namespace {

template <class Enum, std::size_t N>
Enum parse_token(std::string_view s, const std::array<Enum, N>& vocabulary, const char* kind) {
  for (Enum e : vocabulary)
    if (name(e) == s) return e;
  std::string msg = "unknown " + std::string(kind) + " '" + std::string(s) + "'; expected one of:";
  for (Enum e : vocabulary) msg += " " + std::string(name(e));
  throw ConfigError(msg);
}

double box_sdf(Point p, Point c, double hx, double hy) {
  const double qx = std::abs(p.x - c.x) - hx;
  const double qy = std::abs(p.y - c.y) - hy;
  const double ox = std::max(qx, 0.0), oy = std::max(qy, 0.0);
  return std::sqrt(ox * ox + oy * oy) + std::min(std::max(qx, qy), 0.0);
}

// Exact signed distance to a convex polygon with counter-clockwise-agnostic
// vertex order.
double polygon_sdf(Point p, const std::array<Point, 3>& v) {
  double d2 = 1e300;
  int crossings = 0;
  for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
    const double ex = v[j].x - v[i].x, ey = v[j].y - v[i].y;
    const double wx = p.x - v[i].x, wy = p.y - v[i].y;
    const double t = std::clamp((wx * ex + wy * ey) / (ex * ex + ey * ey), 0.0, 1.0);
    const double bx = wx - ex * t, by = wy - ey * t;
    d2 = std::min(d2, bx * bx + by * by);
    const bool c1 = p.y >= v[i].y, c2 = p.y < v[j].y, c3 = ex * wy > ey * wx;
    if ((c1 && c2 && c3) || (!c1 && !c2 && !c3)) ++crossings;
  }
  const double d = std::sqrt(d2);
  return (crossings % 2 == 1) ? -d : d;
}

double coverage(double sdf, double softness) {
  if (softness <= 0.0) return sdf < kEdgeOffset ? 1.0 : 0.0;
  return std::clamp(0.5 - (sdf - kEdgeOffset) / softness, 0.0, 1.0);
}

}  // namespace

Category parse_category(std::string_view s) { return parse_token(s, kCategories, "category"); }
Color parse_color(std::string_view s) { return parse_token(s, kColors, "color"); }
Predicate parse_predicate(std::string_view s) { return parse_token(s, kPredicates, "predicate"); }

void SceneSpec::validate() const {
  if (height < 16 || height > 128 || width < 16 || width > 128) {
    throw ConfigError("scene canvas must be within [16, 128] on both axes, got " +
                      std::to_string(height) + "x" + std::to_string(width));
  }
  if (objects.size() > 4) throw ConfigError("scene holds at most 4 objects");
  for (const ObjectSpec& o : objects) {
    if (o.size < 2.0) throw ConfigError("object size must be at least 2 px");
    if (o.center.x < 0 || o.center.x > width - 1 || o.center.y < 0 || o.center.y > height - 1) {
      throw ConfigError("object center outside the canvas");
    }
  }
  const int n = static_cast<int>(objects.size());
  for (const RelationSpec& r : relations) {
    if (r.subject < 0 || r.subject >= n || r.object < 0 || r.object >= n || r.subject == r.object) {
      throw ConfigError("relation indices must be distinct valid object indices");
    }
  }
}

double signed_distance(const ObjectSpec& o, Point p) {
  const Point c = o.center;
  const double s = o.size;
  switch (o.category) {
    case Category::kDisk: return std::hypot(p.x - c.x, p.y - c.y) - s;
    case Category::kSquare: return box_sdf(p, c, s, s);
    case Category::kBar: return box_sdf(p, c, s, 0.5 * s);
    case Category::kTriangle:
      return polygon_sdf(p, {Point{c.x, c.y - s}, Point{c.x + s, c.y + s}, Point{c.x - s, c.y + s}});
  }
  return 1e300;
}

Image render_objects(int height, int width, const std::vector<ObjectSpec>& objects,
                     const std::vector<Rgb>& fills, double edge_softness) {
  if (fills.size() != objects.size()) throw ContractError("render_objects: one fill per object");
  Image img(Shape{height, width, 3});
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      Rgb px = kBackground;
      for (std::size_t k = 0; k < objects.size(); ++k) {
        const double a = coverage(signed_distance(objects[k], Point{double(x), double(y)}), edge_softness);
        if (a == 0.0) continue;
        px.r = (1 - a) * px.r + a * fills[k].r;
        px.g = (1 - a) * px.g + a * fills[k].g;
        px.b = (1 - a) * px.b + a * fills[k].b;
      }
      img.at(y, x, 0) = px.r;
      img.at(y, x, 1) = px.g;
      img.at(y, x, 2) = px.b;
    }
  return img;
}

Image render_scene(const SceneSpec& spec, double edge_softness) {
  std::vector<Rgb> fills;
  for (const ObjectSpec& o : spec.objects) fills.push_back(palette(o.color));
  return render_objects(spec.height, spec.width, spec.objects, fills, edge_softness);
}

Box mask_box(const Image& mask) {
  Box b{1e300, 1e300, -1e300, -1e300};
  bool any = false;
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x)
      if (mask.at(y, x) > 0.0) {
        any = true;
        b.x_min = std::min(b.x_min, double(x));
        b.y_min = std::min(b.y_min, double(y));
        b.x_max = std::max(b.x_max, double(x));
        b.y_max = std::max(b.y_max, double(y));
      }
  if (!any) return Box{};
  return b;
}

Point mask_centroid(const Image& mask) {
  double m = 0.0, sx = 0.0, sy = 0.0;
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x) {
      const double w = mask.at(y, x);
      m += w;
      sx += w * x;
      sy += w * y;
    }
  if (m <= 0.0) return Point{(mask.width() - 1) / 2.0, (mask.height() - 1) / 2.0};
  return Point{sx / m, sy / m};
}

GroundTruth ground_truth(const SceneSpec& spec) {
  GroundTruth gt;
  const int h = spec.height, w = spec.width;
  const std::size_t n = spec.objects.size();
  for (std::size_t k = 0; k < n; ++k) {
    Image mask(Shape{h, w, 1});
    double area = 0.0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const Point p{double(x), double(y)};
        if (signed_distance(spec.objects[k], p) >= kEdgeOffset) continue;
        bool occluded = false;
        for (std::size_t j = k + 1; j < n && !occluded; ++j)
          occluded = signed_distance(spec.objects[j], p) < kEdgeOffset;
        if (occluded) continue;
        mask.at(y, x) = 1.0;
        area += 1.0;
      }
    gt.boxes.push_back(mask_box(mask));
    gt.centroids.push_back(mask_centroid(mask));
    gt.areas.push_back(area);
    gt.masks.push_back(std::move(mask));
  }
  return gt;
}

SceneSpec prototype_scene(Category category, std::optional<Color> color, int height, int width) {
  SceneSpec s;
  s.height = height;
  s.width = width;
  s.objects.push_back(ObjectSpec{category, color.value_or(Color::kWhite),
                                 Point{(width - 1) / 2.0, (height - 1) / 2.0}, height / 4.0});
  return s;
}

Image prototype_image(Category category, std::optional<Color> color, int height, int width) {
  const SceneSpec s = prototype_scene(category, color, height, width);
  const Rgb fill = color ? palette(*color) : kNeutralGray;
  return render_objects(height, width, s.objects, {fill});
}

SceneSpec relation_scene(const RelationTriple& t, int height, int width) {
  const double cx = (width - 1) / 2.0, cy = (height - 1) / 2.0;
  const double small = height / 8.0, offset = height / 4.0;
  ObjectSpec subject{t.subject_category, t.subject_color, {cx, cy}, small};
  ObjectSpec object{t.object_category, t.object_color, {cx, cy}, small};
  switch (t.predicate) {
    case Predicate::kLeftOf:
      subject.center.x -= offset;
      object.center.x += offset;
      break;
    case Predicate::kAbove:
      subject.center.y -= offset;
      object.center.y += offset;
      break;
    case Predicate::kInside:
      object.size = small + offset;
      break;
    case Predicate::kOn:
      subject.center.y -= small;
      object.center.y += small;
      break;
  }
  SceneSpec s;
  s.height = height;
  s.width = width;
  s.objects = {object, subject};
  s.relations = {RelationSpec{1, 0, t.predicate}};
  return s;
}

Image prototype_image(const RelationTriple& triple, int height, int width) {
  return render_scene(relation_scene(triple, height, width));
}

SceneSpec random_scene(std::uint64_t seed, int height, int width, int objects) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto pick = [&](std::size_t n) { return static_cast<std::size_t>(unit(rng) * n) % n; };
  SceneSpec spec;
  spec.height = height;
  spec.width = width;
  for (int i = 0; i < objects; ++i) {
    ObjectSpec o;
    o.category = kCategories[pick(kCategories.size())];
    o.color = kColors[pick(kColors.size())];
    o.size = 3.0 + 3.0 * unit(rng);
    o.center.x = o.size + (width - 1 - 2 * o.size) * unit(rng);
    o.center.y = o.size + (height - 1 - 2 * o.size) * unit(rng);
    spec.objects.push_back(o);
  }
  spec.validate();
  return spec;
}

}  // namespace dag
