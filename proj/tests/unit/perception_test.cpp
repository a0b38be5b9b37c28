#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include "json.hpp"
#include <numbers>
#include <sstream>

#include "dag/error.hpp"
#include "dag/perception.hpp"
#include "dag/scene.hpp"

namespace dag {
namespace {

Image canvas(int h, int w, Rgb c) {
  Image img(Shape{h, w, 3});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      img.at(y, x, 0) = c.r;
      img.at(y, x, 1) = c.g;
      img.at(y, x, 2) = c.b;
    }
  return img;
}

SceneSpec disk_scene(double x, double y, double r, Color c = Color::kRed, int size = 32) {
  SceneSpec s;
  s.height = s.width = size;
  s.objects.push_back({Category::kDisk, c, {x, y}, r});
  return s;
}

TEST(SoftSegment, PureRedCanvas) {
  ad::Tape t;
  const std::vector<Color> vocab{Color::kRed};
  const SoftMaskSet m = soft_segment(t.leaf(canvas(8, 8, palette(Color::kRed))), vocab);
  for (double v : m.masks[0].value().values()) EXPECT_GE(v, 0.95);
}

TEST(SoftSegment, BackgroundCanvas) {
  ad::Tape t;
  const std::vector<Color> vocab{Color::kRed, Color::kGreen, Color::kBlue, Color::kYellow, Color::kWhite};
  const SoftMaskSet m = soft_segment(t.leaf(canvas(8, 8, kBackground)), vocab);
  for (const ad::Var& mask : m.masks)
    for (double v : mask.value().values()) EXPECT_LE(v, 0.05);
}

TEST(SoftSegment, ResponsibilitiesSumToOne) {
  ad::Tape t;
  const std::vector<Color> vocab{Color::kRed, Color::kBlue};
  const Image img = render_scene(random_scene(2, 16, 16, 3));
  const SoftMaskSet m = soft_segment(t.leaf(img), vocab);
  for (std::size_t i = 0; i < 256; ++i) {
    const double total = m.masks[0].value()[i] + m.masks[1].value()[i] + m.background.value()[i];
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(SoftSegment, LowTemperatureIsHardAssignment) {
  ad::Tape t;
  const std::vector<Color> vocab{Color::kRed, Color::kBlue};
  // Mostly red with a bit of blue: nearest color is red.
  Image img = canvas(2, 2, Rgb{0.8, 0.1, 0.3});
  const SoftMaskSet m = soft_segment(t.leaf(img), vocab, 1e-4);
  for (double v : m.masks[0].value().values()) EXPECT_NEAR(v, 1.0, 1e-9);
}

TEST(SoftSegment, EmptyVocabularyThrows) {
  ad::Tape t;
  EXPECT_THROW(soft_segment(t.leaf(canvas(4, 4, kBackground)), std::vector<Color>{}), ContractError);
}

TEST(SoftBbox, SymmetricDiskCentered) {
  ad::Tape t;
  const GroundTruth gt = ground_truth(disk_scene(13, 17, 5));
  const auto box = soft_bbox(t.leaf(gt.masks[0]));
  ASSERT_TRUE(box.has_value());
  EXPECT_NEAR(0.5 * (box->x_min.item() + box->x_max.item()), 13.0, 0.5);
  EXPECT_NEAR(0.5 * (box->y_min.item() + box->y_max.item()), 17.0, 0.5);
}

TEST(SoftBbox, UniformMaskUsesUniformMoments) {
  ad::Tape t;
  const int w = 16, h = 8;
  const auto box = soft_bbox(t.leaf(Image(Shape{h, w, 1}, 1.0)), 1.0);
  ASSERT_TRUE(box.has_value());
  // Discrete uniform on 0..n-1: mean (n-1)/2, variance (n^2-1)/12.
  const double sx = std::sqrt((w * w - 1) / 12.0), sy = std::sqrt((h * h - 1) / 12.0);
  EXPECT_NEAR(box->x_min.item(), (w - 1) / 2.0 - sx, 1e-6);
  EXPECT_NEAR(box->x_max.item(), (w - 1) / 2.0 + sx, 1e-6);
  EXPECT_NEAR(box->y_min.item(), (h - 1) / 2.0 - sy, 1e-6);
  // k = 2 pushes past the canvas and is clamped.
  const auto wide = soft_bbox(t.leaf(Image(Shape{h, w, 1}, 1.0)), 2.0);
  EXPECT_EQ(wide->x_min.item(), 0.0);
  EXPECT_EQ(wide->x_max.item(), w - 1.0);
}

TEST(SoftBbox, ZeroMaskNotFound) {
  ad::Tape t;
  EXPECT_FALSE(soft_bbox(t.leaf(Image(Shape{8, 8, 1}, 0.0))).has_value());
}

TEST(BoxWeight, InsideHighOutsideLow) {
  ad::Tape t;
  Image m(Shape{16, 16, 1});
  for (int y = 4; y <= 11; ++y)
    for (int x = 4; x <= 11; ++x) m.at(y, x) = 1.0;
  const auto box = soft_bbox(t.leaf(m), 2.0);
  const Image w = box_weight(*box, 16, 16).value();
  EXPECT_GT(w.at(8, 8), 0.9);
  EXPECT_LT(w.at(0, 0), 0.01);
}

TEST(RegionEmbed, WeightScaleInvariance) {
  const Image img = render_scene(random_scene(5, 16, 16, 2));
  Image w(Shape{16, 16, 1});
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.1 + 0.8 * std::sin(0.37 * static_cast<double>(i)) * std::sin(0.37 * static_cast<double>(i));
  const Embedding a = region_embed(img, w);
  for (double k : {2.0, 0.125, 17.0}) {
    const Embedding b = region_embed(img, scaled(w, k));
    for (int i = 0; i < kEmbeddingDim; ++i) EXPECT_NEAR(a.vector[i], b.vector[i], 1e-12);
  }
}

TEST(RegionEmbed, UnitNorm) {
  const Image img = prototype_image(Category::kBar, Color::kYellow, 32, 32);
  const Embedding e = region_embed(img, Image(Shape{32, 32, 1}, 1.0));
  double n = 0;
  for (double v : e.vector) n += v * v;
  EXPECT_NEAR(std::sqrt(n), 1.0, 1e-9);
  EXPECT_TRUE(e.normalized);
}

TEST(RegionEmbed, PrototypeComparisons) {
  const Image ones(Shape{32, 32, 1}, 1.0);
  const Embedding red = region_embed(prototype_image(Category::kDisk, Color::kRed, 32, 32), ones);
  const Embedding blue = region_embed(prototype_image(Category::kDisk, Color::kBlue, 32, 32), ones);
  EXPECT_NEAR(cosine(red, red), 1.0, 1e-12);
  EXPECT_LT(cosine(red, blue), 0.9);
}

TEST(RegionEmbed, ZeroMassThrows) {
  EXPECT_THROW(region_embed(canvas(8, 8, kBackground), Image(Shape{8, 8, 1}, 0.0)), ContractError);
}

TEST(InstanceMask, BackgroundPoint) {
  const SceneSpec s = disk_scene(20, 20, 5);
  const Image m = instance_mask_at_point(render_scene(s), {2, 2});
  const Image disk = ground_truth(s).masks[0];
  double area = 0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    area += m[i];
    if (disk[i] == 1.0) EXPECT_EQ(m[i], 0.0);
  }
  EXPECT_GT(area, 32 * 32 - 2 * ground_truth(s).areas[0]);
}

TEST(InstanceMask, DiskArea) {
  const SceneSpec s = disk_scene(16, 16, 6);
  const Image m = instance_mask_at_point(render_scene(s), {16, 16});
  EXPECT_NEAR(sum(m), ground_truth(s).areas[0], 0.1 * ground_truth(s).areas[0]);
}

TEST(InstanceMask, RespectsConnectivity) {
  SceneSpec s = disk_scene(8, 16, 4);
  s.objects.push_back({Category::kDisk, Color::kRed, {24, 16}, 4});
  const Image m = instance_mask_at_point(render_scene(s), {8, 16});
  EXPECT_EQ(m.at(16, 8), 1.0);
  EXPECT_EQ(m.at(16, 24), 0.0);
  for (int y = 0; y < 32; ++y)
    for (int x = 17; x < 32; ++x) EXPECT_EQ(m.at(y, x), 0.0);
}

TEST(InstanceMask, OutsideCanvasThrows) {
  EXPECT_THROW(instance_mask_at_point(canvas(8, 8, kBackground), {-3, 2}), ContractError);
}

TEST(SemanticField, ConstantImageConstantFeatures) {
  const Image f = semantic_field(canvas(12, 12, Rgb{0.3, 0.6, 0.2}));
  ASSERT_EQ(f.channels(), kFeatureChannels);
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 12; ++x)
      for (int c = 0; c < kFeatureChannels; ++c) EXPECT_NEAR(f.at(y, x, c), f.at(0, 0, c), 1e-12);
}

TEST(SemanticField, PeriodicShiftEquivariance) {
  const Image img = render_scene(random_scene(9, 16, 16, 2));
  const int dx = 3, dy = 2;
  Image shifted(img.shape());
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x)
      for (int c = 0; c < 3; ++c) shifted.at((y + dy) % 16, (x + dx) % 16, c) = img.at(y, x, c);
  const Image a = semantic_field(img, ad::Padding::kPeriodic);
  const Image b = semantic_field(shifted, ad::Padding::kPeriodic);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x)
      for (int c = 0; c < kFeatureChannels; ++c) EXPECT_NEAR(b.at((y + dy) % 16, (x + dx) % 16, c), a.at(y, x, c), 1e-12);
}

TEST(SemanticField, MatchesGoldenChecksum) {
  std::ifstream in(std::string(DAG_TEST_DATA_DIR) + "/semantic_golden.json");
  ASSERT_TRUE(in.good());
  const nlohmann::json golden = nlohmann::json::parse(in);
  SceneSpec s;
  s.height = s.width = 16;
  s.objects.push_back({Category::kDisk, Color::kRed, {5, 6}, 3});
  s.objects.push_back({Category::kTriangle, Color::kYellow, {11, 10}, 4});
  const Image f = semantic_field(render_scene(s));
  double total = 0, squares = 0, weighted = 0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    total += f[i];
    squares += f[i] * f[i];
    weighted += f[i] * static_cast<double>(i % 97);
  }
  EXPECT_NEAR(total, golden["sum"].get<double>(), 1e-9);
  EXPECT_NEAR(squares, golden["sum_squares"].get<double>(), 1e-9);
  EXPECT_NEAR(weighted, golden["weighted_sum"].get<double>(), 1e-7);
  const auto& samples = golden["samples"];
  for (const auto& sample : samples) {
    const int y = sample["y"], x = sample["x"], c = sample["c"];
    EXPECT_NEAR(f.at(y, x, c), sample["value"].get<double>(), 1e-12);
  }
}

TEST(Flow, IdenticalImagesGiveZeroFlow) {
  const Image img = render_scene(random_scene(1, 16, 16, 2));
  const Image flow = estimate_flow(img, img);
  EXPECT_LE(max_abs(flow), 0.05);
}

TEST(Flow, UniformImagesGiveZeroFlow) {
  const Image img = canvas(12, 12, Rgb{0.4, 0.4, 0.7});
  EXPECT_LE(max_abs(estimate_flow(img, img)), 1e-9);
}

TEST(Flow, ShiftedBlob) {
  const Image src = render_scene(disk_scene(12, 16, 4, Color::kGreen));
  const Image dst = render_scene(disk_scene(14, 16, 4, Color::kGreen));
  FlowOptions o;
  o.search_radius = 3;
  const Image flow = estimate_flow(src, dst, o);
  EXPECT_NEAR(flow.at(16, 12, 0), 2.0, 0.2);
  EXPECT_NEAR(flow.at(16, 12, 1), 0.0, 0.2);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      EXPECT_LE(std::hypot(flow.at(y, x, 0), flow.at(y, x, 1)), o.search_radius + 1e-9);
}

TEST(Flow, PatchLargerThanCanvasThrows) {
  const Image img = canvas(4, 4, kBackground);
  FlowOptions o;
  o.patch_radius = 3;
  EXPECT_THROW(estimate_flow(img, img, o), ContractError);
}

TEST(Warp, ZeroFlowIsIdentity) {
  const Image img = render_scene(random_scene(3, 16, 16, 2));
  EXPECT_EQ(warp_image(img, Image(Shape{16, 16, 2}, 0.0)), img);
}

TEST(Warp, RampShiftsByOneStep) {
  Image ramp(Shape{8, 10, 1});
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 10; ++x) ramp.at(y, x) = 0.1 * x;
  Image flow(Shape{8, 10, 2});
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 10; ++x) flow.at(y, x, 0) = 1.0;
  const Image out = warp_image(ramp, flow);
  for (int y = 0; y < 8; ++y)
    for (int x = 1; x < 10; ++x) EXPECT_NEAR(out.at(y, x), ramp.at(y, x) - 0.1, 1e-12);
}

TEST(Warp, RoundTripNearIdentityOnSmoothImage) {
  const int n = 16;
  Image img(Shape{n, n, 1});
  const double k = 0.3;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) img.at(y, x) = std::sin(k * x) * std::cos(k * y);
  Image flow(Shape{n, n, 2}), back(Shape{n, n, 2});
  for (std::size_t i = 0; i < flow.size(); i += 2) {
    flow[i] = 0.4;
    flow[i + 1] = -0.3;
    back[i] = -0.4;
    back[i + 1] = 0.3;
  }
  const Image round = warp_image(warp_image(img, flow), back);
  // Bilinear error per warp is at most |d|(1-|d|)/2 * |f''| per axis; f'' <= k^2.
  const double bound = 2.0 * (0.4 * 0.6 / 2 + 0.3 * 0.7 / 2) * k * k * 2.0;
  for (int y = 2; y < n - 2; ++y)
    for (int x = 2; x < n - 2; ++x) EXPECT_LE(std::abs(round.at(y, x) - img.at(y, x)), bound);
}

}  // namespace
}  // namespace dag
