#pragma once

// Differentiable stand-ins for pretrained perception models: color-prototype
// segmenter, region embedder, flood-fill instance masker, fixed-kernel
// semantic field, soft-correlation flow estimator and bilinear warping.

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "dag/autodiff.hpp"
#include "dag/image.hpp"
#include "dag/scene.hpp"

namespace dag {

inline constexpr int kEmbeddingDim = 16;  // 5 color + 3 shape + 8 semantic
inline constexpr int kColorBins = 5;
inline constexpr int kShapeMoments = 3;
inline constexpr int kFeatureChannels = 8;

inline constexpr double kSegmentTemperature = 0.1;
inline constexpr double kHistogramTemperature = 0.1;
inline constexpr double kBoxSigmaScale = 2.0;
inline constexpr double kBoxEdgeSoftness = 1.0;
inline constexpr double kMinMaskMass = 1e-6;
inline constexpr double kInstanceColorThreshold = 0.45;
// Added to the foreground mass when pooling colors, as a fraction of the
// region mass, so near-empty regions keep a small histogram.
inline constexpr double kForegroundFloor = 0.05;

// ---------------------------------------------------------------------------
// Segmentation

struct SoftMaskSet {
  std::vector<Color> classes;
  // HxWx1 responsibility per class, and for the background.
  std::vector<ad::Var> masks;
  ad::Var background;
};

// Per-pixel softmax over -|x - prototype|^2 / temperature across the
// vocabulary colors plus the background gray.
SoftMaskSet soft_segment(ad::Var image, std::span<const Color> vocabulary,
                         double temperature = kSegmentTemperature);

// logits[k] = -|x - colors[k]|^2 / temperature, HxWxK.
ad::Var color_logits(ad::Var image, std::span<const Rgb> colors, double temperature);

// Constant HxWx1 masks splitting the canvas among entries that share a
// color: each pixel goes to the nearest anchor of its color group. Entries
// with a unique color get an all-ones mask.
std::vector<Image> color_partition(int height, int width, const std::vector<Color>& colors,
                                   const std::vector<Point>& anchors);

// ---------------------------------------------------------------------------
// Soft boxes

struct SoftBox {
  ad::Var x_min, y_min, x_max, y_max;
  ad::Var mass;
};

// Mask-weighted mean +- k * std per axis, clamped to the canvas. Returns
// nullopt ("concept not found") when the mask mass is at most `min_mass`.
std::optional<SoftBox> soft_bbox(ad::Var mask, double k = kBoxSigmaScale,
                                 double min_mass = kMinMaskMass);

// Product of four edge sigmoids: ~1 inside the box, ~0 outside. HxWx1.
ad::Var box_weight(const SoftBox& box, int height, int width, double softness = kBoxEdgeSoftness);
// Union box (elementwise min of minima, max of maxima).
SoftBox box_union(const SoftBox& a, const SoftBox& b);

// ---------------------------------------------------------------------------
// Region embedding

// Per-image quantities shared by every region of that image.
struct RegionFeatures {
  ad::Var color_histogram;  // HxWx5 palette responsibilities
  ad::Var foreground;       // HxWx1, 1 - background responsibility
  ad::Var semantic;         // HxWx8
  ad::Var grid_x, grid_y;   // constant coordinate grids, HxWx1
  int height = 0;
  int width = 0;
};

RegionFeatures prepare_region_features(ad::Var image);
// 1x1x16 unit vector. Throws ContractError when the weight mass is zero.
ad::Var region_embed(const RegionFeatures& features, ad::Var weight);
ad::Var region_embed(ad::Var image, ad::Var weight);

struct Embedding {
  std::array<double, kEmbeddingDim> vector{};
  bool normalized = true;
};

Embedding region_embed(const Image& image, const Image& weight);
Embedding to_embedding(const Image& value);
double cosine(const Embedding& a, const Embedding& b);

// ---------------------------------------------------------------------------
// Instance masks, semantic features, flow

// 4-connected region of pixels whose color lies within `threshold` of the
// color at p. Hard mask, outside any gradient path.
Image instance_mask_at_point(const Image& image, Point p,
                             double threshold = kInstanceColorThreshold);

const ad::KernelBank& semantic_kernel_bank();
// tanh of a fixed bank of 8 edge/blob filters at two scales. HxWx8.
ad::Var semantic_field(ad::Var image, ad::Padding padding = ad::Padding::kClamp);
Image semantic_field(const Image& image, ad::Padding padding = ad::Padding::kClamp);

struct FlowOptions {
  int search_radius = 3;  // displacement candidates satisfy |d| <= radius
  int patch_radius = 2;   // (2r+1)^2 patch for the matching cost
  double temperature = 0.001;
  // Logit penalty per px^2 of displacement; breaks ties in flat regions.
  double motion_prior = 3.0;
};

// Soft-argmax over the patch matching cost between feature fields. Flow is
// expressed in the src frame: content at p in src sits at p + flow(p) in dst.
ad::Var estimate_flow_features(ad::Var src_features, ad::Var dst_features,
                               const FlowOptions& options = {});
ad::Var estimate_flow(ad::Var src, ad::Var dst, const FlowOptions& options = {});
// Flow of the single pixel nearest to p, from feature fields.
Point flow_at(const Image& src_features, const Image& dst_features, Point p,
              const FlowOptions& options = {});
Image estimate_flow(const Image& src, const Image& dst, const FlowOptions& options = {});

// out(p) = image(p - flow(p)); works for RGB images and feature fields.
ad::Var warp_image(ad::Var image, ad::Var flow);
Image warp_image(const Image& image, const Image& flow);

}  // namespace dag
