#include "dag/perception.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <memory>

#include "dag/error.hpp"

namespace dag {

using ad::Var;

namespace {

Image coordinate_grid(int height, int width, bool x_axis) {
  Image g(Shape{height, width, 1});
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) g.at(y, x) = x_axis ? x : y;
  return g;
}

}  // namespace

// ---------------------------------------------------------------------------
// Segmentation

Var color_logits(Var image, std::span<const Rgb> colors, double temperature) {
  const Shape s = image.shape();
  if (s.channels != 3) throw ContractError("color_logits: image must be RGB");
  if (!(temperature > 0.0)) throw ContractError("color_logits: temperature must be positive");
  std::vector<Rgb> cols(colors.begin(), colors.end());
  const int k = static_cast<int>(cols.size());
  const double inv_t = 1.0 / temperature;
  return image.tape().record(
      Shape{s.height, s.width, k}, {image},
      [cols, k, inv_t](ad::Inputs in, Image& out) {
        const Image& x = *in[0];
        const std::size_t pixels = x.size() / 3;
        for (std::size_t p = 0; p < pixels; ++p) {
          const double r = x[3 * p], g = x[3 * p + 1], b = x[3 * p + 2];
          for (int j = 0; j < k; ++j) {
            const double dr = r - cols[j].r, dg = g - cols[j].g, db = b - cols[j].b;
            out[p * k + j] = -(dr * dr + dg * dg + db * db) * inv_t;
          }
        }
      },
      [cols, k, inv_t](ad::Inputs in, const Image&, const Image& gy, ad::InputAdjoints g) {
        if (!g[0]) return;
        const Image& x = *in[0];
        Image& gx = *g[0];
        const std::size_t pixels = x.size() / 3;
        for (std::size_t p = 0; p < pixels; ++p) {
          double ar = 0.0, ag = 0.0, ab = 0.0;
          for (int j = 0; j < k; ++j) {
            const double go = gy[p * k + j] * (-2.0 * inv_t);
            ar += go * (x[3 * p] - cols[j].r);
            ag += go * (x[3 * p + 1] - cols[j].g);
            ab += go * (x[3 * p + 2] - cols[j].b);
          }
          gx[3 * p] += ar;
          gx[3 * p + 1] += ag;
          gx[3 * p + 2] += ab;
        }
      });
}

SoftMaskSet soft_segment(Var image, std::span<const Color> vocabulary, double temperature) {
  if (vocabulary.empty()) throw ContractError("soft_segment: empty vocabulary");
  std::vector<Rgb> colors;
  for (Color c : vocabulary) colors.push_back(palette(c));
  colors.push_back(kBackground);
  Var resp = ad::softmax_channels(color_logits(image, colors, temperature));
  SoftMaskSet set;
  set.classes.assign(vocabulary.begin(), vocabulary.end());
  for (std::size_t k = 0; k < vocabulary.size(); ++k) set.masks.push_back(ad::channel(resp, static_cast<int>(k)));
  set.background = ad::channel(resp, static_cast<int>(vocabulary.size()));
  return set;
}

std::vector<Image> color_partition(int height, int width, const std::vector<Color>& colors,
                                   const std::vector<Point>& anchors) {
  if (colors.size() != anchors.size()) throw ContractError("color_partition: one anchor per color");
  const std::size_t n = colors.size();
  std::vector<Image> out(n, Image(Shape{height, width, 1}, 1.0));
  for (std::size_t i = 0; i < n; ++i) {
    bool shared = false;
    for (std::size_t j = 0; j < n; ++j) shared |= (j != i && colors[j] == colors[i]);
    if (!shared) continue;
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        auto d2 = [&](std::size_t k) {
          const double dx = x - anchors[k].x, dy = y - anchors[k].y;
          return dx * dx + dy * dy;
        };
        // Lowest index wins ties so the split stays a partition.
        std::size_t best = i;
        for (std::size_t j = 0; j < n; ++j) {
          if (colors[j] != colors[i]) continue;
          if (d2(j) < d2(best) || (d2(j) == d2(best) && j < best)) best = j;
        }
        out[i].at(y, x) = best == i ? 1.0 : 0.0;
      }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Soft boxes

std::optional<SoftBox> soft_bbox(Var mask, double k, double min_mass) {
  const Shape s = mask.shape();
  if (s.channels != 1) throw ContractError("soft_bbox: mask must be HxWx1");
  ad::Tape& tape = mask.tape();
  Var mass = ad::sum(mask);
  if (!(mass.item() > min_mass)) return std::nullopt;

  // Coordinates centered on the canvas keep the variance well conditioned.
  const double cx = (s.width - 1) / 2.0, cy = (s.height - 1) / 2.0;
  Image gx = coordinate_grid(s.height, s.width, true), gy = coordinate_grid(s.height, s.width, false);
  for (double& v : gx.values()) v -= cx;
  for (double& v : gy.values()) v -= cy;
  Var X = tape.constant(gx), Y = tape.constant(gy);

  Var mx = ad::div(ad::dot(mask, X), mass);
  Var my = ad::div(ad::dot(mask, Y), mass);
  Var vx = ad::sub(ad::div(ad::dot(mask, ad::square(X)), mass), ad::square(mx));
  Var vy = ad::sub(ad::div(ad::dot(mask, ad::square(Y)), mass), ad::square(my));
  Var sx = ad::scale(ad::sqrt(vx), k), sy = ad::scale(ad::sqrt(vy), k);

  SoftBox b;
  b.x_min = ad::clamp(ad::shift(ad::sub(mx, sx), cx), 0.0, s.width - 1.0);
  b.x_max = ad::clamp(ad::shift(ad::add(mx, sx), cx), 0.0, s.width - 1.0);
  b.y_min = ad::clamp(ad::shift(ad::sub(my, sy), cy), 0.0, s.height - 1.0);
  b.y_max = ad::clamp(ad::shift(ad::add(my, sy), cy), 0.0, s.height - 1.0);
  b.mass = mass;
  return b;
}

Var box_weight(const SoftBox& box, int height, int width, double softness) {
  if (!(softness > 0.0)) throw ContractError("box_weight: softness must be positive");
  ad::Tape& tape = box.x_min.tape();
  Var X = tape.constant(coordinate_grid(height, width, true));
  Var Y = tape.constant(coordinate_grid(height, width, false));
  const double inv = 1.0 / softness;
  // Pixels whose centers sit on the box edge count as half-pixel inside.
  auto edge = [inv](Var from, Var to) { return ad::sigmoid(ad::scale(ad::shift(ad::sub(to, from), 0.5), inv)); };
  Var w = ad::mul(edge(box.x_min, X), edge(X, box.x_max));
  w = ad::mul(w, edge(box.y_min, Y));
  return ad::mul(w, edge(Y, box.y_max));
}

SoftBox box_union(const SoftBox& a, const SoftBox& b) {
  return SoftBox{ad::minimum(a.x_min, b.x_min), ad::minimum(a.y_min, b.y_min),
                 ad::maximum(a.x_max, b.x_max), ad::maximum(a.y_max, b.y_max), ad::add(a.mass, b.mass)};
}

// ---------------------------------------------------------------------------
// Region embedding

RegionFeatures prepare_region_features(Var image) {
  const Shape s = image.shape();
  if (s.channels != 3) throw ContractError("prepare_region_features: image must be RGB");
  std::vector<Rgb> colors;
  for (Color c : kColors) colors.push_back(palette(c));
  colors.push_back(kBackground);
  Var resp = ad::softmax_channels(color_logits(image, colors, kHistogramTemperature));
  std::vector<Var> bins;
  for (int k = 0; k < kColorBins; ++k) bins.push_back(ad::channel(resp, k));

  RegionFeatures f;
  f.color_histogram = ad::concat_channels(bins);
  f.foreground = ad::shift(ad::neg(ad::channel(resp, kColorBins)), 1.0);
  f.semantic = semantic_field(image);
  const double cx = (s.width - 1) / 2.0, cy = (s.height - 1) / 2.0;
  Image gx = coordinate_grid(s.height, s.width, true), gy = coordinate_grid(s.height, s.width, false);
  for (double& v : gx.values()) v -= cx;
  for (double& v : gy.values()) v -= cy;
  f.grid_x = image.tape().constant(gx);
  f.grid_y = image.tape().constant(gy);
  f.height = s.height;
  f.width = s.width;
  return f;
}

Var region_embed(const RegionFeatures& f, Var weight) {
  const Shape s = weight.shape();
  if (s.height != f.height || s.width != f.width || s.channels != 1) {
    throw ContractError("region_embed: weight must be HxWx1 matching the image");
  }
  Var mass = ad::sum(weight);
  if (!(mass.item() > 0.0)) throw ContractError("region_embed: weight has zero mass");

  // Color distribution of the region's foreground.
  Var fg_mass = ad::add(ad::dot(weight, f.foreground), ad::scale(mass, kForegroundFloor));
  Var colors = ad::div(ad::spatial_sum(ad::mul(f.color_histogram, weight)), fg_mass);
  Var semantic = ad::div(ad::spatial_sum(ad::mul(f.semantic, weight)), mass);

  Var mx = ad::div(ad::dot(weight, f.grid_x), mass);
  Var my = ad::div(ad::dot(weight, f.grid_y), mass);
  Var sxx = ad::sub(ad::div(ad::dot(weight, ad::square(f.grid_x)), mass), ad::square(mx));
  Var syy = ad::sub(ad::div(ad::dot(weight, ad::square(f.grid_y)), mass), ad::square(my));
  Var sxy = ad::sub(ad::div(ad::dot(weight, ad::mul(f.grid_x, f.grid_y)), mass), ad::mul(mx, my));
  // Normalized by the variance of a uniform distribution over the canvas.
  const double w2 = f.width * f.width / 12.0, h2 = f.height * f.height / 12.0;
  const double wh = f.width * f.height / 12.0;
  std::vector<Var> parts = {colors, ad::scale(sxx, 1.0 / w2), ad::scale(syy, 1.0 / h2),
                            ad::scale(sxy, 1.0 / wh), semantic};
  return ad::l2_normalize(ad::concat(parts));
}

Var region_embed(Var image, Var weight) { return region_embed(prepare_region_features(image), weight); }

Embedding to_embedding(const Image& value) {
  if (value.size() != kEmbeddingDim) throw ContractError("to_embedding: expected 16 values");
  Embedding e;
  std::copy(value.data().begin(), value.data().end(), e.vector.begin());
  return e;
}

Embedding region_embed(const Image& image, const Image& weight) {
  ad::Tape tape;
  return to_embedding(region_embed(tape.constant(image), tape.constant(weight)).value());
}

double cosine(const Embedding& a, const Embedding& b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (int i = 0; i < kEmbeddingDim; ++i) {
    ab += a.vector[i] * b.vector[i];
    aa += a.vector[i] * a.vector[i];
    bb += b.vector[i] * b.vector[i];
  }
  return ab / (std::max(std::sqrt(aa), ad::kGuardEps) * std::max(std::sqrt(bb), ad::kGuardEps));
}

// ---------------------------------------------------------------------------
// Instance masks

Image instance_mask_at_point(const Image& image, Point p, double threshold) {
  const int h = image.height(), w = image.width(), c = image.channels();
  const int px = std::clamp(static_cast<int>(std::lround(p.x)), 0, w - 1);
  const int py = std::clamp(static_cast<int>(std::lround(p.y)), 0, h - 1);
  if (p.x < -0.5 || p.y < -0.5 || p.x > w - 0.5 || p.y > h - 0.5) {
    throw ContractError("instance_mask_at_point: point outside the canvas");
  }
  std::vector<double> seed(c);
  for (int k = 0; k < c; ++k) seed[k] = image.at(py, px, k);
  const double t2 = threshold * threshold;
  auto close = [&](int y, int x) {
    double d2 = 0.0;
    for (int k = 0; k < c; ++k) {
      const double d = image.at(y, x, k) - seed[k];
      d2 += d * d;
    }
    return d2 < t2;
  };

  Image mask(Shape{h, w, 1});
  std::deque<std::pair<int, int>> queue{{py, px}};
  mask.at(py, px) = 1.0;
  constexpr int kDy[4] = {-1, 1, 0, 0};
  constexpr int kDx[4] = {0, 0, -1, 1};
  while (!queue.empty()) {
    const auto [y, x] = queue.front();
    queue.pop_front();
    for (int n = 0; n < 4; ++n) {
      const int ny = y + kDy[n], nx = x + kDx[n];
      if (ny < 0 || nx < 0 || ny >= h || nx >= w || mask.at(ny, nx) != 0.0) continue;
      if (!close(ny, nx)) continue;
      mask.at(ny, nx) = 1.0;
      queue.emplace_back(ny, nx);
    }
  }
  return mask;
}

// ---------------------------------------------------------------------------
// Semantic field

namespace {

ad::KernelBank build_semantic_bank() {
  constexpr int kRadius = 2;
  constexpr int kSize = 2 * kRadius + 1;
  // Channel mixing per output feature; distinct so color permutations change
  // the response.
  constexpr double kMix[kFeatureChannels][3] = {
      {1.0, -0.5, 0.2}, {0.3, 1.0, -0.6}, {-0.6, 0.3, 1.0}, {0.8, 0.8, -0.4},
      {-0.4, 0.9, 0.7}, {0.9, -0.3, 0.9}, {0.5, 0.5, 0.5},  {1.0, -1.0, 0.3}};
  constexpr double kGain = 2.0;

  // Spatial patterns: blob, d/dx, d/dy, center-surround at scales 0.8 and 1.6.
  auto pattern = [](int kind, double sigma, int dy, int dx) {
    const double g = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
    switch (kind) {
      case 0: return g;
      case 1: return -dx * g;
      case 2: return -dy * g;
      default: return g * (1.0 - (dx * dx + dy * dy) / (2.0 * sigma * sigma));
    }
  };

  ad::KernelBank bank;
  bank.radius = kRadius;
  bank.in_channels = 3;
  bank.out_channels = kFeatureChannels;
  bank.weights.assign(static_cast<std::size_t>(kFeatureChannels) * kSize * kSize * 3, 0.0);
  bank.bias.assign(kFeatureChannels, 0.0);
  for (int o = 0; o < kFeatureChannels; ++o) {
    const int kind = o % 4;
    const double sigma = o < 4 ? 0.8 : 1.6;
    const int r = o < 4 ? 1 : 2;
    std::vector<double> spatial(kSize * kSize, 0.0);
    double norm = 0.0;
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx) {
        const double v = pattern(kind, sigma, dy, dx);
        spatial[(dy + kRadius) * kSize + dx + kRadius] = v;
        norm += std::abs(v);
      }
    // Zero-mean center-surround; unit L1 for the rest.
    if (kind == 3) {
      double mean = 0.0;
      int count = 0;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          mean += spatial[(dy + kRadius) * kSize + dx + kRadius];
          ++count;
        }
      mean /= count;
      norm = 0.0;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          double& v = spatial[(dy + kRadius) * kSize + dx + kRadius];
          v -= mean;
          norm += std::abs(v);
        }
      norm *= 0.5;
    } else if (kind != 0) {
      norm *= 0.5;
    }
    for (int ky = 0; ky < kSize; ++ky)
      for (int kx = 0; kx < kSize; ++kx)
        for (int i = 0; i < 3; ++i) {
          const std::size_t idx = ((static_cast<std::size_t>(o) * kSize + ky) * kSize + kx) * 3 + i;
          bank.weights[idx] = kGain * kMix[o][i] * spatial[ky * kSize + kx] / norm;
        }
  }
  return bank;
}

}  // namespace

const ad::KernelBank& semantic_kernel_bank() {
  static const ad::KernelBank bank = build_semantic_bank();
  return bank;
}

Var semantic_field(Var image, ad::Padding padding) {
  if (image.shape().channels != 3) throw ContractError("semantic_field: image must be RGB");
  return ad::tanh(ad::conv2d(image, semantic_kernel_bank(), padding));
}

Image semantic_field(const Image& image, ad::Padding padding) {
  ad::Tape tape;
  return semantic_field(tape.constant(image), padding).value();
}

// ---------------------------------------------------------------------------
// Flow

namespace {

struct Offset {
  int dx, dy;
};

std::vector<Offset> disk_offsets(int radius) {
  std::vector<Offset> out;
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx)
      if (dx * dx + dy * dy <= radius * radius) out.push_back({dx, dy});
  return out;
}

// Softmax weights per pixel, shared between forward and backward.
struct FlowCache {
  std::vector<double> weights;  // pixels x offsets
};

int clamp_index(int v, int hi) { return std::min(std::max(v, 0), hi); }

// Soft-argmax displacement at (x, y); fills `weights` with one entry per offset.
std::pair<double, double> pixel_flow(const Image& a, const Image& b, int x, int y,
                                     const std::vector<Offset>& offsets, const FlowOptions& opt,
                                     double* weights) {
  const int h = a.height(), w = a.width(), c = a.channels();
  const int pr = opt.patch_radius;
  const double norm = 1.0 / ((2 * pr + 1) * (2 * pr + 1) * c);
  const double inv_t = 1.0 / opt.temperature;
  const std::size_t n = offsets.size();
  double best = -INFINITY;
  for (std::size_t k = 0; k < n; ++k) {
    const Offset d = offsets[k];
    double cost = 0.0;
    for (int qy = -pr; qy <= pr; ++qy)
      for (int qx = -pr; qx <= pr; ++qx) {
        const int ay = clamp_index(y + qy, h - 1), ax = clamp_index(x + qx, w - 1);
        const int by = clamp_index(y + qy + d.dy, h - 1), bx = clamp_index(x + qx + d.dx, w - 1);
        for (int ch = 0; ch < c; ++ch) {
          const double diff = a.at(ay, ax, ch) - b.at(by, bx, ch);
          cost += diff * diff;
        }
      }
    weights[k] = -cost * norm * inv_t - opt.motion_prior * (d.dx * d.dx + d.dy * d.dy);
    best = std::max(best, weights[k]);
  }
  double z = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    weights[k] = std::exp(weights[k] - best);
    z += weights[k];
  }
  double fx = 0.0, fy = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    weights[k] /= z;
    fx += weights[k] * offsets[k].dx;
    fy += weights[k] * offsets[k].dy;
  }
  return {fx, fy};
}

void check_flow_inputs(const Shape& s, const Shape& other, const FlowOptions& opt) {
  if (other != s) throw ContractError("estimate_flow: feature fields differ in shape");
  if (opt.search_radius < 1) throw ContractError("estimate_flow: search_radius must be >= 1");
  if (opt.patch_radius < 0 || 2 * opt.patch_radius + 1 > std::min(s.height, s.width)) {
    throw ContractError("estimate_flow: patch larger than the canvas");
  }
  if (!(opt.temperature > 0.0)) throw ContractError("estimate_flow: temperature must be positive");
}

}  // namespace

Var estimate_flow_features(Var src, Var dst, const FlowOptions& opt) {
  const Shape s = src.shape();
  check_flow_inputs(s, dst.shape(), opt);

  const std::vector<Offset> offsets = disk_offsets(opt.search_radius);
  auto cache = std::make_shared<FlowCache>();
  const int pr = opt.patch_radius;
  const double norm = 1.0 / ((2 * pr + 1) * (2 * pr + 1) * s.channels);
  const double inv_t = 1.0 / opt.temperature;

  return src.tape().record(
      Shape{s.height, s.width, 2}, {src, dst},
      [=](ad::Inputs in, Image& out) {
        const Image& a = *in[0];
        const Image& b = *in[1];
        const int h = a.height(), w = a.width();
        const std::size_t n = offsets.size();
        cache->weights.assign(static_cast<std::size_t>(h) * w * n, 0.0);
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) {
            double* wts = &cache->weights[(static_cast<std::size_t>(y) * w + x) * n];
            const auto [fx, fy] = pixel_flow(a, b, x, y, offsets, opt, wts);
            out.at(y, x, 0) = fx;
            out.at(y, x, 1) = fy;
          }
      },
      [=](ad::Inputs in, const Image& out, const Image& gy, ad::InputAdjoints g) {
        const Image& a = *in[0];
        const Image& b = *in[1];
        const int h = a.height(), w = a.width(), c = a.channels();
        const std::size_t n = offsets.size();
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) {
            const double gfx = gy.at(y, x, 0), gfy = gy.at(y, x, 1);
            if (gfx == 0.0 && gfy == 0.0) continue;
            const double fx = out.at(y, x, 0), fy = out.at(y, x, 1);
            const double* wts = &cache->weights[(static_cast<std::size_t>(y) * w + x) * n];
            for (std::size_t k = 0; k < n; ++k) {
              const Offset d = offsets[k];
              // d flow / d logit_k = w_k (d_k - flow)
              const double glogit = wts[k] * (gfx * (d.dx - fx) + gfy * (d.dy - fy));
              if (glogit == 0.0) continue;
              const double gcost = -glogit * norm * inv_t;
              for (int qy = -pr; qy <= pr; ++qy)
                for (int qx = -pr; qx <= pr; ++qx) {
                  const int ay = clamp_index(y + qy, h - 1), ax = clamp_index(x + qx, w - 1);
                  const int by = clamp_index(y + qy + d.dy, h - 1), bx = clamp_index(x + qx + d.dx, w - 1);
                  for (int ch = 0; ch < c; ++ch) {
                    const double diff = a.at(ay, ax, ch) - b.at(by, bx, ch);
                    if (g[0]) g[0]->at(ay, ax, ch) += gcost * 2.0 * diff;
                    if (g[1]) g[1]->at(by, bx, ch) -= gcost * 2.0 * diff;
                  }
                }
            }
          }
      });
}

Point flow_at(const Image& src_features, const Image& dst_features, Point p, const FlowOptions& opt) {
  check_flow_inputs(src_features.shape(), dst_features.shape(), opt);
  const int x = clamp_index(static_cast<int>(std::lround(p.x)), src_features.width() - 1);
  const int y = clamp_index(static_cast<int>(std::lround(p.y)), src_features.height() - 1);
  const std::vector<Offset> offsets = disk_offsets(opt.search_radius);
  std::vector<double> wts(offsets.size());
  const auto [fx, fy] = pixel_flow(src_features, dst_features, x, y, offsets, opt, wts.data());
  return Point{fx, fy};
}

Var estimate_flow(Var src, Var dst, const FlowOptions& options) {
  return estimate_flow_features(semantic_field(src), semantic_field(dst), options);
}

Image estimate_flow(const Image& src, const Image& dst, const FlowOptions& options) {
  ad::Tape tape;
  return estimate_flow(tape.constant(src), tape.constant(dst), options).value();
}

Var warp_image(Var image, Var flow) { return ad::bilinear_warp(image, flow); }

Image warp_image(const Image& image, const Image& flow) {
  ad::Tape tape;
  return ad::bilinear_warp(tape.constant(image), tape.constant(flow)).value();
}

}  // namespace dag
