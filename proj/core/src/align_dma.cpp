#include "dag/align_dma.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dag/error.hpp"

namespace dag {

using ad::Var;

namespace {

void check_inside(Point p, int height, int width, const char* what) {
  if (p.x < 0 || p.y < 0 || p.x > width - 1 || p.y > height - 1) {
    throw ContractError(std::string(what) + " outside the canvas");
  }
}

// Semantic features of the (2r+1)^2 patch around (x, y), edge-clamped.
std::vector<double> patch_descriptor(const Image& features, int x, int y) {
  const int r = kTrackPatchRadius;
  const int h = features.height(), w = features.width(), c = features.channels();
  std::vector<double> d;
  d.reserve(static_cast<std::size_t>(2 * r + 1) * (2 * r + 1) * c);
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx) {
      const int yy = std::clamp(y + dy, 0, h - 1), xx = std::clamp(x + dx, 0, w - 1);
      for (int k = 0; k < c; ++k) d.push_back(features.at(yy, xx, k));
    }
  return d;
}

std::vector<double> descriptor_at(const Image& features, Point p) {
  const int x = std::clamp(static_cast<int>(std::lround(p.x)), 0, features.width() - 1);
  const int y = std::clamp(static_cast<int>(std::lround(p.y)), 0, features.height() - 1);
  return patch_descriptor(features, x, y);
}

double cosine_at(const Image& features, int y, int x, const std::vector<double>& ref) {
  const std::vector<double> d = patch_descriptor(features, x, y);
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    ab += d[i] * ref[i];
    aa += d[i] * d[i];
    bb += ref[i] * ref[i];
  }
  return ab / (std::max(std::sqrt(aa), ad::kGuardEps) * std::max(std::sqrt(bb), ad::kGuardEps));
}

// Charbonnier residual averaged over channels and weighted by `support`.
Var weighted_charbonnier(Var current, const Image& target, const Image& support) {
  ad::Tape& tape = current.tape();
  Var residual = ad::channel_mean(ad::smooth_abs(ad::sub(current, tape.constant(target)), kCharbonnierEps));
  return ad::scale(ad::dot(residual, tape.constant(support)), 1.0 / std::max(sum(support), ad::kGuardEps));
}

Image support_of(const DragSignal& s) {
  Image w = s.instance_mask;
  for (std::size_t i = 0; i < w.size(); ++i) w[i] *= s.gaussian[i];
  return w;
}

}  // namespace

double drag_bandwidth(double mask_area) {
  return std::max(kMinDragBandwidth, 0.5 * std::sqrt(std::max(mask_area, 0.0) / std::numbers::pi));
}

Image gaussian_map(int height, int width, Point center, double bandwidth) {
  if (!(bandwidth > 0.0)) throw ContractError("gaussian_map: bandwidth must be positive");
  Image g(Shape{height, width, 1});
  const double inv = 1.0 / (2.0 * bandwidth * bandwidth);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double dx = x - center.x, dy = y - center.y;
      g.at(y, x) = std::exp(-(dx * dx + dy * dy) * inv);
    }
  return g;
}

void prepare_signal(DragSignal& s, const Image& reference) {
  check_inside(s.current_origin, reference.height(), reference.width(), "drag origin");
  s.instance_mask = instance_mask_at_point(reference, s.current_origin);
  s.bandwidth = drag_bandwidth(sum(s.instance_mask));
  s.gaussian = gaussian_map(reference.height(), reference.width(), s.current_origin, s.bandwidth);
}

DragSignal make_drag_signal(const DragPoint& drag, const Image& source) {
  check_inside(drag.origin, source.height(), source.width(), "drag origin");
  check_inside(drag.destination, source.height(), source.width(), "drag destination");
  DragSignal s;
  s.origin = drag.origin;
  s.destination = drag.destination;
  s.current_origin = drag.origin;
  s.origin_features = descriptor_at(semantic_field(source), drag.origin);
  prepare_signal(s, source);
  return s;
}

Image densify_drag_flow(const DragSignal& s) {
  const Image& m = s.instance_mask;
  if (s.gaussian.shape() != m.shape()) throw ContractError("densify_drag_flow: signal not prepared");
  check_inside(s.current_origin, m.height(), m.width(), "drag origin");
  const double vx = s.destination.x - s.current_origin.x;
  const double vy = s.destination.y - s.current_origin.y;
  Image u(Shape{m.height(), m.width(), 2});
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) {
      const double a = m.at(y, x) * s.gaussian.at(y, x);
      u.at(y, x, 0) = vx * a;
      u.at(y, x, 1) = vy * a;
    }
  return u;
}

MotionPair make_motion_pair(const Image& reference, Var current) {
  if (reference.shape() != current.shape()) throw ContractError("motion pair images differ in shape");
  MotionPair p;
  p.reference = reference;
  p.reference_features = semantic_field(reference);
  p.current = current;
  p.current_features = semantic_field(current);
  return p;
}

FlowOptions drag_flow_options(const std::vector<DragSignal>& signals) {
  double longest = 0.0;
  for (const DragSignal& s : signals) {
    longest = std::max(longest, std::hypot(s.destination.x - s.current_origin.x,
                                           s.destination.y - s.current_origin.y));
  }
  FlowOptions o;
  o.search_radius = static_cast<int>(std::ceil(longest - 1e-9)) + 1;
  return o;
}

Var displacement_loss(Var estimated, const std::vector<DragSignal>& signals) {
  ad::Tape& tape = estimated.tape();
  Var total = tape.constant(0.0);
  for (const DragSignal& s : signals) {
    const Image u = densify_drag_flow(s);
    Var gap = ad::channel_sum(ad::smooth_abs(ad::sub(estimated, tape.constant(u)), kCharbonnierEps));
    const double mass = std::max(sum(s.instance_mask), ad::kGuardEps);
    total = ad::add(total, ad::scale(ad::dot(gap, tape.constant(s.instance_mask)), 1.0 / mass));
  }
  return total;
}

Var displacement_loss(const MotionPair& pair, const std::vector<DragSignal>& signals) {
  ad::Tape& tape = pair.current.tape();
  Var flow = estimate_flow_features(tape.constant(pair.reference_features), pair.current_features,
                                    drag_flow_options(signals));
  return displacement_loss(flow, signals);
}

Var appearance_loss(const MotionPair& pair, const std::vector<DragSignal>& signals) {
  Var total = pair.current.tape().constant(0.0);
  for (const DragSignal& s : signals) {
    const Image warped = warp_image(pair.reference, densify_drag_flow(s));
    total = ad::add(total, weighted_charbonnier(pair.current, warped, support_of(s)));
  }
  return total;
}

Var semantic_loss(const MotionPair& pair, const std::vector<DragSignal>& signals) {
  Var total = pair.current.tape().constant(0.0);
  for (const DragSignal& s : signals) {
    const Image warped = warp_image(pair.reference_features, densify_drag_flow(s));
    total = ad::add(total, weighted_charbonnier(pair.current_features, warped, support_of(s)));
  }
  return total;
}

DmaTerms dma_energy(const MotionPair& pair, const std::vector<DragSignal>& signals, double eta) {
  DmaTerms t;
  t.displacement = displacement_loss(pair, signals);
  t.appearance = appearance_loss(pair, signals);
  t.semantic = semantic_loss(pair, signals);
  t.energy = ad::add(ad::scale(t.displacement, 1.0 - eta),
                     ad::scale(ad::add(t.appearance, t.semantic), eta));
  return t;
}

void describe(const DmaTerms& t, const std::vector<DragSignal>& signals, ModuleReport& r) {
  r.terms["displacement"] = t.displacement.item();
  r.terms["appearance"] = t.appearance.item();
  r.terms["semantic"] = t.semantic.item();
  std::vector<double> bandwidths;
  for (const DragSignal& s : signals) bandwidths.push_back(s.bandwidth);
  r.series["bandwidth"] = bandwidths;
}

void update_drag_points(std::vector<DragSignal>& signals, const Image& prev_features,
                        const Image& cur_features, int window_radius) {
  if (prev_features.shape() != cur_features.shape()) {
    throw ContractError("update_drag_points: feature fields differ in shape");
  }
  if (window_radius < 0) throw ContractError("update_drag_points: negative window radius");
  const int h = cur_features.height(), w = cur_features.width();
  const FlowOptions flow_options = drag_flow_options(signals);
  for (DragSignal& s : signals) {
    const Point expected = flow_at(prev_features, cur_features, s.current_origin, flow_options);
    const int ox = std::clamp(static_cast<int>(std::lround(s.current_origin.x)), 0, w - 1);
    const int oy = std::clamp(static_cast<int>(std::lround(s.current_origin.y)), 0, h - 1);
    const int cx = std::clamp(static_cast<int>(std::lround(ox + expected.x)), 0, w - 1);
    const int cy = std::clamp(static_cast<int>(std::lround(oy + expected.y)), 0, h - 1);
    int bx = cx, by = cy;
    double best = cosine_at(cur_features, cy, cx, s.origin_features);
    for (int y = std::max(0, cy - window_radius); y <= std::min(h - 1, cy + window_radius); ++y)
      for (int x = std::max(0, cx - window_radius); x <= std::min(w - 1, cx + window_radius); ++x) {
        const double score = cosine_at(cur_features, y, x, s.origin_features);
        const int d_new = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        const int d_best = (bx - cx) * (bx - cx) + (by - cy) * (by - cy);
        // Near-ties go to the candidate closest to the window center.
        if (score > best + 1e-2 || (std::abs(score - best) <= 1e-2 && d_new < d_best)) {
          best = score;
          bx = x;
          by = y;
        }
      }
    s.current_origin.x = std::clamp(s.current_origin.x + (bx - ox), 0.0, w - 1.0);
    s.current_origin.y = std::clamp(s.current_origin.y + (by - oy), 0.0, h - 1.0);
  }
}

}  // namespace dag
