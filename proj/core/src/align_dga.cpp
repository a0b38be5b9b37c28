#include "dag/align_dga.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dag/error.hpp"
#include "dag/perception.hpp"

namespace dag {

using ad::Var;

LayoutTarget make_layout_target(const LayoutCondition& layout) {
  if (layout.colors.size() != layout.masks.size()) {
    throw ContractError("layout needs one class per mask");
  }
  LayoutTarget t;
  t.masks = layout.masks;
  t.classes = layout.colors;
  for (const Image& m : layout.masks) {
    if (m.channels() != 1 || m.shape() != layout.masks.front().shape()) {
      throw ContractError("layout masks must share one HxWx1 shape");
    }
    t.areas.push_back(sum(m));
    t.centroids.push_back(mask_centroid(m));
  }
  if (!t.masks.empty()) {
    t.height = t.masks.front().height();
    t.width = t.masks.front().width();
  }
  return t;
}

LayoutPrediction make_layout_prediction(const std::vector<Var>& masks) {
  LayoutPrediction p;
  for (const Var& m : masks) {
    const Shape s = m.shape();
    if (s.channels != 1) throw ContractError("predicted masks must be HxWx1");
    ad::Tape& tape = m.tape();
    Var area = ad::sum(m);
    p.masks.push_back(m);
    p.areas.push_back(area);
    if (area.item() < kCentroidMinMass) {
      p.centroid_x.push_back(tape.constant((s.width - 1) / 2.0));
      p.centroid_y.push_back(tape.constant((s.height - 1) / 2.0));
      continue;
    }
    Image gx(s), gy(s);
    for (int y = 0; y < s.height; ++y)
      for (int x = 0; x < s.width; ++x) {
        gx.at(y, x) = x;
        gy.at(y, x) = y;
      }
    p.centroid_x.push_back(ad::div(ad::dot(m, tape.constant(gx)), area));
    p.centroid_y.push_back(ad::div(ad::dot(m, tape.constant(gy)), area));
  }
  return p;
}

LayoutPrediction predict_layout(Var x0, const LayoutTarget& target) {
  if (target.size() == 0) throw ContractError("predict_layout: empty layout");
  std::vector<Color> vocabulary;
  for (Color c : target.classes)
    if (std::find(vocabulary.begin(), vocabulary.end(), c) == vocabulary.end()) vocabulary.push_back(c);
  const SoftMaskSet seg = soft_segment(x0, vocabulary);
  const Shape s = x0.shape();
  const std::vector<Image> parts = color_partition(s.height, s.width, target.classes, target.centroids);
  std::vector<Var> masks;
  for (std::size_t n = 0; n < target.size(); ++n) {
    const auto k = std::find(vocabulary.begin(), vocabulary.end(), target.classes[n]) - vocabulary.begin();
    Var m = seg.masks[k];
    if (sum(parts[n]) < static_cast<double>(parts[n].size())) m = ad::mul(m, x0.tape().constant(parts[n]));
    masks.push_back(m);
  }
  return make_layout_prediction(masks);
}

namespace {

void check_sizes(const LayoutPrediction& pred, const LayoutTarget& target) {
  if (pred.masks.size() != target.size()) {
    throw ContractError("layout prediction has " + std::to_string(pred.masks.size()) +
                        " masks, target has " + std::to_string(target.size()));
  }
}

double guarded(double b) { return std::max(b, ad::kGuardEps); }


}  // namespace

Var coverage_loss(const LayoutPrediction& pred, const LayoutTarget& target,
                  OverlapNormalization normalization) {
  check_sizes(pred, target);
  if (target.size() == 0) throw ContractError("coverage_loss: empty layout");
  ad::Tape& tape = pred.masks.front().tape();
  const std::size_t n = target.size();
  std::vector<Var> targets;
  for (const Image& m : target.masks) targets.push_back(tape.constant(m));

  Var total = tape.constant(0.0);
  for (std::size_t i = 0; i < n; ++i) {
    Var inter = ad::sum(ad::minimum(pred.masks[i], targets[i]));
    Var uni = ad::sub(ad::add(pred.areas[i], tape.constant(target.areas[i])), inter);
    total = ad::add(total, ad::sub(tape.constant(1.0), ad::div(inter, uni)));
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      Var overlap = ad::sum(ad::minimum(pred.masks[i], targets[j]));
      if (normalization == OverlapNormalization::kTargetMass) {
        overlap = ad::div(overlap, tape.constant(target.areas[j]));
      }
      total = ad::add(total, overlap);
    }
  return total;
}

Var size_loss(const LayoutPrediction& pred, const LayoutTarget& target) {
  check_sizes(pred, target);
  if (target.size() == 0) throw ContractError("size_loss: empty layout");
  ad::Tape& tape = pred.masks.front().tape();
  Var total = tape.constant(0.0);
  for (std::size_t i = 0; i < target.size(); ++i)
    for (std::size_t j = i + 1; j < target.size(); ++j) {
      const double ratio = target.areas[i] / guarded(target.areas[j]);
      Var gap = ad::shift(ad::div(pred.areas[i], pred.areas[j]), -ratio);
      total = ad::add(total, ad::square(gap));
    }
  return total;
}

Var dist_loss(const LayoutPrediction& pred, const LayoutTarget& target, double smoothing) {
  check_sizes(pred, target);
  if (target.size() == 0) throw ContractError("dist_loss: empty layout");
  ad::Tape& tape = pred.masks.front().tape();
  Var total = tape.constant(0.0);
  for (std::size_t i = 0; i < target.size(); ++i)
    for (std::size_t j = i + 1; j < target.size(); ++j) {
      const double tx = target.centroids[i].x - target.centroids[j].x;
      const double ty = target.centroids[i].y - target.centroids[j].y;
      Var dx = ad::sub(pred.centroid_x[i], pred.centroid_x[j]);
      Var dy = ad::sub(pred.centroid_y[i], pred.centroid_y[j]);
      Var dist = ad::sqrt(ad::add(ad::square(dx), ad::square(dy)));
      total = ad::add(total, ad::smooth_abs(ad::shift(dist, -std::sqrt(tx * tx + ty * ty)), smoothing));
    }
  return total;
}

DgaTerms dga_energy(const LayoutPrediction& pred, const LayoutTarget& target, double lambda,
                    OverlapNormalization normalization) {
  DgaTerms t;
  t.coverage = coverage_loss(pred, target, normalization);
  t.size = size_loss(pred, target);
  t.distance = dist_loss(pred, target);
  t.energy = ad::add(ad::scale(t.coverage, 1.0 - lambda), ad::scale(ad::add(t.size, t.distance), lambda));
  return t;
}

void describe(const DgaTerms& t, ModuleReport& r) {
  r.terms["coverage"] = t.coverage.item();
  r.terms["size"] = t.size.item();
  r.terms["distance"] = t.distance.item();
}

}  // namespace dag
