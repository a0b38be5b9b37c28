#pragma once

// Geometry alignment: coverage, pairwise size-ratio and pairwise centroid
// distance consistency between predicted and target layouts.

#include <vector>

#include "dag/autodiff.hpp"
#include "dag/conditions.hpp"
#include "dag/report.hpp"

namespace dag {

inline constexpr double kDgaLambda = 0.25;
inline constexpr double kDistanceSmoothing = 1e-4;
// Predicted masks lighter than this freeze their centroid at the canvas center.
inline constexpr double kCentroidMinMass = 1e-6;

struct LayoutTarget {
  std::vector<Image> masks;
  std::vector<double> areas;
  std::vector<Point> centroids;
  std::vector<Color> classes;
  int height = 0;
  int width = 0;

  std::size_t size() const { return masks.size(); }
};

// Areas and centroids are recomputed from the masks.
LayoutTarget make_layout_target(const LayoutCondition& layout);

struct LayoutPrediction {
  std::vector<ad::Var> masks;  // HxWx1 each
  std::vector<ad::Var> areas;
  std::vector<ad::Var> centroid_x;
  std::vector<ad::Var> centroid_y;
};

// Wraps given soft masks with their areas and guarded centroids.
LayoutPrediction make_layout_prediction(const std::vector<ad::Var>& masks);
// Segments x0_hat into one soft mask per target class; same-color targets
// split the canvas around their target centroids.
LayoutPrediction predict_layout(ad::Var x0_hat, const LayoutTarget& target);

enum class OverlapNormalization {
  kTargetMass,  // cross-overlap divided by the other target's mass
  kRawCount,    // cross-overlap in pixels
};

ad::Var coverage_loss(const LayoutPrediction& pred, const LayoutTarget& target,
                      OverlapNormalization normalization = OverlapNormalization::kTargetMass);
// Zero for fewer than two objects.
ad::Var size_loss(const LayoutPrediction& pred, const LayoutTarget& target);
ad::Var dist_loss(const LayoutPrediction& pred, const LayoutTarget& target,
                  double smoothing = kDistanceSmoothing);

struct DgaTerms {
  ad::Var energy;
  ad::Var coverage;
  ad::Var size;
  ad::Var distance;
};

DgaTerms dga_energy(const LayoutPrediction& pred, const LayoutTarget& target,
                    double lambda = kDgaLambda,
                    OverlapNormalization normalization = OverlapNormalization::kTargetMass);

void describe(const DgaTerms& terms, ModuleReport& report);

}  // namespace dag
