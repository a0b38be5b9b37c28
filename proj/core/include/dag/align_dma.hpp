#pragma once

// Motion alignment: densified drag flow, displacement / appearance / semantic
// consistency between consecutive clean-image predictions, and drag-point
// tracking.

#include <vector>

#include "dag/autodiff.hpp"
#include "dag/conditions.hpp"
#include "dag/perception.hpp"
#include "dag/report.hpp"

namespace dag {

inline constexpr double kDmaEta = 0.02;
inline constexpr double kCharbonnierEps = 1e-3;
inline constexpr double kMinDragBandwidth = 2.0;
inline constexpr int kTrackWindowRadius = 3;
// Tracking compares semantic features over a (2r+1)^2 patch.
inline constexpr int kTrackPatchRadius = 2;

struct DragSignal {
  Point origin;
  Point destination;
  Point current_origin;
  Image instance_mask;  // hard HxWx1, taken from the reference image
  Image gaussian;       // HxWx1, 1 at current_origin
  double bandwidth = kMinDragBandwidth;
  // Semantic feature patch at the initial origin, the tracking template.
  std::vector<double> origin_features;
};

// Signal with its tracking template taken from `source` at the origin, and
// mask and Gaussian prepared on `source`.
DragSignal make_drag_signal(const DragPoint& drag, const Image& source);
// Recomputes instance mask, bandwidth and Gaussian at current_origin.
void prepare_signal(DragSignal& signal, const Image& reference);

// max(2, 0.5 * sqrt(area / pi))
double drag_bandwidth(double mask_area);
Image gaussian_map(int height, int width, Point center, double bandwidth);

// (destination - current_origin) * mask * gaussian, HxWx2.
Image densify_drag_flow(const DragSignal& signal);

struct MotionPair {
  Image reference;           // previous prediction, frozen
  Image reference_features;  // frozen
  ad::Var current;
  ad::Var current_features;
};

MotionPair make_motion_pair(const Image& reference, ad::Var current);

// Search radius ceil(max drag magnitude) + 1 over the signals.
FlowOptions drag_flow_options(const std::vector<DragSignal>& signals);

// Sum over signals of the mask-averaged L1 (Charbonnier) gap between the
// estimated reference-to-current flow and the densified drag flow.
ad::Var displacement_loss(const MotionPair& pair, const std::vector<DragSignal>& signals);
ad::Var displacement_loss(ad::Var estimated_flow, const std::vector<DragSignal>& signals);
// Sum over signals of the Charbonnier gap between the drag-warped reference
// and the current image, averaged over channels and the mask * gaussian
// support.
ad::Var appearance_loss(const MotionPair& pair, const std::vector<DragSignal>& signals);
ad::Var semantic_loss(const MotionPair& pair, const std::vector<DragSignal>& signals);

struct DmaTerms {
  ad::Var energy;
  ad::Var displacement;
  ad::Var appearance;
  ad::Var semantic;
};

DmaTerms dma_energy(const MotionPair& pair, const std::vector<DragSignal>& signals,
                    double eta = kDmaEta);

void describe(const DmaTerms& terms, const std::vector<DragSignal>& signals, ModuleReport& report);

// Moves each current_origin to the best cosine match of its template within
// a square window around current_origin + the estimated flow there.
void update_drag_points(std::vector<DragSignal>& signals, const Image& prev_features,
                        const Image& cur_features, int window_radius = kTrackWindowRadius);

}  // namespace dag
