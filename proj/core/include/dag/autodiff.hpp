#pragma once

// Reverse-mode differentiation over image-sized grids.
//
// A Tape records operations eagerly: every op computes its value when it is
// recorded, and stores a forward kernel so the whole tape can be replayed
// after a leaf is reassigned. Node ids are issued in creation order, which
// is a topological order of the graph, so backward is a single reverse sweep.
//
// Lifecycle of one evaluation:
//   build ops -> forward_eval(root) -> backward(root) -> read adjoints
//   -> reset_adjoints() before the next backward.
//
// A Tape is single-owner. Distinct tapes share nothing and may be used from
// different threads concurrently.

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "dag/image.hpp"

namespace dag::ad {

// Guard folded into division, sqrt and log.
inline constexpr double kGuardEps = 1e-8;

class Tape;

// Handle to a node on a Tape. Cheap to copy; only valid while the tape lives.
class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const;
  std::size_t id() const { return id_; }
  const Image& value() const;
  const Shape& shape() const;
  double item() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

using Inputs = std::span<const Image* const>;
// Entries are null for inputs that carry no gradient.
using InputAdjoints = std::span<Image* const>;
using ForwardFn = std::function<void(Inputs in, Image& out)>;
using BackwardFn =
    std::function<void(Inputs in, const Image& out, const Image& out_adjoint, InputAdjoints in_adjoints)>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Differentiable input.
  Var leaf(Image value);
  // Input excluded from differentiation.
  Var constant(Image value);
  Var constant(double value);

  // Replace a leaf value. Downstream values become stale until forward_eval.
  void assign(Var leaf, Image value);

  // Op-author entry point. `forward` runs immediately to produce the value.
  Var record(Shape out_shape, std::vector<Var> inputs, ForwardFn forward, BackwardFn backward);

  // Returns the scalar value of `root`, replaying the tape if a leaf changed.
  // Throws ContractError for a non-scalar root.
  double forward_eval(Var root);

  // Accumulates d(root)/d(node) into every node adjoint reachable from root.
  // Requires forward_eval(root) first; a second backward needs reset_adjoints.
  void backward(Var root);
  void reset_adjoints();

  const Image& value(Var v) const;
  // Zero-filled when the node received no gradient.
  Image adjoint(Var v) const;
  bool requires_grad(Var v) const;
  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Image value;
    std::optional<Image> adjoint;  // unset until backward touches it
    std::vector<std::size_t> inputs;
    ForwardFn forward;
    BackwardFn backward;
    bool is_leaf = false;
    bool requires_grad = false;
  };

  void check_owned(Var v) const;
  void replay();

  std::vector<Node> nodes_;
  std::size_t evaluated_limit_ = 0;
  bool stale_ = false;
  bool backward_done_ = false;
};

// ---------------------------------------------------------------------------
// Primitives. Binary elementwise ops accept equal shapes, a scalar operand, or
// an HxWx1 operand against an HxWxC one (channel broadcast).

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
// a / b, with |b| floored at eps (sign kept). Exact whenever |b| >= eps.
Var div(Var a, Var b);
Var minimum(Var a, Var b);
Var maximum(Var a, Var b);

Var neg(Var a);
Var scale(Var a, double k);
Var shift(Var a, double k);
Var square(Var a);
// sqrt(max(a, 0) + eps)
Var sqrt(Var a);
Var exp(Var a);
// log(max(a, 0) + eps)
Var log(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var clamp(Var a, double lo, double hi);
// Charbonnier penalty sqrt(a^2 + eps^2).
Var smooth_abs(Var a, double eps);

// Copy of the value with no gradient path.
Var detach(Var a);

// Reductions to a scalar.
Var sum(Var a);
Var mean(Var a);
Var dot(Var a, Var b);

// Per-channel sum over all pixels: HxWxC -> 1x1xC.
Var spatial_sum(Var a);
// Sum over channels: HxWxC -> HxWx1.
Var channel_sum(Var a);
Var channel_mean(Var a);
Var channel(Var a, int c);
Var concat_channels(std::span<const Var> parts);
// Flattens each part and concatenates into a 1x1xN vector.
Var concat(std::span<const Var> parts);
// Scalar element of a flattened value.
Var element(Var a, std::size_t index);

// Treats both operands as flat vectors.
Var cosine_similarity(Var u, Var v);
Var l2_normalize(Var v);
// Softmax across channels at every pixel.
Var softmax_channels(Var logits);

enum class Padding { kClamp, kPeriodic };

// Fixed (non-learned) filter bank; weights laid out [out][ky][kx][in].
struct KernelBank {
  int radius = 1;
  int in_channels = 1;
  int out_channels = 1;
  std::vector<double> weights;
  std::vector<double> bias;

  double weight(int o, int ky, int kx, int i) const {
    const int k = 2 * radius + 1;
    return weights[((static_cast<std::size_t>(o) * k + ky) * k + kx) * in_channels + i];
  }
};

// Cross-correlation with the bank, output HxWxout_channels.
Var conv2d(Var image, const KernelBank& bank, Padding padding);

// Backward warp: out(p) = image(p - flow(p)), bilinear, border-clamped.
// flow is HxWx2 with channel 0 = dx, channel 1 = dy, in pixels.
Var bilinear_warp(Var image, Var flow);

}  // namespace dag::ad
