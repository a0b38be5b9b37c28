#include "dag/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dag/error.hpp"

namespace dag::ad {

Tape& Var::tape() const {
  if (tape_ == nullptr) throw ContractError("Var: use of an empty handle");
  return *tape_;
}
const Image& Var::value() const { return tape().value(*this); }
const Shape& Var::shape() const { return value().shape(); }
double Var::item() const { return value().item(); }

// ---------------------------------------------------------------------------
// Tape

void Tape::check_owned(Var v) const {
  if (!v.valid() || v.tape_ != this || v.id_ >= nodes_.size()) {
    throw ContractError("Tape: variable does not belong to this tape");
  }
}

Var Tape::leaf(Image value) {
  Node n;
  n.value = std::move(value);
  n.is_leaf = true;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Image value) {
  Node n;
  n.value = std::move(value);
  n.is_leaf = true;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(double value) { return constant(Image::scalar(value)); }

void Tape::assign(Var leaf, Image value) {
  check_owned(leaf);
  Node& n = nodes_[leaf.id_];
  if (!n.is_leaf) throw ContractError("Tape::assign: target is not a leaf");
  if (n.value.shape() != value.shape()) {
    throw ContractError("Tape::assign: shape " + value.shape().to_string() + " does not match " +
                        n.value.shape().to_string());
  }
  n.value = std::move(value);
  stale_ = true;
}

Var Tape::record(Shape out_shape, std::vector<Var> inputs, ForwardFn forward, BackwardFn backward) {
  Node n;
  n.inputs.reserve(inputs.size());
  for (const Var& v : inputs) {
    check_owned(v);
    n.inputs.push_back(v.id_);
    n.requires_grad = n.requires_grad || nodes_[v.id_].requires_grad;
  }
  n.value = Image(out_shape);
  n.forward = std::move(forward);
  n.backward = std::move(backward);

  std::vector<const Image*> in;
  in.reserve(n.inputs.size());
  for (std::size_t id : n.inputs) in.push_back(&nodes_[id].value);
  n.forward(in, n.value);
  if (n.value.shape() != out_shape) throw ContractError("Tape::record: forward changed output shape");

  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

void Tape::replay() {
  std::vector<const Image*> in;
  for (Node& n : nodes_) {
    if (n.is_leaf) continue;
    in.clear();
    for (std::size_t id : n.inputs) in.push_back(&nodes_[id].value);
    n.forward(in, n.value);
  }
  stale_ = false;
}

double Tape::forward_eval(Var root) {
  check_owned(root);
  if (!nodes_[root.id_].value.shape().is_scalar()) {
    throw ContractError("forward_eval: root has non-scalar shape " +
                        nodes_[root.id_].value.shape().to_string());
  }
  if (stale_) replay();
  evaluated_limit_ = nodes_.size();
  return nodes_[root.id_].value.item();
}

void Tape::backward(Var root) {
  check_owned(root);
  if (root.id_ >= evaluated_limit_ || stale_) {
    throw ContractError("backward: forward_eval has not been run for this root");
  }
  if (!nodes_[root.id_].value.shape().is_scalar()) {
    throw ContractError("backward: root must be scalar");
  }
  if (backward_done_) {
    throw ContractError("backward: adjoints already populated; call reset_adjoints first");
  }
  backward_done_ = true;

  nodes_[root.id_].adjoint = Image::scalar(1.0);
  std::vector<const Image*> in;
  std::vector<Image*> in_adj;
  for (std::size_t k = root.id_ + 1; k-- > 0;) {
    Node& n = nodes_[k];
    if (n.is_leaf || !n.requires_grad || !n.adjoint) continue;
    in.clear();
    in_adj.clear();
    for (std::size_t id : n.inputs) {
      Node& p = nodes_[id];
      in.push_back(&p.value);
      if (p.requires_grad) {
        if (!p.adjoint) p.adjoint = Image(p.value.shape(), 0.0);
        in_adj.push_back(&*p.adjoint);
      } else {
        in_adj.push_back(nullptr);
      }
    }
    n.backward(in, n.value, *n.adjoint, in_adj);
  }
}

void Tape::reset_adjoints() {
  for (Node& n : nodes_) n.adjoint.reset();
  backward_done_ = false;
}

const Image& Tape::value(Var v) const {
  check_owned(v);
  return nodes_[v.id_].value;
}

Image Tape::adjoint(Var v) const {
  check_owned(v);
  const Node& n = nodes_[v.id_];
  if (!n.adjoint) return Image(n.value.shape(), 0.0);
  return *n.adjoint;
}

bool Tape::requires_grad(Var v) const {
  check_owned(v);
  return nodes_[v.id_].requires_grad;
}

// ---------------------------------------------------------------------------
// Elementwise helpers

namespace {

Tape& same_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw ContractError("operands live on different tapes");
  return a.tape();
}

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return a;
  if (a.is_scalar()) return b;
  if (b.is_scalar()) return a;
  if (a.height == b.height && a.width == b.width) {
    if (a.channels == 1) return b;
    if (b.channels == 1) return a;
  }
  throw ContractError(std::string(op) + ": incompatible shapes " + a.to_string() + " and " +
                      b.to_string());
}

// Index into an operand of shape `s` for flat output index i of shape `out`.
inline std::size_t source_index(const Shape& s, const Shape& out, std::size_t i) {
  if (s.is_scalar()) return 0;
  if (s.channels == 1 && out.channels > 1) return i / out.channels;
  return i;
}

// f(a, b) -> value; da(a, b, y) and db(a, b, y) are the partials.
template <class F, class DA, class DB>
Var binary(Var a, Var b, const char* name, F f, DA da, DB db) {
  Tape& tape = same_tape(a, b);
  const Shape out = broadcast_shape(a.shape(), b.shape(), name);
  return tape.record(
      out, {a, b},
      [f](Inputs in, Image& y) {
        const Shape& sa = in[0]->shape();
        const Shape& sb = in[1]->shape();
        const Shape& so = y.shape();
        for (std::size_t i = 0; i < y.size(); ++i) {
          y[i] = f((*in[0])[source_index(sa, so, i)], (*in[1])[source_index(sb, so, i)]);
        }
      },
      [da, db](Inputs in, const Image& y, const Image& gy, InputAdjoints g) {
        const Shape& sa = in[0]->shape();
        const Shape& sb = in[1]->shape();
        const Shape& so = y.shape();
        for (std::size_t i = 0; i < y.size(); ++i) {
          const std::size_t ia = source_index(sa, so, i);
          const std::size_t ib = source_index(sb, so, i);
          const double av = (*in[0])[ia];
          const double bv = (*in[1])[ib];
          if (g[0]) (*g[0])[ia] += gy[i] * da(av, bv, y[i]);
          if (g[1]) (*g[1])[ib] += gy[i] * db(av, bv, y[i]);
        }
      });
}

// f(x) -> value; df(x, y) -> derivative.
template <class F, class DF>
Var unary(Var a, F f, DF df) {
  return a.tape().record(
      a.shape(), {a},
      [f](Inputs in, Image& y) {
        for (std::size_t i = 0; i < y.size(); ++i) y[i] = f((*in[0])[i]);
      },
      [df](Inputs in, const Image& y, const Image& gy, InputAdjoints g) {
        if (!g[0]) return;
        for (std::size_t i = 0; i < y.size(); ++i) (*g[0])[i] += gy[i] * df((*in[0])[i], y[i]);
      });
}

// Denominators keep their sign and are pushed out to at least eps in magnitude.
inline double guarded(double b) {
  if (b >= 0.0) return std::max(b, kGuardEps);
  return std::min(b, -kGuardEps);
}

inline int wrap(int i, int n) {
  const int r = i % n;
  return r < 0 ? r + n : r;
}

inline int clampi(int i, int lo, int hi) { return std::min(std::max(i, lo), hi); }

}  // namespace

Var add(Var a, Var b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

Var div(Var a, Var b) {
  return binary(
      a, b, "div", [](double x, double y) { return x / guarded(y); },
      [](double, double y, double) { return 1.0 / guarded(y); },
      [](double, double y, double out) { return std::abs(y) >= kGuardEps ? -out / y : 0.0; });
}

// Ties send the gradient to the first operand.
Var minimum(Var a, Var b) {
  return binary(
      a, b, "minimum", [](double x, double y) { return std::min(x, y); },
      [](double x, double y, double) { return x <= y ? 1.0 : 0.0; },
      [](double x, double y, double) { return x <= y ? 0.0 : 1.0; });
}

Var maximum(Var a, Var b) {
  return binary(
      a, b, "maximum", [](double x, double y) { return std::max(x, y); },
      [](double x, double y, double) { return x >= y ? 1.0 : 0.0; },
      [](double x, double y, double) { return x >= y ? 0.0 : 1.0; });
}

Var neg(Var a) {
  return unary(a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Var scale(Var a, double k) {
  return unary(a, [k](double x) { return k * x; }, [k](double, double) { return k; });
}

Var shift(Var a, double k) {
  return unary(a, [k](double x) { return x + k; }, [](double, double) { return 1.0; });
}

Var square(Var a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sqrt(Var a) {
  return unary(
      a, [](double x) { return std::sqrt(std::max(x, 0.0) + kGuardEps); },
      [](double x, double y) { return x > 0.0 ? 0.5 / y : 0.0; });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(
      a, [](double x) { return std::log(std::max(x, 0.0) + kGuardEps); },
      [](double x, double) { return x > 0.0 ? 1.0 / (x + kGuardEps) : 0.0; });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var clamp(Var a, double lo, double hi) {
  if (lo > hi) throw ContractError("clamp: lo > hi");
  return unary(
      a, [lo, hi](double x) { return std::min(std::max(x, lo), hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var smooth_abs(Var a, double eps) {
  const double e2 = eps * eps;
  return unary(
      a, [e2](double x) { return std::sqrt(x * x + e2); }, [](double x, double y) { return x / y; });
}

Var detach(Var a) { return a.tape().constant(a.value()); }

Var sum(Var a) {
  return a.tape().record(
      Shape{}, {a},
      [](Inputs in, Image& y) {
        double s = 0.0;
        for (double v : in[0]->data()) s += v;
        y[0] = s;
      },
      [](Inputs, const Image&, const Image& gy, InputAdjoints g) {
        if (!g[0]) return;
        for (double& v : g[0]->values()) v += gy[0];
      });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var dot(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  if (a.value().size() != b.value().size()) throw ContractError("dot: size mismatch");
  return tape.record(
      Shape{}, {a, b},
      [](Inputs in, Image& y) {
        double s = 0.0;
        for (std::size_t i = 0; i < in[0]->size(); ++i) s += (*in[0])[i] * (*in[1])[i];
        y[0] = s;
      },
      [](Inputs in, const Image&, const Image& gy, InputAdjoints g) {
        for (std::size_t i = 0; i < in[0]->size(); ++i) {
          if (g[0]) (*g[0])[i] += gy[0] * (*in[1])[i];
          if (g[1]) (*g[1])[i] += gy[0] * (*in[0])[i];
        }
      });
}

Var spatial_sum(Var a) {
  const int c = a.shape().channels;
  return a.tape().record(
      Shape{1, 1, c}, {a},
      [c](Inputs in, Image& y) {
        y.fill(0.0);
        const Image& x = *in[0];
        for (std::size_t i = 0; i < x.size(); ++i) y[i % c] += x[i];
      },
      [c](Inputs, const Image&, const Image& gy, InputAdjoints g) {
        if (!g[0]) return;
        Image& gx = *g[0];
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i % c];
      });
}

Var channel_sum(Var a) {
  const Shape s = a.shape();
  const int c = s.channels;
  return a.tape().record(
      Shape{s.height, s.width, 1}, {a},
      [c](Inputs in, Image& y) {
        const Image& x = *in[0];
        for (std::size_t p = 0; p < y.size(); ++p) {
          double acc = 0.0;
          for (int k = 0; k < c; ++k) acc += x[p * c + k];
          y[p] = acc;
        }
      },
      [c](Inputs, const Image& y, const Image& gy, InputAdjoints g) {
        if (!g[0]) return;
        for (std::size_t p = 0; p < y.size(); ++p)
          for (int k = 0; k < c; ++k) (*g[0])[p * c + k] += gy[p];
      });
}

Var channel_mean(Var a) { return scale(channel_sum(a), 1.0 / a.shape().channels); }

Var channel(Var a, int ch) {
  const Shape s = a.shape();
  if (ch < 0 || ch >= s.channels) throw ContractError("channel: index out of range");
  const int c = s.channels;
  return a.tape().record(
      Shape{s.height, s.width, 1}, {a},
      [c, ch](Inputs in, Image& y) {
        for (std::size_t p = 0; p < y.size(); ++p) y[p] = (*in[0])[p * c + ch];
      },
      [c, ch](Inputs, const Image& y, const Image& gy, InputAdjoints g) {
        if (!g[0]) return;
        for (std::size_t p = 0; p < y.size(); ++p) (*g[0])[p * c + ch] += gy[p];
      });
}

Var concat_channels(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_channels: no inputs");
  Tape& tape = parts[0].tape();
  const Shape s0 = parts[0].shape();
  std::vector<int> offsets;
  int total = 0;
  for (const Var& v : parts) {
    const Shape s = v.shape();
    if (s.height != s0.height || s.width != s0.width) {
      throw ContractError("concat_channels: spatial extents differ");
    }
    offsets.push_back(total);
    total += s.channels;
  }
  return tape.record(
      Shape{s0.height, s0.width, total}, std::vector<Var>(parts.begin(), parts.end()),
      [offsets, total](Inputs in, Image& y) {
        const std::size_t pixels = y.size() / total;
        for (std::size_t k = 0; k < in.size(); ++k) {
          const int c = in[k]->channels();
          for (std::size_t p = 0; p < pixels; ++p)
            for (int j = 0; j < c; ++j) y[p * total + offsets[k] + j] = (*in[k])[p * c + j];
        }
      },
      [offsets, total](Inputs in, const Image& y, const Image& gy, InputAdjoints g) {
        const std::size_t pixels = y.size() / total;
        for (std::size_t k = 0; k < in.size(); ++k) {
          if (!g[k]) continue;
          const int c = in[k]->channels();
          for (std::size_t p = 0; p < pixels; ++p)
            for (int j = 0; j < c; ++j) (*g[k])[p * c + j] += gy[p * total + offsets[k] + j];
        }
      });
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  Tape& tape = parts[0].tape();
  std::size_t total = 0;
  for (const Var& v : parts) total += v.value().size();
  return tape.record(
      Shape{1, 1, static_cast<int>(total)}, std::vector<Var>(parts.begin(), parts.end()),
      [](Inputs in, Image& y) {
        std::size_t o = 0;
        for (const Image* x : in)
          for (double v : x->data()) y[o++] = v;
      },
      [](Inputs in, const Image&, const Image& gy, InputAdjoints g) {
        std::size_t o = 0;
        for (std::size_t k = 0; k < in.size(); ++k) {
          const std::size_t n = in[k]->size();
          if (g[k])
            for (std::size_t i = 0; i < n; ++i) (*g[k])[i] += gy[o + i];
          o += n;
        }
      });
}

Var element(Var a, std::size_t index) {
  if (index >= a.value().size()) throw ContractError("element: index out of range");
  return a.tape().record(
      Shape{}, {a}, [index](Inputs in, Image& y) { y[0] = (*in[0])[index]; },
      [index](Inputs, const Image&, const Image& gy, InputAdjoints g) {
        if (g[0]) (*g[0])[index] += gy[0];
      });
}

Var cosine_similarity(Var u, Var v) {
  Tape& tape = same_tape(u, v);
  if (u.value().size() != v.value().size()) throw ContractError("cosine_similarity: size mismatch");
  return tape.record(
      Shape{}, {u, v},
      [](Inputs in, Image& y) {
        double uv = 0.0, uu = 0.0, vv = 0.0;
        for (std::size_t i = 0; i < in[0]->size(); ++i) {
          const double a = (*in[0])[i], b = (*in[1])[i];
          uv += a * b;
          uu += a * a;
          vv += b * b;
        }
        const double nu = std::max(std::sqrt(uu), kGuardEps);
        const double nv = std::max(std::sqrt(vv), kGuardEps);
        y[0] = uv / (nu * nv);
      },
      [](Inputs in, const Image& y, const Image& gy, InputAdjoints g) {
        double uu = 0.0, vv = 0.0;
        for (std::size_t i = 0; i < in[0]->size(); ++i) {
          uu += (*in[0])[i] * (*in[0])[i];
          vv += (*in[1])[i] * (*in[1])[i];
        }
        const double nu = std::sqrt(uu), nv = std::sqrt(vv);
        const bool u_ok = nu > kGuardEps, v_ok = nv > kGuardEps;
        const double nu_g = std::max(nu, kGuardEps), nv_g = std::max(nv, kGuardEps);
        const double c = y[0];
        for (std::size_t i = 0; i < in[0]->size(); ++i) {
          const double a = (*in[0])[i], b = (*in[1])[i];
          if (g[0]) {
            const double d = b / (nu_g * nv_g) - (u_ok ? c * a / (nu * nu) : 0.0);
            (*g[0])[i] += gy[0] * d;
          }
          if (g[1]) {
            const double d = a / (nu_g * nv_g) - (v_ok ? c * b / (nv * nv) : 0.0);
            (*g[1])[i] += gy[0] * d;
          }
        }
      });
}

Var l2_normalize(Var v) {
  return v.tape().record(
      v.shape(), {v},
      [](Inputs in, Image& y) {
        const double n = std::max(l2_norm(*in[0]), kGuardEps);
        for (std::size_t i = 0; i < y.size(); ++i) y[i] = (*in[0])[i] / n;
      },
      [](Inputs in, const Image& y, const Image& gy, InputAdjoints g) {
        if (!g[0]) return;
        const double n = l2_norm(*in[0]);
        if (n <= kGuardEps) {
          for (std::size_t i = 0; i < y.size(); ++i) (*g[0])[i] += gy[i] / kGuardEps;
          return;
        }
        double yg = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) yg += y[i] * gy[i];
        for (std::size_t i = 0; i < y.size(); ++i) (*g[0])[i] += (gy[i] - y[i] * yg) / n;
      });
}

Var softmax_channels(Var logits) {
  const int c = logits.shape().channels;
  return logits.tape().record(
      logits.shape(), {logits},
      [c](Inputs in, Image& y) {
        const Image& x = *in[0];
        const std::size_t pixels = x.size() / c;
        for (std::size_t p = 0; p < pixels; ++p) {
          double m = x[p * c];
          for (int k = 1; k < c; ++k) m = std::max(m, x[p * c + k]);
          double z = 0.0;
          for (int k = 0; k < c; ++k) {
            y[p * c + k] = std::exp(x[p * c + k] - m);
            z += y[p * c + k];
          }
          for (int k = 0; k < c; ++k) y[p * c + k] /= z;
        }
      },
      [c](Inputs, const Image& y, const Image& gy, InputAdjoints g) {
        if (!g[0]) return;
        const std::size_t pixels = y.size() / c;
        for (std::size_t p = 0; p < pixels; ++p) {
          double s = 0.0;
          for (int k = 0; k < c; ++k) s += y[p * c + k] * gy[p * c + k];
          for (int k = 0; k < c; ++k) (*g[0])[p * c + k] += y[p * c + k] * (gy[p * c + k] - s);
        }
      });
}

Var conv2d(Var image, const KernelBank& bank, Padding padding) {
  const Shape s = image.shape();
  if (s.channels != bank.in_channels) throw ContractError("conv2d: channel count mismatch");
  const int k = 2 * bank.radius + 1;
  if (bank.weights.size() != static_cast<std::size_t>(bank.out_channels) * k * k * bank.in_channels ||
      bank.bias.size() != static_cast<std::size_t>(bank.out_channels)) {
    throw ContractError("conv2d: malformed kernel bank");
  }
  auto source = [s, padding](int y, int x) {
    if (padding == Padding::kPeriodic) return std::pair{wrap(y, s.height), wrap(x, s.width)};
    return std::pair{clampi(y, 0, s.height - 1), clampi(x, 0, s.width - 1)};
  };
  return image.tape().record(
      Shape{s.height, s.width, bank.out_channels}, {image},
      [bank, source](Inputs in, Image& out) {
        const Image& x = *in[0];
        const int r = bank.radius;
        for (int y = 0; y < out.height(); ++y)
          for (int xx = 0; xx < out.width(); ++xx)
            for (int o = 0; o < bank.out_channels; ++o) {
              double acc = bank.bias[o];
              for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                  const auto [sy, sx] = source(y + dy, xx + dx);
                  for (int i = 0; i < bank.in_channels; ++i)
                    acc += bank.weight(o, dy + r, dx + r, i) * x.at(sy, sx, i);
                }
              out.at(y, xx, o) = acc;
            }
      },
      [bank, source](Inputs, const Image& out, const Image& gy, InputAdjoints g) {
        if (!g[0]) return;
        Image& gx = *g[0];
        const int r = bank.radius;
        for (int y = 0; y < out.height(); ++y)
          for (int xx = 0; xx < out.width(); ++xx)
            for (int o = 0; o < bank.out_channels; ++o) {
              const double go = gy.at(y, xx, o);
              if (go == 0.0) continue;
              for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                  const auto [sy, sx] = source(y + dy, xx + dx);
                  for (int i = 0; i < bank.in_channels; ++i)
                    gx.at(sy, sx, i) += go * bank.weight(o, dy + r, dx + r, i);
                }
            }
      });
}

namespace {

// Bilinear taps of a border-clamped sample at (sx, sy). d{x,y} flags are zero
// when the coordinate was clamped (no sensitivity to the flow there).
struct Taps {
  int x0, x1, y0, y1;
  double fx, fy;
  double dx_active, dy_active;
};

inline Taps make_taps(double sx, double sy, int width, int height) {
  Taps t{};
  const double cx = std::min(std::max(sx, 0.0), static_cast<double>(width - 1));
  const double cy = std::min(std::max(sy, 0.0), static_cast<double>(height - 1));
  t.dx_active = (sx > 0.0 && sx < width - 1) ? 1.0 : 0.0;
  t.dy_active = (sy > 0.0 && sy < height - 1) ? 1.0 : 0.0;
  t.x0 = static_cast<int>(std::floor(cx));
  t.y0 = static_cast<int>(std::floor(cy));
  t.x1 = std::min(t.x0 + 1, width - 1);
  t.y1 = std::min(t.y0 + 1, height - 1);
  t.fx = cx - t.x0;
  t.fy = cy - t.y0;
  return t;
}

}  // namespace

Var bilinear_warp(Var image, Var flow) {
  Tape& tape = same_tape(image, flow);
  const Shape s = image.shape();
  const Shape f = flow.shape();
  if (f.height != s.height || f.width != s.width || f.channels != 2) {
    throw ContractError("bilinear_warp: flow must be HxWx2 matching the image, got " + f.to_string());
  }
  return tape.record(
      s, {image, flow},
      [](Inputs in, Image& out) {
        const Image& img = *in[0];
        const Image& fl = *in[1];
        const int h = img.height(), w = img.width(), c = img.channels();
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) {
            const Taps t = make_taps(x - fl.at(y, x, 0), y - fl.at(y, x, 1), w, h);
            for (int k = 0; k < c; ++k) {
              const double top = (1 - t.fx) * img.at(t.y0, t.x0, k) + t.fx * img.at(t.y0, t.x1, k);
              const double bot = (1 - t.fx) * img.at(t.y1, t.x0, k) + t.fx * img.at(t.y1, t.x1, k);
              out.at(y, x, k) = (1 - t.fy) * top + t.fy * bot;
            }
          }
      },
      [](Inputs in, const Image&, const Image& gy, InputAdjoints g) {
        const Image& img = *in[0];
        const Image& fl = *in[1];
        const int h = img.height(), w = img.width(), c = img.channels();
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) {
            const Taps t = make_taps(x - fl.at(y, x, 0), y - fl.at(y, x, 1), w, h);
            double gsx = 0.0, gsy = 0.0;
            for (int k = 0; k < c; ++k) {
              const double go = gy.at(y, x, k);
              const double v00 = img.at(t.y0, t.x0, k), v01 = img.at(t.y0, t.x1, k);
              const double v10 = img.at(t.y1, t.x0, k), v11 = img.at(t.y1, t.x1, k);
              if (g[0]) {
                Image& gi = *g[0];
                gi.at(t.y0, t.x0, k) += go * (1 - t.fx) * (1 - t.fy);
                gi.at(t.y0, t.x1, k) += go * t.fx * (1 - t.fy);
                gi.at(t.y1, t.x0, k) += go * (1 - t.fx) * t.fy;
                gi.at(t.y1, t.x1, k) += go * t.fx * t.fy;
              }
              gsx += go * ((1 - t.fy) * (v01 - v00) + t.fy * (v11 - v10));
              gsy += go * ((1 - t.fx) * (v10 - v00) + t.fx * (v11 - v01));
            }
            if (g[1]) {
              // sample position is p - flow
              g[1]->at(y, x, 0) -= gsx * t.dx_active;
              g[1]->at(y, x, 1) -= gsy * t.dy_active;
            }
          }
      });
}

}  // namespace dag::ad
