#include "dag/image.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dag/error.hpp"

namespace dag {

std::string Shape::to_string() const {
  return std::to_string(height) + "x" + std::to_string(width) + "x" + std::to_string(channels);
}

Image::Image(Shape shape, double fill) : shape_(shape), data_(shape.size(), fill) {
  if (shape.height <= 0 || shape.width <= 0 || shape.channels <= 0) {
    throw ContractError("Image: non-positive extent " + shape.to_string());
  }
}

Image::Image(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
  if (shape.height <= 0 || shape.width <= 0 || shape.channels <= 0) {
    throw ContractError("Image: non-positive extent " + shape.to_string());
  }
  if (data_.size() != shape_.size()) {
    throw ContractError("Image: " + std::to_string(data_.size()) + " values for shape " +
                        shape_.to_string());
  }
}

double Image::item() const {
  if (!shape_.is_scalar()) {
    throw ContractError("Image::item on non-scalar shape " + shape_.to_string());
  }
  return data_[0];
}

void Image::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Image Image::channel(int c) const {
  if (c < 0 || c >= shape_.channels) throw ContractError("Image::channel out of range");
  Image out(Shape{shape_.height, shape_.width, 1});
  for (int y = 0; y < shape_.height; ++y)
    for (int x = 0; x < shape_.width; ++x) out.at(y, x) = at(y, x, c);
  return out;
}

double max_abs_diff(const Image& a, const Image& b) {
  if (a.shape() != b.shape()) throw ContractError("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double max_abs(const Image& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

double l2_norm(const Image& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return std::sqrt(s);
}

double sum(const Image& a) { return std::accumulate(a.data().begin(), a.data().end(), 0.0); }

Image axpy(const Image& a, double k, const Image& b) {
  if (a.shape() != b.shape()) throw ContractError("axpy: shape mismatch");
  Image out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += k * b[i];
  return out;
}

Image scaled(const Image& a, double k) {
  Image out = a;
  for (double& v : out.values()) v *= k;
  return out;
}

}  // namespace dag
