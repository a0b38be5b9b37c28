#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace dag {

// Height x width x channels, row-major with channels innermost.
struct Shape {
  int height = 1;
  int width = 1;
  int channels = 1;

  std::size_t size() const {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width) *
           static_cast<std::size_t>(channels);
  }
  bool is_scalar() const { return height == 1 && width == 1 && channels == 1; }
  bool operator==(const Shape&) const = default;

  std::string to_string() const;
};

// Dense real-valued grid. Used for x_t, x0 predictions, masks, flows and
// feature fields alike.
class Image {
 public:
  Image() = default;
  explicit Image(Shape shape, double fill = 0.0);
  Image(Shape shape, std::vector<double> data);

  static Image scalar(double v) { return Image(Shape{}, v); }

  const Shape& shape() const { return shape_; }
  int height() const { return shape_.height; }
  int width() const { return shape_.width; }
  int channels() const { return shape_.channels; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t index(int y, int x, int c = 0) const {
    return (static_cast<std::size_t>(y) * shape_.width + x) * shape_.channels + c;
  }
  double& at(int y, int x, int c = 0) { return data_[index(y, x, c)]; }
  double at(int y, int x, int c = 0) const { return data_[index(y, x, c)]; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  // Scalar access; throws unless the image is 1x1x1.
  double item() const;

  void fill(double v);
  // Single channel view copied out as an HxWx1 image.
  Image channel(int c) const;

  bool operator==(const Image&) const = default;

 private:
  Shape shape_{};
  std::vector<double> data_{0.0};
};

double max_abs_diff(const Image& a, const Image& b);
double max_abs(const Image& a);
double l2_norm(const Image& a);
double sum(const Image& a);

// out = a + k * b
Image axpy(const Image& a, double k, const Image& b);
Image scaled(const Image& a, double k);

}  // namespace dag
