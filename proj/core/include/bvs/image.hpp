#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "bvs/common.hpp"

namespace bvs {

/// Row-major single-channel image of doubles.
class Image {
 public:
  Image() = default;
  Image(int width, int height, double fill = 0.0)
      : width_(width), height_(height),
        data_(static_cast<std::size_t>(checked(width) * checked(height)), fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& at(int col, int row) { return data_[index(col, row)]; }
  double at(int col, int row) const { return data_[index(col, row)]; }
  bool contains(int col, int row) const {
    return col >= 0 && row >= 0 && col < width_ && row < height_;
  }

  std::span<double> pixels() { return data_; }
  std::span<const double> pixels() const { return data_; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  static long checked(int n) {
    if (n < 0) throw ConfigError("image dimensions must be non-negative");
    return n;
  }
  std::size_t index(int col, int row) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(col);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<double> data_;
};

}  // namespace bvs
