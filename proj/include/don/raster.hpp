#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "don/error.hpp"

namespace don {

/// Row-major, channel-interleaved image buffer. Indexing is (col, row, channel).
template <class T>
class Raster {
 public:
  using value_type = T;

  Raster() = default;
  Raster(int width, int height, int channels = 1, T fill = T{})
      : width_(width), height_(height), channels_(channels) {
    if (width < 0 || height < 0 || channels < 1) {
      throw Error(Errc::InvalidArgument, "raster dimensions must be nonnegative");
    }
    data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  bool in_bounds(int col, int row) const noexcept {
    return col >= 0 && row >= 0 && col < width_ && row < height_;
  }

  std::size_t offset(int col, int row, int ch = 0) const noexcept {
    return (static_cast<std::size_t>(row) * width_ + col) * channels_ + ch;
  }

  T& operator()(int col, int row, int ch = 0) noexcept { return data_[offset(col, row, ch)]; }
  const T& operator()(int col, int row, int ch = 0) const noexcept {
    return data_[offset(col, row, ch)];
  }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  bool operator==(const Raster&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 1;
  std::vector<T> data_;
};

using RgbImage = Raster<double>;         // 3 channels in [0,1], quantized to k/255
using DepthImage = Raster<float>;        // meters along camera z, 0 = no return
using IdRaster = Raster<std::uint8_t>;   // 0 = background, k = object k
using BitMask = Raster<std::uint8_t>;    // 0 / 1

}  // namespace don
