#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace fontaware {

/// Single-channel float raster, row-major. Glyph images use 1.0 for the
/// background and smaller values for ink.
class Image {
 public:
  Image() = default;
  Image(int height, int width, float fill = 0.0f);
  Image(int height, int width, std::vector<float> data);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float& at(int y, int x) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  float at(int y, int x) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }

  std::span<float> pixels() { return data_; }
  std::span<const float> pixels() const { return data_; }
  const std::vector<float>& data() const { return data_; }

  bool same_shape(const Image& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<float> data_;
};

/// 8-bit interleaved RGB raster.
struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;  // height * width * 3

  RgbImage() = default;
  RgbImage(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(h) * w * 3, 0) {}

  std::uint8_t* pixel(int y, int x) { return &data[(static_cast<std::size_t>(y) * width + x) * 3]; }
  const std::uint8_t* pixel(int y, int x) const {
    return &data[(static_cast<std::size_t>(y) * width + x) * 3];
  }
};

// Resamples with a triangle (bilinear) kernel. When shrinking, the kernel is
// widened by the scale factor so every source pixel contributes. Output is
// clamped to the input's value range; same size returns an identical copy.
Image resize_bilinear(const Image& src, int height, int width);

// Clamps every value into [lo, hi].
void clamp_values(Image& img, float lo = 0.0f, float hi = 1.0f);

// 8-bit grayscale PNG; values are mapped from [0,1] with rounding.
Image read_png_gray(const std::filesystem::path& path);
void write_png_gray(const std::filesystem::path& path, const Image& img);
void write_png_rgb(const std::filesystem::path& path, const RgbImage& img);
RgbImage read_png_rgb(const std::filesystem::path& path);

// Quantizes to the 8-bit grid used by PNG storage.
Image quantize_u8(const Image& img);

}  // namespace fontaware
