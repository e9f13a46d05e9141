#include "fontaware/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <string>

#include "fontaware/errors.hpp"

namespace fontaware {

Image::Image(int height, int width, float fill)
    : height_(height), width_(width),
      data_(static_cast<std::size_t>(std::max(height, 0)) * std::max(width, 0), fill) {
  if (height < 0 || width < 0) throw ShapeMismatch("negative image dimensions");
}

Image::Image(int height, int width, std::vector<float> data)
    : height_(height), width_(width), data_(std::move(data)) {
  if (height < 0 || width < 0 ||
      data_.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width)) {
    throw ShapeMismatch("pixel buffer does not match " + std::to_string(height) + "x" +
                        std::to_string(width));
  }
}

namespace {

struct Tap {
  int first = 0;
  std::vector<double> weights;
};

// Triangle-kernel taps for one axis, pixel centers at (i + 0.5).
std::vector<Tap> triangle_taps(int in_size, int out_size) {
  const double scale = static_cast<double>(in_size) / out_size;
  const double filter_scale = std::max(scale, 1.0);
  const double support = filter_scale;
  std::vector<Tap> taps(out_size);
  for (int i = 0; i < out_size; ++i) {
    const double center = (i + 0.5) * scale;
    int lo = static_cast<int>(std::floor(center - support));
    int hi = static_cast<int>(std::ceil(center + support));
    lo = std::max(lo, 0);
    hi = std::min(hi, in_size);
    Tap& tap = taps[i];
    tap.first = lo;
    double total = 0.0;
    for (int j = lo; j < hi; ++j) {
      const double d = std::abs((j + 0.5 - center) / filter_scale);
      const double w = d < 1.0 ? 1.0 - d : 0.0;
      tap.weights.push_back(w);
      total += w;
    }
    if (total > 0.0) {
      for (double& w : tap.weights) w /= total;
    }
  }
  return taps;
}

}  // namespace

Image resize_bilinear(const Image& src, int height, int width) {
  if (height <= 0 || width <= 0) throw ShapeMismatch("resize target must be positive");
  if (src.empty()) throw ShapeMismatch("cannot resize an empty image");
  if (src.height() == height && src.width() == width) return src;

  const auto [mn, mx] = std::minmax_element(src.pixels().begin(), src.pixels().end());
  const float lo = *mn;
  const float hi = *mx;

  const auto xtaps = triangle_taps(src.width(), width);
  const auto ytaps = triangle_taps(src.height(), height);

  // Horizontal pass into a double buffer, then vertical.
  std::vector<double> tmp(static_cast<std::size_t>(src.height()) * width);
  for (int y = 0; y < src.height(); ++y) {
    for (int x = 0; x < width; ++x) {
      const Tap& t = xtaps[x];
      double acc = 0.0;
      for (std::size_t k = 0; k < t.weights.size(); ++k) acc += t.weights[k] * src.at(y, t.first + static_cast<int>(k));
      tmp[static_cast<std::size_t>(y) * width + x] = acc;
    }
  }
  Image out(height, width);
  for (int y = 0; y < height; ++y) {
    const Tap& t = ytaps[y];
    for (int x = 0; x < width; ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < t.weights.size(); ++k) {
        acc += t.weights[k] * tmp[static_cast<std::size_t>(t.first + static_cast<int>(k)) * width + x];
      }
      out.at(y, x) = std::clamp(static_cast<float>(acc), lo, hi);
    }
  }
  return out;
}

void clamp_values(Image& img, float lo, float hi) {
  for (float& v : img.pixels()) v = std::clamp(v, lo, hi);
}

namespace {

std::uint8_t to_u8(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

}  // namespace

Image quantize_u8(const Image& img) {
  Image out = img;
  for (float& v : out.pixels()) v = static_cast<float>(to_u8(v)) / 255.0f;
  return out;
}

Image read_png_gray(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
    throw FormatError("cannot read PNG " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw FormatError("cannot decode PNG " + path.string() + ": " + msg);
  }
  Image out(static_cast<int>(image.height), static_cast<int>(image.width));
  for (std::size_t i = 0; i < buffer.size(); ++i) out.pixels()[i] = buffer[i] / 255.0f;
  return out;
}

RgbImage read_png_rgb(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
    throw FormatError("cannot read PNG " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  RgbImage out(static_cast<int>(image.height), static_cast<int>(image.width));
  if (!png_image_finish_read(&image, nullptr, out.data.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw FormatError("cannot decode PNG " + path.string() + ": " + msg);
  }
  return out;
}

void write_png_gray(const std::filesystem::path& path, const Image& img) {
  std::vector<std::uint8_t> buffer(img.size());
  std::transform(img.pixels().begin(), img.pixels().end(), buffer.begin(), to_u8);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, buffer.data(), 0, nullptr)) {
    throw FormatError("cannot write PNG " + path.string() + ": " + image.message);
  }
}

void write_png_rgb(const std::filesystem::path& path, const RgbImage& img) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, img.data.data(), 0, nullptr)) {
    throw FormatError("cannot write PNG " + path.string() + ": " + image.message);
  }
}

}  // namespace fontaware
