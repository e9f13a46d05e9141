#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fontaware/image.hpp"

namespace fontaware {

enum class Reduction { mean, sum };

std::string to_string(Reduction r);
Reduction parse_reduction(const std::string& s);

struct LossConfig {
  double alpha = 0.1;
  Reduction reduction = Reduction::mean;
};

// reduce((w + alpha) * |gt - gen|). Throws ShapeMismatch unless all three
// images share a shape, DataError if alpha < 0.
double weighted_l1(const Image& gt, const Image& gen, const Image& weights, const LossConfig& cfg);

// d/d(gen) of weighted_l1: -(w + alpha) * sign(gt - gen), divided by the
// pixel count under mean reduction. Zero where gt == gen.
Image weighted_l1_grad(const Image& gt, const Image& gen, const Image& weights, const LossConfig& cfg);

// Double-precision variants over flat buffers of equal length.
double weighted_l1(std::span<const double> gt, std::span<const double> gen, std::span<const double> weights,
                   const LossConfig& cfg);
std::vector<double> weighted_l1_grad(std::span<const double> gt, std::span<const double> gen,
                                     std::span<const double> weights, const LossConfig& cfg);

/// Pixel-resolution loss weights keyed by ground-truth glyph identity.
/// Filled once, then read-only.
class WeightCache {
 public:
  WeightCache() = default;
  explicit WeightCache(int image_size) : image_size_(image_size) {}

  void insert(const std::string& font_id, char letter, Image weights);
  // Throws CacheMiss; there is no fallback to uniform weights.
  const Image& at(const std::string& font_id, char letter) const;
  bool contains(const std::string& font_id, char letter) const;

  std::size_t size() const { return weights_.size(); }
  int image_size() const { return image_size_; }
  const std::map<std::pair<std::string, char>, Image>& entries() const { return weights_; }

  // Writes `<dir>/<font_id>/<letter>.w` files plus `<dir>/cache.json`.
  void save(const std::filesystem::path& dir) const;
  static WeightCache load(const std::filesystem::path& dir);

 private:
  int image_size_ = 0;
  std::map<std::pair<std::string, char>, Image> weights_;
};

}  // namespace fontaware
