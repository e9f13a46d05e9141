#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fontaware/image.hpp"

namespace fontaware {

/// Post-softmax self-attention of every encoder layer for one image. Token 0
/// is the class token, tokens 1..rows*cols are patches in row-major order.
struct AttentionTrace {
  int heads = 0;
  int tokens = 0;
  int grid_rows = 0;
  int grid_cols = 0;
  std::vector<std::vector<float>> layers;  // each heads * tokens * tokens

  int depth() const { return static_cast<int>(layers.size()); }
  float at(int layer, int head, int i, int j) const {
    return layers[layer][(static_cast<std::size_t>(head) * tokens + i) * tokens + j];
  }
};

enum class MapNormalization { raw, minmax };

/// Patch-level style importance for one glyph image.
struct AwarenessMap {
  int rows = 0;
  int cols = 0;
  std::vector<double> grid;  // row-major
  MapNormalization normalization = MapNormalization::raw;
  std::string source_image;

  double at(int r, int c) const { return grid[static_cast<std::size_t>(r) * cols + c]; }
};

// Rollout with residual mixing: per layer the head-mean A is replaced by
// 0.5*A + 0.5*I with rows renormalized; the product over layers (last layer
// leftmost) is read at the class-token row, patch columns only.
// Throws NonStochasticAttention if a row sum deviates by more than `tolerance`
// or an entry is negative.
AwarenessMap attention_rollout(const AttentionTrace& trace, double tolerance = 1e-3);

// (g - min) / (max - min); constant grids map to zeros.
AwarenessMap normalize_map(const AwarenessMap& map);

// Bilinear upsampling to size x size pixels.
Image resize_map(const AwarenessMap& map, int size);

// Blue-to-red heatmap at the glyph's resolution with the glyph's ink
// alpha-blended on top as darkening.
RgbImage render_overlay(const Image& glyph, const AwarenessMap& map);

// Map colour for t in [0,1]: blue, cyan, green, yellow, red.
void heat_color(double t, std::uint8_t rgb[3]);

// One JSON header line followed by rows*cols little-endian float32 values.
void save_map(const std::filesystem::path& file, const AwarenessMap& map);
AwarenessMap load_map(const std::filesystem::path& file);

// Same binary format for a pixel-resolution weight image.
void save_weight_image(const std::filesystem::path& file, const Image& weights, const std::string& source_image);
Image load_weight_image(const std::filesystem::path& file);

}  // namespace fontaware
