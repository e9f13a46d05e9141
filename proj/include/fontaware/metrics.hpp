#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fontaware/awloss.hpp"
#include "fontaware/image.hpp"
#include "fontaware/rollout.hpp"
#include "json.hpp"

namespace fontaware {

struct Pixel {
  int y = 0;
  int x = 0;
  friend bool operator==(const Pixel&, const Pixel&) = default;
};

struct CannyParams {
  double sigma = 1.4;
  // Hysteresis thresholds as fractions of the gradient-magnitude range.
  double low = 0.1;
  double high = 0.3;
};

struct OtsuResult {
  int bin = 0;             // bins <= bin are foreground (ink)
  double threshold = 0.0;  // decision level in [0,1]: (bin + 0.5) / 255
  double between_variance = 0.0;
  bool degenerate = false;  // single-class histogram
};

/// Otsu-binarized glyph plus its Canny edge set.
struct BinaryShape {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> mask;  // 1 = ink
  std::vector<Pixel> edges;
  OtsuResult otsu;
  bool empty_foreground = true;
  bool empty_edges = true;

  bool ink(int y, int x) const { return mask[static_cast<std::size_t>(y) * width + x] != 0; }
};

// 8-bit histogram bin of an intensity in [0,1].
int intensity_bin(float v);
std::array<std::uint32_t, 256> histogram256(const Image& img);

OtsuResult otsu_threshold(const Image& img);
BinaryShape binarize_otsu(const Image& img, const CannyParams& canny = {});

// Canny on a binary mask (1 = ink). Returns edge pixels in raster order.
std::vector<Pixel> canny_edges(const std::vector<std::uint8_t>& mask, int height, int width,
                               const CannyParams& params = {});

// Exact squared Euclidean distance to the nearest seed, per pixel.
std::vector<double> squared_distance_transform(const std::vector<Pixel>& seeds, int height, int width);

// Symmetric point-set distances on a common grid. Both sets must be non-empty.
double hausdorff_distance(const std::vector<Pixel>& a, const std::vector<Pixel>& b, int height, int width);
double phd_distance(const std::vector<Pixel>& a, const std::vector<Pixel>& b, int height, int width);

// Zhang-Suen thinning of a binary mask (1 = ink).
std::vector<std::uint8_t> skeletonize(const std::vector<std::uint8_t>& mask, int height, int width);
// Skeleton pixels with exactly one 8-connected skeleton neighbour.
std::vector<Pixel> skeleton_endpoints(const std::vector<std::uint8_t>& skeleton, int height, int width);

struct StrokeEndStats {
  double stroke_end_mean = 0.0;  // mean map value over patches holding a stroke end
  double image_mean = 0.0;       // mean over all patches
  std::size_t end_patches = 0;
  std::size_t endpoints = 0;
};

// Stroke ends are the skeleton endpoints of the Otsu foreground; each is
// mapped to the patch containing it on the map's grid.
StrokeEndStats stroke_end_awareness(const Image& glyph, const AwarenessMap& map);

double metric_l1(const Image& gt, const Image& gen);
double metric_weighted_l1(const Image& gt, const Image& gen, const Image& weights);
// nullopt when either edge set is empty.
std::optional<double> metric_hausdorff(const Image& gt, const Image& gen, const CannyParams& canny = {});
std::optional<double> metric_phd(const Image& gt, const Image& gen, const CannyParams& canny = {});
// nullopt when both foregrounds are empty.
std::optional<double> metric_iou(const Image& gt, const Image& gen);
std::optional<double> mask_iou(const BinaryShape& a, const BinaryShape& b);
double metric_ssim(const Image& gt, const Image& gen);

struct PcaResult {
  std::vector<std::array<double, 2>> coords;
  std::array<double, 2> variance{0.0, 0.0};  // per component, n-1 normalization
  bool degenerate = false;
};

// Centers the rows and projects onto the top two principal directions. Each
// component's sign makes its largest-magnitude coordinate positive.
PcaResult pca_style_features(const std::vector<std::vector<float>>& features);
RgbImage pca_scatter(const PcaResult& pca, const std::vector<std::string>& labels, int size = 320);

using MetricFn = std::function<double(const Image& gt, const Image& gen)>;

struct ReportOptions {
  CannyParams canny;
  // Extra columns, e.g. a perceptual metric supplied by the caller.
  std::map<std::string, MetricFn> plugins;
  // Merged into the report header (config, checkpoint hashes, ...).
  nlohmann::ordered_json header_extra = nlohmann::ordered_json::object();
};

struct MetricRow {
  std::string font_id;
  char letter = 'A';
  std::optional<double> l1;
  std::optional<double> weighted_l1;
  std::optional<double> hausdorff;
  std::optional<double> phd;
  std::optional<double> iou;
  std::optional<double> ssim;
  std::map<std::string, double> extra;
  bool excluded = false;
  std::string exclusion_reason;
};

struct MetricsReport {
  nlohmann::ordered_json header;
  std::vector<MetricRow> rows;
  std::map<std::string, double> aggregates;   // mean over rows where the metric is defined
  std::map<std::string, std::size_t> counts;  // rows contributing to each aggregate
};

MetricRow compute_row(const std::string& font_id, char letter, const Image& gt, const Image& gen,
                      const Image* weights, const ReportOptions& opts = {});
MetricsReport assemble_report(std::vector<MetricRow> rows, const ReportOptions& opts = {});

// Pairs `<gt_dir>/<font_id>/<letter>.png` with the same key under gen_dir.
// Throws KeyMismatch listing keys present on one side only.
MetricsReport build_report(const std::filesystem::path& gt_dir, const std::filesystem::path& gen_dir,
                           const WeightCache* weights, const ReportOptions& opts = {});

void write_report(const MetricsReport& report, const std::filesystem::path& out_dir);

}  // namespace fontaware
