#include "fontaware/metrics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <limits>
#include <set>

#include "fontaware/corpus.hpp"
#include "fontaware/errors.hpp"

namespace fontaware {

namespace fs = std::filesystem;

int intensity_bin(float v) {
  return static_cast<int>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

std::array<std::uint32_t, 256> histogram256(const Image& img) {
  std::array<std::uint32_t, 256> hist{};
  for (float v : img.pixels()) hist[intensity_bin(v)] += 1;
  return hist;
}

OtsuResult otsu_threshold(const Image& img) {
  const auto hist = histogram256(img);
  const double total = static_cast<double>(img.size());
  double sum_all = 0.0;
  for (int i = 0; i < 256; ++i) sum_all += static_cast<double>(i) * hist[i];

  OtsuResult best;
  best.degenerate = true;
  double count0 = 0.0;
  double sum0 = 0.0;
  for (int t = 0; t < 255; ++t) {
    count0 += hist[t];
    sum0 += static_cast<double>(t) * hist[t];
    const double count1 = total - count0;
    if (count0 == 0.0 || count1 == 0.0) continue;
    const double mean0 = sum0 / count0;
    const double mean1 = (sum_all - sum0) / count1;
    const double var = (count0 / total) * (count1 / total) * (mean0 - mean1) * (mean0 - mean1);
    if (var > best.between_variance) {
      best.between_variance = var;
      best.bin = t;
      best.degenerate = false;
    }
  }
  best.threshold = (best.bin + 0.5) / 255.0;
  return best;
}

namespace {

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    total += k[i + radius];
  }
  for (double& v : k) v /= total;
  return k;
}

// Separable convolution with replicated borders.
std::vector<double> blur(const std::vector<double>& src, int h, int w, const std::vector<double>& k) {
  const int r = static_cast<int>(k.size() / 2);
  std::vector<double> tmp(src.size()), out(src.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) acc += k[i + r] * src[static_cast<std::size_t>(y) * w + std::clamp(x + i, 0, w - 1)];
      tmp[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) acc += k[i + r] * tmp[static_cast<std::size_t>(std::clamp(y + i, 0, h - 1)) * w + x];
      out[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  return out;
}

}  // namespace

std::vector<Pixel> canny_edges(const std::vector<std::uint8_t>& mask, int height, int width,
                               const CannyParams& params) {
  const int h = height, w = width;
  if (mask.size() != static_cast<std::size_t>(h) * w) throw ShapeMismatch("mask size mismatch");
  std::vector<double> src(mask.begin(), mask.end());
  const auto smooth = blur(src, h, w, gaussian_kernel(params.sigma));
  auto px = [&](int y, int x) {
    return smooth[static_cast<std::size_t>(std::clamp(y, 0, h - 1)) * w + std::clamp(x, 0, w - 1)];
  };

  std::vector<double> mag(smooth.size()), gx(smooth.size()), gy(smooth.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double sx = (px(y - 1, x + 1) + 2 * px(y, x + 1) + px(y + 1, x + 1)) -
                        (px(y - 1, x - 1) + 2 * px(y, x - 1) + px(y + 1, x - 1));
      const double sy = (px(y + 1, x - 1) + 2 * px(y + 1, x) + px(y + 1, x + 1)) -
                        (px(y - 1, x - 1) + 2 * px(y - 1, x) + px(y - 1, x + 1));
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      gx[i] = sx;
      gy[i] = sy;
      mag[i] = std::hypot(sx, sy);
    }
  }
  const auto [mn_it, mx_it] = std::minmax_element(mag.begin(), mag.end());
  const double mn = *mn_it, mx = *mx_it;
  if (!(mx > mn)) return {};
  const double hi = mn + params.high * (mx - mn);
  const double lo = mn + params.low * (mx - mn);

  auto mag_at = [&](int y, int x) {
    if (y < 0 || y >= h || x < 0 || x >= w) return 0.0;
    return mag[static_cast<std::size_t>(y) * w + x];
  };

  // Non-maximum suppression along the quantized gradient direction. Ties
  // resolve toward the earlier neighbour so plateaus yield one-pixel edges.
  std::vector<std::uint8_t> state(mag.size(), 0);  // 0 none, 1 weak, 2 strong
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const double m = mag[i];
      if (m <= 0.0 || m < lo) continue;
      double angle = std::atan2(gy[i], gx[i]) * 180.0 / M_PI;
      if (angle < 0) angle += 180.0;
      int dy = 0, dx = 0;
      if (angle < 22.5 || angle >= 157.5) {
        dx = 1;
      } else if (angle < 67.5) {
        dy = 1, dx = 1;
      } else if (angle < 112.5) {
        dy = 1;
      } else {
        dy = 1, dx = -1;
      }
      if (m > mag_at(y - dy, x - dx) && m >= mag_at(y + dy, x + dx)) state[i] = m >= hi ? 2 : 1;
    }
  }

  // Hysteresis: keep weak pixels 8-connected to a strong one.
  std::deque<std::size_t> queue;
  for (std::size_t i = 0; i < state.size(); ++i) {
    if (state[i] == 2) queue.push_back(i);
  }
  while (!queue.empty()) {
    const std::size_t i = queue.front();
    queue.pop_front();
    const int y = static_cast<int>(i / w), x = static_cast<int>(i % w);
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int ny = y + dy, nx = x + dx;
        if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
        const std::size_t j = static_cast<std::size_t>(ny) * w + nx;
        if (state[j] == 1) {
          state[j] = 2;
          queue.push_back(j);
        }
      }
    }
  }
  std::vector<Pixel> edges;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (state[static_cast<std::size_t>(y) * w + x] == 2) edges.push_back({y, x});
    }
  }
  return edges;
}

BinaryShape binarize_otsu(const Image& img, const CannyParams& canny) {
  BinaryShape shape;
  shape.height = img.height();
  shape.width = img.width();
  shape.otsu = otsu_threshold(img);
  shape.mask.assign(img.size(), 0);
  if (!shape.otsu.degenerate) {
    for (std::size_t i = 0; i < img.size(); ++i) {
      shape.mask[i] = intensity_bin(img.pixels()[i]) <= shape.otsu.bin ? 1 : 0;
    }
  }
  shape.empty_foreground = std::none_of(shape.mask.begin(), shape.mask.end(), [](auto v) { return v != 0; });
  if (!shape.empty_foreground) shape.edges = canny_edges(shape.mask, shape.height, shape.width, canny);
  shape.empty_edges = shape.edges.empty();
  return shape;
}

// ---------------------------------------------------------------------------
// Distance transforms

namespace {

// Felzenszwalb-Huttenlocher lower envelope of parabolas, one line. `far`
// stands in for infinity so the intersection arithmetic stays finite.
constexpr double far = 1e20;

void dt_1d(const double* f, double* d, int n, std::vector<int>& v, std::vector<double>& z) {
  v.assign(n, 0);
  z.assign(n + 1, 0.0);
  int k = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  for (int q = 1; q < n; ++q) {
    double s;
    for (;;) {
      const int p = v[k];
      s = ((f[q] + static_cast<double>(q) * q) - (f[p] + static_cast<double>(p) * p)) / (2.0 * q - 2.0 * p);
      if (s <= z[k] && k > 0) {
        --k;
        continue;
      }
      break;
    }
    if (s <= z[k]) {
      v[0] = q;
      continue;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double diff = static_cast<double>(q - v[k]);
    d[q] = diff * diff + f[v[k]];
  }
}

}  // namespace

std::vector<double> squared_distance_transform(const std::vector<Pixel>& seeds, int height, int width) {
  std::vector<double> grid(static_cast<std::size_t>(height) * width, far);
  for (const auto& p : seeds) {
    if (p.y < 0 || p.y >= height || p.x < 0 || p.x >= width) throw ShapeMismatch("seed outside grid");
    grid[static_cast<std::size_t>(p.y) * width + p.x] = 0.0;
  }
  std::vector<int> v;
  std::vector<double> z;
  std::vector<double> col_in(height), col_out(height), row_out(width);
  for (int x = 0; x < width; ++x) {
    for (int y = 0; y < height; ++y) col_in[y] = grid[static_cast<std::size_t>(y) * width + x];
    dt_1d(col_in.data(), col_out.data(), height, v, z);
    for (int y = 0; y < height; ++y) grid[static_cast<std::size_t>(y) * width + x] = col_out[y];
  }
  for (int y = 0; y < height; ++y) {
    double* row = &grid[static_cast<std::size_t>(y) * width];
    dt_1d(row, row_out.data(), width, v, z);
    std::copy(row_out.begin(), row_out.end(), row);
  }
  return grid;
}

namespace {

struct Directed {
  double max = 0.0;
  double mean = 0.0;
};

Directed directed_distances(const std::vector<Pixel>& from, const std::vector<double>& field, int width) {
  Directed out;
  double total = 0.0;
  for (const auto& p : from) {
    const double d = std::sqrt(field[static_cast<std::size_t>(p.y) * width + p.x]);
    out.max = std::max(out.max, d);
    total += d;
  }
  out.mean = from.empty() ? 0.0 : total / static_cast<double>(from.size());
  return out;
}

void require_points(const std::vector<Pixel>& a, const std::vector<Pixel>& b) {
  if (a.empty() || b.empty()) throw DataError("EmptyEdgeSet: distance needs two non-empty point sets");
}

}  // namespace

double hausdorff_distance(const std::vector<Pixel>& a, const std::vector<Pixel>& b, int height, int width) {
  require_points(a, b);
  const auto da = squared_distance_transform(a, height, width);
  const auto db = squared_distance_transform(b, height, width);
  return std::max(directed_distances(a, db, width).max, directed_distances(b, da, width).max);
}

double phd_distance(const std::vector<Pixel>& a, const std::vector<Pixel>& b, int height, int width) {
  require_points(a, b);
  const auto da = squared_distance_transform(a, height, width);
  const auto db = squared_distance_transform(b, height, width);
  return directed_distances(a, db, width).mean + directed_distances(b, da, width).mean;
}

// ---------------------------------------------------------------------------
// Image metrics

namespace {

void require_same_shape(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw ShapeMismatch("metric inputs differ in shape");
}

}  // namespace

double metric_l1(const Image& gt, const Image& gen) {
  require_same_shape(gt, gen);
  double total = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) total += std::abs(static_cast<double>(gt.pixels()[i]) - gen.pixels()[i]);
  return gt.size() ? total / static_cast<double>(gt.size()) : 0.0;
}

double metric_weighted_l1(const Image& gt, const Image& gen, const Image& weights) {
  return weighted_l1(gt, gen, weights, LossConfig{0.0, Reduction::mean});
}

std::optional<double> metric_hausdorff(const Image& gt, const Image& gen, const CannyParams& canny) {
  require_same_shape(gt, gen);
  const auto a = binarize_otsu(gt, canny);
  const auto b = binarize_otsu(gen, canny);
  if (a.empty_edges || b.empty_edges) return std::nullopt;
  return hausdorff_distance(a.edges, b.edges, gt.height(), gt.width());
}

std::optional<double> metric_phd(const Image& gt, const Image& gen, const CannyParams& canny) {
  require_same_shape(gt, gen);
  const auto a = binarize_otsu(gt, canny);
  const auto b = binarize_otsu(gen, canny);
  if (a.empty_edges || b.empty_edges) return std::nullopt;
  return phd_distance(a.edges, b.edges, gt.height(), gt.width());
}

std::optional<double> mask_iou(const BinaryShape& a, const BinaryShape& b) {
  if (a.mask.size() != b.mask.size()) throw ShapeMismatch("mask size mismatch");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.mask.size(); ++i) {
    inter += (a.mask[i] && b.mask[i]) ? 1 : 0;
    uni += (a.mask[i] || b.mask[i]) ? 1 : 0;
  }
  if (uni == 0) return std::nullopt;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

std::optional<double> metric_iou(const Image& gt, const Image& gen) {
  require_same_shape(gt, gen);
  return mask_iou(binarize_otsu(gt), binarize_otsu(gen));
}

double metric_ssim(const Image& gt, const Image& gen) {
  require_same_shape(gt, gen);
  constexpr int win = 11;
  constexpr double sigma = 1.5;
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  const int h = gt.height(), w = gt.width();
  if (h < win || w < win) throw ShapeMismatch("SSIM needs images of at least 11x11");

  std::array<double, win> k{};
  double total = 0.0;
  for (int i = 0; i < win; ++i) {
    const double d = i - win / 2;
    k[i] = std::exp(-d * d / (2 * sigma * sigma));
    total += k[i];
  }
  for (double& v : k) v /= total;

  double acc = 0.0;
  int count = 0;
  for (int y = 0; y + win <= h; ++y) {
    for (int x = 0; x + win <= w; ++x) {
      double mu_a = 0, mu_b = 0, aa = 0, bb = 0, ab = 0;
      for (int i = 0; i < win; ++i) {
        for (int j = 0; j < win; ++j) {
          const double wt = k[i] * k[j];
          const double a = gt.at(y + i, x + j);
          const double b = gen.at(y + i, x + j);
          mu_a += wt * a;
          mu_b += wt * b;
          aa += wt * a * a;
          bb += wt * b * b;
          ab += wt * a * b;
        }
      }
      const double var_a = aa - mu_a * mu_a;
      const double var_b = bb - mu_b * mu_b;
      const double cov = ab - mu_a * mu_b;
      acc += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
      ++count;
    }
  }
  return acc / count;
}

// ---------------------------------------------------------------------------
// PCA

PcaResult pca_style_features(const std::vector<std::vector<float>>& features) {
  if (features.size() < 3) throw DataError("PCA needs at least 3 features");
  const Eigen::Index n = static_cast<Eigen::Index>(features.size());
  const Eigen::Index d = static_cast<Eigen::Index>(features.front().size());
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (static_cast<Eigen::Index>(features[i].size()) != d) throw ShapeMismatch("features differ in dimension");
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = features[i][j];
  }
  x.rowwise() -= x.colwise().mean();

  Eigen::BDCSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinU);
  const auto& s = svd.singularValues();
  const auto& u = svd.matrixU();

  PcaResult out;
  out.coords.assign(n, {0.0, 0.0});
  const double tol = std::max<double>(n, d) * std::numeric_limits<double>::epsilon() * (s.size() ? s(0) : 0.0);
  int rank = 0;
  for (Eigen::Index c = 0; c < s.size() && c < 2; ++c) {
    if (s(c) > tol && s(c) > 0.0) ++rank;
  }
  out.degenerate = rank < 2;
  for (int c = 0; c < rank; ++c) {
    Eigen::VectorXd col = u.col(c) * s(c);
    Eigen::Index arg = 0;
    col.cwiseAbs().maxCoeff(&arg);
    if (col(arg) < 0) col = -col;
    for (Eigen::Index i = 0; i < n; ++i) out.coords[i][c] = col(i);
    out.variance[c] = s(c) * s(c) / static_cast<double>(n - 1);
  }
  return out;
}

RgbImage pca_scatter(const PcaResult& pca, const std::vector<std::string>& labels, int size) {
  RgbImage img(size, size);
  std::fill(img.data.begin(), img.data.end(), 255);
  if (pca.coords.empty()) return img;
  double lo[2] = {std::numeric_limits<double>::max(), std::numeric_limits<double>::max()};
  double hi[2] = {std::numeric_limits<double>::lowest(), std::numeric_limits<double>::lowest()};
  for (const auto& c : pca.coords) {
    for (int k = 0; k < 2; ++k) {
      lo[k] = std::min(lo[k], c[k]);
      hi[k] = std::max(hi[k], c[k]);
    }
  }
  std::map<std::string, int> label_index;
  for (const auto& l : labels) label_index.emplace(l, static_cast<int>(label_index.size()));
  static constexpr std::uint8_t palette[10][3] = {{31, 119, 180}, {255, 127, 14}, {44, 160, 44},  {214, 39, 40},
                                                  {148, 103, 189}, {140, 86, 75},  {227, 119, 194}, {127, 127, 127},
                                                  {188, 189, 34},  {23, 190, 207}};
  const int margin = size / 16 + 4;
  const int span = size - 2 * margin;
  for (std::size_t i = 0; i < pca.coords.size(); ++i) {
    const int li = i < labels.size() ? label_index[labels[i]] : 0;
    const auto* color = palette[li % 10];
    auto place = [&](int k) {
      const double range = hi[k] - lo[k];
      return range > 0 ? (pca.coords[i][k] - lo[k]) / range : 0.5;
    };
    const int cx = margin + static_cast<int>(std::lround(place(0) * span));
    const int cy = margin + static_cast<int>(std::lround((1.0 - place(1)) * span));
    for (int dy = -3; dy <= 3; ++dy) {
      for (int dx = -3; dx <= 3; ++dx) {
        if (dx * dx + dy * dy > 9) continue;
        const int y = cy + dy, x = cx + dx;
        if (y < 0 || y >= size || x < 0 || x >= size) continue;
        std::copy(color, color + 3, img.pixel(y, x));
      }
    }
  }
  return img;
}

// ---------------------------------------------------------------------------
// Reports

MetricRow compute_row(const std::string& font_id, char letter, const Image& gt, const Image& gen,
                      const Image* weights, const ReportOptions& opts) {
  require_same_shape(gt, gen);
  MetricRow row;
  row.font_id = font_id;
  row.letter = letter;
  row.l1 = metric_l1(gt, gen);
  if (weights) row.weighted_l1 = metric_weighted_l1(gt, gen, *weights);
  row.ssim = metric_ssim(gt, gen);

  const auto a = binarize_otsu(gt, opts.canny);
  const auto b = binarize_otsu(gen, opts.canny);
  std::vector<std::string> reasons;
  if (a.empty_edges || b.empty_edges) {
    std::string who = a.empty_edges && b.empty_edges ? "gt and gen" : (a.empty_edges ? "gt" : "gen");
    reasons.push_back("empty edge set in " + who + " (hausdorff, phd)");
  } else {
    row.hausdorff = hausdorff_distance(a.edges, b.edges, gt.height(), gt.width());
    row.phd = phd_distance(a.edges, b.edges, gt.height(), gt.width());
  }
  row.iou = mask_iou(a, b);
  if (!row.iou) reasons.push_back("both foregrounds empty (iou)");
  for (const auto& [name, fn] : opts.plugins) row.extra[name] = fn(gt, gen);

  row.excluded = !reasons.empty();
  for (std::size_t i = 0; i < reasons.size(); ++i) {
    if (i) row.exclusion_reason += "; ";
    row.exclusion_reason += reasons[i];
  }
  return row;
}

namespace {

const std::vector<std::string>& core_metric_names() {
  static const std::vector<std::string> names = {"l1", "weighted_l1", "hausdorff", "phd", "iou", "ssim"};
  return names;
}

std::optional<double> metric_value(const MetricRow& row, const std::string& name) {
  if (name == "l1") return row.l1;
  if (name == "weighted_l1") return row.weighted_l1;
  if (name == "hausdorff") return row.hausdorff;
  if (name == "phd") return row.phd;
  if (name == "iou") return row.iou;
  if (name == "ssim") return row.ssim;
  auto it = row.extra.find(name);
  if (it != row.extra.end()) return it->second;
  return std::nullopt;
}

}  // namespace

MetricsReport assemble_report(std::vector<MetricRow> rows, const ReportOptions& opts) {
  MetricsReport report;
  std::sort(rows.begin(), rows.end(), [](const MetricRow& a, const MetricRow& b) {
    return std::tie(a.font_id, a.letter) < std::tie(b.font_id, b.letter);
  });
  report.rows = std::move(rows);

  report.header["version"] = 1;
  report.header["otsu"] = {{"bins", 256}, {"foreground", "darker class"}};
  report.header["canny"] = {{"sigma", opts.canny.sigma}, {"low", opts.canny.low}, {"high", opts.canny.high}};
  report.header["ssim"] = {{"window", 11}, {"sigma", 1.5}, {"c1", 0.01 * 0.01}, {"c2", 0.03 * 0.03}};
  report.header["phd"] = "mean nearest-edge distance gt->gen plus gen->gt";
  std::vector<std::string> plugin_names;
  for (const auto& [name, fn] : opts.plugins) plugin_names.push_back(name);
  report.header["plugins"] = plugin_names;
  for (const auto& [k, v] : opts.header_extra.items()) report.header[k] = v;

  std::vector<std::string> names = core_metric_names();
  names.insert(names.end(), plugin_names.begin(), plugin_names.end());
  for (const auto& name : names) {
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& row : report.rows) {
      if (auto v = metric_value(row, name)) {
        total += *v;
        ++count;
      }
    }
    report.counts[name] = count;
    if (count) report.aggregates[name] = total / static_cast<double>(count);
  }
  return report;
}

namespace {

std::map<std::pair<std::string, char>, fs::path> scan_glyph_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("image directory not found: " + dir.string());
  std::map<std::pair<std::string, char>, fs::path> out;
  for (const auto& font_dir : fs::directory_iterator(dir)) {
    if (!font_dir.is_directory()) continue;
    for (const auto& f : fs::directory_iterator(font_dir.path())) {
      const auto stem = f.path().stem().string();
      if (f.path().extension() != ".png" || stem.size() != 1 || !is_capital(stem[0])) continue;
      out[{font_dir.path().filename().string(), stem[0]}] = f.path();
    }
  }
  return out;
}

}  // namespace

MetricsReport build_report(const fs::path& gt_dir, const fs::path& gen_dir, const WeightCache* weights,
                           const ReportOptions& opts) {
  const auto gt = scan_glyph_dir(gt_dir);
  const auto gen = scan_glyph_dir(gen_dir);
  std::vector<std::string> missing;
  for (const auto& [key, path] : gt) {
    if (!gen.count(key)) missing.push_back("gen lacks " + key.first + "/" + std::string(1, key.second));
  }
  for (const auto& [key, path] : gen) {
    if (!gt.count(key)) missing.push_back("gt lacks " + key.first + "/" + std::string(1, key.second));
  }
  if (!missing.empty()) {
    std::string msg = std::to_string(missing.size()) + " unmatched images:";
    for (const auto& m : missing) msg += " " + m + ";";
    throw KeyMismatch(msg);
  }
  std::vector<MetricRow> rows;
  for (const auto& [key, path] : gt) {
    const Image a = read_png_gray(path);
    const Image b = read_png_gray(gen.at(key));
    const Image* w = weights ? &weights->at(key.first, key.second) : nullptr;
    rows.push_back(compute_row(key.first, key.second, a, b, w, opts));
  }
  return assemble_report(std::move(rows), opts);
}

namespace {

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

void write_report(const MetricsReport& report, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  nlohmann::ordered_json j;
  j["header"] = report.header;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  std::vector<std::string> plugin_names = report.header.value("plugins", std::vector<std::string>{});
  auto opt_json = [](const std::optional<double>& v) -> nlohmann::ordered_json {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
  };
  for (const auto& r : report.rows) {
    nlohmann::ordered_json row;
    row["font_id"] = r.font_id;
    row["letter"] = std::string(1, r.letter);
    row["l1"] = opt_json(r.l1);
    row["weighted_l1"] = opt_json(r.weighted_l1);
    row["hausdorff"] = opt_json(r.hausdorff);
    row["phd"] = opt_json(r.phd);
    row["iou"] = opt_json(r.iou);
    row["ssim"] = opt_json(r.ssim);
    for (const auto& [k, v] : r.extra) row[k] = v;
    row["excluded"] = r.excluded;
    row["exclusion_reason"] = r.exclusion_reason;
    rows.push_back(std::move(row));
  }
  j["rows"] = std::move(rows);
  nlohmann::ordered_json agg = nlohmann::ordered_json::object();
  for (const auto& [k, v] : report.aggregates) agg[k] = v;
  j["aggregates"] = std::move(agg);
  nlohmann::ordered_json counts = nlohmann::ordered_json::object();
  for (const auto& [k, v] : report.counts) counts[k] = v;
  j["counts"] = std::move(counts);
  {
    std::ofstream out(out_dir / "report.json", std::ios::binary);
    out << j.dump(1) << '\n';
  }

  std::ofstream csv(out_dir / "report.csv", std::ios::binary);
  csv << "font_id,letter,l1,weighted_l1,hausdorff,phd,iou,ssim";
  for (const auto& p : plugin_names) csv << ',' << p;
  csv << ",excluded,exclusion_reason\n";
  auto cell = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string(); };
  for (const auto& r : report.rows) {
    csv << r.font_id << ',' << r.letter << ',' << cell(r.l1) << ',' << cell(r.weighted_l1) << ',' << cell(r.hausdorff)
        << ',' << cell(r.phd) << ',' << cell(r.iou) << ',' << cell(r.ssim);
    for (const auto& p : plugin_names) {
      auto it = r.extra.find(p);
      csv << ',' << (it != r.extra.end() ? format_number(it->second) : std::string());
    }
    csv << ',' << (r.excluded ? "true" : "false") << ",\"" << r.exclusion_reason << "\"\n";
  }
}

}  // namespace fontaware

namespace fontaware {

std::vector<std::uint8_t> skeletonize(const std::vector<std::uint8_t>& mask, int height, int width) {
  if (mask.size() != static_cast<std::size_t>(height) * width) throw ShapeMismatch("mask size");
  std::vector<std::uint8_t> img(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) img[i] = mask[i] ? 1 : 0;
  auto px = [&](int y, int x) -> int {
    if (y < 0 || x < 0 || y >= height || x >= width) return 0;
    return img[static_cast<std::size_t>(y) * width + x];
  };
  std::vector<std::size_t> remove;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int pass = 0; pass < 2; ++pass) {
      remove.clear();
      for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
          if (!px(y, x)) continue;
          // P2..P9 clockwise from north.
          const int p[8] = {px(y - 1, x), px(y - 1, x + 1), px(y, x + 1), px(y + 1, x + 1),
                            px(y + 1, x), px(y + 1, x - 1), px(y, x - 1), px(y - 1, x - 1)};
          int b = 0, a = 0;
          for (int i = 0; i < 8; ++i) {
            b += p[i];
            if (p[i] == 0 && p[(i + 1) % 8] == 1) ++a;
          }
          if (b < 2 || b > 6 || a != 1) continue;
          if (pass == 0) {
            if (p[0] * p[2] * p[4] != 0 || p[2] * p[4] * p[6] != 0) continue;
          } else {
            if (p[0] * p[2] * p[6] != 0 || p[0] * p[4] * p[6] != 0) continue;
          }
          remove.push_back(static_cast<std::size_t>(y) * width + x);
        }
      }
      for (auto i : remove) img[i] = 0;
      if (!remove.empty()) changed = true;
    }
  }
  return img;
}

std::vector<Pixel> skeleton_endpoints(const std::vector<std::uint8_t>& skeleton, int height, int width) {
  std::vector<Pixel> out;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (!skeleton[static_cast<std::size_t>(y) * width + x]) continue;
      int n = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if ((dy || dx) && yy >= 0 && xx >= 0 && yy < height && xx < width &&
              skeleton[static_cast<std::size_t>(yy) * width + xx]) {
            ++n;
          }
        }
      }
      if (n == 1) out.push_back({y, x});
    }
  }
  return out;
}

StrokeEndStats stroke_end_awareness(const Image& glyph, const AwarenessMap& map) {
  if (map.rows < 1 || map.cols < 1) throw ShapeMismatch("empty awareness map");
  const auto shape = binarize_otsu(glyph);
  const auto ends = skeleton_endpoints(skeletonize(shape.mask, shape.height, shape.width), shape.height, shape.width);
  StrokeEndStats stats;
  stats.endpoints = ends.size();
  double total = 0.0;
  for (double v : map.grid) total += v;
  stats.image_mean = total / static_cast<double>(map.grid.size());
  std::vector<bool> hit(map.grid.size(), false);
  for (const auto& p : ends) {
    const int r = std::min(map.rows - 1, p.y * map.rows / shape.height);
    const int c = std::min(map.cols - 1, p.x * map.cols / shape.width);
    hit[static_cast<std::size_t>(r) * map.cols + c] = true;
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < hit.size(); ++i) {
    if (hit[i]) {
      sum += map.grid[i];
      ++stats.end_patches;
    }
  }
  stats.stroke_end_mean = stats.end_patches ? sum / static_cast<double>(stats.end_patches) : 0.0;
  return stats;
}

}  // namespace fontaware
