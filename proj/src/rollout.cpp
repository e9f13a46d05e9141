#include "fontaware/rollout.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "fontaware/errors.hpp"
#include "json.hpp"

namespace fontaware {

namespace fs = std::filesystem;

AwarenessMap attention_rollout(const AttentionTrace& trace, double tolerance) {
  const int T = trace.tokens;
  const int H = trace.heads;
  if (trace.layers.empty()) throw NonStochasticAttention("trace has no layers");
  if (H <= 0 || T < 2) throw ShapeMismatch("trace needs at least one head and two tokens");
  if (trace.grid_rows * trace.grid_cols != T - 1) {
    throw ShapeMismatch("grid " + std::to_string(trace.grid_rows) + "x" + std::to_string(trace.grid_cols) +
                        " does not match " + std::to_string(T - 1) + " patch tokens");
  }
  const std::size_t TT = static_cast<std::size_t>(T) * T;

  // Mixed, renormalized matrix per layer.
  std::vector<std::vector<double>> mixed(trace.layers.size(), std::vector<double>(TT, 0.0));
  for (std::size_t l = 0; l < trace.layers.size(); ++l) {
    const auto& layer = trace.layers[l];
    if (layer.size() != TT * H) throw ShapeMismatch("layer " + std::to_string(l) + " has wrong size");
    auto& m = mixed[l];
    for (int h = 0; h < H; ++h) {
      for (int i = 0; i < T; ++i) {
        double row_sum = 0.0;
        for (int j = 0; j < T; ++j) {
          const double a = layer[h * TT + static_cast<std::size_t>(i) * T + j];
          if (a < 0.0 || !std::isfinite(a)) {
            throw NonStochasticAttention("negative or non-finite weight at layer " + std::to_string(l));
          }
          row_sum += a;
          m[static_cast<std::size_t>(i) * T + j] += a / H;
        }
        if (std::abs(row_sum - 1.0) > tolerance) {
          std::ostringstream os;
          os << "layer " << l << " head " << h << " row " << i << " sums to " << row_sum;
          throw NonStochasticAttention(os.str());
        }
      }
    }
    for (int i = 0; i < T; ++i) {
      double row_sum = 0.0;
      for (int j = 0; j < T; ++j) {
        double& v = m[static_cast<std::size_t>(i) * T + j];
        v = 0.5 * v + (i == j ? 0.5 : 0.0);
        row_sum += v;
      }
      for (int j = 0; j < T; ++j) m[static_cast<std::size_t>(i) * T + j] /= row_sum;
    }
  }

  // Class row of M_L * ... * M_1, accumulated left to right as a row vector.
  std::vector<double> row(mixed.back().begin(), mixed.back().begin() + T);
  std::vector<double> next(T);
  for (int l = static_cast<int>(mixed.size()) - 2; l >= 0; --l) {
    std::fill(next.begin(), next.end(), 0.0);
    const auto& m = mixed[l];
    for (int k = 0; k < T; ++k) {
      const double rk = row[k];
      if (rk == 0.0) continue;
      const double* mk = &m[static_cast<std::size_t>(k) * T];
      for (int j = 0; j < T; ++j) next[j] += rk * mk[j];
    }
    row.swap(next);
  }

  AwarenessMap map;
  map.rows = trace.grid_rows;
  map.cols = trace.grid_cols;
  map.grid.assign(row.begin() + 1, row.end());
  map.normalization = MapNormalization::raw;
  return map;
}

AwarenessMap normalize_map(const AwarenessMap& map) {
  AwarenessMap out = map;
  out.normalization = MapNormalization::minmax;
  if (map.grid.empty()) return out;
  const auto [mn, mx] = std::minmax_element(map.grid.begin(), map.grid.end());
  const double lo = *mn;
  const double range = *mx - lo;
  for (double& v : out.grid) v = range > 0.0 ? (v - lo) / range : 0.0;
  return out;
}

Image resize_map(const AwarenessMap& map, int size) {
  if (size < std::max(map.rows, map.cols)) throw ShapeMismatch("resize_map target smaller than the map");
  std::vector<float> values(map.grid.begin(), map.grid.end());
  return resize_bilinear(Image(map.rows, map.cols, std::move(values)), size, size);
}

void heat_color(double t, std::uint8_t rgb[3]) {
  t = std::clamp(t, 0.0, 1.0);
  static constexpr double stops[5][3] = {{0, 0, 1}, {0, 1, 1}, {0, 1, 0}, {1, 1, 0}, {1, 0, 0}};
  const double pos = t * 4.0;
  const int i = std::min(static_cast<int>(pos), 3);
  const double f = pos - i;
  for (int c = 0; c < 3; ++c) {
    const double v = stops[i][c] * (1.0 - f) + stops[i + 1][c] * f;
    rgb[c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
}

RgbImage render_overlay(const Image& glyph, const AwarenessMap& map) {
  const Image heat = resize_bilinear(Image(map.rows, map.cols, std::vector<float>(map.grid.begin(), map.grid.end())),
                                     glyph.height(), glyph.width());
  constexpr double ink_alpha = 0.6;
  RgbImage out(glyph.height(), glyph.width());
  for (int y = 0; y < glyph.height(); ++y) {
    for (int x = 0; x < glyph.width(); ++x) {
      std::uint8_t rgb[3];
      heat_color(heat.at(y, x), rgb);
      const double ink = 1.0 - std::clamp(static_cast<double>(glyph.at(y, x)), 0.0, 1.0);
      const double keep = 1.0 - ink_alpha * ink;
      std::uint8_t* px = out.pixel(y, x);
      for (int c = 0; c < 3; ++c) px[c] = static_cast<std::uint8_t>(std::lround(rgb[c] * keep));
    }
  }
  return out;
}

namespace {

void write_map_file(const fs::path& file, int rows, int cols, const std::string& norm, const std::string& image,
                    const std::vector<float>& values) {
  nlohmann::ordered_json header;
  header["m"] = rows;
  header["n"] = cols;
  header["norm"] = norm;
  header["image"] = image;
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw DataError("cannot write " + file.string());
  out << header.dump() << '\n';
  for (float v : values) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    const char bytes[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                           static_cast<char>((bits >> 16) & 0xff), static_cast<char>((bits >> 24) & 0xff)};
    out.write(bytes, 4);
  }
  if (!out) throw DataError("cannot write " + file.string());
}

struct MapFile {
  int rows = 0;
  int cols = 0;
  std::string norm;
  std::string image;
  std::vector<float> values;
};

MapFile read_map_file(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot open map file " + file.string());
  std::string line;
  std::getline(in, line);
  MapFile mf;
  try {
    const auto header = nlohmann::json::parse(line);
    mf.rows = header.at("m").get<int>();
    mf.cols = header.at("n").get<int>();
    mf.norm = header.at("norm").get<std::string>();
    mf.image = header.value("image", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad map header in " + file.string() + ": " + e.what());
  }
  const std::size_t n = static_cast<std::size_t>(mf.rows) * mf.cols;
  std::vector<unsigned char> bytes(n * 4);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size()) throw FormatError("truncated map file " + file.string());
  mf.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t bits = static_cast<std::uint32_t>(bytes[4 * i]) | (static_cast<std::uint32_t>(bytes[4 * i + 1]) << 8) |
                               (static_cast<std::uint32_t>(bytes[4 * i + 2]) << 16) |
                               (static_cast<std::uint32_t>(bytes[4 * i + 3]) << 24);
    mf.values[i] = std::bit_cast<float>(bits);
  }
  return mf;
}

}  // namespace

void save_map(const fs::path& file, const AwarenessMap& map) {
  write_map_file(file, map.rows, map.cols, map.normalization == MapNormalization::minmax ? "minmax" : "raw",
                 map.source_image, std::vector<float>(map.grid.begin(), map.grid.end()));
}

AwarenessMap load_map(const fs::path& file) {
  MapFile mf = read_map_file(file);
  AwarenessMap map;
  map.rows = mf.rows;
  map.cols = mf.cols;
  map.normalization = mf.norm == "minmax" ? MapNormalization::minmax : MapNormalization::raw;
  map.source_image = mf.image;
  map.grid.assign(mf.values.begin(), mf.values.end());
  return map;
}

void save_weight_image(const fs::path& file, const Image& weights, const std::string& source_image) {
  write_map_file(file, weights.height(), weights.width(), "minmax", source_image, weights.data());
}

Image load_weight_image(const fs::path& file) {
  MapFile mf = read_map_file(file);
  return Image(mf.rows, mf.cols, std::move(mf.values));
}

}  // namespace fontaware
