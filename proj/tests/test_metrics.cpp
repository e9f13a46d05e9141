#include <algorithm>
#include <cmath>
#include <numeric>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "fontaware/errors.hpp"
#include "fontaware/metrics.hpp"
#include "support.hpp"

using namespace fontaware;
namespace fs = std::filesystem;

namespace {

// Dark rectangle(s) on a white page.
Image glyph_like(int size, std::initializer_list<std::array<int, 4>> boxes, float ink = 0.05f) {
  Image img(size, size, 0.97f);
  for (const auto& b : boxes)
    for (int y = b[0]; y < b[2]; ++y)
      for (int x = b[1]; x < b[3]; ++x) img.at(y, x) = ink;
  return img;
}

std::vector<Pixel> random_points(std::mt19937_64& rng, int h, int w, int n) {
  std::vector<Pixel> pts;
  for (int i = 0; i < n; ++i) pts.push_back({static_cast<int>(rng() % h), static_cast<int>(rng() % w)});
  return pts;
}

double nearest(const Pixel& p, const std::vector<Pixel>& set) {
  double best = 1e300;
  for (const auto& q : set) best = std::min(best, std::hypot(double(p.y - q.y), double(p.x - q.x)));
  return best;
}

double brute_hausdorff(const std::vector<Pixel>& a, const std::vector<Pixel>& b) {
  double h = 0;
  for (const auto& p : a) h = std::max(h, nearest(p, b));
  for (const auto& p : b) h = std::max(h, nearest(p, a));
  return h;
}

double brute_phd(const std::vector<Pixel>& a, const std::vector<Pixel>& b) {
  double sa = 0, sb = 0;
  for (const auto& p : a) sa += nearest(p, b);
  for (const auto& p : b) sb += nearest(p, a);
  return sa / a.size() + sb / b.size();
}

// Between-class variance for every threshold, computed from scratch.
int brute_otsu(const Image& img) {
  const auto hist = histogram256(img);
  double best = 0.0;
  std::vector<double> var(255, 0.0);
  for (int t = 0; t < 255; ++t) {
    double n0 = 0, n1 = 0, s0 = 0, s1 = 0;
    for (int i = 0; i < 256; ++i) {
      if (i <= t) {
        n0 += hist[i];
        s0 += double(i) * hist[i];
      } else {
        n1 += hist[i];
        s1 += double(i) * hist[i];
      }
    }
    if (n0 == 0 || n1 == 0) continue;
    const double n = n0 + n1;
    var[t] = (n0 / n) * (n1 / n) * std::pow(s0 / n0 - s1 / n1, 2);
    best = std::max(best, var[t]);
  }
  for (int t = 0; t < 255; ++t) {
    if (var[t] >= best * (1 - 1e-12)) return t;
  }
  return -1;
}

Image bimodal(std::mt19937_64& rng, int size) {
  std::normal_distribution<double> dark(0.15 + 0.2 * (rng() % 100) / 100.0, 0.05);
  std::normal_distribution<double> light(0.7 + 0.25 * (rng() % 100) / 100.0, 0.05);
  const double frac = 0.1 + 0.5 * (rng() % 100) / 100.0;
  std::uniform_real_distribution<double> u(0, 1);
  Image img(size, size);
  for (float& v : img.pixels()) v = static_cast<float>(std::clamp(u(rng) < frac ? dark(rng) : light(rng), 0.0, 1.0));
  return img;
}

}  // namespace

TEST_CASE("otsu matches exhaustive threshold search") {
  std::mt19937_64 rng(30);
  for (int trial = 0; trial < 50; ++trial) {
    const Image img = bimodal(rng, 24 + trial);
    const auto r = otsu_threshold(img);
    CHECK_FALSE(r.degenerate);
    CHECK(r.bin == brute_otsu(img));
    CHECK(r.threshold == doctest::Approx((r.bin + 0.5) / 255.0));
  }
}

TEST_CASE("otsu on a single-valued image is degenerate and gives an empty foreground") {
  const Image blank(32, 32, 1.0f);
  CHECK(otsu_threshold(blank).degenerate);
  const auto s = binarize_otsu(blank);
  CHECK(s.empty_foreground);
  CHECK(s.empty_edges);
}

TEST_CASE("binarization marks the darker class as ink") {
  const Image img = glyph_like(32, {{{8, 8, 24, 14}}});
  const auto s = binarize_otsu(img);
  CHECK(s.ink(10, 10));
  CHECK_FALSE(s.ink(2, 2));
  CHECK_FALSE(s.empty_edges);
}

TEST_CASE("canny traces a filled square's outline") {
  std::vector<std::uint8_t> mask(40 * 40, 0);
  for (int y = 10; y < 30; ++y)
    for (int x = 10; x < 30; ++x) mask[y * 40 + x] = 1;
  const auto edges = canny_edges(mask, 40, 40);
  REQUIRE(!edges.empty());
  for (const auto& p : edges) {
    const int dy = std::min(std::abs(p.y - 10), std::abs(p.y - 29));
    const int dx = std::min(std::abs(p.x - 10), std::abs(p.x - 29));
    CHECK(std::min(dy, dx) <= 1);  // on the boundary band
  }
  // Every side is found.
  auto near_side = [&](auto pred) { return std::any_of(edges.begin(), edges.end(), pred); };
  CHECK(near_side([](const Pixel& p) { return p.y <= 11 && p.x == 20; }));
  CHECK(near_side([](const Pixel& p) { return p.y >= 28 && p.x == 20; }));
  CHECK(near_side([](const Pixel& p) { return p.x <= 11 && p.y == 20; }));
  CHECK(near_side([](const Pixel& p) { return p.x >= 28 && p.y == 20; }));
  CHECK(canny_edges(std::vector<std::uint8_t>(100, 0), 10, 10).empty());
}

TEST_CASE("distance transform matches brute force") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const int h = 5 + trial % 13, w = 3 + trial % 17;
    const auto seeds = random_points(rng, h, w, 1 + trial % 6);
    const auto dt = squared_distance_transform(seeds, h, w);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double d = nearest({y, x}, seeds);
        CHECK(dt[y * w + x] == doctest::Approx(d * d).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("hausdorff and phd match brute-force nearest-point oracles") {
  std::mt19937_64 rng(32);
  for (int trial = 0; trial < 50; ++trial) {
    const int h = 8 + trial % 25, w = 8 + (trial * 3) % 25;
    const auto a = random_points(rng, h, w, 1 + trial % 30);
    const auto b = random_points(rng, h, w, 1 + (trial * 7) % 30);
    CHECK(std::abs(hausdorff_distance(a, b, h, w) - brute_hausdorff(a, b)) <= 1e-6);
    CHECK(std::abs(phd_distance(a, b, h, w) - brute_phd(a, b)) <= 1e-6);
    // Symmetric.
    CHECK(hausdorff_distance(a, b, h, w) == hausdorff_distance(b, a, h, w));
    CHECK(phd_distance(a, b, h, w) == doctest::Approx(phd_distance(b, a, h, w)));
  }
  CHECK_THROWS_AS(hausdorff_distance({}, {{0, 0}}, 4, 4), DataError);
  CHECK_THROWS_AS(phd_distance({{0, 0}}, {}, 4, 4), DataError);
}

TEST_CASE("identical inputs give zero distances and unit similarities") {
  std::mt19937_64 rng(33);
  const auto fonts = testsupport::some_fonts(3);
  for (const auto& font : fonts) {
    const Image g = resize_image(render_glyph(font, 'S', 224, 5).pixels, 64);
    CHECK(metric_l1(g, g) == 0.0);
    CHECK(metric_weighted_l1(g, g, Image(64, 64, 1.0f)) == 0.0);
    CHECK(*metric_hausdorff(g, g) == 0.0);
    CHECK(*metric_phd(g, g) == 0.0);
    CHECK(*metric_iou(g, g) == 1.0);
    CHECK(metric_ssim(g, g) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("metrics are symmetric and positive on different glyphs") {
  const auto fonts = testsupport::some_fonts(2);
  const Image a = resize_image(render_glyph(fonts[0], 'G', 224, 5).pixels, 64);
  const Image b = resize_image(render_glyph(fonts[1], 'G', 224, 5).pixels, 64);
  CHECK(metric_l1(a, b) == metric_l1(b, a));
  CHECK(metric_l1(a, b) > 0);
  CHECK(*metric_hausdorff(a, b) == *metric_hausdorff(b, a));
  CHECK(*metric_hausdorff(a, b) > 0);
  CHECK(*metric_phd(a, b) == doctest::Approx(*metric_phd(b, a)));
  CHECK(*metric_iou(a, b) == *metric_iou(b, a));
  CHECK(*metric_iou(a, b) < 1.0);
  CHECK(metric_ssim(a, b) == doctest::Approx(metric_ssim(b, a)));
  CHECK(metric_ssim(a, b) < 1.0);
}

TEST_CASE("weighted L1 never exceeds L1 for weights in [0,1]") {
  std::mt19937_64 rng(34);
  for (int trial = 0; trial < 30; ++trial) {
    const Image a = testsupport::random_image(rng, 20, 20), b = testsupport::random_image(rng, 20, 20),
                w = testsupport::random_image(rng, 20, 20);
    CHECK(metric_weighted_l1(a, b, w) <= metric_l1(a, b));
  }
}

TEST_CASE("ssim closed form on constant images") {
  const double c1 = 1e-4;
  for (auto [a, b] : std::vector<std::pair<float, float>>{{0.2f, 0.8f}, {1.0f, 0.0f}, {0.5f, 0.5f}, {0.3f, 0.31f}}) {
    const double expect = (2.0 * a * b + c1) / (double(a) * a + double(b) * b + c1);
    CHECK(metric_ssim(Image(16, 20, a), Image(16, 20, b)) == doctest::Approx(expect).epsilon(1e-9));
  }
  CHECK_THROWS_AS(metric_ssim(Image(10, 10), Image(10, 10)), ShapeMismatch);
}

TEST_CASE("iou of two boxes") {
  const Image a = glyph_like(32, {{{4, 4, 14, 14}}});
  const Image b = glyph_like(32, {{{4, 9, 14, 19}}});
  // 50 shared of 150 total.
  CHECK(*metric_iou(a, b) == doctest::Approx(50.0 / 150.0));
  CHECK_FALSE(metric_iou(Image(32, 32, 1.0f), Image(32, 32, 1.0f)).has_value());
}

namespace {

// Cyclic Jacobi eigen-decomposition of a symmetric matrix.
void jacobi_eigen(std::vector<std::vector<double>> a, std::vector<double>& values,
                  std::vector<std::vector<double>>& vectors) {
  const std::size_t n = a.size();
  vectors.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) vectors[i][i] = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    if (off < 1e-26) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a[p][q]) < 1e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2 * a[p][q]);
        const double t = (theta >= 0 ? 1 : -1) / (std::abs(theta) + std::sqrt(theta * theta + 1));
        const double c = 1 / std::sqrt(t * t + 1), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = vectors[k][p], vkq = vectors[k][q];
          vectors[k][p] = c * vkp - s * vkq;
          vectors[k][q] = s * vkp + c * vkq;
        }
      }
    }
  }
  values.resize(n);
  for (std::size_t i = 0; i < n; ++i) values[i] = a[i][i];
}

}  // namespace

TEST_CASE("pca matches a covariance eigen-decomposition") {
  std::mt19937_64 rng(35);
  std::normal_distribution<double> g(0, 1);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 12 + trial, d = 6;
    std::vector<std::vector<float>> feats(n, std::vector<float>(d));
    for (auto& f : feats) {
      const double z1 = 3 * g(rng), z2 = 1.5 * g(rng);
      for (int j = 0; j < d; ++j) f[j] = static_cast<float>(z1 * (j + 1) / d + z2 * (j % 2 ? 1 : -1) + 0.1 * g(rng));
    }
    const auto pca = pca_style_features(feats);
    CHECK_FALSE(pca.degenerate);

    std::vector<double> mean(d, 0.0);
    for (const auto& f : feats)
      for (int j = 0; j < d; ++j) mean[j] += f[j] / n;
    std::vector<std::vector<double>> cov(d, std::vector<double>(d, 0.0));
    for (const auto& f : feats)
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) cov[i][j] += (f[i] - mean[i]) * (f[j] - mean[j]) / (n - 1);
    std::vector<double> values;
    std::vector<std::vector<double>> vecs;
    jacobi_eigen(cov, values, vecs);
    std::vector<int> order(d);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return values[a] > values[b]; });
    for (int c = 0; c < 2; ++c) {
      const int e = order[c];
      CHECK(pca.variance[c] == doctest::Approx(values[e]).epsilon(1e-8));
      std::vector<double> proj(n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) proj[i] += (feats[i][j] - mean[j]) * vecs[j][e];
      const auto arg = std::max_element(proj.begin(), proj.end(), [](double a, double b) { return std::abs(a) < std::abs(b); });
      const double sign = *arg < 0 ? -1.0 : 1.0;
      for (int i = 0; i < n; ++i) CHECK(pca.coords[i][c] == doctest::Approx(sign * proj[i]).epsilon(1e-7));
    }
  }
}

TEST_CASE("pca degenerate inputs") {
  CHECK_THROWS_AS(pca_style_features({{1.0f}, {2.0f}}), DataError);
  const auto p = pca_style_features({{1, 1}, {2, 2}, {3, 3}});
  CHECK(p.degenerate);
  const auto img = pca_scatter(p, {"a", "b", "c"});
  CHECK(img.width == 320);
}

TEST_CASE("skeleton endpoints of simple strokes") {
  const int h = 30, w = 40;
  std::vector<std::uint8_t> bar(h * w, 0);
  for (int y = 13; y < 17; ++y)
    for (int x = 5; x < 35; ++x) bar[y * w + x] = 1;
  auto skel = skeletonize(bar, h, w);
  CHECK(skeleton_endpoints(skel, h, w).size() == 2);

  // A "T": horizontal bar plus a vertical stem.
  auto t = bar;
  for (int y = 17; y < 28; ++y)
    for (int x = 18; x < 22; ++x) t[y * w + x] = 1;
  skel = skeletonize(t, h, w);
  CHECK(skeleton_endpoints(skel, h, w).size() == 3);
  // Thinning never adds pixels.
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(skel[i] <= t[i]);
}

TEST_CASE("stroke-end awareness picks the patches at stroke ends") {
  // A bar from column 4 to 59 on a 64 px page. Thinning pulls the skeleton
  // ends in by about half the stroke width, so they land in grid columns 0-1
  // and 6-7.
  const Image glyph = glyph_like(64, {{{28, 4, 36, 60}}});
  AwarenessMap map;
  map.rows = map.cols = 8;
  map.grid.assign(64, 0.0);
  for (int r : {3, 4})
    for (int c : {0, 1, 6, 7}) map.grid[r * 8 + c] = 1.0;
  const auto s = stroke_end_awareness(glyph, map);
  CHECK(s.endpoints == 2);
  CHECK(s.end_patches == 2);
  CHECK(s.stroke_end_mean == doctest::Approx(1.0));
  CHECK(s.image_mean == doctest::Approx(8.0 / 64));
}

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_glyphs(const fs::path& root, const std::map<std::pair<std::string, char>, Image>& glyphs) {
  for (const auto& [key, img] : glyphs) {
    write_png_gray(root / key.first / (std::string(1, key.second) + ".png"), img);
  }
}

}  // namespace

TEST_CASE("report exclusion rule and aggregates") {
  testsupport::TempDir dir("report");
  const auto fonts = testsupport::some_fonts(2);
  std::map<std::pair<std::string, char>, Image> gt, gen;
  for (const auto& f : fonts) {
    for (char c : std::string("ABCD")) {
      gt[{f.font_id, c}] = quantize_u8(resize_image(render_glyph(f, c, 224, 5).pixels, 64));
    }
  }
  // Generated: the other font's glyph, except one blank page.
  for (const auto& [key, img] : gt) {
    const auto& other = key.first == fonts[0].font_id ? fonts[1].font_id : fonts[0].font_id;
    gen[key] = gt.at({other, key.second});
  }
  const std::pair<std::string, char> blank_key{fonts[0].font_id, 'C'};
  gen[blank_key] = Image(64, 64, 1.0f);
  write_glyphs(dir / "gt", gt);
  write_glyphs(dir / "gen", gen);

  const auto report = build_report(dir / "gt", dir / "gen", nullptr);
  REQUIRE(report.rows.size() == 8);
  double h_sum = 0, l1_sum = 0;
  std::size_t h_n = 0;
  for (const auto& row : report.rows) {
    l1_sum += *row.l1;
    if (row.font_id == blank_key.first && row.letter == blank_key.second) {
      CHECK(row.excluded);
      CHECK_FALSE(row.hausdorff.has_value());
      CHECK_FALSE(row.phd.has_value());
      CHECK(row.exclusion_reason.find("gen") != std::string::npos);
      CHECK(row.l1.has_value());
      CHECK(row.iou.has_value());  // gt still has ink
    } else {
      CHECK_FALSE(row.excluded);
      h_sum += *row.hausdorff;
      ++h_n;
    }
  }
  CHECK(report.counts.at("hausdorff") == 7);
  CHECK(report.counts.at("phd") == 7);
  CHECK(report.counts.at("l1") == 8);
  CHECK(report.aggregates.at("hausdorff") == doctest::Approx(h_sum / h_n).epsilon(1e-12));
  CHECK(report.aggregates.at("l1") == doctest::Approx(l1_sum / 8).epsilon(1e-12));
  CHECK(report.aggregates.count("weighted_l1") == 0);

  write_report(report, dir / "out1");
  write_report(build_report(dir / "gt", dir / "gen", nullptr), dir / "out2");
  CHECK(slurp(dir / "out1" / "report.json") == slurp(dir / "out2" / "report.json"));
  CHECK(slurp(dir / "out1" / "report.csv") == slurp(dir / "out2" / "report.csv"));
  CHECK(slurp(dir / "out1" / "report.json").find("\"canny\"") != std::string::npos);
}

TEST_CASE("identical directories give a perfect report") {
  testsupport::TempDir dir("report_same");
  const auto fonts = testsupport::some_fonts(1);
  std::map<std::pair<std::string, char>, Image> gt;
  for (char c : std::string("HKM")) gt[{fonts[0].font_id, c}] = quantize_u8(resize_image(render_glyph(fonts[0], c, 224, 5).pixels, 64));
  write_glyphs(dir / "gt", gt);
  write_glyphs(dir / "gen", gt);
  WeightCache cache(64);
  for (const auto& [key, img] : gt) cache.insert(key.first, key.second, Image(64, 64, 0.5f));
  ReportOptions opts;
  opts.plugins["mean_abs"] = [](const Image& a, const Image& b) { return metric_l1(a, b); };
  const auto r = build_report(dir / "gt", dir / "gen", &cache, opts);
  CHECK(r.aggregates.at("l1") == 0.0);
  CHECK(r.aggregates.at("weighted_l1") == 0.0);
  CHECK(r.aggregates.at("hausdorff") == 0.0);
  CHECK(r.aggregates.at("phd") == 0.0);
  CHECK(r.aggregates.at("iou") == 1.0);
  CHECK(r.aggregates.at("ssim") == doctest::Approx(1.0));
  CHECK(r.aggregates.at("mean_abs") == 0.0);
}

TEST_CASE("unmatched keys are listed") {
  testsupport::TempDir dir("report_keys");
  write_glyphs(dir / "gt", {{{"f", 'A'}, Image(16, 16, 1.0f)}, {{"f", 'B'}, Image(16, 16, 1.0f)}});
  write_glyphs(dir / "gen", {{{"f", 'A'}, Image(16, 16, 1.0f)}, {{"g", 'B'}, Image(16, 16, 1.0f)}});
  try {
    build_report(dir / "gt", dir / "gen", nullptr);
    FAIL("expected KeyMismatch");
  } catch (const KeyMismatch& e) {
    const std::string msg = e.what();
    CHECK(msg.find("gen lacks f/B") != std::string::npos);
    CHECK(msg.find("gt lacks g/B") != std::string::npos);
  }
}
