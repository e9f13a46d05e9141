#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "doctest.h"
#include "fontaware/errors.hpp"
#include "fontaware/rollout.hpp"
#include "support.hpp"

using namespace fontaware;

namespace {

using Mat = std::vector<std::vector<double>>;

// Random row-stochastic attention for every head and layer.
AttentionTrace random_trace(std::mt19937_64& rng, int layers, int heads, int rows, int cols) {
  AttentionTrace t;
  t.heads = heads;
  t.tokens = rows * cols + 1;
  t.grid_rows = rows;
  t.grid_cols = cols;
  std::exponential_distribution<double> e(1.0);
  for (int l = 0; l < layers; ++l) {
    std::vector<float> layer(static_cast<std::size_t>(heads) * t.tokens * t.tokens);
    for (int h = 0; h < heads; ++h) {
      for (int i = 0; i < t.tokens; ++i) {
        std::vector<double> row(t.tokens);
        double s = 0;
        for (double& v : row) s += (v = e(rng));
        for (int j = 0; j < t.tokens; ++j) {
          layer[(static_cast<std::size_t>(h) * t.tokens + i) * t.tokens + j] = static_cast<float>(row[j] / s);
        }
      }
    }
    t.layers.push_back(std::move(layer));
  }
  return t;
}

Mat matmul(const Mat& a, const Mat& b) {
  const std::size_t n = a.size();
  Mat c(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t j = 0; j < n; ++j) c[i][j] += a[i][k] * b[k][j];
  return c;
}

// Full-matrix oracle: R = Ã_L ... Ã_1, read at row 0, patch columns.
std::vector<double> rollout_oracle(const AttentionTrace& t) {
  const int T = t.tokens;
  Mat R;
  for (int l = 0; l < t.depth(); ++l) {
    Mat a(T, std::vector<double>(T, 0.0));
    for (int i = 0; i < T; ++i) {
      for (int j = 0; j < T; ++j) {
        double mean = 0;
        for (int h = 0; h < t.heads; ++h) mean += t.at(l, h, i, j);
        a[i][j] = 0.5 * mean / t.heads + (i == j ? 0.5 : 0.0);
      }
      double s = 0;
      for (int j = 0; j < T; ++j) s += a[i][j];
      for (int j = 0; j < T; ++j) a[i][j] /= s;
    }
    R = l == 0 ? a : matmul(a, R);
  }
  return std::vector<double>(R[0].begin() + 1, R[0].end());
}

}  // namespace

TEST_CASE("rollout matches the explicit matrix product") {
  std::mt19937_64 rng(7);
  const auto start = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int layers = 1 + trial % 4;
    const int heads = 1 + (trial / 4) % 4;
    const int side = 1 + trial % 4;  // T up to 17
    const auto trace = random_trace(rng, layers, heads, side, side);
    const auto map = attention_rollout(trace);
    const auto oracle = rollout_oracle(trace);
    REQUIRE(map.grid.size() == oracle.size());
    for (std::size_t i = 0; i < oracle.size(); ++i) worst = std::max(worst, std::abs(map.grid[i] - oracle[i]));
  }
  CHECK(worst <= 1e-5);
  CHECK(std::chrono::steady_clock::now() - start < std::chrono::seconds(10));
}

TEST_CASE("single uniform layer gives 0.5/T on every patch") {
  AttentionTrace t;
  t.heads = 2;
  t.grid_rows = 3;
  t.grid_cols = 3;
  t.tokens = 10;
  t.layers.push_back(std::vector<float>(2 * 10 * 10, 0.1f));
  const auto map = attention_rollout(t);
  REQUIRE(map.rows == 3);
  for (double v : map.grid) CHECK(v == doctest::Approx(0.5 / 10).epsilon(1e-6));
}

TEST_CASE("identity attention keeps all mass on the class token") {
  AttentionTrace t;
  t.heads = 1;
  t.grid_rows = 2;
  t.grid_cols = 2;
  t.tokens = 5;
  std::vector<float> eye(25, 0.0f);
  for (int i = 0; i < 5; ++i) eye[i * 5 + i] = 1.0f;
  t.layers = {eye, eye, eye};
  for (double v : attention_rollout(t).grid) CHECK(v == 0.0);
}

TEST_CASE("rollout row mass stays a distribution") {
  std::mt19937_64 rng(8);
  const auto trace = random_trace(rng, 3, 2, 4, 4);
  const auto map = attention_rollout(trace);
  double s = 0;
  for (double v : map.grid) {
    CHECK(v >= 0.0);
    s += v;
  }
  CHECK(s < 1.0);  // the class token keeps the rest
}

TEST_CASE("malformed traces are rejected") {
  std::mt19937_64 rng(9);
  auto t = random_trace(rng, 2, 2, 2, 2);
  auto bad = t;
  bad.layers[1][3] += 0.01f;
  CHECK_THROWS_AS(attention_rollout(bad), NonStochasticAttention);
  bad = t;
  bad.layers[0][0] = -bad.layers[0][0];
  CHECK_THROWS_AS(attention_rollout(bad), NonStochasticAttention);
  bad = t;
  bad.grid_cols = 3;
  CHECK_THROWS_AS(attention_rollout(bad), ShapeMismatch);
  bad = t;
  bad.layers.clear();
  CHECK_THROWS(attention_rollout(bad));
}

TEST_CASE("minmax normalization") {
  AwarenessMap m;
  m.rows = 2;
  m.cols = 2;
  m.grid = {0.2, 0.4, 0.6, 0.2};
  const auto n = normalize_map(m);
  CHECK(n.normalization == MapNormalization::minmax);
  CHECK(n.grid[0] == 0.0);
  CHECK(n.grid[2] == 1.0);
  CHECK(n.grid[1] == doctest::Approx(0.5));
  // Idempotent.
  CHECK(normalize_map(n).grid == n.grid);

  m.grid = {0.3, 0.3, 0.3, 0.3};
  for (double v : normalize_map(m).grid) CHECK(v == 0.0);
}

namespace {

AwarenessMap smooth_random_map(std::mt19937_64& rng, int side) {
  std::uniform_real_distribution<double> u(0, 1);
  const double fx = u(rng) * 0.6, fy = u(rng) * 0.6, px = u(rng) * 6, py = u(rng) * 6;
  AwarenessMap m;
  m.rows = m.cols = side;
  for (int r = 0; r < side; ++r)
    for (int c = 0; c < side; ++c) m.grid.push_back(0.5 + 0.25 * std::sin(fx * c + px) + 0.25 * std::cos(fy * r + py));
  return normalize_map(m);
}

std::vector<double> box_downsample(const Image& img, int side) {
  const int f = img.height() / side;
  std::vector<double> out(static_cast<std::size_t>(side) * side, 0.0);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) out[(y / f) * side + x / f] += img.at(y, x);
  for (double& v : out) v /= f * f;
  return out;
}

}  // namespace

TEST_CASE("resize_map round trip on smooth maps stays within 0.1") {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 50; ++trial) {
    const auto m = smooth_random_map(rng, 8);
    const Image up = resize_map(m, 64);
    REQUIRE(up.height() == 64);
    const auto back = box_downsample(up, 8);
    for (std::size_t i = 0; i < back.size(); ++i) CHECK(std::abs(back[i] - m.grid[i]) <= 0.1);
  }
}

TEST_CASE("resize_map round trip equals the 1/8-3/4-1/8 smoothing on arbitrary maps") {
  // Box-averaging an 8x triangle upsample gives, per axis, weights
  // (1/8, 3/4, 1/8) on the neighbouring cells with edge replication.
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 20; ++trial) {
    const int side = 2 + trial % 7;
    AwarenessMap m;
    m.rows = m.cols = side;
    for (int i = 0; i < side * side; ++i) m.grid.push_back(static_cast<float>(u(rng)));
    const auto back = box_downsample(resize_map(m, side * 8), side);
    auto g = [&](int r, int c) {
      return m.grid[std::clamp(r, 0, side - 1) * side + std::clamp(c, 0, side - 1)];
    };
    const double k[3] = {0.125, 0.75, 0.125};
    for (int r = 0; r < side; ++r) {
      for (int c = 0; c < side; ++c) {
        double expect = 0;
        for (int dr = -1; dr <= 1; ++dr)
          for (int dc = -1; dc <= 1; ++dc) expect += k[dr + 1] * k[dc + 1] * g(r + dr, c + dc);
        CHECK(back[r * side + c] == doctest::Approx(expect).epsilon(1e-5));
      }
    }
  }
}

TEST_CASE("resize_map contract") {
  AwarenessMap m;
  m.rows = m.cols = 4;
  m.grid.assign(16, 0.25);
  const Image img = resize_map(m, 64);
  for (float v : img.pixels()) CHECK(v == doctest::Approx(0.25));
  CHECK_THROWS_AS(resize_map(m, 3), ShapeMismatch);
  m.grid[5] = 1.0;
  const Image peak = resize_map(m, 64);
  for (float v : peak.pixels()) {
    CHECK(v >= 0.25f);
    CHECK(v <= 1.0f);
  }
}

TEST_CASE("heat colours run blue to red") {
  std::uint8_t rgb[3];
  heat_color(0.0, rgb);
  CHECK((rgb[0] == 0 && rgb[1] == 0 && rgb[2] == 255));
  heat_color(1.0, rgb);
  CHECK((rgb[0] == 255 && rgb[1] == 0 && rgb[2] == 0));
  heat_color(0.5, rgb);
  CHECK((rgb[0] == 0 && rgb[1] == 255 && rgb[2] == 0));
}

TEST_CASE("overlay of an all-zero map on a blank page is pure blue") {
  AwarenessMap m;
  m.rows = m.cols = 8;
  m.grid.assign(64, 0.0);
  const Image page(64, 64, 1.0f);
  const RgbImage out = render_overlay(page, m);
  REQUIRE(out.height == 64);
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) {
      const auto* px = out.pixel(y, x);
      CHECK((px[0] == 0 && px[1] == 0 && px[2] == 255));
    }
  }
  Image glyph = page;
  glyph.at(10, 10) = 0.0f;
  CHECK(render_overlay(glyph, m).pixel(10, 10)[2] < 255);
}

TEST_CASE("map files round-trip exactly") {
  testsupport::TempDir dir("maps");
  std::mt19937_64 rng(12);
  auto m = smooth_random_map(rng, 8);
  for (double& v : m.grid) v = static_cast<float>(v);
  m.source_image = "test/x/A.png";
  save_map(dir / "a.map", m);
  const auto back = load_map(dir / "a.map");
  CHECK(back.rows == 8);
  CHECK(back.cols == 8);
  CHECK(back.grid == m.grid);
  CHECK(back.normalization == MapNormalization::minmax);
  CHECK(back.source_image == m.source_image);

  const Image w = resize_map(m, 32);
  save_weight_image(dir / "w.w", w, "x");
  CHECK(load_weight_image(dir / "w.w") == w);
  CHECK_THROWS_AS(load_map(dir / "missing.map"), DataError);
}
