#include <cmath>
#include <cstring>
#include <random>

#include "doctest.h"
#include "fontaware/awloss.hpp"
#include "fontaware/errors.hpp"
#include "support.hpp"

using namespace fontaware;

namespace {

double plain_l1(const Image& a, const Image& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(static_cast<double>(a.pixels()[i]) - b.pixels()[i]);
  return s / static_cast<double>(a.size());
}

bool bit_equal(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

}  // namespace

TEST_CASE("zero weights with alpha 1 reduce exactly to plain L1") {
  std::mt19937_64 rng(20);
  for (int trial = 0; trial < 50; ++trial) {
    const int h = 8 + trial % 60, w = 8 + (trial * 7) % 60;
    const Image gt = testsupport::random_image(rng, h, w);
    const Image gen = testsupport::random_image(rng, h, w);
    const Image zeros(h, w, 0.0f);
    CHECK(bit_equal(weighted_l1(gt, gen, zeros, {1.0, Reduction::mean}), plain_l1(gt, gen)));
  }
}

TEST_CASE("weighted L1 by hand") {
  const Image gt(1, 2, std::vector<float>{1.0f, 0.0f});
  const Image gen(1, 2, std::vector<float>{0.5f, 0.25f});
  const Image w(1, 2, std::vector<float>{1.0f, 0.0f});
  // (1 + 0.1) * 0.5 + (0 + 0.1) * 0.25 = 0.575
  CHECK(weighted_l1(gt, gen, w, {0.1, Reduction::sum}) == doctest::Approx(0.575));
  CHECK(weighted_l1(gt, gen, w, {0.1, Reduction::mean}) == doctest::Approx(0.2875));
  CHECK(weighted_l1(gt, gt, w, {0.1, Reduction::mean}) == 0.0);
}

TEST_CASE("weighted L1 validates its inputs") {
  const Image a(4, 4), b(4, 5);
  CHECK_THROWS_AS(weighted_l1(a, b, a, {}), ShapeMismatch);
  CHECK_THROWS_AS(weighted_l1(a, a, b, {}), ShapeMismatch);
  CHECK_THROWS_AS(weighted_l1(a, a, a, {-0.1, Reduction::mean}), DataError);
}

TEST_CASE("gradient matches central differences") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0, 1);
  constexpr double h = 1e-4;
  int instances = 0;
  while (instances < 20) {
    const std::size_t n = 16 + instances * 5;
    std::vector<double> gt(n), gen(n), w(n);
    bool near_kink = false;
    for (std::size_t i = 0; i < n; ++i) {
      gt[i] = u(rng);
      gen[i] = u(rng);
      w[i] = u(rng);
      if (std::abs(gt[i] - gen[i]) < 10 * h) near_kink = true;
    }
    if (near_kink) continue;
    const LossConfig cfg{u(rng), instances % 2 ? Reduction::sum : Reduction::mean};
    const auto grad = weighted_l1_grad(gt, gen, w, cfg);
    for (std::size_t i = 0; i < n; ++i) {
      auto plus = gen, minus = gen;
      plus[i] += h;
      minus[i] -= h;
      const double fd = (weighted_l1(gt, plus, w, cfg) - weighted_l1(gt, minus, w, cfg)) / (2 * h);
      CHECK(std::abs(fd - grad[i]) <= 1e-4 * std::abs(grad[i]));
    }
    ++instances;
  }
}

TEST_CASE("image gradient agrees with the double version") {
  std::mt19937_64 rng(22);
  const Image gt = testsupport::random_image(rng, 6, 6), gen = testsupport::random_image(rng, 6, 6),
              w = testsupport::random_image(rng, 6, 6);
  const LossConfig cfg{0.1, Reduction::mean};
  const Image g = weighted_l1_grad(gt, gen, w, cfg);
  auto d = [](const Image& i) { return std::vector<double>(i.pixels().begin(), i.pixels().end()); };
  const auto ref = weighted_l1_grad(d(gt), d(gen), d(w), cfg);
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK(g.pixels()[i] == doctest::Approx(ref[i]).epsilon(1e-6));
  CHECK(weighted_l1(gt, gen, w, cfg) == doctest::Approx(weighted_l1(d(gt), d(gen), d(w), cfg)).epsilon(1e-12));
}

TEST_CASE("weight cache lookups and persistence") {
  testsupport::TempDir dir("cache");
  std::mt19937_64 rng(23);
  WeightCache cache(16);
  cache.insert("fontA", 'A', testsupport::random_image(rng, 16, 16));
  cache.insert("fontA", 'B', testsupport::random_image(rng, 16, 16));
  cache.insert("fontB", 'Z', testsupport::random_image(rng, 16, 16));
  CHECK_THROWS_AS(cache.insert("fontB", 'Y', Image(8, 8)), ShapeMismatch);
  CHECK(cache.contains("fontA", 'B'));
  CHECK_THROWS_AS(cache.at("fontA", 'C'), CacheMiss);

  cache.save(dir.path());
  const auto back = WeightCache::load(dir.path());
  CHECK(back.image_size() == 16);
  REQUIRE(back.size() == 3);
  for (const auto& [key, img] : cache.entries()) CHECK(back.at(key.first, key.second) == img);
  CHECK_THROWS_AS(WeightCache::load(dir / "nope"), DataError);
}

TEST_CASE("reduction names") {
  CHECK(parse_reduction("sum") == Reduction::sum);
  CHECK(to_string(Reduction::mean) == "mean");
  CHECK_THROWS_AS(parse_reduction("max"), DataError);
}
