#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "fontaware/corpus.hpp"
#include "fontaware/image.hpp"

namespace testsupport {

inline std::filesystem::path fonts_dir() { return FONTAWARE_FONTS_DIR; }

// Fresh directory under the build tree, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& name) : path_(std::filesystem::path(FONTAWARE_TEST_TMP) / name) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& p) const { return path_ / p; }

 private:
  std::filesystem::path path_;
};

inline fontaware::Image random_image(std::mt19937_64& rng, int h, int w, float lo = 0.0f, float hi = 1.0f) {
  std::uniform_real_distribution<float> u(lo, hi);
  fontaware::Image img(h, w);
  for (float& v : img.pixels()) v = u(rng);
  return img;
}

// A small corpus drawn from the bundled fonts: the first `n` fonts in path
// order, split 8:1:1 by family.
inline std::vector<fontaware::FontRecord> some_fonts(std::size_t n) {
  auto fonts = fontaware::discover_fonts(fonts_dir());
  if (fonts.size() > n) fonts.resize(n);
  return fonts;
}

}  // namespace testsupport
