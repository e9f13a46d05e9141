#pragma once

#include <filesystem>
#include <mutex>

#include "fontaware/corpus.hpp"
#include "support.hpp"

namespace testsupport {

// A 24-font corpus rendered at 64 px, written once per test process.
inline const fontaware::CorpusManifest& small_corpus() {
  static fontaware::CorpusManifest manifest;
  static std::once_flag once;
  std::call_once(once, [] {
    const auto root = std::filesystem::path(FONTAWARE_TEST_TMP) / "small_corpus";
    std::filesystem::remove_all(root);
    const auto fonts = some_fonts(24);
    fontaware::ManifestOptions opts;
    opts.render_size = 64;
    opts.margin = 2;
    opts.check_size = 64;
    opts.seed = 3;
    manifest = fontaware::build_manifest(fonts, opts);
    fontaware::write_corpus(manifest, fonts, root);
  });
  return manifest;
}

}  // namespace testsupport
