#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fontaware/image.hpp"

namespace fontaware {

enum class FontCategory { serif, sans_serif, display, handwriting, unknown };

std::string to_string(FontCategory c);
FontCategory parse_category(const std::string& s);

struct FontRecord {
  std::string font_id;
  std::string family_name;
  FontCategory category = FontCategory::unknown;
  std::filesystem::path source_path;
};

struct GlyphImage {
  std::string font_id;
  char letter = 'A';
  Image pixels;
};

enum class Split { train, val, test };

std::string to_string(Split s);
Split parse_split(const std::string& s);

// The 26 capitals, in order.
const std::string& capital_letters();
bool is_capital(char c);

/// Loaded font file. Construction throws UnparseableFont when the file is not
/// an outline font stb_truetype understands.
class FontFace {
 public:
  explicit FontFace(const std::filesystem::path& path);
  ~FontFace();
  FontFace(FontFace&&) noexcept;
  FontFace& operator=(FontFace&&) noexcept;
  FontFace(const FontFace&) = delete;
  FontFace& operator=(const FontFace&) = delete;

  // Preferred family name from the `name` table (typographic family first).
  std::string family_name() const;

  // Renders `letter` scaled uniformly so its outline box fits the
  // (size - 2*margin) square, centered on both axes. Background 1.0.
  Image render(char letter, int size, int margin) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Pixels darker than 0.5.
int count_ink_pixels(const Image& img);

GlyphImage render_glyph(const FontRecord& font, char letter, int size, int margin);

// Font files (.ttf/.otf) found recursively under `dir`, sorted by path.
// Optional `metadata` JSON maps font_id -> {"family": ..., "category": ...};
// fonts missing from it fall back to the name table and category unknown.
std::vector<FontRecord> discover_fonts(const std::filesystem::path& dir,
                                       const std::optional<std::filesystem::path>& metadata = {});

struct SplitRatios {
  double train = 8.0;
  double val = 1.0;
  double test = 1.0;

  static SplitRatios parse(const std::string& text);  // "8:1:1"
  std::string str() const;
  std::array<double, 3> normalized() const;
};

struct ManifestRecord {
  std::string font_id;
  std::string family_name;
  FontCategory category = FontCategory::unknown;
  char letter = 'A';
  std::string image_path;  // relative to the corpus root
  Split split = Split::train;
};

struct CorpusManifest {
  std::vector<ManifestRecord> records;
  int render_size = 224;
  int margin = 5;
  std::uint64_t seed = 0;
  SplitRatios ratios;
  std::string letters;
  std::vector<std::string> dropped_fonts;
  std::filesystem::path root;  // not serialized

  std::vector<std::string> fonts_in(Split split) const;
  std::vector<const ManifestRecord*> records_in(Split split) const;
  const ManifestRecord* find(const std::string& font_id, char letter) const;
  std::filesystem::path image_file(const ManifestRecord& rec) const { return root / rec.image_path; }
};

struct ManifestOptions {
  std::string letters = capital_letters();
  SplitRatios ratios;
  std::uint64_t seed = 0;
  int render_size = 224;
  int margin = 5;
  // Completeness is judged at this resolution.
  int check_size = 224;
  int min_ink_pixels = 10;
};

// Drops incomplete fonts, groups the rest by family name and assigns whole
// families to splits so font counts approach the requested ratios.
CorpusManifest build_manifest(const std::vector<FontRecord>& fonts, const ManifestOptions& opts);

// Family assignment only; exposed for tests that do not want to render.
std::map<std::string, Split> assign_family_splits(const std::map<std::string, int>& fonts_per_family,
                                                  const SplitRatios& ratios, std::uint64_t seed);

Image resize_image(const Image& img, int size);
GlyphImage resize_image(const GlyphImage& img, int size);

// Renders every record to `<root>/<split>/<font_id>/<letter>.png` and writes
// `<root>/manifest.json`.
void write_corpus(CorpusManifest& manifest, const std::vector<FontRecord>& fonts,
                  const std::filesystem::path& root);

void save_manifest(const CorpusManifest& manifest, const std::filesystem::path& file);
CorpusManifest load_manifest(const std::filesystem::path& file_or_dir);

/// In-memory glyph table keyed by (font_id, letter), resized on load.
class GlyphStore {
 public:
  GlyphStore(const CorpusManifest& manifest, int image_size);
  GlyphStore(const CorpusManifest& manifest, int image_size, Split only);

  const Image& get(const std::string& font_id, char letter) const;
  bool contains(const std::string& font_id, char letter) const;
  int image_size() const { return image_size_; }
  std::size_t size() const { return images_.size(); }

 private:
  void load(const CorpusManifest& manifest, const std::optional<Split>& only);

  int image_size_;
  std::map<std::pair<std::string, char>, Image> images_;
};

}  // namespace fontaware
