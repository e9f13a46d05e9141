#include "fontaware/corpus.hpp"

#define STB_TRUETYPE_IMPLEMENTATION
#define STBTT_STATIC
#pragma GCC diagnostic push
#pragma GCC diagnostic ignored "-Wunused-function"
#include "stb_truetype.h"
#pragma GCC diagnostic pop

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <set>
#include <sstream>

#include "fontaware/errors.hpp"
#include "fontaware/rng.hpp"
#include "json.hpp"

namespace fontaware {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(FontCategory c) {
  switch (c) {
    case FontCategory::serif: return "serif";
    case FontCategory::sans_serif: return "sans_serif";
    case FontCategory::display: return "display";
    case FontCategory::handwriting: return "handwriting";
    case FontCategory::unknown: break;
  }
  return "unknown";
}

FontCategory parse_category(const std::string& s) {
  if (s == "serif") return FontCategory::serif;
  if (s == "sans_serif" || s == "sans-serif" || s == "sans") return FontCategory::sans_serif;
  if (s == "display") return FontCategory::display;
  if (s == "handwriting") return FontCategory::handwriting;
  return FontCategory::unknown;
}

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw DataError("unknown split '" + s + "'");
}

const std::string& capital_letters() {
  static const std::string letters = "ABCDEFGHIJKLMNOPQRSTUVWXYZ";
  return letters;
}

bool is_capital(char c) { return c >= 'A' && c <= 'Z'; }

// ---------------------------------------------------------------------------
// FontFace

struct FontFace::Impl {
  std::vector<unsigned char> bytes;
  stbtt_fontinfo info{};
  fs::path path;
};

FontFace::FontFace(const fs::path& path) : impl_(std::make_unique<Impl>()) {
  impl_->path = path;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UnparseableFont("cannot open " + path.string());
  impl_->bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  if (impl_->bytes.size() < 12) throw UnparseableFont("truncated font file " + path.string());
  const int offset = stbtt_GetFontOffsetForIndex(impl_->bytes.data(), 0);
  // InitFont rejects files without glyf or CFF outlines (bitmap/color-only fonts).
  if (offset < 0 || !stbtt_InitFont(&impl_->info, impl_->bytes.data(), offset)) {
    throw UnparseableFont("no usable outlines in " + path.string());
  }
}

FontFace::~FontFace() = default;
FontFace::FontFace(FontFace&&) noexcept = default;
FontFace& FontFace::operator=(FontFace&&) noexcept = default;

namespace {

std::string decode_name(const char* raw, int len, bool utf16) {
  std::string out;
  if (!raw || len <= 0) return out;
  if (utf16) {
    for (int i = 0; i + 1 < len; i += 2) {
      const unsigned code = (static_cast<unsigned char>(raw[i]) << 8) | static_cast<unsigned char>(raw[i + 1]);
      out.push_back(code < 128 ? static_cast<char>(code) : '?');
    }
  } else {
    out.assign(raw, raw + len);
  }
  return out;
}

}  // namespace

std::string FontFace::family_name() const {
  for (int name_id : {16, 1}) {
    int len = 0;
    const char* raw = stbtt_GetFontNameString(&impl_->info, &len, STBTT_PLATFORM_ID_MICROSOFT,
                                              STBTT_MS_EID_UNICODE_BMP, STBTT_MS_LANG_ENGLISH, name_id);
    if (raw && len > 0) return decode_name(raw, len, true);
    raw = stbtt_GetFontNameString(&impl_->info, &len, STBTT_PLATFORM_ID_MAC, STBTT_MAC_EID_ROMAN,
                                  STBTT_MAC_LANG_ENGLISH, name_id);
    if (raw && len > 0) return decode_name(raw, len, false);
  }
  return impl_->path.stem().string();
}

Image FontFace::render(char letter, int size, int margin) const {
  if (!is_capital(letter)) throw MissingGlyph(std::string("letter '") + letter + "' is not a capital");
  const int inner = size - 2 * margin;
  if (size <= 0 || margin < 0 || inner <= 0) throw DataError("invalid render size/margin");

  const stbtt_fontinfo* info = &impl_->info;
  const int glyph = stbtt_FindGlyphIndex(info, static_cast<unsigned char>(letter));
  if (glyph == 0 || stbtt_IsGlyphEmpty(info, glyph)) {
    throw MissingGlyph(std::string("'") + letter + "' absent from " + impl_->path.filename().string());
  }
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  if (!stbtt_GetGlyphBox(info, glyph, &x0, &y0, &x1, &y1) || x1 <= x0 || y1 <= y0) {
    throw MissingGlyph(std::string("'") + letter + "' has an empty outline in " +
                       impl_->path.filename().string());
  }
  const float gw = static_cast<float>(x1 - x0);
  const float gh = static_cast<float>(y1 - y0);
  const float scale = static_cast<float>(inner) / std::max(gw, gh);
  const float left = margin + (inner - gw * scale) * 0.5f;
  const float top = margin + (inner - gh * scale) * 0.5f;
  // stb maps font (x, y) to bitmap (x*s + shift_x, -y*s + shift_y).
  const float shift_x = left - x0 * scale;
  const float shift_y = top + y1 * scale;

  int bx0 = 0, by0 = 0, bx1 = 0, by1 = 0;
  stbtt_GetGlyphBitmapBoxSubpixel(info, glyph, scale, scale, shift_x, shift_y, &bx0, &by0, &bx1, &by1);
  const int bw = bx1 - bx0;
  const int bh = by1 - by0;
  Image canvas(size, size, 1.0f);
  if (bw <= 0 || bh <= 0) return canvas;
  std::vector<unsigned char> coverage(static_cast<std::size_t>(bw) * bh, 0);
  stbtt_MakeGlyphBitmapSubpixel(info, coverage.data(), bw, bh, bw, scale, scale, shift_x, shift_y, glyph);
  for (int r = 0; r < bh; ++r) {
    const int y = by0 + r;
    if (y < 0 || y >= size) continue;
    for (int c = 0; c < bw; ++c) {
      const int x = bx0 + c;
      if (x < 0 || x >= size) continue;
      canvas.at(y, x) = 1.0f - coverage[static_cast<std::size_t>(r) * bw + c] / 255.0f;
    }
  }
  return canvas;
}

int count_ink_pixels(const Image& img) {
  return static_cast<int>(std::count_if(img.pixels().begin(), img.pixels().end(),
                                        [](float v) { return v < 0.5f; }));
}

GlyphImage render_glyph(const FontRecord& font, char letter, int size, int margin) {
  FontFace face(font.source_path);
  return GlyphImage{font.font_id, letter, face.render(letter, size, margin)};
}

// ---------------------------------------------------------------------------
// Discovery

std::vector<FontRecord> discover_fonts(const fs::path& dir, const std::optional<fs::path>& metadata) {
  if (!fs::is_directory(dir)) throw DataError("fonts directory does not exist: " + dir.string());
  json meta = json::object();
  fs::path meta_path = metadata.value_or(dir / "fonts.json");
  if (fs::exists(meta_path)) {
    std::ifstream in(meta_path);
    meta = json::parse(in);
  } else if (metadata) {
    throw DataError("metadata file not found: " + meta_path.string());
  }

  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".ttf" || ext == ".otf") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  std::vector<FontRecord> fonts;
  std::set<std::string> seen;
  for (const auto& file : files) {
    FontRecord rec;
    rec.font_id = file.stem().string();
    rec.source_path = file;
    if (!seen.insert(rec.font_id).second) throw DataError("duplicate font_id '" + rec.font_id + "'");
    if (meta.contains(rec.font_id)) {
      const auto& m = meta[rec.font_id];
      rec.family_name = m.value("family", std::string());
      rec.category = parse_category(m.value("category", std::string("unknown")));
    }
    if (rec.family_name.empty()) {
      try {
        rec.family_name = FontFace(file).family_name();
      } catch (const UnparseableFont&) {
        rec.family_name = rec.font_id;
      }
    }
    fonts.push_back(std::move(rec));
  }
  return fonts;
}

// ---------------------------------------------------------------------------
// Splits

SplitRatios SplitRatios::parse(const std::string& text) {
  std::vector<double> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ':')) {
    try {
      parts.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw DataError("bad ratio component '" + item + "' in '" + text + "'");
    }
  }
  if (parts.size() != 3) throw DataError("ratios must look like 8:1:1, got '" + text + "'");
  SplitRatios r{parts[0], parts[1], parts[2]};
  r.normalized();
  return r;
}

std::string SplitRatios::str() const {
  std::ostringstream os;
  os << train << ':' << val << ':' << test;
  return os.str();
}

std::array<double, 3> SplitRatios::normalized() const {
  if (!(train > 0 && val > 0 && test > 0)) throw DataError("split ratios must be positive");
  const double total = train + val + test;
  return {train / total, val / total, test / total};
}

std::map<std::string, Split> assign_family_splits(const std::map<std::string, int>& fonts_per_family,
                                                  const SplitRatios& ratios, std::uint64_t seed) {
  const auto r = ratios.normalized();
  std::vector<std::string> families;
  int total = 0;
  for (const auto& [family, count] : fonts_per_family) {
    families.push_back(family);
    total += count;
  }
  Rng rng(seed);
  shuffle(std::span<std::string>(families), rng);

  std::array<double, 3> target{};
  for (int s = 0; s < 3; ++s) target[s] = r[s] * total;
  std::array<int, 3> assigned{0, 0, 0};
  std::map<std::string, Split> out;
  for (const auto& family : families) {
    int best = 0;
    double best_deficit = target[0] - assigned[0];
    for (int s = 1; s < 3; ++s) {
      const double deficit = target[s] - assigned[s];
      if (deficit > best_deficit) {
        best = s;
        best_deficit = deficit;
      }
    }
    assigned[best] += fonts_per_family.at(family);
    out[family] = static_cast<Split>(best);
  }
  return out;
}

CorpusManifest build_manifest(const std::vector<FontRecord>& fonts, const ManifestOptions& opts) {
  for (char c : opts.letters) {
    if (!is_capital(c)) throw DataError(std::string("requested letter '") + c + "' is not A-Z");
  }
  opts.ratios.normalized();

  std::vector<const FontRecord*> sorted;
  for (const auto& f : fonts) sorted.push_back(&f);
  std::sort(sorted.begin(), sorted.end(),
            [](const FontRecord* a, const FontRecord* b) { return a->font_id < b->font_id; });
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i]->font_id == sorted[i - 1]->font_id) {
      throw DataError("duplicate font_id '" + sorted[i]->font_id + "'");
    }
  }

  CorpusManifest manifest;
  manifest.render_size = opts.render_size;
  manifest.margin = opts.margin;
  manifest.seed = opts.seed;
  manifest.ratios = opts.ratios;
  manifest.letters = opts.letters;

  std::vector<const FontRecord*> kept;
  for (const FontRecord* font : sorted) {
    if (font->family_name.empty()) throw DataError("font '" + font->font_id + "' has no family name");
    std::string reason;
    try {
      FontFace face(font->source_path);
      for (char letter : opts.letters) {
        const Image img = face.render(letter, opts.check_size, opts.margin);
        if (count_ink_pixels(img) < opts.min_ink_pixels) {
          reason = std::string("'") + letter + "' renders to too few ink pixels";
          break;
        }
      }
    } catch (const MissingGlyph& e) {
      reason = e.what();
    } catch (const UnparseableFont& e) {
      reason = e.what();
    }
    if (reason.empty()) {
      kept.push_back(font);
    } else {
      manifest.dropped_fonts.push_back(font->font_id + ": " + reason);
    }
  }

  std::map<std::string, int> per_family;
  for (const FontRecord* f : kept) per_family[f->family_name] += 1;
  const auto family_split = assign_family_splits(per_family, opts.ratios, opts.seed);

  std::array<int, 3> font_counts{0, 0, 0};
  for (const FontRecord* f : kept) {
    const Split split = family_split.at(f->family_name);
    font_counts[static_cast<int>(split)] += 1;
    for (char letter : opts.letters) {
      ManifestRecord rec;
      rec.font_id = f->font_id;
      rec.family_name = f->family_name;
      rec.category = f->category;
      rec.letter = letter;
      rec.split = split;
      rec.image_path = to_string(split) + "/" + f->font_id + "/" + std::string(1, letter) + ".png";
      manifest.records.push_back(std::move(rec));
    }
  }
  for (int s = 0; s < 3; ++s) {
    if (font_counts[s] == 0) {
      throw TooFewFonts(std::to_string(kept.size()) + " usable fonts in " + std::to_string(per_family.size()) +
                        " families leave the " + to_string(static_cast<Split>(s)) + " split empty");
    }
  }
  return manifest;
}

std::vector<std::string> CorpusManifest::fonts_in(Split split) const {
  std::vector<std::string> out;
  for (const auto& r : records) {
    if (r.split == split && (out.empty() || out.back() != r.font_id)) out.push_back(r.font_id);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<const ManifestRecord*> CorpusManifest::records_in(Split split) const {
  std::vector<const ManifestRecord*> out;
  for (const auto& r : records) {
    if (r.split == split) out.push_back(&r);
  }
  return out;
}

const ManifestRecord* CorpusManifest::find(const std::string& font_id, char letter) const {
  for (const auto& r : records) {
    if (r.font_id == font_id && r.letter == letter) return &r;
  }
  return nullptr;
}

Image resize_image(const Image& img, int size) {
  if (size < 8) throw DataError("resize target must be at least 8 pixels");
  Image out = resize_bilinear(img, size, size);
  clamp_values(out, 0.0f, 1.0f);
  return out;
}

GlyphImage resize_image(const GlyphImage& img, int size) {
  return GlyphImage{img.font_id, img.letter, resize_image(img.pixels, size)};
}

// ---------------------------------------------------------------------------
// Persistence

void write_corpus(CorpusManifest& manifest, const std::vector<FontRecord>& fonts, const fs::path& root) {
  std::map<std::string, const FontRecord*> by_id;
  for (const auto& f : fonts) by_id[f.font_id] = &f;
  fs::create_directories(root);
  manifest.root = root;

  std::string current;
  std::optional<FontFace> face;
  for (const auto& rec : manifest.records) {
    if (rec.font_id != current) {
      auto it = by_id.find(rec.font_id);
      if (it == by_id.end()) throw DataError("manifest font '" + rec.font_id + "' not in font list");
      face.emplace(it->second->source_path);
      current = rec.font_id;
    }
    const Image img = face->render(rec.letter, manifest.render_size, manifest.margin);
    write_png_gray(root / rec.image_path, img);
  }
  save_manifest(manifest, root / "manifest.json");
}

void save_manifest(const CorpusManifest& manifest, const fs::path& file) {
  json j;
  j["version"] = 1;
  j["render_size"] = manifest.render_size;
  j["margin"] = manifest.margin;
  j["seed"] = manifest.seed;
  j["ratios"] = {{"train", manifest.ratios.train}, {"val", manifest.ratios.val}, {"test", manifest.ratios.test}};
  j["letters"] = manifest.letters;
  j["dropped_fonts"] = manifest.dropped_fonts;
  json records = json::array();
  for (const auto& r : manifest.records) {
    records.push_back({{"font_id", r.font_id},
                       {"family", r.family_name},
                       {"category", to_string(r.category)},
                       {"letter", std::string(1, r.letter)},
                       {"image", r.image_path},
                       {"split", to_string(r.split)}});
  }
  j["records"] = std::move(records);
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  out << j.dump(1) << '\n';
  if (!out) throw DataError("cannot write manifest " + file.string());
}

CorpusManifest load_manifest(const fs::path& file_or_dir) {
  const fs::path file = fs::is_directory(file_or_dir) ? file_or_dir / "manifest.json" : file_or_dir;
  std::ifstream in(file);
  if (!in) throw DataError("manifest not found: " + file.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("manifest " + file.string() + ": " + e.what());
  }
  CorpusManifest m;
  m.root = file.parent_path();
  m.render_size = j.at("render_size").get<int>();
  m.margin = j.at("margin").get<int>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.ratios = {j.at("ratios").at("train").get<double>(), j.at("ratios").at("val").get<double>(),
              j.at("ratios").at("test").get<double>()};
  m.letters = j.value("letters", capital_letters());
  m.dropped_fonts = j.value("dropped_fonts", std::vector<std::string>{});
  for (const auto& r : j.at("records")) {
    ManifestRecord rec;
    rec.font_id = r.at("font_id").get<std::string>();
    rec.family_name = r.at("family").get<std::string>();
    rec.category = parse_category(r.value("category", std::string("unknown")));
    rec.letter = r.at("letter").get<std::string>().at(0);
    rec.image_path = r.at("image").get<std::string>();
    rec.split = parse_split(r.at("split").get<std::string>());
    m.records.push_back(std::move(rec));
  }
  return m;
}

// ---------------------------------------------------------------------------
// GlyphStore

GlyphStore::GlyphStore(const CorpusManifest& manifest, int image_size) : image_size_(image_size) {
  load(manifest, std::nullopt);
}

GlyphStore::GlyphStore(const CorpusManifest& manifest, int image_size, Split only) : image_size_(image_size) {
  load(manifest, only);
}

void GlyphStore::load(const CorpusManifest& manifest, const std::optional<Split>& only) {
  for (const auto& rec : manifest.records) {
    if (only && rec.split != *only) continue;
    Image img = read_png_gray(manifest.image_file(rec));
    if (img.height() != img.width()) throw ShapeMismatch("non-square corpus image " + rec.image_path);
    images_[{rec.font_id, rec.letter}] = resize_image(img, image_size_);
  }
}

const Image& GlyphStore::get(const std::string& font_id, char letter) const {
  auto it = images_.find({font_id, letter});
  if (it == images_.end()) {
    throw DataError("glyph " + font_id + "/" + std::string(1, letter) + " not loaded");
  }
  return it->second;
}

bool GlyphStore::contains(const std::string& font_id, char letter) const {
  return images_.count({font_id, letter}) > 0;
}

}  // namespace fontaware
