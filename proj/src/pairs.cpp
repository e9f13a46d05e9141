#include "fontaware/pairs.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "fontaware/errors.hpp"
#include "fontaware/rng.hpp"
#include "json.hpp"

namespace fontaware {

PairSampler::PairSampler(const CorpusManifest& manifest, Split split) {
  std::map<std::string, std::string> letters;
  for (const auto* rec : manifest.records_in(split)) letters[rec->font_id].push_back(rec->letter);
  for (auto& [font, ls] : letters) {
    std::sort(ls.begin(), ls.end());
    ls.erase(std::unique(ls.begin(), ls.end()), ls.end());
    if (ls.size() < 2) {
      throw InsufficientFonts("font '" + font + "' has fewer than two letters in " + to_string(split));
    }
    fonts_.push_back(font);
    letters_.push_back(ls);
  }
  if (fonts_.size() < 2) {
    throw InsufficientFonts(to_string(split) + " split has " + std::to_string(fonts_.size()) +
                            " fonts; need at least 2");
  }
}

std::vector<PairSample> PairSampler::sample(std::size_t count, std::uint64_t seed) const {
  Rng rng(seed);
  std::vector<PairSample> pairs;
  pairs.reserve(count);
  const std::size_t n_same = count / 2;

  auto two_letters = [&](std::size_t fa, std::size_t fb) {
    const std::string& la = letters_[fa];
    const std::string& lb = letters_[fb];
    for (;;) {
      const char a = la[uniform_index(rng, la.size())];
      const char b = lb[uniform_index(rng, lb.size())];
      if (a != b) return std::pair{a, b};
    }
  };

  for (std::size_t i = 0; i < count; ++i) {
    const bool same = i < n_same;
    const std::size_t fa = uniform_index(rng, fonts_.size());
    std::size_t fb = fa;
    if (!same) {
      fb = uniform_index(rng, fonts_.size() - 1);
      if (fb >= fa) ++fb;
    }
    const auto [a, b] = two_letters(fa, fb);
    pairs.push_back(PairSample{GlyphKey{fonts_[fa], a}, GlyphKey{fonts_[fb], b},
                               same ? PairLabel::same : PairLabel::not_same});
  }
  shuffle(std::span<PairSample>(pairs), rng);
  return pairs;
}

std::vector<PairSample> PairSampler::sample_epoch(std::size_t count, std::uint64_t seed,
                                                  std::uint64_t epoch) const {
  return sample(count, derive_seed(seed, epoch));
}

std::vector<PairSample> sample_pairs(const CorpusManifest& manifest, Split split, std::size_t count,
                                     std::uint64_t seed) {
  return PairSampler(manifest, split).sample(count, seed);
}

void dump_pairs_jsonl(const CorpusManifest& manifest, const std::vector<PairSample>& pairs,
                      const std::filesystem::path& out) {
  if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
  std::ofstream os(out, std::ios::binary);
  if (!os) throw DataError("cannot write " + out.string());
  auto path_of = [&](const GlyphKey& key) {
    const ManifestRecord* rec = manifest.find(key.font_id, key.letter);
    return rec ? manifest.image_file(*rec).string() : key.font_id + "/" + std::string(1, key.letter);
  };
  for (const auto& p : pairs) {
    nlohmann::json j{{"left", path_of(p.left)},
                     {"right", path_of(p.right)},
                     {"label", p.label == PairLabel::same ? "same" : "not"}};
    os << j.dump() << '\n';
  }
}

}  // namespace fontaware
