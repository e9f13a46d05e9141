#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fontaware/corpus.hpp"

namespace fontaware {

enum class PairLabel { not_same = 0, same = 1 };

struct GlyphKey {
  std::string font_id;
  char letter = 'A';

  friend bool operator==(const GlyphKey&, const GlyphKey&) = default;
};

/// Two glyphs and the automatically derived same-font label. The images are
/// looked up through a GlyphStore when needed.
struct PairSample {
  GlyphKey left;
  GlyphKey right;
  PairLabel label = PairLabel::not_same;
};

/// Stateless pair generator over one split of a manifest. Letters inside a
/// pair always differ, for both labels, so letter identity carries no label
/// information. Half the pairs (count/2, rounded down) are `same`.
class PairSampler {
 public:
  PairSampler(const CorpusManifest& manifest, Split split);

  std::vector<PairSample> sample(std::size_t count, std::uint64_t seed) const;
  // Pairs for a given epoch; the stream seed is derived from (seed, epoch).
  std::vector<PairSample> sample_epoch(std::size_t count, std::uint64_t seed, std::uint64_t epoch) const;

  const std::vector<std::string>& fonts() const { return fonts_; }

 private:
  std::vector<std::string> fonts_;
  std::vector<std::string> letters_;  // per font, letters available
};

std::vector<PairSample> sample_pairs(const CorpusManifest& manifest, Split split, std::size_t count,
                                     std::uint64_t seed);

// One JSON object per line: {"left": path, "right": path, "label": "same"|"not"}.
void dump_pairs_jsonl(const CorpusManifest& manifest, const std::vector<PairSample>& pairs,
                      const std::filesystem::path& out);

}  // namespace fontaware
