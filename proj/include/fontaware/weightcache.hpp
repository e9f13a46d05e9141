#pragma once

#include <filesystem>
#include <optional>

#include "fontaware/awloss.hpp"
#include "fontaware/corpus.hpp"
#include "fontaware/identnet.hpp"
#include "fontaware/rollout.hpp"

namespace fontaware {

// Rollout map of one glyph under the given encoder.
AwarenessMap extract_awareness(VitEncoder& encoder, const Image& glyph, MapNormalization norm = MapNormalization::minmax);

// Minmax-normalized rollout, resized to target_size, for every ground-truth
// glyph of the manifest (all splits). Throws MissingCheckpoint when the
// identifier file is absent.
WeightCache build_weight_cache(const CorpusManifest& manifest, const std::filesystem::path& identifier,
                               int target_size);
WeightCache build_weight_cache(const CorpusManifest& manifest, VitEncoder& encoder, int target_size);

}  // namespace fontaware
