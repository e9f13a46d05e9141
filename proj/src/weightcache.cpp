#include "fontaware/weightcache.hpp"

#include "fontaware/errors.hpp"

namespace fontaware {

AwarenessMap extract_awareness(VitEncoder& encoder, const Image& glyph, MapNormalization norm) {
  auto map = attention_rollout(encode(encoder, glyph).trace);
  return norm == MapNormalization::minmax ? normalize_map(map) : map;
}

WeightCache build_weight_cache(const CorpusManifest& manifest, VitEncoder& encoder, int target_size) {
  const GlyphStore store(manifest, encoder->config().image_size);
  WeightCache cache(target_size);
  constexpr std::size_t chunk = 64;
  const auto& records = manifest.records;
  for (std::size_t b = 0; b < records.size(); b += chunk) {
    const std::size_t e = std::min(records.size(), b + chunk);
    std::vector<const Image*> images;
    for (std::size_t i = b; i < e; ++i) images.push_back(&store.get(records[i].font_id, records[i].letter));
    auto results = encode_batch(encoder, images);
    for (std::size_t i = b; i < e; ++i) {
      auto map = normalize_map(attention_rollout(results[i - b].trace));
      cache.insert(records[i].font_id, records[i].letter, resize_map(map, target_size));
    }
  }
  return cache;
}

WeightCache build_weight_cache(const CorpusManifest& manifest, const std::filesystem::path& identifier,
                               int target_size) {
  if (!std::filesystem::exists(identifier)) {
    throw MissingCheckpoint("identifier checkpoint not found: " + identifier.string());
  }
  auto ckpt = load_identifier(identifier);
  return build_weight_cache(manifest, ckpt.model->encoder, target_size);
}

}  // namespace fontaware
