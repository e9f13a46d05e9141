#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <string>

#include "json.hpp"

namespace fontaware {

inline constexpr int kCheckpointVersion = 1;

// Single-file archive: {version, kind, meta (JSON text), model}.
void write_checkpoint(const std::filesystem::path& file, const std::string& kind, const nlohmann::json& meta,
                      const torch::nn::Module& module);

// Throws MissingCheckpoint when absent, FormatError on a kind/version mismatch.
nlohmann::json read_checkpoint_meta(const std::filesystem::path& file, const std::string& kind);
void read_checkpoint_weights(const std::filesystem::path& file, torch::nn::Module& module);

// FNV-1a over the file bytes, as 16 hex digits.
std::string file_digest(const std::filesystem::path& file);

}  // namespace fontaware
