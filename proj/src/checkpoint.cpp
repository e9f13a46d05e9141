#include "fontaware/checkpoint.hpp"

#include <cstdio>
#include <fstream>

#include "fontaware/errors.hpp"

namespace fontaware {

namespace fs = std::filesystem;

void write_checkpoint(const fs::path& file, const std::string& kind, const nlohmann::json& meta,
                      const torch::nn::Module& module) {
  torch::serialize::OutputArchive root;
  root.write("version", c10::IValue(static_cast<int64_t>(kCheckpointVersion)));
  root.write("kind", c10::IValue(kind));
  root.write("meta", c10::IValue(meta.dump()));
  torch::serialize::OutputArchive weights;
  module.save(weights);
  root.write("model", weights);
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  root.save_to(file.string());
}

namespace {

torch::serialize::InputArchive open_archive(const fs::path& file) {
  if (!fs::exists(file)) throw MissingCheckpoint("checkpoint not found: " + file.string());
  torch::serialize::InputArchive root;
  try {
    root.load_from(file.string());
  } catch (const c10::Error& e) {
    throw FormatError("cannot read checkpoint " + file.string() + ": " + e.what_without_backtrace());
  }
  return root;
}

}  // namespace

nlohmann::json read_checkpoint_meta(const fs::path& file, const std::string& kind) {
  auto root = open_archive(file);
  c10::IValue version, stored_kind, meta;
  if (!root.try_read("version", version) || !root.try_read("kind", stored_kind) || !root.try_read("meta", meta)) {
    throw FormatError("checkpoint " + file.string() + " lacks version/kind/meta");
  }
  if (version.toInt() != kCheckpointVersion) {
    throw FormatError("checkpoint " + file.string() + " has unsupported version " + std::to_string(version.toInt()));
  }
  if (stored_kind.toStringRef() != kind) {
    throw FormatError("checkpoint " + file.string() + " holds a '" + stored_kind.toStringRef() + "', expected '" +
                      kind + "'");
  }
  return nlohmann::json::parse(meta.toStringRef());
}

void read_checkpoint_weights(const fs::path& file, torch::nn::Module& module) {
  auto root = open_archive(file);
  torch::serialize::InputArchive weights;
  if (!root.try_read("model", weights)) throw FormatError("checkpoint " + file.string() + " has no model");
  module.load(weights);
}

std::string file_digest(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot hash " + file.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  char out[17];
  std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
  return out;
}

}  // namespace fontaware
