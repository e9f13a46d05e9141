#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fontaware/awloss.hpp"
#include "fontaware/corpus.hpp"
#include "json.hpp"

namespace fontaware {

enum class LossMode { l1, aware };

std::string to_string(LossMode m);
LossMode parse_loss_mode(const std::string& s);

struct GeneratorConfig {
  int image_size = 64;
  int style_dim = 512;
  int num_classes = 26;
  // Encoder widths are base, 2*base, 4*base, 8*base; the decoder mirrors them.
  int base_channels = 64;
  LossMode loss_mode = LossMode::l1;
  double alpha = 0.1;
  Reduction reduction = Reduction::mean;
  std::uint64_t seed = 0;

  int batch_size = 32;
  double learning_rate = 1e-4;
  int steps = 2000;
  int eval_every = 100;
  // Source count per training step is drawn from [k_min, k_max]; evaluation uses eval_k.
  int k_min = 1;
  int k_max = 8;
  int eval_k = 5;
  int threads = 1;

  static GeneratorConfig desk();
  static GeneratorConfig paper();
  void validate() const;

  nlohmann::json to_json() const;
  static GeneratorConfig from_json(const nlohmann::json& j);
};

struct GeneratedSample {
  std::string font_id;
  char letter = 'A';
  Image pixels;
  LossMode loss_mode = LossMode::l1;
};

/// FANnet-style generator: a convolutional style encoder whose features are
/// averaged over the source glyphs, and a decoder fed style plus a one-hot
/// letter code. Output passes through a sigmoid, so pixels stay in [0, 1].
class FewShotGeneratorImpl : public torch::nn::Module {
 public:
  explicit FewShotGeneratorImpl(const GeneratorConfig& cfg);

  // (N, 1, S, S) -> (N, style_dim)
  torch::Tensor encode(const torch::Tensor& images);
  // (B, style_dim), letter indices (B) -> (B, 1, S, S)
  torch::Tensor decode(const torch::Tensor& style, const torch::Tensor& letters);
  // sources (B, k, 1, S, S): mean of the per-image features, then decode.
  torch::Tensor forward(const torch::Tensor& sources, const torch::Tensor& letters);

  const GeneratorConfig& config() const { return cfg_; }

 private:
  GeneratorConfig cfg_;
  torch::nn::Sequential encoder_{nullptr};
  torch::nn::Linear enc_fc_{nullptr};
  torch::nn::Linear dec_fc1_{nullptr};
  torch::nn::Linear dec_fc2_{nullptr};
  torch::nn::Sequential decoder_{nullptr};
};
TORCH_MODULE(FewShotGenerator);

struct GeneratorCheckpoint {
  FewShotGenerator model{nullptr};
  GeneratorConfig config;
  int steps_run = 0;
  int best_step = 0;
  double best_val_loss = 0.0;
  std::string val_metric;  // "weighted_l1" or "l1"
};

// Throws EmptySourceSet for no sources.
std::vector<float> encode_style(FewShotGenerator& model, const std::vector<const Image*>& sources);
// Throws UnknownLetter outside A-Z.
GeneratedSample generate(FewShotGenerator& model, const std::vector<float>& style, char letter);

struct GenerationTask {
  std::string font_id;
  char target = 'A';
  std::string sources;  // letters, never containing target
};

// k distinct source letters other than `target`, drawn from `letters`.
std::string pick_sources(const std::string& letters, char target, int k, std::uint64_t seed);

// One task per (font, letter) of the split with a fixed seeded source choice.
std::vector<GenerationTask> evaluation_tasks(const CorpusManifest& manifest, Split split, int k, std::uint64_t seed);

std::vector<Image> run_tasks(FewShotGenerator& model, const GlyphStore& store, const std::vector<GenerationTask>& tasks);

struct GenLogEntry {
  int step = 0;
  double loss = 0.0;
  std::optional<double> val_loss;
};

// loss_mode == aware requires `cache`; missing entries raise CacheMiss. When a
// cache is present the validation metric is weighted L1 (alpha = 0),
// otherwise plain L1.
GeneratorCheckpoint train_generator(const CorpusManifest& manifest, const GeneratorConfig& cfg,
                                    const WeightCache* cache,
                                    const std::optional<std::filesystem::path>& log_path = {},
                                    std::vector<GenLogEntry>* log = nullptr);

void save_generator(const std::filesystem::path& file, const GeneratorCheckpoint& ckpt);
GeneratorCheckpoint load_generator(const std::filesystem::path& file);

// 13 x 2 grid of the 26 letters, in order.
Image letter_sheet(const std::vector<Image>& letters);

}  // namespace fontaware
