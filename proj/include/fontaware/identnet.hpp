#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fontaware/corpus.hpp"
#include "fontaware/pairs.hpp"
#include "fontaware/rollout.hpp"
#include "json.hpp"

namespace fontaware {

struct EncoderConfig {
  int image_size = 64;
  int patch_size = 8;
  int depth = 6;
  int heads = 4;
  int embed_dim = 192;
  double mlp_ratio = 4.0;
  // Hidden width of the two-layer pair classifier.
  int head_hidden = 768;
  // 1 natively; 3 only when importing weights trained on RGB input.
  int in_channels = 1;
  // Diagnostic switch: without positional embeddings the encoder is
  // equivariant to patch permutations.
  bool positional = true;

  static EncoderConfig desk();
  static EncoderConfig paper();

  int grid() const { return image_size / patch_size; }
  int tokens() const { return grid() * grid() + 1; }
  void validate() const;

  nlohmann::json to_json() const;
  static EncoderConfig from_json(const nlohmann::json& j);
};

struct TrainConfig {
  int batch_size = 32;  // pairs per step
  double learning_rate = 1e-4;
  // Linear ramp of the learning rate over the first steps; 0 disables it.
  int warmup_steps = 200;
  int steps = 1500;
  int eval_every = 100;
  int val_pairs = 512;
  std::uint64_t seed = 0;
  int threads = 1;

  static TrainConfig desk();
  static TrainConfig paper();
  void validate() const;

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// Class-token embedding after the final encoder layer.
struct StyleFeature {
  std::vector<float> vector;
};

class VitEncoderImpl : public torch::nn::Module {
 public:
  explicit VitEncoderImpl(const EncoderConfig& cfg);

  // images: (B, 1, H, W) glyph intensities (background 1). Returns the class
  // token (B, D). When `attention` is given, one (B, heads, T, T) post-softmax
  // tensor per layer is appended.
  torch::Tensor forward(const torch::Tensor& images, std::vector<torch::Tensor>* attention = nullptr);

  const EncoderConfig& config() const { return cfg_; }

 private:
  struct Block {
    torch::nn::LayerNorm norm1{nullptr};
    torch::nn::Linear qkv{nullptr};
    torch::nn::Linear proj{nullptr};
    torch::nn::LayerNorm norm2{nullptr};
    torch::nn::Linear fc1{nullptr};
    torch::nn::Linear fc2{nullptr};
  };

  EncoderConfig cfg_;
  torch::nn::Conv2d patch_embed_{nullptr};
  torch::Tensor cls_token_;
  torch::Tensor pos_embed_;
  std::vector<Block> blocks_;
  torch::nn::LayerNorm norm_{nullptr};
};
TORCH_MODULE(VitEncoder);

/// Two fully connected layers over the concatenated class tokens.
class PairHeadImpl : public torch::nn::Module {
 public:
  PairHeadImpl(int embed_dim, int hidden);
  torch::Tensor forward(const torch::Tensor& left, const torch::Tensor& right);  // logits (B, 2)

 private:
  torch::nn::Linear fc1_{nullptr};
  torch::nn::Linear fc2_{nullptr};
};
TORCH_MODULE(PairHead);

class IdentNetImpl : public torch::nn::Module {
 public:
  explicit IdentNetImpl(const EncoderConfig& cfg);
  torch::Tensor forward(const torch::Tensor& left, const torch::Tensor& right);

  VitEncoder encoder{nullptr};
  PairHead head{nullptr};
};
TORCH_MODULE(IdentNet);

struct IdentCheckpoint {
  IdentNet model{nullptr};
  EncoderConfig encoder;
  TrainConfig train;
  int steps_run = 0;
  int best_step = 0;
  double best_val_accuracy = 0.0;
};

struct EncodeResult {
  StyleFeature feature;
  AttentionTrace trace;
};

// Glyph images to a (B, 1, S, S) tensor at the encoder's resolution.
torch::Tensor images_to_tensor(const std::vector<const Image*>& images, int size);

// Inference: eval mode, no grad. Images are resized to cfg.image_size.
EncodeResult encode(VitEncoder& encoder, const Image& img);
std::vector<EncodeResult> encode_batch(VitEncoder& encoder, const std::vector<const Image*>& images);

// p(same) for features from the same encoder.
double classify_pair(PairHead& head, const StyleFeature& left, const StyleFeature& right);

using PairPredictor = std::function<std::vector<double>(const std::vector<PairSample>&)>;

// Fraction of pairs whose thresholded p(same) > 0.5 agrees with the label.
double pair_accuracy(const std::vector<PairSample>& pairs, const PairPredictor& predict);

PairPredictor model_predictor(IdentNet& model, const GlyphStore& store);

double evaluate_identifier(IdentNet& model, const CorpusManifest& manifest, Split split, std::size_t n_pairs,
                           std::uint64_t seed);

struct TrainLogEntry {
  int step = 0;
  double loss = 0.0;
  std::optional<double> val_accuracy;
};

// Trains on the train split, selects the step with the best validation pair
// accuracy and returns that state. Throws Divergence on a non-finite loss.
// Each entry is also appended to `log_path` as JSON lines when given.
IdentCheckpoint train_identifier(const CorpusManifest& manifest, const EncoderConfig& cfg, const TrainConfig& tcfg,
                                 const std::optional<std::filesystem::path>& log_path = {},
                                 std::vector<TrainLogEntry>* log = nullptr);

void save_identifier(const std::filesystem::path& file, const IdentCheckpoint& ckpt);
IdentCheckpoint load_identifier(const std::filesystem::path& file);

// Copies matching tensors from a torch archive (e.g. converted pretrained
// weights) into the encoder; returns the names that were imported.
std::vector<std::string> import_encoder_weights(VitEncoder& encoder, const std::filesystem::path& archive);

}  // namespace fontaware
