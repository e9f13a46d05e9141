#include "fontaware/identnet.hpp"

#include <cmath>
#include <fstream>
#include <map>

#include "fontaware/checkpoint.hpp"
#include "fontaware/errors.hpp"
#include "fontaware/rng.hpp"

namespace fontaware {

namespace fs = std::filesystem;
namespace nn = torch::nn;

// ---------------------------------------------------------------------------
// Configs

EncoderConfig EncoderConfig::desk() { return EncoderConfig{}; }

EncoderConfig EncoderConfig::paper() {
  EncoderConfig c;
  c.image_size = 224;
  c.patch_size = 16;
  c.depth = 12;
  c.heads = 12;
  c.embed_dim = 768;
  c.head_hidden = 3072;
  c.mlp_ratio = 4.0;
  return c;
}

void EncoderConfig::validate() const {
  if (image_size <= 0 || patch_size <= 0 || image_size % patch_size != 0) {
    throw DataError("image_size must be a positive multiple of patch_size");
  }
  if (depth < 1 || heads < 1 || embed_dim % heads != 0) throw DataError("embed_dim must divide evenly across heads");
  if (in_channels != 1 && in_channels != 3) throw DataError("in_channels must be 1 or 3");
  if (head_hidden < 1) throw DataError("head_hidden must be positive");
  if (mlp_ratio <= 0) throw DataError("mlp_ratio must be positive");
}

nlohmann::json EncoderConfig::to_json() const {
  return {{"image_size", image_size}, {"patch_size", patch_size}, {"depth", depth},
          {"heads", heads},           {"embed_dim", embed_dim},   {"mlp_ratio", mlp_ratio}, {"head_hidden", head_hidden},
          {"in_channels", in_channels}, {"positional", positional}};
}

EncoderConfig EncoderConfig::from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.image_size = j.at("image_size");
  c.patch_size = j.at("patch_size");
  c.depth = j.at("depth");
  c.heads = j.at("heads");
  c.embed_dim = j.at("embed_dim");
  c.mlp_ratio = j.at("mlp_ratio");
  c.head_hidden = j.at("head_hidden");
  c.in_channels = j.value("in_channels", 1);
  c.positional = j.value("positional", true);
  c.validate();
  return c;
}

TrainConfig TrainConfig::desk() { return TrainConfig{}; }

TrainConfig TrainConfig::paper() {
  TrainConfig t;
  t.batch_size = 64;
  t.learning_rate = 1e-5;
  t.warmup_steps = 0;
  return t;
}

void TrainConfig::validate() const {
  if (batch_size < 2) throw DataError("batch_size must be at least 2 pairs");
  if (!(learning_rate > 0)) throw DataError("learning_rate must be positive");
  if (warmup_steps < 0) throw DataError("warmup_steps must be non-negative");
  if (steps < 0 || eval_every < 1 || val_pairs < 2) throw DataError("invalid step/eval settings");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"batch_size", batch_size}, {"learning_rate", learning_rate}, {"warmup_steps", warmup_steps},
          {"optimizer", "adam"},      {"loss", "cross_entropy"},       {"steps", steps},
          {"eval_every", eval_every}, {"val_pairs", val_pairs},         {"seed", seed},
          {"threads", threads}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig t;
  t.batch_size = j.at("batch_size");
  t.learning_rate = j.at("learning_rate");
  t.steps = j.at("steps");
  t.warmup_steps = j.at("warmup_steps");
  t.eval_every = j.value("eval_every", 100);
  t.val_pairs = j.value("val_pairs", 512);
  t.seed = j.value("seed", std::uint64_t{0});
  t.threads = j.value("threads", 1);
  return t;
}

// ---------------------------------------------------------------------------
// Modules

VitEncoderImpl::VitEncoderImpl(const EncoderConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const int d = cfg_.embed_dim;
  const int hidden = static_cast<int>(std::lround(d * cfg_.mlp_ratio));
  patch_embed_ = register_module(
      "patch_embed", nn::Conv2d(nn::Conv2dOptions(cfg_.in_channels, d, cfg_.patch_size).stride(cfg_.patch_size)));
  cls_token_ = register_parameter("cls_token", torch::randn({1, 1, d}) * 0.02);
  pos_embed_ = register_parameter("pos_embed", torch::randn({1, cfg_.tokens(), d}) * 0.02);
  for (int i = 0; i < cfg_.depth; ++i) {
    const std::string p = "block" + std::to_string(i) + "_";
    Block b;
    b.norm1 = register_module(p + "norm1", nn::LayerNorm(nn::LayerNormOptions({d})));
    b.qkv = register_module(p + "qkv", nn::Linear(d, 3 * d));
    b.proj = register_module(p + "proj", nn::Linear(d, d));
    b.norm2 = register_module(p + "norm2", nn::LayerNorm(nn::LayerNormOptions({d})));
    b.fc1 = register_module(p + "fc1", nn::Linear(d, hidden));
    b.fc2 = register_module(p + "fc2", nn::Linear(hidden, d));
    blocks_.push_back(b);
  }
  norm_ = register_module("norm", nn::LayerNorm(nn::LayerNormOptions({d})));
}

torch::Tensor VitEncoderImpl::forward(const torch::Tensor& images, std::vector<torch::Tensor>* attention) {
  if (images.dim() != 4 || images.size(1) != 1 || images.size(2) != cfg_.image_size ||
      images.size(3) != cfg_.image_size) {
    throw ShapeMismatch("encoder expects (B, 1, " + std::to_string(cfg_.image_size) + ", " +
                        std::to_string(cfg_.image_size) + ")");
  }
  // Ink as positive signal on a zero background.
  torch::Tensor x = 1.0 - images;
  if (cfg_.in_channels == 3) x = x.expand({-1, 3, -1, -1});
  x = patch_embed_->forward(x).flatten(2).transpose(1, 2);  // (B, M*N, D), row-major patches
  const auto batch = x.size(0);
  x = torch::cat({cls_token_.expand({batch, -1, -1}), x}, 1);
  if (cfg_.positional) x = x + pos_embed_;

  const int heads = cfg_.heads;
  const int64_t d = cfg_.embed_dim;
  const int64_t dh = d / heads;
  const int64_t T = x.size(1);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (auto& b : blocks_) {
    auto h = b.norm1->forward(x);
    auto qkv = b.qkv->forward(h).reshape({batch, T, 3, heads, dh}).permute({2, 0, 3, 1, 4});
    auto q = qkv[0], k = qkv[1], v = qkv[2];
    auto attn = torch::softmax(torch::matmul(q, k.transpose(-2, -1)) * scale, -1);
    if (attention) attention->push_back(attn.detach());
    auto ctx = torch::matmul(attn, v).transpose(1, 2).reshape({batch, T, d});
    x = x + b.proj->forward(ctx);
    x = x + b.fc2->forward(torch::gelu(b.fc1->forward(b.norm2->forward(x))));
  }
  return norm_->forward(x.select(1, 0));
}

PairHeadImpl::PairHeadImpl(int embed_dim, int hidden) {
  fc1_ = register_module("fc1", nn::Linear(2 * embed_dim, hidden));
  fc2_ = register_module("fc2", nn::Linear(hidden, 2));
}

torch::Tensor PairHeadImpl::forward(const torch::Tensor& left, const torch::Tensor& right) {
  return fc2_->forward(torch::relu(fc1_->forward(torch::cat({left, right}, 1))));
}

IdentNetImpl::IdentNetImpl(const EncoderConfig& cfg) {
  encoder = register_module("encoder", VitEncoder(cfg));
  head = register_module("head", PairHead(cfg.embed_dim, cfg.head_hidden));
}

torch::Tensor IdentNetImpl::forward(const torch::Tensor& left, const torch::Tensor& right) {
  // One encoder, applied to both sides in a single batch.
  auto features = encoder->forward(torch::cat({left, right}, 0));
  auto parts = features.chunk(2, 0);
  return head->forward(parts[0], parts[1]);
}

// ---------------------------------------------------------------------------
// Inference

torch::Tensor images_to_tensor(const std::vector<const Image*>& images, int size) {
  auto out = torch::empty({static_cast<int64_t>(images.size()), 1, size, size});
  auto acc = out.accessor<float, 4>();
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Image& src = *images[i];
    const Image resized = (src.height() == size && src.width() == size) ? src : resize_image(src, size);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) acc[i][0][y][x] = resized.at(y, x);
    }
  }
  return out;
}

std::vector<EncodeResult> encode_batch(VitEncoder& encoder, const std::vector<const Image*>& images) {
  const auto& cfg = encoder->config();
  torch::NoGradGuard no_grad;
  const bool was_training = encoder->is_training();
  encoder->eval();
  std::vector<torch::Tensor> attention;
  auto features = encoder->forward(images_to_tensor(images, cfg.image_size), &attention).contiguous();
  if (was_training) encoder->train();

  std::vector<EncodeResult> out(images.size());
  const int T = cfg.tokens();
  for (std::size_t i = 0; i < images.size(); ++i) {
    auto f = features[static_cast<int64_t>(i)];
    out[i].feature.vector.assign(f.data_ptr<float>(), f.data_ptr<float>() + f.numel());
    AttentionTrace& trace = out[i].trace;
    trace.heads = cfg.heads;
    trace.tokens = T;
    trace.grid_rows = cfg.grid();
    trace.grid_cols = cfg.grid();
    for (const auto& layer : attention) {
      auto a = layer[static_cast<int64_t>(i)].contiguous();
      trace.layers.emplace_back(a.data_ptr<float>(), a.data_ptr<float>() + a.numel());
    }
  }
  return out;
}

EncodeResult encode(VitEncoder& encoder, const Image& img) { return std::move(encode_batch(encoder, {&img}).front()); }

double classify_pair(PairHead& head, const StyleFeature& left, const StyleFeature& right) {
  if (left.vector.size() != right.vector.size()) throw ShapeMismatch("features differ in dimension");
  torch::NoGradGuard no_grad;
  const auto n = static_cast<int64_t>(left.vector.size());
  auto l = torch::from_blob(const_cast<float*>(left.vector.data()), {1, n}).clone();
  auto r = torch::from_blob(const_cast<float*>(right.vector.data()), {1, n}).clone();
  return torch::softmax(head->forward(l, r), 1)[0][1].item<double>();
}

double pair_accuracy(const std::vector<PairSample>& pairs, const PairPredictor& predict) {
  if (pairs.empty()) return 0.0;
  const auto p = predict(pairs);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const bool said_same = p[i] > 0.5;
    correct += said_same == (pairs[i].label == PairLabel::same) ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(pairs.size());
}

namespace {

std::pair<torch::Tensor, torch::Tensor> pair_tensors(const std::vector<PairSample>& pairs, std::size_t begin,
                                                     std::size_t end, const GlyphStore& store) {
  std::vector<const Image*> left, right;
  for (std::size_t i = begin; i < end; ++i) {
    left.push_back(&store.get(pairs[i].left.font_id, pairs[i].left.letter));
    right.push_back(&store.get(pairs[i].right.font_id, pairs[i].right.letter));
  }
  return {images_to_tensor(left, store.image_size()), images_to_tensor(right, store.image_size())};
}

}  // namespace

PairPredictor model_predictor(IdentNet& model, const GlyphStore& store) {
  return [&model, &store](const std::vector<PairSample>& pairs) {
    torch::NoGradGuard no_grad;
    const bool was_training = model->is_training();
    model->eval();
    std::vector<double> out;
    out.reserve(pairs.size());
    constexpr std::size_t chunk = 64;
    for (std::size_t b = 0; b < pairs.size(); b += chunk) {
      const std::size_t e = std::min(pairs.size(), b + chunk);
      auto [l, r] = pair_tensors(pairs, b, e, store);
      auto p = torch::softmax(model->forward(l, r), 1).select(1, 1).contiguous();
      out.insert(out.end(), p.data_ptr<float>(), p.data_ptr<float>() + p.numel());
    }
    if (was_training) model->train();
    return out;
  };
}

double evaluate_identifier(IdentNet& model, const CorpusManifest& manifest, Split split, std::size_t n_pairs,
                           std::uint64_t seed) {
  const GlyphStore store(manifest, model->encoder->config().image_size, split);
  const auto pairs = sample_pairs(manifest, split, n_pairs, seed);
  return pair_accuracy(pairs, model_predictor(model, store));
}

// ---------------------------------------------------------------------------
// Training

namespace {

std::map<std::string, torch::Tensor> snapshot(const torch::nn::Module& module) {
  std::map<std::string, torch::Tensor> out;
  for (const auto& item : module.named_parameters()) out[item.key()] = item.value().detach().clone();
  for (const auto& item : module.named_buffers()) out[item.key()] = item.value().detach().clone();
  return out;
}

void restore(torch::nn::Module& module, const std::map<std::string, torch::Tensor>& state) {
  torch::NoGradGuard no_grad;
  for (auto& item : module.named_parameters()) item.value().copy_(state.at(item.key()));
  for (auto& item : module.named_buffers()) item.value().copy_(state.at(item.key()));
}

}  // namespace

IdentCheckpoint train_identifier(const CorpusManifest& manifest, const EncoderConfig& cfg, const TrainConfig& tcfg,
                                 const std::optional<fs::path>& log_path, std::vector<TrainLogEntry>* log) {
  cfg.validate();
  tcfg.validate();
  if (manifest.fonts_in(Split::train).empty() || manifest.fonts_in(Split::val).empty()) {
    throw InsufficientFonts("identifier training needs train and val splits");
  }
  if (tcfg.threads > 0) torch::set_num_threads(tcfg.threads);
  torch::manual_seed(tcfg.seed);

  IdentCheckpoint ckpt;
  ckpt.encoder = cfg;
  ckpt.train = tcfg;
  ckpt.model = IdentNet(cfg);

  const GlyphStore train_store(manifest, cfg.image_size, Split::train);
  const GlyphStore val_store(manifest, cfg.image_size, Split::val);
  const PairSampler train_pairs(manifest, Split::train);
  const auto val_pairs = PairSampler(manifest, Split::val).sample(tcfg.val_pairs, derive_seed(tcfg.seed, 0x7661));

  std::ofstream log_file;
  if (log_path) {
    if (log_path->has_parent_path()) fs::create_directories(log_path->parent_path());
    log_file.open(*log_path, std::ios::binary);
  }
  auto emit = [&](const TrainLogEntry& e) {
    if (log) log->push_back(e);
    if (log_file) {
      nlohmann::json j{{"step", e.step}, {"loss", e.loss}};
      j["val_accuracy"] = e.val_accuracy ? nlohmann::json(*e.val_accuracy) : nlohmann::json(nullptr);
      log_file << j.dump() << '\n';
      log_file.flush();
    }
  };

  auto predictor = model_predictor(ckpt.model, val_store);
  auto best_state = snapshot(*ckpt.model);
  ckpt.best_val_accuracy = pair_accuracy(val_pairs, predictor);
  ckpt.best_step = 0;
  emit({0, std::nan(""), ckpt.best_val_accuracy});

  torch::optim::Adam optimizer(ckpt.model->parameters(), torch::optim::AdamOptions(tcfg.learning_rate));
  ckpt.model->train();
  double running = 0.0;
  int running_n = 0;
  for (int step = 1; step <= tcfg.steps; ++step) {
    const auto pairs = train_pairs.sample_epoch(tcfg.batch_size, tcfg.seed, static_cast<std::uint64_t>(step));
    auto [left, right] = pair_tensors(pairs, 0, pairs.size(), train_store);
    std::vector<int64_t> labels;
    for (const auto& p : pairs) labels.push_back(p.label == PairLabel::same ? 1 : 0);
    auto target = torch::tensor(labels, torch::kLong);

    const double ramp = tcfg.warmup_steps > 0 ? std::min(1.0, static_cast<double>(step) / tcfg.warmup_steps) : 1.0;
    for (auto& group : optimizer.param_groups()) {
      static_cast<torch::optim::AdamOptions&>(group.options()).lr(tcfg.learning_rate * ramp);
    }
    optimizer.zero_grad();
    auto loss = torch::nn::functional::cross_entropy(ckpt.model->forward(left, right), target);
    const double loss_value = loss.item<double>();
    if (!std::isfinite(loss_value)) {
      throw Divergence("identifier loss became " + std::to_string(loss_value) + " at step " + std::to_string(step));
    }
    loss.backward();
    optimizer.step();
    running += loss_value;
    ++running_n;

    if (step % tcfg.eval_every == 0 || step == tcfg.steps) {
      const double acc = pair_accuracy(val_pairs, predictor);
      emit({step, running / running_n, acc});
      running = 0.0;
      running_n = 0;
      if (acc > ckpt.best_val_accuracy) {
        ckpt.best_val_accuracy = acc;
        ckpt.best_step = step;
        best_state = snapshot(*ckpt.model);
      }
    }
  }
  ckpt.steps_run = tcfg.steps;
  restore(*ckpt.model, best_state);
  ckpt.model->eval();
  return ckpt;
}

void save_identifier(const fs::path& file, const IdentCheckpoint& ckpt) {
  nlohmann::json meta{{"encoder", ckpt.encoder.to_json()},
                      {"train", ckpt.train.to_json()},
                      {"seed", ckpt.train.seed},
                      {"steps_run", ckpt.steps_run},
                      {"best_step", ckpt.best_step},
                      {"best_val_accuracy", ckpt.best_val_accuracy}};
  write_checkpoint(file, "identifier", meta, *ckpt.model);
}

IdentCheckpoint load_identifier(const fs::path& file) {
  const auto meta = read_checkpoint_meta(file, "identifier");
  IdentCheckpoint ckpt;
  ckpt.encoder = EncoderConfig::from_json(meta.at("encoder"));
  ckpt.train = TrainConfig::from_json(meta.at("train"));
  ckpt.steps_run = meta.value("steps_run", 0);
  ckpt.best_step = meta.value("best_step", 0);
  ckpt.best_val_accuracy = meta.value("best_val_accuracy", 0.0);
  ckpt.model = IdentNet(ckpt.encoder);
  read_checkpoint_weights(file, *ckpt.model);
  ckpt.model->eval();
  return ckpt;
}

std::vector<std::string> import_encoder_weights(VitEncoder& encoder, const fs::path& archive) {
  if (!fs::exists(archive)) throw MissingCheckpoint("weight archive not found: " + archive.string());
  torch::serialize::InputArchive in;
  in.load_from(archive.string());
  std::vector<std::string> imported;
  torch::NoGradGuard no_grad;
  for (auto& item : encoder->named_parameters()) {
    torch::Tensor t;
    if (in.try_read(item.key(), t) && t.sizes() == item.value().sizes()) {
      item.value().copy_(t);
      imported.push_back(item.key());
    }
  }
  return imported;
}

}  // namespace fontaware
