#include "fontaware/fewshotgen.hpp"

#include <cmath>
#include <fstream>
#include <map>

#include "fontaware/checkpoint.hpp"
#include "fontaware/errors.hpp"
#include "fontaware/identnet.hpp"
#include "fontaware/rng.hpp"

namespace fontaware {

namespace fs = std::filesystem;
namespace nn = torch::nn;

std::string to_string(LossMode m) { return m == LossMode::aware ? "aware" : "l1"; }

LossMode parse_loss_mode(const std::string& s) {
  if (s == "l1") return LossMode::l1;
  if (s == "aware") return LossMode::aware;
  throw DataError("unknown loss mode '" + s + "' (expected l1 or aware)");
}

GeneratorConfig GeneratorConfig::desk() {
  GeneratorConfig c;
  c.base_channels = 32;
  c.style_dim = 256;
  c.batch_size = 32;
  c.steps = 1500;
  return c;
}

GeneratorConfig GeneratorConfig::paper() { return GeneratorConfig{}; }

void GeneratorConfig::validate() const {
  if (num_classes != 26) throw DataError("num_classes must be 26");
  if (image_size < 16 || image_size % 16 != 0) throw DataError("image_size must be a multiple of 16");
  if (style_dim < 1 || base_channels < 1) throw DataError("style_dim and base_channels must be positive");
  if (!(alpha >= 0)) throw DataError("alpha must be non-negative");
  if (batch_size < 1 || !(learning_rate > 0) || steps < 0 || eval_every < 1) {
    throw DataError("invalid optimisation settings");
  }
  if (k_min < 1 || k_max < k_min || k_max > 25 || eval_k < 1 || eval_k > 25) {
    throw DataError("source counts must satisfy 1 <= k_min <= k_max <= 25");
  }
}

nlohmann::json GeneratorConfig::to_json() const {
  return {{"image_size", image_size}, {"style_dim", style_dim},   {"num_classes", num_classes},
          {"base_channels", base_channels}, {"loss_mode", to_string(loss_mode)}, {"alpha", alpha},
          {"reduction", to_string(reduction)}, {"seed", seed},     {"batch_size", batch_size},
          {"learning_rate", learning_rate}, {"optimizer", "adam"}, {"steps", steps},
          {"eval_every", eval_every}, {"k_min", k_min},           {"k_max", k_max},
          {"eval_k", eval_k},         {"threads", threads}};
}

GeneratorConfig GeneratorConfig::from_json(const nlohmann::json& j) {
  GeneratorConfig c;
  c.image_size = j.at("image_size");
  c.style_dim = j.at("style_dim");
  c.num_classes = j.value("num_classes", 26);
  c.base_channels = j.at("base_channels");
  c.loss_mode = parse_loss_mode(j.at("loss_mode"));
  c.alpha = j.at("alpha");
  c.reduction = parse_reduction(j.value("reduction", std::string("mean")));
  c.seed = j.value("seed", std::uint64_t{0});
  c.batch_size = j.at("batch_size");
  c.learning_rate = j.at("learning_rate");
  c.steps = j.at("steps");
  c.eval_every = j.value("eval_every", 100);
  c.k_min = j.value("k_min", 1);
  c.k_max = j.value("k_max", 8);
  c.eval_k = j.value("eval_k", 5);
  c.threads = j.value("threads", 1);
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Model

FewShotGeneratorImpl::FewShotGeneratorImpl(const GeneratorConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const int c = cfg_.base_channels;
  const int cells = (cfg_.image_size / 16) * (cfg_.image_size / 16);
  auto down = [](int in, int out) { return nn::Conv2d(nn::Conv2dOptions(in, out, 4).stride(2).padding(1)); };
  auto up = [](int in, int out) {
    return nn::ConvTranspose2d(nn::ConvTranspose2dOptions(in, out, 4).stride(2).padding(1));
  };
  auto lrelu = [] { return nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)); };
  auto bn = [](int ch) { return nn::BatchNorm2d(ch); };
  encoder_ = register_module("encoder", nn::Sequential(down(1, c), lrelu(), down(c, 2 * c), bn(2 * c), lrelu(),
                                                       down(2 * c, 4 * c), bn(4 * c), lrelu(), down(4 * c, 8 * c),
                                                       bn(8 * c), lrelu()));
  enc_fc_ = register_module("enc_fc", nn::Linear(8 * c * cells, cfg_.style_dim));
  dec_fc1_ = register_module("dec_fc1", nn::Linear(cfg_.style_dim + cfg_.num_classes, cfg_.style_dim));
  dec_fc2_ = register_module("dec_fc2", nn::Linear(cfg_.style_dim, 8 * c * cells));
  auto last = up(c, 1);
  decoder_ = register_module("decoder", nn::Sequential(up(8 * c, 4 * c), bn(4 * c), nn::ReLU(), up(4 * c, 2 * c),
                                                       bn(2 * c), nn::ReLU(), up(2 * c, c), bn(c), nn::ReLU(), last));
  // Start near a blank (white) page.
  torch::NoGradGuard no_grad;
  last->bias.fill_(2.0);
}

torch::Tensor FewShotGeneratorImpl::encode(const torch::Tensor& images) {
  if (images.dim() != 4 || images.size(1) != 1 || images.size(2) != cfg_.image_size ||
      images.size(3) != cfg_.image_size) {
    throw ShapeMismatch("generator expects (N, 1, " + std::to_string(cfg_.image_size) + ", " +
                        std::to_string(cfg_.image_size) + ") sources");
  }
  auto h = encoder_->forward(1.0 - images).flatten(1);
  return torch::relu(enc_fc_->forward(h));
}

torch::Tensor FewShotGeneratorImpl::decode(const torch::Tensor& style, const torch::Tensor& letters) {
  auto onehot = torch::one_hot(letters, cfg_.num_classes).to(style.scalar_type());
  auto h = torch::relu(dec_fc1_->forward(torch::cat({style, onehot}, 1)));
  h = torch::relu(dec_fc2_->forward(h));
  const int64_t side = cfg_.image_size / 16;
  h = h.view({style.size(0), 8 * cfg_.base_channels, side, side});
  return torch::sigmoid(decoder_->forward(h));
}

torch::Tensor FewShotGeneratorImpl::forward(const torch::Tensor& sources, const torch::Tensor& letters) {
  const auto b = sources.size(0);
  const auto k = sources.size(1);
  auto feats = encode(sources.reshape({b * k, 1, cfg_.image_size, cfg_.image_size}));
  return decode(feats.view({b, k, -1}).mean(1), letters);
}

// ---------------------------------------------------------------------------
// Inference

namespace {

int64_t letter_index(char letter) {
  if (!is_capital(letter)) throw UnknownLetter(std::string("'") + letter + "' is not A-Z");
  return letter - 'A';
}

Image tensor_to_image(const torch::Tensor& t) {
  auto c = t.contiguous();
  const int h = static_cast<int>(c.size(-2));
  const int w = static_cast<int>(c.size(-1));
  return Image(h, w, std::vector<float>(c.data_ptr<float>(), c.data_ptr<float>() + c.numel()));
}

}  // namespace

std::vector<float> encode_style(FewShotGenerator& model, const std::vector<const Image*>& sources) {
  if (sources.empty()) throw EmptySourceSet("style encoding needs at least one source image");
  if (sources.size() > 26) throw DataError("at most 26 source images");
  torch::NoGradGuard no_grad;
  model->eval();
  auto feats = model->encode(images_to_tensor(sources, model->config().image_size)).mean(0).contiguous();
  return {feats.data_ptr<float>(), feats.data_ptr<float>() + feats.numel()};
}

GeneratedSample generate(FewShotGenerator& model, const std::vector<float>& style, char letter) {
  const int64_t idx = letter_index(letter);
  if (static_cast<int>(style.size()) != model->config().style_dim) throw ShapeMismatch("style vector dimension");
  torch::NoGradGuard no_grad;
  model->eval();
  auto s = torch::from_blob(const_cast<float*>(style.data()), {1, static_cast<int64_t>(style.size())}).clone();
  auto out = model->decode(s, torch::tensor({idx}, torch::kLong));
  GeneratedSample sample;
  sample.letter = letter;
  sample.pixels = tensor_to_image(out[0][0]);
  sample.loss_mode = model->config().loss_mode;
  return sample;
}

std::string pick_sources(const std::string& letters, char target, int k, std::uint64_t seed) {
  std::string pool;
  for (char c : letters) {
    if (c != target) pool.push_back(c);
  }
  if (k < 1 || static_cast<std::size_t>(k) > pool.size()) {
    throw DataError("cannot pick " + std::to_string(k) + " sources from " + std::to_string(pool.size()) + " letters");
  }
  Rng rng(seed);
  for (int i = 0; i < k; ++i) {
    std::swap(pool[i], pool[i + uniform_index(rng, pool.size() - i)]);
  }
  return pool.substr(0, k);
}

std::vector<GenerationTask> evaluation_tasks(const CorpusManifest& manifest, Split split, int k, std::uint64_t seed) {
  std::map<std::string, std::string> letters;
  for (const auto* rec : manifest.records_in(split)) letters[rec->font_id].push_back(rec->letter);
  std::vector<GenerationTask> tasks;
  std::uint64_t counter = 0;
  for (auto& [font, ls] : letters) {
    std::sort(ls.begin(), ls.end());
    for (char target : ls) {
      tasks.push_back({font, target, pick_sources(ls, target, k, derive_seed(seed, counter++))});
    }
  }
  return tasks;
}

std::vector<Image> run_tasks(FewShotGenerator& model, const GlyphStore& store, const std::vector<GenerationTask>& tasks) {
  torch::NoGradGuard no_grad;
  model->eval();
  const int size = model->config().image_size;
  std::vector<Image> out;
  out.reserve(tasks.size());
  constexpr std::size_t chunk = 32;
  for (std::size_t b = 0; b < tasks.size(); b += chunk) {
    const std::size_t e = std::min(tasks.size(), b + chunk);
    std::vector<const Image*> images;
    std::vector<int64_t> offsets{0};
    std::vector<int64_t> letters;
    for (std::size_t i = b; i < e; ++i) {
      if (tasks[i].sources.empty()) throw EmptySourceSet("task for " + tasks[i].font_id + " has no sources");
      for (char s : tasks[i].sources) images.push_back(&store.get(tasks[i].font_id, s));
      offsets.push_back(static_cast<int64_t>(images.size()));
      letters.push_back(letter_index(tasks[i].target));
    }
    auto feats = model->encode(images_to_tensor(images, size));
    std::vector<torch::Tensor> styles;
    for (std::size_t i = 0; i + 1 < offsets.size(); ++i) {
      styles.push_back(feats.slice(0, offsets[i], offsets[i + 1]).mean(0));
    }
    auto gen = model->decode(torch::stack(styles), torch::tensor(letters, torch::kLong));
    for (int64_t i = 0; i < gen.size(0); ++i) out.push_back(tensor_to_image(gen[i][0]));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training

namespace {

torch::Tensor weight_tensor(const WeightCache& cache, const std::vector<GlyphKey>& keys, int size) {
  std::vector<const Image*> imgs;
  for (const auto& key : keys) imgs.push_back(&cache.at(key.font_id, key.letter));
  auto out = torch::empty({static_cast<int64_t>(keys.size()), 1, size, size});
  auto acc = out.accessor<float, 4>();
  for (std::size_t i = 0; i < imgs.size(); ++i) {
    if (imgs[i]->height() != size || imgs[i]->width() != size) throw ShapeMismatch("weight image size");
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) acc[static_cast<int64_t>(i)][0][y][x] = imgs[i]->at(y, x);
    }
  }
  return out;
}

torch::Tensor reconstruction_loss(const torch::Tensor& gen, const torch::Tensor& gt, const torch::Tensor* weights,
                                  const GeneratorConfig& cfg) {
  if (cfg.loss_mode == LossMode::l1) {
    return torch::nn::functional::l1_loss(
        gen, gt,
        torch::nn::functional::L1LossFuncOptions().reduction(cfg.reduction == Reduction::sum
                                                                  ? torch::nn::functional::L1LossFuncOptions::reduction_t(torch::kSum)
                                                                  : torch::nn::functional::L1LossFuncOptions::reduction_t(torch::kMean)));
  }
  auto per_pixel = (*weights + cfg.alpha) * (gt - gen).abs();
  return cfg.reduction == Reduction::sum ? per_pixel.sum() : per_pixel.mean();
}

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

GeneratorCheckpoint train_generator(const CorpusManifest& manifest, const GeneratorConfig& cfg,
                                    const WeightCache* cache, const std::optional<fs::path>& log_path,
                                    std::vector<GenLogEntry>* log) {
  cfg.validate();
  if (cfg.loss_mode == LossMode::aware && !cache) throw CacheMiss("aware loss requires a weight cache");
  if (cache && cache->image_size() != cfg.image_size) {
    throw ShapeMismatch("weight cache is " + std::to_string(cache->image_size()) + " px, generator uses " +
                        std::to_string(cfg.image_size));
  }
  if (cfg.threads > 0) torch::set_num_threads(cfg.threads);
  torch::manual_seed(cfg.seed);

  GeneratorCheckpoint ckpt;
  ckpt.config = cfg;
  ckpt.model = FewShotGenerator(cfg);
  ckpt.val_metric = cache ? "weighted_l1" : "l1";

  const GlyphStore train_store(manifest, cfg.image_size, Split::train);
  const GlyphStore val_store(manifest, cfg.image_size, Split::val);
  std::map<std::string, std::string> train_letters;
  for (const auto* rec : manifest.records_in(Split::train)) train_letters[rec->font_id].push_back(rec->letter);
  std::vector<std::string> train_fonts;
  for (auto& [font, ls] : train_letters) {
    std::sort(ls.begin(), ls.end());
    if (static_cast<int>(ls.size()) <= cfg.k_max) throw InsufficientFonts("font " + font + " has too few letters");
    train_fonts.push_back(font);
  }
  if (train_fonts.empty()) throw InsufficientFonts("no training fonts");
  const auto val_tasks = evaluation_tasks(manifest, Split::val, cfg.eval_k, derive_seed(cfg.seed, 0x76616c));

  std::ofstream log_file;
  if (log_path) {
    if (log_path->has_parent_path()) fs::create_directories(log_path->parent_path());
    log_file.open(*log_path, std::ios::binary);
  }
  auto emit = [&](const GenLogEntry& e) {
    if (log) log->push_back(e);
    if (log_file) {
      nlohmann::json j{{"step", e.step}, {"loss", e.loss}, {"loss_mode", to_string(cfg.loss_mode)},
                       {"alpha", cfg.alpha}, {"reduction", to_string(cfg.reduction)}};
      j["val_" + ckpt.val_metric] = e.val_loss ? nlohmann::json(*e.val_loss) : nlohmann::json(nullptr);
      log_file << j.dump() << '\n';
      log_file.flush();
    }
  };

  auto validate_now = [&]() {
    if (val_tasks.empty()) return 0.0;
    const auto images = run_tasks(ckpt.model, val_store, val_tasks);
    double total = 0.0;
    for (std::size_t i = 0; i < images.size(); ++i) {
      const Image& gt = val_store.get(val_tasks[i].font_id, val_tasks[i].target);
      if (cache) {
        total += weighted_l1(gt, images[i], cache->at(val_tasks[i].font_id, val_tasks[i].target),
                             LossConfig{0.0, Reduction::mean});
      } else {
        const Image ones(gt.height(), gt.width(), 0.0f);
        total += weighted_l1(gt, images[i], ones, LossConfig{1.0, Reduction::mean});
      }
    }
    ckpt.model->train();
    return total / static_cast<double>(images.size());
  };

  auto best_state = snapshot(*ckpt.model);
  ckpt.best_val_loss = validate_now();
  ckpt.best_step = 0;
  emit({0, std::nan(""), ckpt.best_val_loss});

  torch::optim::Adam optimizer(ckpt.model->parameters(), torch::optim::AdamOptions(cfg.learning_rate));
  ckpt.model->train();
  const int size = cfg.image_size;
  double running = 0.0;
  int running_n = 0;
  for (int step = 1; step <= cfg.steps; ++step) {
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(step)));
    const int k = cfg.k_min + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(cfg.k_max - cfg.k_min + 1)));
    std::vector<const Image*> sources;
    std::vector<const Image*> targets;
    std::vector<GlyphKey> keys;
    std::vector<int64_t> letters;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const std::string& font = train_fonts[uniform_index(rng, train_fonts.size())];
      const std::string& ls = train_letters[font];
      const char target = ls[uniform_index(rng, ls.size())];
      const std::string src = pick_sources(ls, target, k, rng());
      for (char s : src) {
        if (s == target) throw Error("source sampler returned the target letter");
        sources.push_back(&train_store.get(font, s));
      }
      targets.push_back(&train_store.get(font, target));
      keys.push_back({font, target});
      letters.push_back(target - 'A');
    }
    auto src_t = images_to_tensor(sources, size).view({cfg.batch_size, k, 1, size, size});
    auto gt_t = images_to_tensor(targets, size);
    torch::Tensor w_t;
    if (cfg.loss_mode == LossMode::aware) w_t = weight_tensor(*cache, keys, size);

    optimizer.zero_grad();
    auto gen = ckpt.model->forward(src_t, torch::tensor(letters, torch::kLong));
    auto loss = reconstruction_loss(gen, gt_t, cfg.loss_mode == LossMode::aware ? &w_t : nullptr, cfg);
    const double loss_value = loss.item<double>();
    if (!std::isfinite(loss_value)) {
      throw Divergence("generator loss became " + std::to_string(loss_value) + " at step " + std::to_string(step));
    }
    loss.backward();
    optimizer.step();
    running += loss_value;
    ++running_n;
    if (log) log->push_back({step, loss_value, std::nullopt});

    if (step % cfg.eval_every == 0 || step == cfg.steps) {
      const double val = validate_now();
      GenLogEntry entry{step, running / running_n, val};
      if (log) log->back().val_loss = val;
      if (log_file) {
        std::vector<GenLogEntry>* saved = log;
        log = nullptr;
        emit(entry);
        log = saved;
      }
      running = 0.0;
      running_n = 0;
      if (val < ckpt.best_val_loss) {
        ckpt.best_val_loss = val;
        ckpt.best_step = step;
        best_state = snapshot(*ckpt.model);
      }
    }
  }
  ckpt.steps_run = cfg.steps;
  restore(*ckpt.model, best_state);
  ckpt.model->eval();
  return ckpt;
}

void save_generator(const fs::path& file, const GeneratorCheckpoint& ckpt) {
  nlohmann::json meta{{"generator", ckpt.config.to_json()}, {"seed", ckpt.config.seed},
                      {"steps_run", ckpt.steps_run},        {"best_step", ckpt.best_step},
                      {"best_val_loss", ckpt.best_val_loss}, {"val_metric", ckpt.val_metric}};
  write_checkpoint(file, "generator", meta, *ckpt.model);
}

GeneratorCheckpoint load_generator(const fs::path& file) {
  const auto meta = read_checkpoint_meta(file, "generator");
  GeneratorCheckpoint ckpt;
  ckpt.config = GeneratorConfig::from_json(meta.at("generator"));
  ckpt.steps_run = meta.value("steps_run", 0);
  ckpt.best_step = meta.value("best_step", 0);
  ckpt.best_val_loss = meta.value("best_val_loss", 0.0);
  ckpt.val_metric = meta.value("val_metric", std::string("l1"));
  ckpt.model = FewShotGenerator(ckpt.config);
  read_checkpoint_weights(file, *ckpt.model);
  ckpt.model->eval();
  return ckpt;
}

Image letter_sheet(const std::vector<Image>& letters) {
  if (letters.empty()) return {};
  const int s = letters.front().height();
  constexpr int cols = 13;
  const int rows = (static_cast<int>(letters.size()) + cols - 1) / cols;
  Image sheet(rows * s, cols * s, 1.0f);
  for (std::size_t i = 0; i < letters.size(); ++i) {
    const int r = static_cast<int>(i) / cols, c = static_cast<int>(i) % cols;
    for (int y = 0; y < s; ++y) {
      for (int x = 0; x < s; ++x) sheet.at(r * s + y, c * s + x) = letters[i].at(y, x);
    }
  }
  return sheet;
}

}  // namespace fontaware
