#include "fontaware/awloss.hpp"

#include <cmath>
#include <fstream>

#include "fontaware/errors.hpp"
#include "fontaware/rollout.hpp"
#include "json.hpp"

namespace fontaware {

namespace fs = std::filesystem;

std::string to_string(Reduction r) { return r == Reduction::sum ? "sum" : "mean"; }

Reduction parse_reduction(const std::string& s) {
  if (s == "mean") return Reduction::mean;
  if (s == "sum") return Reduction::sum;
  throw DataError("unknown reduction '" + s + "'");
}

namespace {

void check_alpha(const LossConfig& cfg) {
  if (!(cfg.alpha >= 0.0)) throw DataError("alpha must be non-negative");
}

void check_inputs(const Image& gt, const Image& gen, const Image& weights, const LossConfig& cfg) {
  if (!gt.same_shape(gen) || !gt.same_shape(weights)) {
    throw ShapeMismatch("weighted_l1 needs gt, gen and weights of one shape");
  }
  check_alpha(cfg);
}

template <typename T>
double loss_impl(std::span<const T> g, std::span<const T> x, std::span<const T> w, const LossConfig& cfg) {
  double total = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    total += (static_cast<double>(w[i]) + cfg.alpha) * std::abs(static_cast<double>(g[i]) - static_cast<double>(x[i]));
  }
  if (cfg.reduction == Reduction::mean && !g.empty()) total /= static_cast<double>(g.size());
  return total;
}

template <typename T>
void grad_impl(std::span<const T> g, std::span<const T> x, std::span<const T> w, const LossConfig& cfg,
               std::span<T> out) {
  const double scale = cfg.reduction == Reduction::mean && !g.empty() ? 1.0 / static_cast<double>(g.size()) : 1.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double diff = static_cast<double>(x[i]) - static_cast<double>(g[i]);
    const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
    out[i] = static_cast<T>((static_cast<double>(w[i]) + cfg.alpha) * sign * scale);
  }
}

void check_sizes(std::size_t a, std::size_t b, std::size_t c) {
  if (a != b || a != c) throw ShapeMismatch("weighted_l1 needs gt, gen and weights of one size");
}

}  // namespace

double weighted_l1(const Image& gt, const Image& gen, const Image& weights, const LossConfig& cfg) {
  check_inputs(gt, gen, weights, cfg);
  return loss_impl<float>(gt.pixels(), gen.pixels(), weights.pixels(), cfg);
}

Image weighted_l1_grad(const Image& gt, const Image& gen, const Image& weights, const LossConfig& cfg) {
  check_inputs(gt, gen, weights, cfg);
  Image grad(gt.height(), gt.width());
  grad_impl<float>(gt.pixels(), gen.pixels(), weights.pixels(), cfg, grad.pixels());
  return grad;
}

double weighted_l1(std::span<const double> gt, std::span<const double> gen, std::span<const double> weights,
                   const LossConfig& cfg) {
  check_sizes(gt.size(), gen.size(), weights.size());
  check_alpha(cfg);
  return loss_impl<double>(gt, gen, weights, cfg);
}

std::vector<double> weighted_l1_grad(std::span<const double> gt, std::span<const double> gen,
                                     std::span<const double> weights, const LossConfig& cfg) {
  check_sizes(gt.size(), gen.size(), weights.size());
  check_alpha(cfg);
  std::vector<double> out(gt.size());
  grad_impl<double>(gt, gen, weights, cfg, out);
  return out;
}

void WeightCache::insert(const std::string& font_id, char letter, Image weights) {
  if (image_size_ == 0) image_size_ = weights.height();
  if (weights.height() != image_size_ || weights.width() != image_size_) {
    throw ShapeMismatch("weight image for " + font_id + "/" + std::string(1, letter) + " is not " +
                        std::to_string(image_size_) + "x" + std::to_string(image_size_));
  }
  weights_[{font_id, letter}] = std::move(weights);
}

const Image& WeightCache::at(const std::string& font_id, char letter) const {
  auto it = weights_.find({font_id, letter});
  if (it == weights_.end()) throw CacheMiss("no weights for " + font_id + "/" + std::string(1, letter));
  return it->second;
}

bool WeightCache::contains(const std::string& font_id, char letter) const {
  return weights_.count({font_id, letter}) > 0;
}

void WeightCache::save(const fs::path& dir) const {
  fs::create_directories(dir);
  nlohmann::ordered_json index;
  index["version"] = 1;
  index["image_size"] = image_size_;
  index["entries"] = weights_.size();
  for (const auto& [key, img] : weights_) {
    const std::string rel = key.first + "/" + std::string(1, key.second);
    save_weight_image(dir / (rel + ".w"), img, rel);
  }
  std::ofstream out(dir / "cache.json", std::ios::binary);
  out << index.dump(1) << '\n';
}

WeightCache WeightCache::load(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw CacheMiss("weight cache directory not found: " + dir.string());
  WeightCache cache;
  if (fs::exists(dir / "cache.json")) {
    std::ifstream in(dir / "cache.json");
    cache.image_size_ = nlohmann::json::parse(in).value("image_size", 0);
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".w") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    const std::string stem = f.stem().string();
    if (stem.size() != 1) continue;
    cache.insert(f.parent_path().filename().string(), stem[0], load_weight_image(f));
  }
  return cache;
}

}  // namespace fontaware
