// fontaware: corpus building, identifier training, awareness extraction,
// few-shot generation and evaluation from one entry point.
//
// Every command resolves its options into a JSON object, writes it to
// `config.json` in its output directory and then runs from that object alone,
// so `fontaware replay <config.json> --out DIR` repeats a run exactly.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "fontaware/checkpoint.hpp"
#include "fontaware/corpus.hpp"
#include "fontaware/errors.hpp"
#include "fontaware/fewshotgen.hpp"
#include "fontaware/identnet.hpp"
#include "fontaware/metrics.hpp"
#include "fontaware/pairs.hpp"
#include "fontaware/rollout.hpp"
#include "fontaware/weightcache.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace fontaware;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitDivergence = 4;
constexpr int kConfigVersion = 1;

std::string absolute_path(const std::string& p) {
  return p.empty() ? p : fs::weakly_canonical(fs::absolute(p)).string();
}

fs::path run_root() {
  if (const char* env = std::getenv("FONTAWARE_RUN_ROOT"); env && *env) return env;
  return fs::path("runs");
}

void write_text(const fs::path& file, const std::string& text) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw DataError("cannot write " + file.string());
  out << text;
}

void write_json(const fs::path& file, const json& j) { write_text(file, j.dump(2) + "\n"); }

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw DataError("missing " + what + ": " + p.string());
}

CorpusManifest open_manifest(const json& cfg) {
  const fs::path p = cfg.at("manifest").get<std::string>();
  require_file(p, "corpus manifest");
  return load_manifest(p);
}

std::optional<Split> split_arg(const json& cfg) {
  const std::string s = cfg.at("split");
  if (s == "all") return std::nullopt;
  return parse_split(s);
}

std::vector<const ManifestRecord*> records_for(const CorpusManifest& m, const std::optional<Split>& split) {
  if (split) return m.records_in(*split);
  std::vector<const ManifestRecord*> out;
  for (const auto& r : m.records) out.push_back(&r);
  return out;
}

// ---------------------------------------------------------------------------
// Commands. Each takes the resolved config and its output directory.

using Handler = std::function<void(const json& cfg, const fs::path& out)>;

void cmd_corpus_build(const json& cfg, const fs::path& out) {
  const fs::path fonts_dir = cfg.at("fonts").get<std::string>();
  if (!fs::is_directory(fonts_dir)) throw DataError("fonts directory not found: " + fonts_dir.string());
  std::optional<fs::path> metadata;
  if (!cfg.at("metadata").get<std::string>().empty()) metadata = cfg.at("metadata").get<std::string>();
  const auto fonts = discover_fonts(fonts_dir, metadata);
  if (fonts.empty()) throw TooFewFonts("no .ttf/.otf files under " + fonts_dir.string());
  ManifestOptions opts;
  opts.render_size = cfg.at("size");
  opts.margin = cfg.at("margin");
  opts.ratios = SplitRatios::parse(cfg.at("ratios"));
  opts.seed = cfg.at("seed");
  opts.letters = cfg.at("letters");
  auto manifest = build_manifest(fonts, opts);
  write_corpus(manifest, fonts, out);
  std::cout << "corpus: " << manifest.records.size() << " glyphs, " << manifest.fonts_in(Split::train).size() << "/"
            << manifest.fonts_in(Split::val).size() << "/" << manifest.fonts_in(Split::test).size()
            << " fonts (train/val/test), " << manifest.dropped_fonts.size() << " dropped\n";
}

void cmd_pairs_dump(const json& cfg, const fs::path& out) {
  const auto manifest = open_manifest(cfg);
  const auto pairs = sample_pairs(manifest, parse_split(cfg.at("split")), cfg.at("count"), cfg.at("seed"));
  dump_pairs_jsonl(manifest, pairs, out / "pairs.jsonl");
  std::cout << "pairs: " << pairs.size() << "\n";
}

EncoderConfig encoder_from(const json& cfg) {
  return EncoderConfig::from_json(nlohmann::json::parse(cfg.at("encoder").dump()));
}
TrainConfig train_from(const json& cfg) { return TrainConfig::from_json(nlohmann::json::parse(cfg.at("train").dump())); }

void cmd_ident_train(const json& cfg, const fs::path& out) {
  const auto manifest = open_manifest(cfg);
  const auto ckpt = train_identifier(manifest, encoder_from(cfg), train_from(cfg), out / "train_log.jsonl");
  save_identifier(out / "identifier.ckpt", ckpt);
  std::cout << "identifier: best val accuracy " << ckpt.best_val_accuracy << " at step " << ckpt.best_step << "\n";
}

IdentCheckpoint open_identifier(const json& cfg) {
  const fs::path p = cfg.at("ckpt").get<std::string>();
  if (!fs::exists(p)) throw MissingCheckpoint("identifier checkpoint not found: " + p.string());
  return load_identifier(p);
}

void cmd_ident_eval(const json& cfg, const fs::path& out) {
  const auto manifest = open_manifest(cfg);
  auto ckpt = open_identifier(cfg);
  const double acc =
      evaluate_identifier(ckpt.model, manifest, parse_split(cfg.at("split")), cfg.at("pairs"), cfg.at("seed"));
  json result{{"split", cfg.at("split")},
              {"pairs", cfg.at("pairs")},
              {"seed", cfg.at("seed")},
              {"accuracy", acc},
              {"checkpoint_digest", file_digest(cfg.at("ckpt").get<std::string>())}};
  write_json(out / "eval.json", result);
  std::cout << "accuracy: " << acc << "\n";
}

void cmd_awareness_extract(const json& cfg, const fs::path& out) {
  const auto manifest = open_manifest(cfg);
  auto ckpt = open_identifier(cfg);
  auto& encoder = ckpt.model->encoder;
  const auto norm = cfg.at("normalize").get<bool>() ? MapNormalization::minmax : MapNormalization::raw;
  std::size_t n = 0;
  for (const auto* rec : records_for(manifest, split_arg(cfg))) {
    const Image img = read_png_gray(manifest.image_file(*rec));
    auto map = extract_awareness(encoder, img, norm);
    map.source_image = rec->image_path;
    save_map(out / "maps" / rec->font_id / (std::string(1, rec->letter) + ".map"), map);
    ++n;
  }
  std::cout << "maps: " << n << "\n";
}

void cmd_awareness_overlay(const json& cfg, const fs::path& out) {
  const auto manifest = open_manifest(cfg);
  auto ckpt = open_identifier(cfg);
  const std::string font = cfg.at("font");
  const std::string letters = cfg.at("letters");
  std::size_t n = 0;
  for (const auto* rec : records_for(manifest, split_arg(cfg))) {
    if (!font.empty() && rec->font_id != font) continue;
    if (letters.find(rec->letter) == std::string::npos) continue;
    const Image img = read_png_gray(manifest.image_file(*rec));
    const auto map = extract_awareness(ckpt.model->encoder, img);
    write_png_rgb(out / "overlays" / rec->font_id / (std::string(1, rec->letter) + ".png"), render_overlay(img, map));
    ++n;
  }
  if (n == 0) throw DataError("no glyphs matched the overlay selection");
  std::cout << "overlays: " << n << "\n";
}

void cmd_awareness_cache(const json& cfg, const fs::path& out) {
  const auto manifest = open_manifest(cfg);
  const auto cache = build_weight_cache(manifest, fs::path(cfg.at("ckpt").get<std::string>()), cfg.at("size"));
  cache.save(out / "cache");
  std::cout << "cache: " << cache.size() << " weight images at " << cache.image_size() << " px\n";
}

// Accepts the cache directory itself or the run directory of `awareness cache`.
WeightCache open_cache(const fs::path& dir) {
  if (!fs::exists(dir / "cache.json") && fs::exists(dir / "cache" / "cache.json")) return WeightCache::load(dir / "cache");
  require_file(dir / "cache.json", "weight cache");
  return WeightCache::load(dir);
}

GeneratorConfig generator_from(const json& cfg) {
  return GeneratorConfig::from_json(nlohmann::json::parse(cfg.at("generator").dump()));
}

void cmd_gen_train(const json& cfg, const fs::path& out) {
  const auto manifest = open_manifest(cfg);
  const auto gcfg = generator_from(cfg);
  std::optional<WeightCache> cache;
  const std::string cache_dir = cfg.at("cache");
  if (!cache_dir.empty()) {
    cache = open_cache(cache_dir);
  } else if (gcfg.loss_mode == LossMode::aware) {
    throw CacheMiss("--loss aware needs --cache (build one with `awareness cache`)");
  }
  const auto ckpt = train_generator(manifest, gcfg, cache ? &*cache : nullptr, out / "train_log.jsonl");
  save_generator(out / "generator.ckpt", ckpt);
  std::cout << "generator: best val " << ckpt.val_metric << " " << ckpt.best_val_loss << " at step " << ckpt.best_step
            << "\n";
}

void cmd_gen_sample(const json& cfg, const fs::path& out) {
  const auto manifest = open_manifest(cfg);
  const fs::path ckpt_path = cfg.at("ckpt").get<std::string>();
  if (!fs::exists(ckpt_path)) throw MissingCheckpoint("generator checkpoint not found: " + ckpt_path.string());
  auto ckpt = load_generator(ckpt_path);
  const Split split = parse_split(cfg.at("split"));
  const GlyphStore store(manifest, ckpt.config.image_size, split);
  const auto tasks = evaluation_tasks(manifest, split, cfg.at("k"), cfg.at("seed"));
  const auto images = run_tasks(ckpt.model, store, tasks);
  json task_list = json::array();
  std::map<std::string, std::vector<Image>> sheets;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto& t = tasks[i];
    const std::string name = std::string(1, t.target) + ".png";
    write_png_gray(out / "gen" / t.font_id / name, images[i]);
    write_png_gray(out / "gt" / t.font_id / name, store.get(t.font_id, t.target));
    task_list.push_back({{"font_id", t.font_id}, {"target", std::string(1, t.target)}, {"sources", t.sources}});
    sheets[t.font_id].push_back(images[i]);
  }
  for (const auto& [font, imgs] : sheets) write_png_gray(out / "sheets" / (font + ".png"), letter_sheet(imgs));
  write_json(out / "tasks.json", task_list);
  std::cout << "generated: " << images.size() << " glyphs for " << sheets.size() << " fonts\n";
}

void cmd_metrics_report(const json& cfg, const fs::path& out) {
  std::optional<WeightCache> cache;
  const std::string cache_dir = cfg.at("cache");
  if (!cache_dir.empty()) cache = open_cache(cache_dir);
  ReportOptions opts;
  opts.header_extra["gt"] = cfg.at("gt");
  opts.header_extra["gen"] = cfg.at("gen");
  if (!cfg.at("ckpt").get<std::string>().empty()) {
    opts.header_extra["checkpoint_digest"] = file_digest(cfg.at("ckpt").get<std::string>());
  }
  const auto report = build_report(cfg.at("gt").get<std::string>(), cfg.at("gen").get<std::string>(),
                                   cache ? &*cache : nullptr, opts);
  write_report(report, out);
  for (const auto& [name, value] : report.aggregates) std::cout << name << ": " << value << "\n";
}

void cmd_metrics_pca(const json& cfg, const fs::path& out) {
  const auto manifest = open_manifest(cfg);
  auto ckpt = open_identifier(cfg);
  std::vector<Image> images;
  std::vector<std::string> labels;
  const std::string letters = cfg.at("letters");
  for (const auto* rec : records_for(manifest, split_arg(cfg))) {
    if (letters.find(rec->letter) == std::string::npos) continue;
    images.push_back(read_png_gray(manifest.image_file(*rec)));
    labels.push_back(rec->font_id);
  }
  std::vector<const Image*> ptrs;
  for (const auto& img : images) ptrs.push_back(&img);
  std::vector<std::vector<float>> features;
  for (auto& r : encode_batch(ckpt.model->encoder, ptrs)) features.push_back(std::move(r.feature.vector));
  const auto pca = pca_style_features(features);
  write_png_rgb(out / "pca.png", pca_scatter(pca, labels));
  json points = json::array();
  for (std::size_t i = 0; i < labels.size(); ++i) points.push_back({labels[i], pca.coords[i][0], pca.coords[i][1]});
  write_json(out / "pca.json", {{"variance", pca.variance}, {"degenerate", pca.degenerate}, {"points", points}});
  std::cout << "pca: " << labels.size() << " points\n";
}

const std::map<std::string, Handler>& handlers() {
  static const std::map<std::string, Handler> table{
      {"corpus build", cmd_corpus_build},         {"pairs dump", cmd_pairs_dump},
      {"ident train", cmd_ident_train},           {"ident eval", cmd_ident_eval},
      {"awareness extract", cmd_awareness_extract}, {"awareness overlay", cmd_awareness_overlay},
      {"awareness cache", cmd_awareness_cache},   {"gen train", cmd_gen_train},
      {"gen sample", cmd_gen_sample},             {"metrics report", cmd_metrics_report},
      {"metrics pca", cmd_metrics_pca},
  };
  return table;
}

// Writes config.json and runs. The corpus directory is the command's output,
// so its config lands next to manifest.json.
void execute(const std::string& command, json cfg, const fs::path& out) {
  const auto it = handlers().find(command);
  if (it == handlers().end()) throw DataError("unknown command in config: " + command);
  fs::create_directories(out);
  json doc{{"version", kConfigVersion}, {"command", command}, {"config", cfg}};
  write_json(out / "config.json", doc);
  it->second(cfg, out);
}

fs::path default_out(const std::string& command, std::uint64_t seed) {
  std::string name = command;
  std::replace(name.begin(), name.end(), ' ', '-');
  return run_root() / (name + "-seed" + std::to_string(seed));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fontaware: font style awareness pipeline"};
  app.require_subcommand(1);
  std::string preset = "desk";
  std::uint64_t seed = 0;
  app.add_option("--preset", preset, "Hyperparameter preset")->check(CLI::IsMember({"desk", "paper"}));
  app.add_option("--seed", seed, "Random seed");

  std::string command;
  json cfg;
  std::string out_dir;

  auto add_out = [&](CLI::App* sub) { sub->add_option("--out", out_dir, "Output directory"); };

  // corpus
  auto* corpus = app.add_subcommand("corpus", "Font corpus")->require_subcommand(1);
  struct {
    std::string fonts, metadata, ratios = "8:1:1", letters = capital_letters();
    int size = 224, margin = 5;
  } corpus_opts;
  auto* corpus_build = corpus->add_subcommand("build", "Render glyphs, split fonts by family, write manifest");
  corpus_build->add_option("--fonts", corpus_opts.fonts, "Font directory")->required();
  corpus_build->add_option("--metadata", corpus_opts.metadata, "fonts.json (default: <fonts>/fonts.json if present)");
  corpus_build->add_option("--size", corpus_opts.size, "Render size");
  corpus_build->add_option("--margin", corpus_opts.margin, "Margin in pixels");
  corpus_build->add_option("--ratios", corpus_opts.ratios, "train:val:test");
  corpus_build->add_option("--letters", corpus_opts.letters, "Letters to render");
  corpus_build->add_option("--seed", seed, "Split seed");
  add_out(corpus_build);
  corpus_build->callback([&] {
    command = "corpus build";
    cfg = {{"fonts", absolute_path(corpus_opts.fonts)}, {"metadata", absolute_path(corpus_opts.metadata)},
           {"size", corpus_opts.size},  {"margin", corpus_opts.margin},
           {"ratios", corpus_opts.ratios}, {"letters", corpus_opts.letters},
           {"seed", seed}};
  });

  // shared options
  std::string manifest, ckpt, split = "test";
  auto add_manifest = [&](CLI::App* sub) { sub->add_option("--manifest", manifest, "Corpus directory or manifest.json")->required(); };

  // pairs
  auto* pairs = app.add_subcommand("pairs", "Pair sampling")->require_subcommand(1);
  std::size_t pair_count = 1000;
  auto* pairs_dump = pairs->add_subcommand("dump", "Write sampled pairs as JSON lines");
  add_manifest(pairs_dump);
  pairs_dump->add_option("--split", split)->check(CLI::IsMember({"train", "val", "test"}));
  pairs_dump->add_option("--count", pair_count);
  pairs_dump->add_option("--seed", seed);
  add_out(pairs_dump);
  pairs_dump->callback([&] {
    command = "pairs dump";
    cfg = {{"manifest", absolute_path(manifest)}, {"split", split}, {"count", pair_count}, {"seed", seed}};
  });

  // ident
  auto* ident = app.add_subcommand("ident", "Font identifier")->require_subcommand(1);
  struct {
    std::optional<int> steps, warmup, batch, eval_every, val_pairs, threads, image_size, patch_size, depth, heads, embed_dim, head_hidden;
    std::optional<double> lr;
  } ident_opts;
  auto* ident_train = ident->add_subcommand("train", "Train the pair identifier");
  add_manifest(ident_train);
  ident_train->add_option("--steps", ident_opts.steps);
  ident_train->add_option("--batch", ident_opts.batch);
  ident_train->add_option("--lr", ident_opts.lr);
  ident_train->add_option("--warmup", ident_opts.warmup, "Learning-rate warmup steps");
  ident_train->add_option("--eval-every", ident_opts.eval_every);
  ident_train->add_option("--val-pairs", ident_opts.val_pairs);
  ident_train->add_option("--threads", ident_opts.threads);
  ident_train->add_option("--image-size", ident_opts.image_size);
  ident_train->add_option("--patch-size", ident_opts.patch_size);
  ident_train->add_option("--depth", ident_opts.depth);
  ident_train->add_option("--heads", ident_opts.heads);
  ident_train->add_option("--embed-dim", ident_opts.embed_dim);
  ident_train->add_option("--head-hidden", ident_opts.head_hidden, "Pair classifier hidden width");
  ident_train->add_option("--seed", seed);
  add_out(ident_train);
  ident_train->callback([&] {
    command = "ident train";
    auto enc = preset == "paper" ? EncoderConfig::paper() : EncoderConfig::desk();
    auto tr = preset == "paper" ? TrainConfig::paper() : TrainConfig::desk();
    if (ident_opts.image_size) enc.image_size = *ident_opts.image_size;
    if (ident_opts.patch_size) enc.patch_size = *ident_opts.patch_size;
    if (ident_opts.depth) enc.depth = *ident_opts.depth;
    if (ident_opts.heads) enc.heads = *ident_opts.heads;
    if (ident_opts.embed_dim) enc.embed_dim = *ident_opts.embed_dim;
    if (ident_opts.head_hidden) enc.head_hidden = *ident_opts.head_hidden;
    if (ident_opts.steps) tr.steps = *ident_opts.steps;
    if (ident_opts.batch) tr.batch_size = *ident_opts.batch;
    if (ident_opts.lr) tr.learning_rate = *ident_opts.lr;
    if (ident_opts.warmup) tr.warmup_steps = *ident_opts.warmup;
    if (ident_opts.eval_every) tr.eval_every = *ident_opts.eval_every;
    if (ident_opts.val_pairs) tr.val_pairs = *ident_opts.val_pairs;
    if (ident_opts.threads) tr.threads = *ident_opts.threads;
    tr.seed = seed;
    enc.validate();
    tr.validate();
    cfg = {{"manifest", absolute_path(manifest)}, {"preset", preset}, {"seed", seed},
           {"encoder", json::parse(enc.to_json().dump())}, {"train", json::parse(tr.to_json().dump())}};
  });

  std::size_t eval_pairs = 1000;
  auto* ident_eval = ident->add_subcommand("eval", "Balanced pair accuracy on a split");
  add_manifest(ident_eval);
  ident_eval->add_option("--ckpt", ckpt, "identifier.ckpt")->required();
  ident_eval->add_option("--split", split)->check(CLI::IsMember({"train", "val", "test"}));
  ident_eval->add_option("--pairs", eval_pairs);
  ident_eval->add_option("--seed", seed);
  add_out(ident_eval);
  ident_eval->callback([&] {
    command = "ident eval";
    cfg = {{"manifest", absolute_path(manifest)}, {"ckpt", absolute_path(ckpt)}, {"split", split},
           {"pairs", eval_pairs}, {"seed", seed}};
  });

  // awareness
  auto* aw = app.add_subcommand("awareness", "Attention rollout maps")->require_subcommand(1);
  bool raw_maps = false;
  std::string font, letters = capital_letters();
  int cache_size = 64;
  auto split_check = CLI::IsMember({"train", "val", "test", "all"});
  auto* aw_extract = aw->add_subcommand("extract", "One map file per glyph of a split");
  add_manifest(aw_extract);
  aw_extract->add_option("--ckpt", ckpt)->required();
  aw_extract->add_option("--split", split)->check(split_check);
  aw_extract->add_flag("--raw", raw_maps, "Skip minmax normalization");
  add_out(aw_extract);
  aw_extract->callback([&] {
    command = "awareness extract";
    cfg = {{"manifest", absolute_path(manifest)}, {"ckpt", absolute_path(ckpt)}, {"split", split},
           {"normalize", !raw_maps}};
  });
  auto* aw_overlay = aw->add_subcommand("overlay", "Heatmap overlays");
  add_manifest(aw_overlay);
  aw_overlay->add_option("--ckpt", ckpt)->required();
  aw_overlay->add_option("--split", split)->check(split_check);
  aw_overlay->add_option("--font", font, "Restrict to one font id");
  aw_overlay->add_option("--letters", letters);
  add_out(aw_overlay);
  aw_overlay->callback([&] {
    command = "awareness overlay";
    cfg = {{"manifest", absolute_path(manifest)}, {"ckpt", absolute_path(ckpt)}, {"split", split},
           {"font", font}, {"letters", letters}};
  });
  auto* aw_cache = aw->add_subcommand("cache", "Pixel weight cache for the aware loss (all splits)");
  add_manifest(aw_cache);
  aw_cache->add_option("--ckpt", ckpt)->required();
  aw_cache->add_option("--size", cache_size, "Weight image size");
  add_out(aw_cache);
  aw_cache->callback([&] {
    command = "awareness cache";
    cfg = {{"manifest", absolute_path(manifest)}, {"ckpt", absolute_path(ckpt)}, {"size", cache_size}};
  });

  // gen
  auto* gen = app.add_subcommand("gen", "Few-shot generator")->require_subcommand(1);
  struct {
    std::string loss = "l1", reduction = "mean", cache;
    std::optional<double> alpha, lr;
    std::optional<int> steps, batch, eval_every, base_channels, style_dim, threads, k_min, k_max;
    int k = 5;
  } gen_opts;
  auto* gen_train = gen->add_subcommand("train", "Train with plain L1 or the awareness-weighted loss");
  add_manifest(gen_train);
  gen_train->add_option("--loss", gen_opts.loss)->check(CLI::IsMember({"l1", "aware"}));
  gen_train->add_option("--alpha", gen_opts.alpha);
  gen_train->add_option("--reduction", gen_opts.reduction)->check(CLI::IsMember({"mean", "sum"}));
  gen_train->add_option("--cache", gen_opts.cache, "Weight cache directory");
  gen_train->add_option("--steps", gen_opts.steps);
  gen_train->add_option("--batch", gen_opts.batch);
  gen_train->add_option("--lr", gen_opts.lr);
  gen_train->add_option("--eval-every", gen_opts.eval_every);
  gen_train->add_option("--base-channels", gen_opts.base_channels);
  gen_train->add_option("--style-dim", gen_opts.style_dim);
  gen_train->add_option("--k-min", gen_opts.k_min);
  gen_train->add_option("--k-max", gen_opts.k_max);
  gen_train->add_option("--eval-k", gen_opts.k);
  gen_train->add_option("--threads", gen_opts.threads);
  gen_train->add_option("--seed", seed);
  add_out(gen_train);
  gen_train->callback([&] {
    command = "gen train";
    auto g = preset == "paper" ? GeneratorConfig::paper() : GeneratorConfig::desk();
    g.loss_mode = parse_loss_mode(gen_opts.loss);
    g.reduction = parse_reduction(gen_opts.reduction);
    if (gen_opts.alpha) g.alpha = *gen_opts.alpha;
    if (gen_opts.steps) g.steps = *gen_opts.steps;
    if (gen_opts.batch) g.batch_size = *gen_opts.batch;
    if (gen_opts.lr) g.learning_rate = *gen_opts.lr;
    if (gen_opts.eval_every) g.eval_every = *gen_opts.eval_every;
    if (gen_opts.base_channels) g.base_channels = *gen_opts.base_channels;
    if (gen_opts.style_dim) g.style_dim = *gen_opts.style_dim;
    if (gen_opts.k_min) g.k_min = *gen_opts.k_min;
    if (gen_opts.k_max) g.k_max = *gen_opts.k_max;
    if (gen_opts.threads) g.threads = *gen_opts.threads;
    g.eval_k = gen_opts.k;
    g.seed = seed;
    g.validate();
    cfg = {{"manifest", absolute_path(manifest)}, {"preset", preset}, {"seed", seed},
           {"cache", absolute_path(gen_opts.cache)}, {"generator", json::parse(g.to_json().dump())}};
  });
  auto* gen_sample = gen->add_subcommand("sample", "Generate every glyph of a split from k seeded sources");
  add_manifest(gen_sample);
  gen_sample->add_option("--ckpt", ckpt, "generator.ckpt")->required();
  gen_sample->add_option("--split", split)->check(CLI::IsMember({"train", "val", "test"}));
  gen_sample->add_option("--k", gen_opts.k, "Source images per target");
  gen_sample->add_option("--seed", seed);
  add_out(gen_sample);
  gen_sample->callback([&] {
    command = "gen sample";
    cfg = {{"manifest", absolute_path(manifest)}, {"ckpt", absolute_path(ckpt)}, {"split", split},
           {"k", gen_opts.k}, {"seed", seed}};
  });

  // metrics
  auto* metrics = app.add_subcommand("metrics", "Evaluation")->require_subcommand(1);
  std::string gt_dir, gen_dir, cache_dir;
  auto* report = metrics->add_subcommand("report", "Per-glyph metrics with aggregates");
  report->add_option("--gt", gt_dir)->required();
  report->add_option("--gen", gen_dir)->required();
  report->add_option("--cache", cache_dir, "Weight cache for the weighted L1 column");
  report->add_option("--ckpt", ckpt, "Checkpoint whose digest goes in the header");
  add_out(report);
  report->callback([&] {
    command = "metrics report";
    cfg = {{"gt", absolute_path(gt_dir)}, {"gen", absolute_path(gen_dir)}, {"cache", absolute_path(cache_dir)},
           {"ckpt", absolute_path(ckpt)}};
  });
  std::string pca_letters = capital_letters();
  auto* pca = metrics->add_subcommand("pca", "2-D PCA of identifier style features");
  add_manifest(pca);
  pca->add_option("--ckpt", ckpt)->required();
  pca->add_option("--split", split)->check(split_check);
  pca->add_option("--letters", pca_letters);
  add_out(pca);
  pca->callback([&] {
    command = "metrics pca";
    cfg = {{"manifest", absolute_path(manifest)}, {"ckpt", absolute_path(ckpt)}, {"split", split},
           {"letters", pca_letters}};
  });

  // replay
  std::string replay_file;
  auto* replay = app.add_subcommand("replay", "Re-run a command from its config.json");
  replay->add_option("config", replay_file)->required()->check(CLI::ExistingFile);
  add_out(replay);
  replay->callback([&] { command = "replay"; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (command == "replay") {
      std::ifstream in(replay_file);
      json doc;
      try {
        doc = json::parse(in);
      } catch (const json::exception& e) {
        throw FormatError(replay_file + ": " + e.what());
      }
      if (doc.value("version", 0) != kConfigVersion) throw FormatError("unsupported config version");
      if (out_dir.empty()) throw DataError("replay needs --out (the original run directory is never overwritten)");
      execute(doc.at("command").get<std::string>(), doc.at("config"), out_dir);
    } else {
      const fs::path out = out_dir.empty() ? default_out(command, cfg.value("seed", seed)) : fs::path(out_dir);
      execute(command, cfg, out);
    }
  } catch (const Divergence& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: malformed config: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
