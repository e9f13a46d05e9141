#include <cmath>
#include <fstream>
#include <random>

#include "torch_doctest.hpp"
#include "fontaware/checkpoint.hpp"
#include "fontaware/errors.hpp"
#include "fontaware/identnet.hpp"
#include "nn_fixture.hpp"

using namespace fontaware;

namespace {

EncoderConfig tiny_encoder() {
  EncoderConfig c;
  c.image_size = 32;
  c.patch_size = 8;
  c.depth = 2;
  c.heads = 2;
  c.embed_dim = 32;
  c.head_hidden = 32;
  return c;
}

TrainConfig tiny_train(int steps) {
  TrainConfig t;
  t.batch_size = 8;
  t.steps = steps;
  t.eval_every = 5;
  t.val_pairs = 32;
  t.seed = 4;
  return t;
}

Image probe(int size) {
  const auto& m = testsupport::small_corpus();
  return resize_image(read_png_gray(m.image_file(m.records.front())), size);
}

bool same_parameters(const torch::nn::Module& a, const torch::nn::Module& b) {
  auto pa = a.named_parameters();
  auto pb = b.named_parameters();
  if (pa.size() != pb.size()) return false;
  for (const auto& item : pa) {
    if (!torch::equal(item.value(), pb[item.key()])) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("encoder configs") {
  const auto paper = EncoderConfig::paper();
  CHECK(paper.image_size == 224);
  CHECK(paper.patch_size == 16);
  CHECK(paper.depth == 12);
  CHECK(paper.heads == 12);
  CHECK(paper.embed_dim == 768);
  CHECK(paper.tokens() == 197);
  const auto desk = EncoderConfig::desk();
  CHECK(desk.tokens() == 65);
  CHECK(TrainConfig::paper().batch_size == 64);
  CHECK(TrainConfig::paper().learning_rate == 1e-5);
  CHECK(TrainConfig::desk().batch_size == 32);
  CHECK(TrainConfig::desk().learning_rate == 1e-4);
  CHECK(TrainConfig::desk().warmup_steps == 200);
  CHECK(TrainConfig::paper().warmup_steps == 0);
  auto bad_train = TrainConfig::desk();
  bad_train.warmup_steps = -1;
  CHECK_THROWS_AS(bad_train.validate(), DataError);
  CHECK(TrainConfig::from_json(TrainConfig::desk().to_json()).to_json() == TrainConfig::desk().to_json());

  EncoderConfig bad = desk;
  bad.patch_size = 7;
  CHECK_THROWS_AS(bad.validate(), DataError);
  TrainConfig bad_t;
  bad_t.batch_size = 1;
  CHECK_THROWS_AS(bad_t.validate(), DataError);
  CHECK(EncoderConfig::from_json(desk.to_json()).to_json() == desk.to_json());
}

TEST_CASE("desk encoder traces: 65 tokens, stochastic rows, deterministic output") {
  torch::manual_seed(1);
  VitEncoder enc(EncoderConfig::desk());
  const Image img = probe(64);
  const auto a = encode(enc, img);
  const auto b = encode(enc, img);
  CHECK(a.feature.vector == b.feature.vector);
  CHECK(a.feature.vector.size() == 192);
  REQUIRE(a.trace.depth() == 6);
  CHECK(a.trace.tokens == 65);
  CHECK(a.trace.heads == 4);
  CHECK(a.trace.grid_rows == 8);
  for (const auto& layer : a.trace.layers) {
    REQUIRE(layer.size() == 4u * 65 * 65);
    for (int r = 0; r < 4 * 65; ++r) {
      double s = 0;
      for (int j = 0; j < 65; ++j) {
        const float v = layer[r * 65 + j];
        CHECK(v >= 0.0f);
        s += v;
      }
      CHECK(std::abs(s - 1.0) <= 1e-5);
    }
  }
  for (float v : a.feature.vector) CHECK(std::isfinite(v));
  // Larger inputs are resized to the encoder resolution.
  CHECK(encode(enc, resize_image(img, 100)).trace.tokens == 65);
}

TEST_CASE("paper-scale encoder runs and yields 197 tokens") {
  torch::manual_seed(2);
  auto cfg = EncoderConfig::paper();
  cfg.depth = 1;  // one block is enough to check the geometry
  VitEncoder enc(cfg);
  const auto r = encode(enc, probe(224));
  CHECK(r.trace.tokens == 197);
  CHECK(r.trace.layers.front().size() == 12u * 197 * 197);
  CHECK(r.feature.vector.size() == 768);
}

TEST_CASE("forward rejects the wrong input shape") {
  VitEncoder enc(tiny_encoder());
  CHECK_THROWS_AS(enc->forward(torch::zeros({1, 1, 16, 16})), ShapeMismatch);
}

TEST_CASE("without positional embeddings a one-patch shift permutes attention") {
  torch::manual_seed(3);
  auto cfg = tiny_encoder();
  cfg.positional = false;
  VitEncoder enc(cfg);
  const Image img = probe(32);
  // Circular shift right by one patch: patch (r, c) moves to (r, c+1 mod 4).
  Image shifted(32, 32);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) shifted.at(y, (x + 8) % 32) = img.at(y, x);
  const auto a = encode(enc, img);
  const auto b = encode(enc, shifted);
  auto perm = [](int t) {
    if (t == 0) return 0;
    const int r = (t - 1) / 4, c = (t - 1) % 4;
    return 1 + r * 4 + (c + 1) % 4;
  };
  for (int l = 0; l < a.trace.depth(); ++l)
    for (int h = 0; h < a.trace.heads; ++h)
      for (int i = 0; i < 17; ++i)
        for (int j = 0; j < 17; ++j)
          CHECK(b.trace.at(l, h, perm(i), perm(j)) == doctest::Approx(a.trace.at(l, h, i, j)).epsilon(1e-4));
  for (std::size_t i = 0; i < a.feature.vector.size(); ++i)
    CHECK(b.feature.vector[i] == doctest::Approx(a.feature.vector[i]).epsilon(1e-4));
}

TEST_CASE("untrained pair loss is near ln 2") {
  torch::manual_seed(5);
  const auto& m = testsupport::small_corpus();
  IdentNet net(tiny_encoder());
  const GlyphStore store(m, 32, Split::train);
  const auto pairs = sample_pairs(m, Split::train, 64, 9);
  std::vector<const Image*> l, r;
  std::vector<int64_t> labels;
  for (const auto& p : pairs) {
    l.push_back(&store.get(p.left.font_id, p.left.letter));
    r.push_back(&store.get(p.right.font_id, p.right.letter));
    labels.push_back(p.label == PairLabel::same);
  }
  torch::NoGradGuard ng;
  const double loss = torch::nn::functional::cross_entropy(net->forward(images_to_tensor(l, 32), images_to_tensor(r, 32)),
                                                           torch::tensor(labels, torch::kLong))
                          .item<double>();
  CHECK(std::abs(loss - std::log(2.0)) <= 0.1 * std::log(2.0));
}

TEST_CASE("classify_pair returns a probability") {
  torch::manual_seed(6);
  IdentNet net(tiny_encoder());
  const auto a = encode(net->encoder, probe(32));
  const double p = classify_pair(net->head, a.feature, a.feature);
  CHECK(p >= 0.0);
  CHECK(p <= 1.0);
}

TEST_CASE("pair accuracy bounds") {
  const auto& m = testsupport::small_corpus();
  const auto pairs = sample_pairs(m, Split::test, 100, 2);
  const PairPredictor oracle = [](const std::vector<PairSample>& ps) {
    std::vector<double> out;
    for (const auto& p : ps) out.push_back(p.label == PairLabel::same ? 0.9 : 0.1);
    return out;
  };
  CHECK(pair_accuracy(pairs, oracle) == 1.0);
  std::mt19937_64 rng(1);
  std::vector<double> noise;
  for (std::size_t i = 0; i < pairs.size(); ++i) noise.push_back((rng() % 1000) / 1000.0 + 1e-4);
  const PairPredictor noisy = [&](const std::vector<PairSample>&) { return noise; };
  const PairPredictor flipped = [&](const std::vector<PairSample>&) {
    std::vector<double> out;
    for (double v : noise) out.push_back(1.0 - v);
    return out;
  };
  CHECK(pair_accuracy(pairs, flipped) == doctest::Approx(1.0 - pair_accuracy(pairs, noisy)));
}

TEST_CASE("zero training steps return the initialization") {
  const auto& m = testsupport::small_corpus();
  const auto ckpt = train_identifier(m, tiny_encoder(), tiny_train(0));
  torch::manual_seed(tiny_train(0).seed);
  IdentNet fresh(tiny_encoder());
  CHECK(same_parameters(*ckpt.model, *fresh));
  CHECK(ckpt.best_step == 0);
}

TEST_CASE("short training is deterministic and logs every evaluation") {
  const auto& m = testsupport::small_corpus();
  testsupport::TempDir dir("ident_train");
  std::vector<TrainLogEntry> log;
  const auto a = train_identifier(m, tiny_encoder(), tiny_train(12), dir / "log.jsonl", &log);
  const auto b = train_identifier(m, tiny_encoder(), tiny_train(12));
  CHECK(same_parameters(*a.model, *b.model));
  CHECK(a.best_val_accuracy == b.best_val_accuracy);
  REQUIRE(log.size() == 4);  // steps 0, 5, 10, 12
  CHECK(log[1].step == 5);
  CHECK(log.back().step == 12);
  for (std::size_t i = 1; i < log.size(); ++i) CHECK(std::isfinite(log[i].loss));
  std::ifstream in(dir / "log.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    CHECK(nlohmann::json::parse(line).contains("val_accuracy"));
    ++lines;
  }
  CHECK(lines == 4);
}

TEST_CASE("huge learning rates diverge with a diagnostic") {
  const auto& m = testsupport::small_corpus();
  auto t = tiny_train(20);
  t.learning_rate = 1e30;
  CHECK_THROWS_AS(train_identifier(m, tiny_encoder(), t), Divergence);
}

TEST_CASE("checkpoint round trip reproduces features") {
  const auto& m = testsupport::small_corpus();
  testsupport::TempDir dir("ident_ckpt");
  const auto ckpt = train_identifier(m, tiny_encoder(), tiny_train(3));
  save_identifier(dir / "id.ckpt", ckpt);
  auto back = load_identifier(dir / "id.ckpt");
  CHECK(back.encoder.to_json() == ckpt.encoder.to_json());
  CHECK(back.train.seed == ckpt.train.seed);
  CHECK(back.best_step == ckpt.best_step);
  auto enc = ckpt.model->encoder;
  const Image img = probe(32);
  CHECK(encode(back.model->encoder, img).feature.vector == encode(enc, img).feature.vector);
  CHECK(read_checkpoint_meta(dir / "id.ckpt", "identifier").at("seed") == 4);
  CHECK_THROWS_AS(read_checkpoint_meta(dir / "id.ckpt", "generator"), FormatError);
  CHECK_THROWS_AS(load_identifier(dir / "missing.ckpt"), MissingCheckpoint);
}

TEST_CASE("weight import copies matching tensors") {
  testsupport::TempDir dir("import");
  torch::manual_seed(7);
  VitEncoder src(tiny_encoder());
  torch::serialize::OutputArchive out;
  for (const auto& item : src->named_parameters()) out.write(item.key(), item.value());
  out.save_to((dir / "w.pt").string());
  torch::manual_seed(8);
  VitEncoder dst(tiny_encoder());
  const auto names = import_encoder_weights(dst, dir / "w.pt");
  CHECK(names.size() == src->named_parameters().size());
  CHECK(same_parameters(*src, *dst));
}
