#include <fstream>

#include "doctest.h"
#include "fontaware/errors.hpp"
#include "fontaware/pairs.hpp"
#include "json.hpp"
#include "support.hpp"

using namespace fontaware;

namespace {

// Manifest records without rendering: n fonts in one family each, all 26 letters.
CorpusManifest synthetic_manifest(int n_fonts, Split split, const std::string& letters = capital_letters()) {
  CorpusManifest m;
  m.letters = letters;
  for (int f = 0; f < n_fonts; ++f) {
    for (char c : letters) {
      ManifestRecord r;
      r.font_id = "font" + std::to_string(f);
      r.family_name = "fam" + std::to_string(f);
      r.letter = c;
      r.split = split;
      r.image_path = to_string(split) + "/" + r.font_id + "/" + c + ".png";
      m.records.push_back(r);
    }
  }
  return m;
}

}  // namespace

TEST_CASE("pairs are balanced, never share a letter, and carry the font-equality label") {
  const auto m = synthetic_manifest(7, Split::train);
  for (std::size_t count : {1u, 2u, 101u, 1000u}) {
    const auto pairs = sample_pairs(m, Split::train, count, 42);
    REQUIRE(pairs.size() == count);
    std::size_t same = 0;
    for (const auto& p : pairs) {
      CHECK(p.left.letter != p.right.letter);
      const bool equal_font = p.left.font_id == p.right.font_id;
      CHECK(equal_font == (p.label == PairLabel::same));
      same += p.label == PairLabel::same;
    }
    CHECK(same == count / 2);
  }
}

TEST_CASE("pair sampling is deterministic per seed and epoch") {
  const auto m = synthetic_manifest(5, Split::val);
  const PairSampler sampler(m, Split::val);
  const auto a = sampler.sample(200, 9);
  const auto b = sampler.sample(200, 9);
  const auto c = sampler.sample(200, 10);
  auto same_list = [](const std::vector<PairSample>& x, const std::vector<PairSample>& y) {
    if (x.size() != y.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!(x[i].left == y[i].left && x[i].right == y[i].right && x[i].label == y[i].label)) return false;
    }
    return true;
  };
  CHECK(same_list(a, b));
  CHECK_FALSE(same_list(a, c));
  CHECK(same_list(sampler.sample_epoch(50, 9, 3), sampler.sample_epoch(50, 9, 3)));
  CHECK_FALSE(same_list(sampler.sample_epoch(50, 9, 3), sampler.sample_epoch(50, 9, 4)));
}

TEST_CASE("pairs only use fonts of the requested split") {
  auto m = synthetic_manifest(4, Split::train);
  auto extra = synthetic_manifest(3, Split::test);
  for (auto& r : extra.records) r.font_id = "t" + r.font_id;
  m.records.insert(m.records.end(), extra.records.begin(), extra.records.end());
  for (const auto& p : sample_pairs(m, Split::test, 300, 1)) {
    CHECK(p.left.font_id[0] == 't');
    CHECK(p.right.font_id[0] == 't');
  }
}

TEST_CASE("insufficient fonts or letters") {
  CHECK_THROWS_AS(PairSampler(synthetic_manifest(1, Split::train), Split::train), InsufficientFonts);
  CHECK_THROWS_AS(PairSampler(synthetic_manifest(5, Split::train, "A"), Split::train), InsufficientFonts);
  CHECK_THROWS_AS(PairSampler(synthetic_manifest(5, Split::train), Split::test), InsufficientFonts);
}

TEST_CASE("pair dump writes one labelled line per pair") {
  testsupport::TempDir dir("pairs");
  const auto m = synthetic_manifest(3, Split::train);
  const auto pairs = sample_pairs(m, Split::train, 10, 3);
  dump_pairs_jsonl(m, pairs, dir / "p.jsonl");
  std::ifstream in(dir / "p.jsonl");
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    const std::string label = j.at("label");
    CHECK((label == "same") == (pairs[n].label == PairLabel::same));
    CHECK(j.at("left").get<std::string>().find(pairs[n].left.font_id) != std::string::npos);
    ++n;
  }
  CHECK(n == 10);
}
