#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using testsupport::TempDir;

namespace {

struct RunResult {
  int code = -1;
  std::string output;
};

RunResult run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + FONTAWARE_CLI + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  r.output = ss.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Every regular file under `a` exists under `b` with the same bytes, except config.json.
bool same_tree(const fs::path& a, const fs::path& b) {
  std::size_t n = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file() || e.path().filename() == "config.json") continue;
    const auto rel = fs::relative(e.path(), a);
    if (!fs::exists(b / rel) || slurp(e.path()) != slurp(b / rel)) return false;
    ++n;
  }
  return n > 0;
}

const std::string kCorpusArgs = " corpus build --size 48 --margin 2 --seed 5 --fonts \"" +
                                testsupport::fonts_dir().string() + "\"";

}  // namespace

TEST_CASE("usage errors exit with 2") {
  TempDir dir("cli_usage");
  CHECK(run_cli("--help", dir / "log").code == 0);
  CHECK(run_cli("", dir / "log").code == 2);
  CHECK(run_cli("corpus build --bogus 1", dir / "log").code == 2);
  CHECK(run_cli("corpus build", dir / "log").code == 2);
  CHECK(run_cli("--preset huge corpus build --fonts x", dir / "log").code == 2);
  CHECK(run_cli("gen train --manifest x --loss l2", dir / "log").code == 2);
}

TEST_CASE("data errors exit with 3 and name the artifact") {
  TempDir dir("cli_data");
  fs::create_directories(dir / "empty");
  auto r = run_cli("corpus build --fonts \"" + (dir / "empty").string() + "\" --out \"" + (dir / "c").string() + "\"",
                   dir / "log");
  CHECK(r.code == 3);
  r = run_cli("corpus build --fonts \"" + (dir / "empty").string() + "\" --ratios 8:x:1 --out \"" +
                  (dir / "c").string() + "\"",
              dir / "log");
  CHECK(r.code == 3);

  REQUIRE(run_cli(kCorpusArgs + " --out \"" + (dir / "corpus").string() + "\"", dir / "log").code == 0);
  const auto missing = (dir / "nope.ckpt").string();
  r = run_cli("ident eval --manifest \"" + (dir / "corpus").string() + "\" --ckpt \"" + missing + "\" --out \"" +
                  (dir / "e").string() + "\"",
              dir / "log");
  CHECK(r.code == 3);
  CHECK(r.output.find("nope.ckpt") != std::string::npos);

  r = run_cli("gen train --manifest \"" + (dir / "corpus").string() + "\" --loss aware --steps 1 --out \"" +
                  (dir / "g").string() + "\"",
              dir / "log");
  CHECK(r.code == 3);
  CHECK(r.output.find("cache") != std::string::npos);

  r = run_cli("replay \"" + (dir / "corpus" / "config.json").string() + "\"", dir / "log");
  CHECK(r.code == 3);
}

TEST_CASE("divergence exits with 4") {
  TempDir dir("cli_div");
  REQUIRE(run_cli(kCorpusArgs + " --out \"" + (dir / "corpus").string() + "\"", dir / "log").code == 0);
  const auto r = run_cli("ident train --manifest \"" + (dir / "corpus").string() +
                             "\" --steps 5 --batch 4 --lr 1e30 --val-pairs 8 --image-size 32 --patch-size 8"
                             " --depth 1 --heads 2 --embed-dim 16 --out \"" +
                             (dir / "i").string() + "\"",
                         dir / "log");
  CHECK(r.code == 4);
}

TEST_CASE("config echo, defaults and replay of the corpus and pairs commands") {
  TempDir dir("cli_replay");
  const auto corpus = dir / "corpus";
  REQUIRE(run_cli(kCorpusArgs + " --out \"" + corpus.string() + "\"", dir / "log").code == 0);
  const auto cfg = nlohmann::json::parse(slurp(corpus / "config.json"));
  CHECK(cfg["version"] == 1);
  CHECK(cfg["command"] == "corpus build");
  CHECK(cfg["config"]["size"] == 48);
  CHECK(cfg["config"]["margin"] == 2);
  CHECK(cfg["config"]["ratios"] == "8:1:1");
  CHECK(cfg["config"]["seed"] == 5);

  const auto manifest_before = slurp(corpus / "manifest.json");
  REQUIRE(run_cli("replay \"" + (corpus / "config.json").string() + "\" --out \"" + (dir / "corpus2").string() + "\"",
                  dir / "log")
              .code == 0);
  CHECK(slurp(dir / "corpus2" / "manifest.json") == manifest_before);
  CHECK(same_tree(corpus, dir / "corpus2"));

  const auto pairs = dir / "pairs";
  REQUIRE(run_cli("pairs dump --manifest \"" + corpus.string() + "\" --split val --count 40 --seed 2 --out \"" +
                      pairs.string() + "\"",
                  dir / "log")
              .code == 0);
  REQUIRE(run_cli("replay \"" + (pairs / "config.json").string() + "\" --out \"" + (dir / "pairs2").string() + "\"",
                  dir / "log")
              .code == 0);
  CHECK(same_tree(pairs, dir / "pairs2"));
  std::ifstream in(pairs / "pairs.jsonl");
  int lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  CHECK(lines == 40);
  // Downstream commands leave their inputs untouched.
  CHECK(slurp(corpus / "manifest.json") == manifest_before);
}

TEST_CASE("default output directory follows the run root") {
  TempDir dir("cli_root");
  const std::string env = "FONTAWARE_RUN_ROOT=\"" + (dir / "runs").string() + "\" ";
  const std::string cmd = env + "\"" + FONTAWARE_CLI + "\"" + kCorpusArgs + " > \"" + (dir / "log").string() + "\" 2>&1";
  REQUIRE(std::system(cmd.c_str()) == 0);
  CHECK(fs::exists(dir / "runs" / "corpus-build-seed5" / "manifest.json"));
  CHECK(fs::exists(dir / "runs" / "corpus-build-seed5" / "config.json"));
}

TEST_CASE("training, awareness, generation and metrics replay byte-identically") {
  TempDir dir("cli_pipeline");
  const auto corpus = (dir / "corpus").string();
  REQUIRE(run_cli(kCorpusArgs + " --out \"" + corpus + "\"", dir / "log").code == 0);

  const std::string ident_args = "ident train --manifest \"" + corpus +
                                 "\" --steps 4 --batch 4 --eval-every 2 --val-pairs 8 --image-size 32"
                                 " --patch-size 8 --depth 2 --heads 2 --embed-dim 16 --seed 3 --out \"";
  REQUIRE(run_cli(ident_args + (dir / "ident").string() + "\"", dir / "log").code == 0);
  const auto ckpt = (dir / "ident" / "identifier.ckpt").string();

  REQUIRE(run_cli("awareness extract --manifest \"" + corpus + "\" --ckpt \"" + ckpt + "\" --split test --out \"" +
                      (dir / "maps").string() + "\"",
                  dir / "log")
              .code == 0);
  REQUIRE(run_cli("awareness cache --manifest \"" + corpus + "\" --ckpt \"" + ckpt + "\" --size 64 --out \"" +
                      (dir / "cache").string() + "\"",
                  dir / "log")
              .code == 0);
  const auto r = run_cli("gen train --manifest \"" + corpus + "\" --loss aware --cache \"" + (dir / "cache").string() +
                             "\" --steps 3 --batch 4 --eval-every 3 --base-channels 4 --style-dim 16 --k-max 3"
                             " --eval-k 2 --seed 3 --out \"" + (dir / "gen").string() + "\"",
                         dir / "log");
  REQUIRE_MESSAGE(r.code == 0, r.output);
  REQUIRE(run_cli("gen sample --manifest \"" + corpus + "\" --ckpt \"" + (dir / "gen" / "generator.ckpt").string() +
                      "\" --split test --k 2 --out \"" + (dir / "sample").string() + "\"",
                  dir / "log")
              .code == 0);
  REQUIRE(run_cli("metrics report --gt \"" + (dir / "sample" / "gt").string() + "\" --gen \"" +
                      (dir / "sample" / "gen").string() + "\" --cache \"" + (dir / "cache").string() + "\" --ckpt \"" + ckpt + "\" --out \"" + (dir / "report").string() + "\"",
                  dir / "log")
              .code == 0);
  CHECK(fs::exists(dir / "report" / "report.json"));
  CHECK(fs::exists(dir / "report" / "report.csv"));

  for (const std::string step : {"ident", "maps", "cache", "gen", "sample", "report"}) {
    CAPTURE(step);
    const auto again = dir / (step + "_again");
    REQUIRE(run_cli("replay \"" + (dir / step / "config.json").string() + "\" --out \"" + again.string() + "\"",
                    dir / "log")
                .code == 0);
    CHECK(same_tree(dir / step, again));
  }
}
