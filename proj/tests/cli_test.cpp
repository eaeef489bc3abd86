#include <filesystem>
#include <set>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "tenc/cli/run.hpp"

using namespace tenc;
using namespace tenc::cli;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("tenc_cli_test_" + name);
  fs::remove_all(p);
  return p;
}

const char* kTiny = R"(
preset = desk
cycles = 2
checkpoint_every = 3
[model]
d_model = 8
n_layers = 1
[bootstrap]
batch_size = 8
[bi_to_cross]
batch_size = 8
epochs = 1
[cross_to_bi]
batch_size = 16
epochs = 1
[synth]
topics = 4
vocab_per_topic = 5
pairs = 120
min_words = 3
max_words = 5
)";

RunConfig tiny(Assignments extra = {}) {
  auto a = parse_text(kTiny);
  a.insert(a.end(), extra.begin(), extra.end());
  return resolve(a);
}

}  // namespace

TEST(Config, EmptyConfigGivesBaseDefaults) {
  auto sts = resolve({});
  EXPECT_EQ(sts.train.cycles, 3u);
  EXPECT_EQ(sts.train.bi_to_cross.lr, 2e-5);
  EXPECT_EQ(sts.train.cross_to_bi.epochs, 10u);
  auto bin = resolve({{"task", "binary"}});
  EXPECT_EQ(bin.train.cycles, 5u);
  EXPECT_EQ(bin.train.bi_to_cross.epochs, 3u);
  EXPECT_EQ(bin.train.cross_to_bi.epochs, 15u);
}

TEST(Config, FlagsOverrideFileOverrideDefaults) {
  auto a = parse_text("cycles = 3\nseed = 4\n");
  a.push_back(parse_override("cycles=1"));
  auto c = resolve(a);
  EXPECT_EQ(c.train.cycles, 1u);
  EXPECT_EQ(c.train.seed, 4u);
  EXPECT_EQ(c.synth.seed, 4u);  // follows the run seed
  a.push_back({"synth.seed", "9"});
  EXPECT_EQ(resolve(a).synth.seed, 9u);
}

TEST(Config, PresetAppliesBeforeOtherKeysWhateverTheOrder) {
  auto c = resolve({{"bootstrap.lr", "0.5"}, {"preset", "desk"}});
  EXPECT_EQ(c.train.bootstrap.lr, 0.5);
  EXPECT_EQ(c.train.model.init_std, 0.1);
}

TEST(Config, SectionsAndComments) {
  auto a = parse_text("# top\nseed = 2  # trailing\n[bi_to_cross]\nloss = mse\n\n[model]\nd_model=16\n");
  ASSERT_EQ(a.size(), 3u);
  EXPECT_EQ(a[1].first, "bi_to_cross.loss");
  auto c = resolve(a);
  EXPECT_EQ(c.train.bi_to_cross_loss, distill::LossKind::kMse);
  EXPECT_EQ(c.train.model.d_model, 16u);
}

TEST(Config, UnknownKeyListsValidKeys) {
  try {
    resolve({{"cycels", "2"}});
    FAIL() << "no error";
  } catch (const Error& e) {
    const std::string m = e.what();
    EXPECT_NE(m.find("cycels"), std::string::npos);
    EXPECT_NE(m.find("cross_to_bi.epochs"), std::string::npos);
  }
}

TEST(Config, TypeMismatches) {
  EXPECT_THROW(resolve({{"cycles", "three"}}), Error);
  EXPECT_THROW(resolve({{"cycles", "-1"}}), Error);
  EXPECT_THROW(resolve({{"temperature", "0.05x"}}), Error);
  EXPECT_THROW(resolve({{"fit_diagnostics", "maybe"}}), Error);
  EXPECT_THROW(resolve({{"strategy", "alternating"}}), Error);
  EXPECT_THROW(resolve({{"task", "regression"}}), Error);
  EXPECT_THROW(parse_text("[model\nd_model = 3\n"), Error);
  EXPECT_THROW(parse_text("just words\n"), Error);
  EXPECT_THROW(parse_override("=3"), Error);
}

TEST(Config, RoundTripsThroughItsText) {
  for (const auto& c : {resolve({}), tiny({{"strategy", "sequential"}, {"temperature", "0.1"}, {"data.train", "a.tsv"}}),
                        resolve({{"task", "binary"}, {"clamp", "affine"}, {"model.position_std", "0.3"}})}) {
    EXPECT_EQ(resolve(parse_text(to_text(c))), c);
  }
}

TEST(Run, SynthWritesDatasetFilesOnly) {
  const auto out = scratch("synth");
  std::ostringstream log;
  EXPECT_EQ(run("synth", tiny(), out, log), 0);
  std::set<std::string> files;
  for (const auto& e : fs::directory_iterator(out)) files.insert(e.path().filename().string());
  EXPECT_EQ(files, (std::set<std::string>{"config.ini", "dev.tsv", "test.tsv", "train.tsv"}));
  auto r = evaldata::load_tsv((out / "train.tsv").string(), evaldata::TaskKind::kSimilarity, {0, 1});
  EXPECT_EQ(r.pairs.size(), 84u);
}

TEST(Run, CycleArtifactsReproduceFromEchoedConfig) {
  const auto a = scratch("cycle_a"), b = scratch("cycle_b");
  std::ostringstream log;
  ASSERT_EQ(run("cycle", tiny({{"deterministic", "true"}}), a, log), 0);
  for (const char* f : {"best_bi.tenc", "best_cross.tenc", "bootstrap.tenc", "history.csv", "metrics.csv",
                        "labels/cycle1_bi_to_cross.tsv", "labels/cycle2_cross_to_bi.tsv"}) {
    EXPECT_TRUE(fs::exists(a / f)) << f;
  }
  EXPECT_NE(log.str().find("tenc-cross"), std::string::npos);
  ASSERT_EQ(run("cycle", resolve(parse_file((a / "config.ini").string())), b, log), 0);
  for (const char* f : {"best_bi.tenc", "best_cross.tenc", "history.csv", "metrics.csv", "config.ini"}) {
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
}

TEST(Run, LabelAndEvalReadCheckpoints) {
  const auto dir = scratch("label");
  std::ostringstream log;
  ASSERT_EQ(run("bootstrap", tiny(), dir / "boot", log), 0);
  const std::string ckpt = (dir / "boot" / "bootstrap.tenc").string();
  ASSERT_EQ(run("label", tiny({{"label.model", ckpt}}), dir / "lab", log), 0);
  std::ifstream in(dir / "lab" / "labels.tsv");
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    EXPECT_NE(line.find("\tbi"), std::string::npos);
  }
  EXPECT_EQ(n, 84u);
  ASSERT_EQ(run("eval", tiny({{"eval.bi", ckpt + "," + ckpt}}), dir / "eval", log), 0);
  const std::string metrics = slurp(dir / "eval" / "metrics.csv");
  EXPECT_NE(metrics.find("ensemble-bi"), std::string::npos);
  EXPECT_THROW(run("label", tiny(), dir / "nolabel", log), Error);
  // A checkpoint from a different vocabulary is rejected.
  EXPECT_THROW(run("label", tiny({{"label.model", ckpt}, {"synth.topics", "5"}}), dir / "bad", log), Error);
}

TEST(Run, TsvDataAndBaselines) {
  const auto dir = scratch("tsv");
  std::ostringstream log;
  ASSERT_EQ(run("synth", tiny(), dir / "data", log), 0);
  const auto d = dir / "data";
  auto cfg = tiny({{"data.name", "toy"},
                   {"data.train", (d / "train.tsv").string()},
                   {"data.dev", (d / "dev.tsv").string()},
                   {"data.test", (d / "test.tsv").string()}});
  ASSERT_EQ(run("baseline-selfdistill", cfg, dir / "self", log), 0);
  EXPECT_TRUE(fs::exists(dir / "self" / "best_bi.tenc"));
  EXPECT_NE(slurp(dir / "self" / "history.csv").find("self_bi"), std::string::npos);
  ASSERT_EQ(run("baseline-contrastive-pairs", cfg, dir / "pairs", log), 0);
  EXPECT_TRUE(fs::exists(dir / "pairs" / "pair_contrastive.tenc"));
  EXPECT_NE(slurp(dir / "pairs" / "metrics.csv").find("toy/dev"), std::string::npos);
}

TEST(Run, MutualWritesOneDirectoryPerModel) {
  const auto dir = scratch("mutual");
  std::ostringstream log;
  ASSERT_EQ(run("mutual", tiny({{"cycles", "1"}}), dir, log), 0);
  EXPECT_TRUE(fs::exists(dir / "model0" / "best_bi.tenc"));
  EXPECT_TRUE(fs::exists(dir / "model1" / "best_cross.tenc"));
  EXPECT_NE(slurp(dir / "labels" / "cycle1_bi_to_cross.tsv").find("\tmutual"), std::string::npos);
  EXPECT_THROW(run("mutual", tiny({{"mutual.models", "1"}}), dir, log), Error);
}

TEST(Run, UnknownModeIsAnError) {
  std::ostringstream log;
  EXPECT_THROW(run("train", tiny(), scratch("unknown"), log), Error);
}

TEST(Losscheck, AllChecksPass) {
  for (const auto& c : run_losscheck(1)) EXPECT_TRUE(c.pass) << c.name << ": " << c.detail;
}
