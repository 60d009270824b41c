#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <functional>
#include <sstream>

#include "swintr/cli.hpp"
#include "swintr/config.hpp"
#include "swintr/errors.hpp"
#include "test_util.hpp"

namespace swintr {
namespace {

namespace fs = std::filesystem;
using test::TempDir;

struct CliRun {
  int code;
  std::string out, err;
};

CliRun cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

template <typename E>
std::string error_text(const std::function<void()>& f) {
  try {
    f();
  } catch (const E& e) {
    return e.what();
  }
  return "<no exception>";
}

TEST(RunConfig, DefaultsEchoRoundTrip) {
  const RunConfig d = parse_run_config("");
  const std::string text = format_run_config(d);
  EXPECT_EQ(format_run_config(parse_run_config(text)), text);
  EXPECT_EQ(d.model.variant, Variant::trainable_2x);
  EXPECT_EQ(d.train.schedule.total_epochs, 50);
  EXPECT_EQ(d.train.schedule.max_lr, 1e-4);
  EXPECT_EQ(d.train.schedule.min_lr, 1e-6);
  EXPECT_EQ(d.train.focal.gamma, 2.0);
  EXPECT_EQ(d.class_names.size(), 4u);
}

TEST(RunConfig, EchoOfEditedConfigRoundTrips) {
  const RunConfig c = parse_run_config(
      "# toy run\nmodel.variant = uniform_4x\nmodel.embed_dim=16\nmodel.depths=1,1,1,1\n\ntrain.epochs=7\n"
      "train.alpha=1,2,3,4\ntrain.augment=false\n");
  EXPECT_EQ(c.model.variant, Variant::uniform_4x);
  EXPECT_EQ(c.model.encoder.depths, (std::vector<int>{1, 1, 1, 1}));
  EXPECT_EQ(c.train.schedule.total_epochs, 7);
  EXPECT_FALSE(c.train.augmentation.enabled);
  const std::string text = format_run_config(c);
  EXPECT_EQ(format_run_config(parse_run_config(text)), text);
}

TEST(RunConfig, ErrorsNameOriginAndLine) {
  auto err = [](const std::string& text) { return error_text<ConfigError>([&] { parse_run_config(text, "run.cfg"); }); };
  EXPECT_NE(err("model.variant=trainable_2x\nbogus=1\n").find("run.cfg:2: unknown key 'bogus'"), std::string::npos);
  EXPECT_NE(err("train.epochs=3\n\ntrain.epochs=4\n").find("run.cfg:3: duplicate key"), std::string::npos);
  const std::string bad_int = err("\ntrain.epochs=zero\n");
  EXPECT_NE(bad_int.find("run.cfg:2: train.epochs"), std::string::npos) << bad_int;
  EXPECT_NE(err("no equals sign\n").find("run.cfg:1: expected key=value"), std::string::npos);
  EXPECT_NE(err("model.variant=uniform_2x\n").find("run.cfg:1"), std::string::npos);
  EXPECT_NE(err("train.min_lr=1\ntrain.max_lr=0.1\n").find("train.min_lr"), std::string::npos);
  EXPECT_NE(err("train.alpha=1,2\n").find("train.alpha"), std::string::npos);
  EXPECT_NE(err("model.resizer_channels=6\n").find("divisible by 4"), std::string::npos);
}

TEST(RunConfig, RelativePathsResolveAgainstConfigDirectory) {
  TempDir dir("cfg_paths");
  write_file(dir.path() / "run.cfg", "data.manifest=data/m.tsv\noutput.dir=out\n");
  const RunConfig c = load_run_config(dir.path() / "run.cfg");
  EXPECT_EQ(c.manifest, dir.path() / "data/m.tsv");
  EXPECT_EQ(c.output_dir, dir.path() / "out");
  EXPECT_THROW(load_run_config(dir.path() / "absent.cfg"), ConfigError);
}

TEST(Cli, ConfigCommandListsEveryKeyAndParsesBack) {
  CliRun r = cli({"config"});
  ASSERT_EQ(r.code, kExitOk);
  for (const auto& k : run_config_keys()) {
    EXPECT_NE(r.out.find(k.key + "="), std::string::npos) << k.key;
  }
  EXPECT_EQ(format_run_config(parse_run_config(r.out)), format_run_config(parse_run_config("")));
}

TEST(Cli, UsageErrorsExitInvalid) {
  EXPECT_EQ(cli({}).code, kExitInvalid);
  EXPECT_EQ(cli({"launch"}).code, kExitInvalid);
  EXPECT_EQ(cli({"train"}).code, kExitInvalid);
  EXPECT_EQ(cli({"eval", "--checkpoint", "x"}).code, kExitInvalid);
  EXPECT_EQ(cli({"--help"}).code, kExitOk);
}

TEST(Cli, TrainRejectsMissingManifest) {
  TempDir dir("cli_nomanifest");
  write_file(dir.path() / "run.cfg", "train.epochs=1\n");
  CliRun r = cli({"train", "--config", (dir.path() / "run.cfg").string()});
  EXPECT_EQ(r.code, kExitInvalid);
  EXPECT_NE(r.err.find("data.manifest"), std::string::npos) << r.err;
  write_file(dir.path() / "bad.cfg", "train.epochs=1\ntrain.epoch=2\n");
  r = cli({"train", "--config", (dir.path() / "bad.cfg").string()});
  EXPECT_EQ(r.code, kExitInvalid);
  EXPECT_NE(r.err.find("bad.cfg:2"), std::string::npos) << r.err;
}

TEST(Cli, MissingOrCorruptCheckpointExitsInvalid) {
  TempDir dir("cli_ckpt");
  CliRun r = cli({"infer", "--checkpoint", (dir.path() / "none.ckpt").string(), "--image", "x.png", "--out",
               (dir.path() / "o").string()});
  EXPECT_EQ(r.code, kExitInvalid);
  write_file(dir.path() / "junk.ckpt", "not a checkpoint at all");
  r = cli({"eval", "--checkpoint", (dir.path() / "junk.ckpt").string(), "--manifest", "m.tsv"});
  EXPECT_EQ(r.code, kExitInvalid);
  EXPECT_NE(r.err.find("format error"), std::string::npos) << r.err;
}

const char* kTinyConfig =
    "model.variant=trainable_2x\n"
    "model.image_size=56\n"
    "model.embed_dim=8\n"
    "model.depths=1,1\n"
    "model.heads=1,2\n"
    "model.resizer_channels=8\n"
    "model.resizer_depth=1\n"
    "data.manifest=data/manifest.tsv\n"
    "train.epochs=2\n"
    "train.batch_size=2\n"
    "train.eval_batch_size=2\n"
    "train.max_lr=1e-3\n"
    "train.min_lr=1e-4\n";

// One synthetic dataset and trained run shared by the end-to-end tests.
class CliFlow : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("cli_flow");
    const fs::path root = dir_->path();
    CliRun gen = cli({"synth-data", "--out", (root / "data").string(), "--train", "4", "--val", "2", "--test", "2",
                   "--size", "112", "--seed", "3"});
    ASSERT_EQ(gen.code, kExitOk) << gen.err;
    write_file(root / "run.cfg", kTinyConfig);
    first_ = new CliRun(cli({"train", "--config", (root / "run.cfg").string(), "--out", (root / "a").string()}));
  }
  static void TearDownTestSuite() {
    delete first_;
    delete dir_;
  }
  static fs::path root() { return dir_->path(); }
  static TempDir* dir_;
  static CliRun* first_;
};

TempDir* CliFlow::dir_ = nullptr;
CliRun* CliFlow::first_ = nullptr;

TEST_F(CliFlow, SynthDataWritesManifestAndSplits) {
  const std::string manifest = slurp(root() / "data" / "manifest.tsv");
  int train = 0, val = 0, test = 0;
  std::istringstream in(manifest);
  std::string line;
  while (std::getline(in, line)) {
    const std::string split = line.substr(line.rfind('\t') + 1);
    train += split == "train";
    val += split == "val";
    test += split == "test";
  }
  EXPECT_EQ(train, 4);
  EXPECT_EQ(val, 2);
  EXPECT_EQ(test, 2);
}

TEST_F(CliFlow, TrainWritesArtifacts) {
  ASSERT_EQ(first_->code, kExitOk) << first_->err;
  const fs::path out = root() / "a";
  for (const char* f : {"config.txt", "train_log.tsv", "best.ckpt", "best_metrics.txt"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  const std::string log = slurp(out / "train_log.tsv");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 2);
  EXPECT_EQ(log.rfind("0\t1.000000e-03\t", 0), 0u) << log;
  // The echoed config is complete and parses back to itself.
  const std::string echo = slurp(out / "config.txt");
  EXPECT_EQ(format_run_config(parse_run_config(echo)), echo);
  EXPECT_NE(echo.find("model.embed_dim=8"), std::string::npos);
  EXPECT_NE(slurp(out / "best_metrics.txt").find("IoU"), std::string::npos);
}

TEST_F(CliFlow, SameConfigSameLogBytes) {
  ASSERT_EQ(first_->code, kExitOk);
  CliRun again = cli({"train", "--config", (root() / "run.cfg").string(), "--out", (root() / "b").string()});
  ASSERT_EQ(again.code, kExitOk) << again.err;
  EXPECT_EQ(slurp(root() / "a" / "train_log.tsv"), slurp(root() / "b" / "train_log.tsv"));
}

TEST_F(CliFlow, RefusesNonEmptyOutputWithoutForce) {
  ASSERT_EQ(first_->code, kExitOk);
  const std::string before = slurp(root() / "a" / "train_log.tsv");
  CliRun r = cli({"train", "--config", (root() / "run.cfg").string(), "--out", (root() / "a").string()});
  EXPECT_EQ(r.code, kExitInvalid);
  EXPECT_NE(r.err.find("not empty"), std::string::npos) << r.err;
  EXPECT_EQ(slurp(root() / "a" / "train_log.tsv"), before);
  CliRun s = cli({"synth-data", "--out", (root() / "data").string(), "--train", "1", "--val", "1", "--test", "1"});
  EXPECT_EQ(s.code, kExitInvalid);
}

TEST_F(CliFlow, EvalReportsEveryClass) {
  ASSERT_EQ(first_->code, kExitOk);
  const fs::path report = root() / "test_report.txt";
  CliRun r = cli({"eval", "--checkpoint", (root() / "a" / "best.ckpt").string(), "--manifest",
               (root() / "data" / "manifest.tsv").string(), "--split", "test", "--out", report.string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  for (const auto& name : ClassMap{}.names) {
    EXPECT_NE(r.out.find(name), std::string::npos) << name;
  }
  EXPECT_NE(r.out.find("average"), std::string::npos);
  EXPECT_EQ(slurp(report), r.out);
  CliRun bad = cli({"eval", "--checkpoint", (root() / "a" / "best.ckpt").string(), "--manifest",
                 (root() / "data" / "manifest.tsv").string(), "--split", "holdout"});
  EXPECT_EQ(bad.code, kExitInvalid);
}

std::string first_image(const fs::path& data) {
  for (const auto& e : fs::recursive_directory_iterator(data)) {
    if (e.path().extension() == ".png" && e.path().parent_path().filename() == "images") {
      return e.path().string();
    }
  }
  return {};
}

TEST_F(CliFlow, InferWritesMaskAndOverlay) {
  ASSERT_EQ(first_->code, kExitOk);
  const std::string image = first_image(root() / "data");
  ASSERT_FALSE(image.empty());
  CliRun r = cli({"infer", "--checkpoint", (root() / "a" / "best.ckpt").string(), "--image", image, "--out",
               (root() / "infer").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_GT(fs::file_size(root() / "infer" / "mask.png"), 0u);
  EXPECT_GT(fs::file_size(root() / "infer" / "overlay.png"), 0u);
  CliRun missing = cli({"infer", "--checkpoint", (root() / "a" / "best.ckpt").string(), "--image",
                     (root() / "nope.png").string(), "--out", (root() / "infer2").string()});
  EXPECT_EQ(missing.code, kExitInvalid);
}

TEST_F(CliFlow, ResizeCompareWritesSixImages) {
  ASSERT_EQ(first_->code, kExitOk);
  CliRun r = cli({"resize-compare", "--checkpoint", (root() / "a" / "best.ckpt").string(), "--image",
               first_image(root() / "data"), "--out-dir", (root() / "cmp").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  for (const char* f : {"input.png", "down_bilinear.png", "down_lapdcn.png", "mask_internal.png",
                        "mask_up_bilinear.png", "mask_up_lapscn.png"}) {
    EXPECT_TRUE(fs::exists(root() / "cmp" / f)) << f;
  }
}

TEST(Cli, SelftestPassesAndCatchesCorruptedGradient) {
  CliRun ok = cli({"selftest"});
  EXPECT_EQ(ok.code, kExitOk) << ok.out;
  CliRun bad = cli({"selftest", "--perturb-conv-backward", "0.01"});
  EXPECT_EQ(bad.code, kExitFailed) << bad.out;
  EXPECT_NE(bad.out.find("FAIL"), std::string::npos);
}

}  // namespace
}  // namespace swintr
