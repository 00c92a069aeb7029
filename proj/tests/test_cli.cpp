#include <gtest/gtest.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "json.hpp"

#include "wgen/checkpoint.hpp"
#include "wgen/config.hpp"
#include "wgen/error.hpp"
#include "wgen/experiment.hpp"

using namespace wgen;
namespace fs = std::filesystem;

namespace {

struct Ran {
  int code;
  std::string out;
};

Ran run_cli(const std::string& args) {
  const std::string cmd = std::string(WGEN_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  std::string out;
  char buf[4096];
  while (std::size_t n = fread(buf, 1, sizeof buf, pipe)) out.append(buf, n);
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("wgen_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

const char* kTinyConfig = R"(# small copy run
task = copy
vocab_size = 8
min_len = 2
max_len = 4
train_size = 30
valid_size = 8
test_size = 8
arch = encoder-decoder
d_model = 8
n_heads = 2
n_layers_encoder = 1
n_layers_decoder = 1
d_ff = 16
max_seq_len = 16
mode = warmup
learning_rate = 0.01
epochs = 2
batch_size = 8
seed = 4
n_samples = 2
beam_size = 2
max_warmup_len = 2
)";

}  // namespace

TEST(Config, ParsesAndRoundTrips) {
  auto c = parse_config(kTinyConfig);
  c.finalize();
  EXPECT_EQ(c.task.kind, TaskKind::Copy);
  EXPECT_EQ(c.model.d_model, 8u);
  EXPECT_EQ(c.train.sampler.n_samples, 2u);
  EXPECT_EQ(c.task.vocab_size, c.model.vocab_size);
  auto again = parse_config(c.to_text());
  EXPECT_EQ(again.to_text(), c.to_text());
  std::vector<std::string> keys;
  for (const auto& [k, v] : c.entries()) keys.push_back(k);
  EXPECT_EQ(keys, config_keys());
}

TEST(Config, RejectsBadInput) {
  try {
    parse_config("task = copy\nlearning_rat = 0.1\n", "x.conf");
    ADD_FAILURE();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("x.conf:2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_config("epochs = 2\nepochs = 3\n"), ConfigError);
  EXPECT_THROW(parse_config("epochs = two\n"), ConfigError);
  EXPECT_THROW(parse_config("epochs 2\n"), ConfigError);
  // Cross-field checks wait for finalize(), after overrides are in.
  auto heads = parse_config("n_heads = 3\nd_model = 8\n");
  EXPECT_THROW(heads.finalize(), ConfigError);
  EXPECT_THROW(parse_config("task = shuffle\n"), ConfigError);
  auto c = parse_config("clip_norm = none\n");
  EXPECT_FALSE(c.train.clip_norm);
  ExperimentConfig d;
  EXPECT_THROW(set_config_value(d, "nope", "1"), ConfigError);
}

TEST(Config, SeedFromEnvironment) {
  auto c = parse_config(kTinyConfig);
  ::setenv("WGEN_SEED", "99", 1);
  apply_env_overrides(c);
  ::unsetenv("WGEN_SEED");
  EXPECT_EQ(c.train.seed, 99u);
}

TEST(Jsonl, OneObjectPerLine) {
  std::ostringstream os;
  append_epoch_record(os, {1, 0.5, 0.25, 0.0});
  append_epoch_record(os, {2, 0.125, 0.5, 1.5});
  std::istringstream is(os.str());
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.size(), 4u);
    EXPECT_EQ(j["epoch"].get<std::size_t>(), ++n);
  }
  EXPECT_EQ(n, 2u);
  EXPECT_EQ(epoch_record_json({3, 1.0, 0.0, 0.0}).find('\n'), std::string::npos);
}

TEST(Hash, GitBlobId) {
  // `printf 'hello\n' | git hash-object --stdin`
  EXPECT_EQ(git_blob_hash("hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
  EXPECT_EQ(git_blob_hash(""), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
}

TEST(Cli, UsageErrorsExitWithTwo) {
  EXPECT_EQ(run_cli("frobnicate").code, 2);
  EXPECT_EQ(run_cli("train").code, 2);  // --config is required
  EXPECT_EQ(run_cli("gradcheck --configs notanumber").code, 2);
  EXPECT_EQ(run_cli("--help").code, 0);
}

TEST(Cli, RuntimeErrorsExitWithOne) {
  const auto dir = scratch("runtime");
  {
    std::ofstream os(dir / "bad.conf");
    os << "learning_rat = 1\n";
  }
  const auto r = run_cli("train --config " + (dir / "bad.conf").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("bad.conf:1"), std::string::npos) << r.out;
  EXPECT_EQ(run_cli("eval --checkpoint " + (dir / "none.wgen").string() + " --data x.tsv --task copy").code, 1);
  fs::remove_all(dir);
}

TEST(Cli, GenDataTrainEvalInferExport) {
  const auto dir = scratch("flow");
  {
    std::ofstream os(dir / "tiny.conf");
    os << kTinyConfig;
  }
  auto r = run_cli("gen-data --task reverse --vocab-size 8 --min-len 2 --max-len 4 --train-size 10 "
                   "--valid-size 3 --test-size 3 --seed 1 --out " + (dir / "data").string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(read_dataset(dir / "data" / "train.tsv").size(), 10u);

  const auto run = dir / "run";
  r = run_cli("train --config " + (dir / "tiny.conf").string() + " --set epochs=2 --out " + run.string());
  ASSERT_EQ(r.code, 0) << r.out;
  for (const char* f : {"manifest.json", "results.jsonl", "timing.jsonl", "test_metrics.json", "best.wgen",
                        "config.txt", "checkpoints/epoch_000.wgen", "checkpoints/epoch_002.wgen"})
    EXPECT_TRUE(fs::exists(run / f)) << f;
  const auto records = read_epoch_records(run / "results.jsonl");
  ASSERT_EQ(records.size(), 2u);
  for (const auto& rec : records) EXPECT_EQ(rec.seconds, 0.0);
  const auto manifest = nlohmann::json::parse(slurp(run / "manifest.json"));
  EXPECT_EQ(manifest["seed"].get<std::uint64_t>(), 4u);
  EXPECT_EQ(manifest["dataset_hash"].get<std::string>().size(), 40u);

  // The run directory is not reused.
  EXPECT_EQ(run_cli("train --config " + (dir / "tiny.conf").string() + " --out " + run.string()).code, 1);

  r = run_cli("eval --checkpoint " + (run / "best.wgen").string() + " --data " +
              (run / "data" / "test.tsv").string() + " --task copy --max-warmup-len 2");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto metrics = nlohmann::json::parse(r.out);
  EXPECT_TRUE(metrics.contains("exact_match"));
  EXPECT_TRUE(metrics.contains("bleu"));

  r = run_cli("infer --checkpoint " + (run / "best.wgen").string() + " --source \"a b c\" --max-warmup-len 2");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("||"), std::string::npos) << r.out;

  r = run_cli("export " + run.string() + " --out " + (dir / "all.csv").string());
  ASSERT_EQ(r.code, 0) << r.out;
  const auto csv = slurp(dir / "all.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "run,epoch,train_loss,valid_metric,seconds");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  fs::remove_all(dir);
}

TEST(Cli, SameSeedSameResults) {
  const auto dir = scratch("repro");
  {
    std::ofstream os(dir / "tiny.conf");
    os << kTinyConfig;
  }
  for (const char* name : {"a", "b"})
    ASSERT_EQ(run_cli("train --config " + (dir / "tiny.conf").string() + " --out " + (dir / name).string()).code, 0);
  EXPECT_EQ(slurp(dir / "a" / "results.jsonl"), slurp(dir / "b" / "results.jsonl"));
  EXPECT_EQ(slurp(dir / "a" / "best.wgen"), slurp(dir / "b" / "best.wgen"));
  fs::remove_all(dir);
}
