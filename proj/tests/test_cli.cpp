#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <map>
#include <string>

#include "rlogist/io.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using namespace rlogist;
using namespace rlogist::cli;
using nlohmann::json;

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(RLOGIST_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("rlogist_test_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = io::read_file(e.path());
  return out;
}

const char* kQuickPretrain =
    "--set pretrain.classifier.epochs=2 --set pretrain.updaters.global_episodes=20 --set pretrain.updaters.local_steps=10";

}  // namespace

TEST(Settings, DottedKeysAndTypes) {
  auto s = default_settings();
  set_key(s, "train.ppo.base_lr", json(0.01));
  EXPECT_EQ(s["train"]["ppo"]["base_lr"], 0.01);
  EXPECT_THROW(set_key(s, "train.ppo.nope", json(1)), ConfigError);
  EXPECT_THROW(set_key(s, "train.ppo", json(1)), ConfigError);
  EXPECT_THROW(set_key(s, "train.ppo.base_lr", json("fast")), ConfigError);
  EXPECT_THROW(set_key(s, "train.ppo.total_episodes", json(-3)), ConfigError);
  EXPECT_THROW(dotted_pointer("a..b"), ConfigError);
  EXPECT_EQ(parse_value("0.5"), json(0.5));
  EXPECT_EQ(parse_value("true"), json(true));
  EXPECT_EQ(parse_value("ppo"), json("ppo"));
}

TEST(Settings, FlagsOverrideFileAndSeedPropagates) {
  const json file = {{"seed", 9}, {"train.ppo.base_lr", 0.02}, {"gen", {{"sigma_scan", 0.3}}}};
  const auto r = resolve_settings(file, {{"train.ppo.base_lr", json(0.04), "flag"}, {"pretrain.updaters.seed", json(2), "flag"}});
  EXPECT_EQ(r.settings["train"]["ppo"]["base_lr"], 0.04);
  EXPECT_EQ(r.settings["gen"]["sigma_scan"], 0.3);
  EXPECT_EQ(r.settings["gen"]["seed"], 9);
  EXPECT_EQ(r.settings["train"]["seed"], 9);
  EXPECT_EQ(r.settings["pretrain"]["classifier"]["seed"], 9);
  EXPECT_EQ(r.settings["pretrain"]["updaters"]["seed"], 2);
  ASSERT_EQ(r.applied.size(), 5u);
  EXPECT_EQ(r.applied.back().source, "flag");
}

TEST(Settings, InvalidValuesFailBeforeWork) {
  EXPECT_THROW(resolve_settings(std::nullopt, {{"train.env.budget_fraction", json(1.5), "flag"}}), ConfigError);
  EXPECT_THROW(resolve_settings(std::nullopt, {{"data.train_fraction", json(1.0), "flag"}}), ConfigError);
  EXPECT_THROW(resolve_settings(std::nullopt, {{"train.variant", json("both"), "flag"}}), ConfigError);
  EXPECT_THROW(resolve_settings(json::array(), {}), ConfigError);
  EXPECT_THROW(parse_budget(0.0), ConfigError);
  EXPECT_EQ(parse_budget(0.1), 0.1);
}

TEST(Settings, FlattenedViewCoversEveryLeaf) {
  const auto s = default_settings();
  const auto flat = flatten_dotted(s);
  EXPECT_EQ(flat["train.ppo.base_lr"], 3e-3);
  EXPECT_EQ(flat.size(), s.flatten().size());
}

TEST(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(run_cli(""), 1);
  EXPECT_EQ(run_cli("train --bogus"), 1);
  EXPECT_EQ(run_cli("train --budget 1.5 --out x"), 1);
  EXPECT_EQ(run_cli("generate --set nope=1 --out x"), 1);
  EXPECT_EQ(run_cli("--help"), 0);
}

TEST(Cli, GenerateIsDeterministic) {
  const auto dir = scratch("gen");
  ASSERT_EQ(run_cli("generate --count 24 --seed 4 --out " + (dir / "a").string()), 0);
  ASSERT_EQ(run_cli("generate --count 24 --seed 4 --out " + (dir / "b").string()), 0);
  EXPECT_EQ(snapshot(dir / "a"), snapshot(dir / "b"));
  const auto rc = json::parse(io::read_file(dir / "a" / "run_config.json"));
  EXPECT_EQ(rc["seed"], 4);
  EXPECT_EQ(rc["settings"]["gen.seed"], 4);
  EXPECT_TRUE(rc.contains("version"));
}

TEST(Cli, PipelineWritesReportsAndLeavesDataUntouched) {
  const auto dir = scratch("pipe");
  const auto data = (dir / "data").string();
  ASSERT_EQ(run_cli("generate --count 30 --seed 2 --out " + data), 0);
  const auto before = snapshot(dir / "data");
  ASSERT_EQ(run_cli("pretrain --manifest " + data + "/train.json --out " + (dir / "pre").string() + " " + kQuickPretrain), 0);
  ASSERT_EQ(run_cli("train --algo ppo --budget 0.2 --episodes 32 --manifest " + data + "/train.json --checkpoint " +
                    (dir / "pre" / "pretrained.rlgn").string() + " --out " + (dir / "run").string()),
            0);
  ASSERT_EQ(run_cli("eval --manifest " + data + "/test.json --checkpoint " + (dir / "run" / "agent.rlgn").string() +
                    " --out " + (dir / "ev").string()),
            0);
  const auto metrics = json::parse(io::read_file(dir / "ev" / "metrics.json"));
  EXPECT_EQ(metrics["strategy"], "learned");
  EXPECT_TRUE(metrics.contains("auc"));
  EXPECT_TRUE(fs::exists(dir / "run" / "train_report.jsonl"));
  EXPECT_TRUE(fs::exists(dir / "run" / "run_config.json"));
  EXPECT_EQ(snapshot(dir / "data"), before);
}
