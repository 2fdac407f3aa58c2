#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "metaexplore/harness/commands.hpp"
#include "metaexplore/harness/output.hpp"

using namespace metaexplore;
using namespace metaexplore::harness;
namespace fs = std::filesystem;

namespace {

const char* kTinyConfig = R"({
  "schema_version": 1,
  "run_id": "tiny",
  "seed": 4,
  "problem": {"class": "cartpole"},
  "lifetime": {"episodes": 3, "steps": 25},
  "schedule": {"epsilon0": 0.8, "decay": 0.9},
  "agent": {"algo": "reinforce", "network": {"hidden": [4]}},
  "advisor": {"algo": "reinforce", "network": {"hidden": [4]}, "learning_rate": 0.01},
  "train": {"meta_episodes": 3, "n_parallel_tasks": 2, "num_training_tasks": 2},
  "eval": {"n_tasks": 2, "repeats": 1, "rollout_episodes": 2, "exploitation_episodes": 3}
}
)";

fs::path scratch(const std::string& name)
{
    const auto dir = fs::temp_directory_path() / ("metaexplore-test-" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_file(const fs::path& p, const std::string& text)
{
    std::ofstream(p) << text;
}

std::string read_file(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

int run_cli(const std::string& args, const fs::path& log)
{
    const std::string cmd = std::string(METAEXPLORE_CLI) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

} // namespace

TEST(Config, LoadsBundledConfigs)
{
    for (const char* name : {"cartpole_reinforce.json", "cartpole_ppo.json", "animat_reinforce.json",
                             "animat_ppo.json", "oracle.json", "table1_desk.json"}) {
        EXPECT_NO_THROW(parse_run_config(load_config(fs::path(METAEXPLORE_CONFIG_DIR) / name))) << name;
    }
}

TEST(Config, TypedValuesFollowTheDocument)
{
    const auto cfg = parse_run_config(load_config_text(kTinyConfig, "tiny.json"));
    EXPECT_EQ(cfg.run_id, "tiny");
    EXPECT_EQ(cfg.seed, 4u);
    EXPECT_EQ(cfg.problem.kind, ClassKind::cartpole);
    EXPECT_EQ(cfg.advisor_run.lifetime, (LifetimeConfig{3, 25}));
    EXPECT_EQ(cfg.advisor_run.meta_episodes, 3);
    EXPECT_DOUBLE_EQ(cfg.advisor_run.advisor.learner.learning_rate, 0.01);
    EXPECT_EQ(cfg.eval.n_tasks, 2);
}

TEST(Config, OverridesApplyBeforeValidation)
{
    const auto cfg = parse_run_config(load_config_text(kTinyConfig, "tiny.json", {"train.meta_episodes=7", "seed=9"}));
    EXPECT_EQ(cfg.advisor_run.meta_episodes, 7);
    EXPECT_EQ(cfg.seed, 9u);
    EXPECT_THROW(load_config_text(kTinyConfig, "tiny.json", {"train.meta_episodes=-1"}), ConfigError);
}

TEST(Config, UnknownKeyReportsItsLine)
{
    std::string text = kTinyConfig;
    text.replace(text.find("\"run_id\""), 0, "\"lifetimes\": 3,\n  ");
    try {
        load_config_text(text, "bad.json");
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("bad.json:3:"), std::string::npos) << msg;
        EXPECT_NE(msg.find("lifetimes"), std::string::npos) << msg;
    }
}

TEST(Config, WrongTypeRejected)
{
    std::string text = kTinyConfig;
    text.replace(text.find("\"episodes\": 3"), 13, "\"episodes\": \"3\"");
    EXPECT_THROW(load_config_text(text, "bad.json"), ConfigError);
}

TEST(Config, HashIgnoresFormatting)
{
    const auto a = parse_run_config(load_config_text(kTinyConfig, "a.json"));
    std::string compact = kTinyConfig;
    std::erase(compact, '\n');
    const auto b = parse_run_config(load_config_text(compact, "b.json"));
    EXPECT_EQ(config_hash(a), config_hash(b));
    const auto c = parse_run_config(load_config_text(kTinyConfig, "a.json", {"seed=5"}));
    EXPECT_NE(config_hash(a), config_hash(c));
}

TEST(Metrics, HeaderIsFixed)
{
    EXPECT_STREQ(kMetricsHeader, "run_id,meta_episode,task_id,lifetime_return,ep_return_first,ep_return_last,"
                                 "ep_return_mean,explored_fraction,poor_action_rate,wall_time_s");
}

TEST(Metrics, RowsRoundTripThroughCsv)
{
    const auto dir = scratch("metrics");
    MetricsRow row{"r", 2, "cartpole-1", 12.5, 1.0, 0.1, 1.0 / 3.0, 0.25, std::nullopt, std::nullopt};
    {
        MetricsWriter w(dir / "m.csv");
        w.write(row);
        row.poor_action_rate = 0.0625;
        w.write(row);
    }
    const auto table = read_csv(dir / "m.csv");
    ASSERT_EQ(table.rows.size(), 2u);
    EXPECT_EQ(table.header.size(), 10u);
    const int third = table.column("ep_return_mean");
    EXPECT_EQ(std::stod(table.rows[0][static_cast<std::size_t>(third)]), 1.0 / 3.0);
    EXPECT_EQ(table.rows[0][static_cast<std::size_t>(table.column("poor_action_rate"))], "");
    EXPECT_EQ(table.rows[1][static_cast<std::size_t>(table.column("poor_action_rate"))], "0.0625");
    EXPECT_ANY_THROW(table.column("no-such-column"));
}

TEST(Metrics, NumberFormatting)
{
    EXPECT_EQ(format_number(0.1), "0.1");
    EXPECT_EQ(format_number(200.0), "200");
    EXPECT_EQ(std::stod(format_number(1.0 / 7.0)), 1.0 / 7.0);
}

TEST(Table1, TailMeanAndFormatting)
{
    EXPECT_DOUBLE_EQ(tail_mean({1, 2, 3, 4}, 2), 3.5);
    EXPECT_DOUBLE_EQ(tail_mean({1, 2}, 10), 1.5);
    Table1Cell cell{"Animat", "R", {1.0, 3.0}, 2.0, std::sqrt(2.0)};
    const auto text = format_table1({cell});
    EXPECT_NE(text.find("Animat"), std::string::npos);
    EXPECT_NE(text.find("2.00 ± 1.41"), std::string::npos);
}

TEST(Table1, ScaledShrinksLifetimeAndTraining)
{
    const auto cfg = parse_run_config(load_config_text(kTinyConfig, "tiny.json", {"lifetime.episodes=40"}));
    const auto half = scaled(cfg, 0.5);
    EXPECT_EQ(half.advisor_run.lifetime.episodes, 20);
    EXPECT_EQ(half.advisor_run.lifetime.steps, 25);
    EXPECT_THROW(scaled(cfg, 0.0), ConfigError);
}

TEST(Cli, MissingRequiredFieldExitsTwoAndNamesIt)
{
    const auto dir = scratch("missing");
    std::string text = kTinyConfig;
    const auto at = text.find("  \"lifetime\"");
    text.erase(at, text.find('\n', at) - at + 1);
    write_file(dir / "c.json", text);
    EXPECT_EQ(run_cli("train --config " + (dir / "c.json").string() + " --out " + (dir / "out").string(),
                      dir / "log.txt"),
              2);
    EXPECT_NE(read_file(dir / "log.txt").find("lifetime"), std::string::npos);
}

TEST(Cli, UnknownSubcommandIsAUsageError)
{
    const auto dir = scratch("usage");
    EXPECT_EQ(run_cli("frobnicate", dir / "log.txt"), 2);
}

TEST(Cli, TrainTwiceIsByteIdentical)
{
    const auto dir = scratch("repeat");
    write_file(dir / "c.json", kTinyConfig);
    for (const char* out : {"a", "b"}) {
        ASSERT_EQ(run_cli("train --config " + (dir / "c.json").string() + " --out " + (dir / out).string(),
                          dir / "log.txt"),
                  0)
            << read_file(dir / "log.txt");
    }
    const auto a = read_file(dir / "a" / "metrics.csv");
    EXPECT_EQ(a.rfind(std::string(kMetricsHeader) + "\n", 0), 0u);
    EXPECT_EQ(a, read_file(dir / "b" / "metrics.csv"));
    EXPECT_EQ(read_file(dir / "a" / "checkpoints" / "mu_final.json"), read_file(dir / "b" / "checkpoints" / "mu_final.json"));
    EXPECT_EQ(read_file(dir / "a" / "manifest.json"), read_file(dir / "b" / "manifest.json"));

    ASSERT_EQ(run_cli("eval --config " + (dir / "c.json").string() + " --checkpoint "
                          + (dir / "a" / "checkpoints" / "mu_final.json").string() + " --out " + (dir / "e").string(),
                      dir / "log.txt"),
              0)
        << read_file(dir / "log.txt");
    const auto eval = read_csv(dir / "e" / "metrics.csv");
    EXPECT_EQ(eval.rows.size(), 4u);
    EXPECT_TRUE(fs::exists(dir / "e" / "fig6.csv"));
}

TEST(Cli, SeedFlagAndEnvironmentAgree)
{
    const auto dir = scratch("env");
    write_file(dir / "c.json", kTinyConfig);
    ASSERT_EQ(run_cli("train --config " + (dir / "c.json").string() + " --seed 11 --out " + (dir / "a").string(),
                      dir / "log.txt"),
              0);
    ASSERT_EQ(run_cli("train --config " + (dir / "c.json").string() + " --out " + (dir / "b").string(),
                      dir / "log.txt"),
              0);
    const std::string env = "METAEXPLORE_SEED=11 METAEXPLORE_OUT=" + (dir / "c").string() + " ";
    const int status = std::system((env + METAEXPLORE_CLI + " train --config " + (dir / "c.json").string()
                                    + " > /dev/null 2>&1")
                                       .c_str());
    ASSERT_EQ(WEXITSTATUS(status), 0);
    EXPECT_EQ(read_file(dir / "a" / "metrics.csv"), read_file(dir / "c" / "metrics.csv"));
    EXPECT_NE(read_file(dir / "a" / "metrics.csv"), read_file(dir / "b" / "metrics.csv"));
}

TEST(Cli, VerifyPassesAndTamperingFails)
{
    const auto dir = scratch("verify");
    const std::string cfg = (fs::path(METAEXPLORE_CONFIG_DIR) / "oracle.json").string();
    ASSERT_EQ(run_cli("verify --config " + cfg + " --out " + (dir / "ok").string(), dir / "log.txt"), 0)
        << read_file(dir / "log.txt");
    std::istringstream report(read_file(dir / "ok" / "report.txt"));
    std::string line;
    int checks = 0;
    while (std::getline(report, line)) {
        const auto parsed = parse_check(line);
        ASSERT_TRUE(parsed.has_value()) << line;
        EXPECT_TRUE(parsed->pass) << line;
        ++checks;
    }
    EXPECT_GT(checks, 100);
    EXPECT_EQ(run_cli("verify --config " + cfg + " --set oracle.y_offset=1e-6 --out " + (dir / "bad").string(),
                      dir / "log.txt"),
              1);
    EXPECT_NE(read_file(dir / "bad" / "report.txt").find("result=FAIL"), std::string::npos);
}
