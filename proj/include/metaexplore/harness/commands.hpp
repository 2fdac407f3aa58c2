#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "metaexplore/harness/config.hpp"

namespace metaexplore::harness {

struct CommandOptions {
    std::filesystem::path config;
    std::optional<std::uint64_t> seed;
    std::filesystem::path out = "out";
    std::vector<std::string> overrides;
    std::filesystem::path checkpoint; // eval
    std::optional<double> scale;      // reproduce-table1
};

// Each command returns the process exit status: 0 success, 1 failed checks or
// runtime failure, 2 invalid configuration.
int cmd_train(const CommandOptions& opts, std::ostream& log);
int cmd_eval(const CommandOptions& opts, std::ostream& log);
int cmd_verify(const CommandOptions& opts, std::ostream& log);
int cmd_reproduce_table1(const CommandOptions& opts, std::ostream& log);

RunConfig load_run_config(const CommandOptions& opts);

ProblemClass build_problem_class(const RunConfig& cfg);

// Paired evaluation lifetimes, scored by the mean return over the last
// `window` episodes.
struct Table1Cell {
    std::string domain;
    std::string method;
    std::vector<double> scores;
    double mean = 0.0;
    double sd = 0.0;
};

struct Table1Result {
    std::vector<Table1Cell> cells;
    std::vector<std::pair<std::string, MetaEpisodeMetrics>> training_metrics;
};

// Trains an advisor with `cfg` and scores paired lifetimes (learned advisor vs
// uniform exploration) on held-out tasks. Returns {without, with} advisor.
std::pair<Table1Cell, Table1Cell> table1_pair(const std::string& domain, const std::string& method,
                                              const RunConfig& cfg, int tasks, int repeats, int window,
                                              std::vector<std::pair<std::string, MetaEpisodeMetrics>>* training = nullptr);

std::string format_table1(const std::vector<Table1Cell>& cells);

// Scales the lifetime length and meta-episodes of a config by `scale`.
RunConfig scaled(const RunConfig& cfg, double scale);

double tail_mean(const std::vector<double>& returns, int window);

} // namespace metaexplore::harness
