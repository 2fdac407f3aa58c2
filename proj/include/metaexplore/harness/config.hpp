#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "metaexplore/advisor.hpp"
#include "metaexplore/oracle.hpp"

namespace metaexplore::harness {

// Invalid configuration. The CLI maps it to exit status 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Line (1-based) of every value in a JSON document, keyed by JSON pointer.
// Object members map to the line of their key.
std::map<std::string, int> index_json_lines(std::string_view text);

struct SchemaError {
    std::string pointer;
    std::string message;
};

// Validates against the subset of JSON Schema used by the bundled schema:
// type, properties, required, additionalProperties (false), enum, minimum,
// maximum, exclusiveMinimum, items, minItems, maxItems and local $ref.
std::vector<SchemaError> validate_schema(const nlohmann::json& schema, const nlohmann::json& doc);

const nlohmann::json& run_config_schema();

// A parsed and schema-checked config document with its source positions.
struct ConfigDocument {
    std::string source;
    nlohmann::json json;
    std::map<std::string, int> lines;

    // "<source>:<line>: " for a pointer, falling back to the nearest parent.
    std::string where(const std::string& pointer) const;
    [[noreturn]] void fail(const std::string& pointer, const std::string& message) const;
    void require(const std::string& pointer) const;
};

// Overrides are "a.b.c=value"; the value is parsed as JSON when possible and
// taken as a string otherwise.
ConfigDocument load_config_text(const std::string& text, const std::string& source,
                                const std::vector<std::string>& overrides = {});
ConfigDocument load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

struct EvalSettings {
    int n_tasks = 5;
    int repeats = 1;
    std::uint64_t task_seed_offset = 1000003;
    int exploitation_episodes = 0; // 0: lifetime.episodes
    int rollout_episodes = 20;
    int rollout_steps = 0; // 0: lifetime.steps
    std::optional<LearnerConfig> exploitation_agent; // unset: the lifetime agent
};

// One Table 1 row: separate configs for the REINFORCE and PPO method pairs.
struct Table1Domain {
    std::string name;
    std::filesystem::path reinforce;
    std::filesystem::path ppo;
    std::optional<int> window; // overrides Table1Settings::window
};

struct Table1Settings {
    double scale = 1.0;
    int repeats = 5;
    int tasks = 5;
    int window = 50;
    std::vector<Table1Domain> domains;
};

struct RunSettings {
    bool record_wall_time = false;
    Execution execution = Execution::parallel;
    int threads = 0;
};

struct RunConfig {
    std::string run_id = "run";
    std::uint64_t seed = 0;
    ProblemClass problem;
    TabularClassSpec tabular_spec;
    std::uint64_t tabular_seed = 0;
    AdvisorRunConfig advisor_run;
    EvalSettings eval;
    Table1Settings table1;
    OracleSuiteConfig oracle;
    RunSettings run;
    nlohmann::json canonical;
};

// Builds typed settings; semantic errors are reported with source lines.
RunConfig parse_run_config(const ConfigDocument& doc);

EvaluationConfig evaluation_config(const RunConfig& cfg);

std::uint64_t config_hash(const RunConfig& cfg);

} // namespace metaexplore::harness
