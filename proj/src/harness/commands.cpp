#include "metaexplore/harness/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include "metaexplore/harness/output.hpp"
#include "metaexplore/parallel.hpp"

namespace metaexplore::harness {

using nlohmann::json;

namespace {

class Stopwatch {
public:
    double seconds() const
    {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string hex64(std::uint64_t v)
{
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << text;
}

// Manifest with the config hash and a content hash per output file. Holds no
// timestamps so repeated runs produce the same bytes.
void write_manifest(const std::filesystem::path& out, const std::string& command, const RunConfig& cfg,
                    const std::vector<std::string>& files, const std::string& status)
{
    json m;
    m["format"] = "metaexplore-manifest";
    m["version"] = 1;
    m["command"] = command;
    m["run_id"] = cfg.run_id;
    m["seed"] = cfg.seed;
    m["config_hash"] = hex64(config_hash(cfg));
    m["config"] = cfg.canonical;
    m["status"] = status;
    json listed = json::array();
    for (const auto& f : files) {
        const auto path = out / f;
        if (std::filesystem::exists(path)) {
            listed.push_back({{"path", f}, {"fnv1a64", hex64(file_hash(path))}});
        }
    }
    m["files"] = listed;
    write_text(out / "manifest.json", m.dump(2) + "\n");
}

void mark_failure(const std::filesystem::path& out, const std::string& what)
{
    write_text(out / "FAILED", what + "\n");
}

int observation_dim(const ProblemClass& pc)
{
    return static_cast<int>(pc.state_space.dimension);
}

AgentInit agent_init_for(const RunConfig& cfg)
{
    Rng rng = Rng(cfg.seed).substream("agent-init");
    return make_agent_init(cfg.advisor_run.agent, observation_dim(cfg.problem), cfg.problem.num_actions, rng);
}

std::vector<Task> held_out_tasks(const RunConfig& cfg, int count)
{
    Rng rng = Rng(cfg.seed + cfg.eval.task_seed_offset).substream("eval-tasks");
    return sample_tasks(cfg.problem, count, rng);
}

void require_training_blocks(const ConfigDocument& doc)
{
    for (const char* p : {"/problem", "/lifetime", "/agent"}) {
        doc.require(p);
    }
}

double sample_sd(const std::vector<double>& v)
{
    return standard_error(v) * std::sqrt(static_cast<double>(v.size()));
}

} // namespace

RunConfig load_run_config(const CommandOptions& opts)
{
    auto overrides = opts.overrides;
    if (opts.seed) {
        overrides.push_back("seed=" + std::to_string(*opts.seed));
    }
    const auto doc = load_config(opts.config, overrides);
    return parse_run_config(doc);
}

ProblemClass build_problem_class(const RunConfig& cfg)
{
    return cfg.problem;
}

int cmd_train(const CommandOptions& opts, std::ostream& log)
{
    auto overrides = opts.overrides;
    if (opts.seed) {
        overrides.push_back("seed=" + std::to_string(*opts.seed));
    }
    const auto doc = load_config(opts.config, overrides);
    require_training_blocks(doc);
    doc.require("/advisor");
    const RunConfig cfg = parse_run_config(doc);
    set_threads(cfg.run.threads);

    std::filesystem::create_directories(opts.out / "checkpoints");
    std::filesystem::remove(opts.out / "FAILED");
    write_text(opts.out / "config.json", cfg.canonical.dump(2) + "\n");
    const std::string label = "seed=" + std::to_string(cfg.seed) + "/advisor-init";
    std::vector<std::string> files{"config.json", "metrics.csv"};

    const Stopwatch clock;
    MetricsWriter metrics(opts.out / "metrics.csv");
    TrainingHooks hooks;
    hooks.on_metrics = [&](const MetaEpisodeMetrics& m) {
        std::optional<double> wall;
        if (cfg.run.record_wall_time) {
            wall = clock.seconds();
        }
        metrics.write(to_row(cfg.run_id, m, wall));
        metrics.flush();
    };
    hooks.on_checkpoint = [&](int meta_episode, const PolicyParams& mu) {
        const std::string name = "checkpoints/mu_" + std::to_string(meta_episode + 1) + ".json";
        save_checkpoint(opts.out / name, mu, label);
        files.push_back(name);
    };

    TrainingResult result;
    try {
        result = train_advisor(cfg.problem, cfg.advisor_run, hooks);
    } catch (const std::exception& e) {
        metrics.flush();
        mark_failure(opts.out, e.what());
        write_manifest(opts.out, "train", cfg, files, "failed");
        log << "train failed: " << e.what() << "\n";
        return 1;
    }
    for (const auto& w : result.warnings) {
        log << "warning: " << w << "\n";
    }
    metrics.flush();
    save_checkpoint(opts.out / "checkpoints/mu_final.json", result.mu, label);
    files.push_back("checkpoints/mu_final.json");
    if (result.mu_value) {
        save_checkpoint(opts.out / "checkpoints/mu_value_final.json", *result.mu_value, label);
        files.push_back("checkpoints/mu_value_final.json");
    }
    write_manifest(opts.out, "train", cfg, files, "ok");

    std::vector<double> returns;
    for (const auto& m : result.metrics) {
        returns.push_back(m.lifetime_return);
    }
    log << "trained " << cfg.advisor_run.meta_episodes << " meta-episodes; mean lifetime return "
        << format_number(mean(returns)) << "\n";
    return 0;
}

int cmd_eval(const CommandOptions& opts, std::ostream& log)
{
    auto overrides = opts.overrides;
    if (opts.seed) {
        overrides.push_back("seed=" + std::to_string(*opts.seed));
    }
    const auto doc = load_config(opts.config, overrides);
    require_training_blocks(doc);
    const RunConfig cfg = parse_run_config(doc);
    set_threads(cfg.run.threads);
    if (opts.checkpoint.empty()) {
        throw ConfigError("eval needs --checkpoint");
    }

    AdvisorPolicy mu;
    mu.observe_episode_index = cfg.advisor_run.advisor.observe_episode_index;
    mu.episodes = cfg.advisor_run.lifetime.episodes;
    try {
        mu.params = load_checkpoint(opts.checkpoint);
    } catch (const std::exception& e) {
        throw ConfigError(opts.checkpoint.string() + ": " + e.what());
    }
    const int in_dim = observation_dim(cfg.problem) + (mu.observe_episode_index ? 1 : 0);
    if (mu.params->spec.input_dim != in_dim || mu.params->spec.num_actions() != cfg.problem.num_actions) {
        throw ConfigError(opts.checkpoint.string() + ": checkpoint expects input " + std::to_string(mu.params->spec.input_dim)
                          + " and " + std::to_string(mu.params->spec.num_actions()) + " actions; config has input "
                          + std::to_string(in_dim) + " and " + std::to_string(cfg.problem.num_actions) + " actions");
    }

    std::filesystem::create_directories(opts.out);
    std::filesystem::remove(opts.out / "FAILED");
    std::vector<std::string> files{"metrics.csv", "eval_pairs.csv", "eval_curves.csv", "eval_summary.csv",
                                   "fig3a_curves.svg", "fig3b_returns.svg"};
    try {
        const Stopwatch clock;
        const AgentInit init = agent_init_for(cfg);
        const auto tasks = held_out_tasks(cfg, cfg.eval.n_tasks);
        const auto ecfg = evaluation_config(cfg);
        const auto rep = evaluate_exploration(mu, std::span<const Task>(tasks), init, ecfg,
                                              Rng(cfg.seed).substream("eval"));

        MetricsWriter metrics(opts.out / "metrics.csv");
        CsvTable pairs{{"task_id", "repeat", "advisor_return", "random_return", "difference"}, {}};
        for (std::size_t k = 0; k < rep.pairs.size(); ++k) {
            const auto& p = rep.pairs[k];
            std::optional<double> wall;
            if (cfg.run.record_wall_time) {
                wall = clock.seconds();
            }
            metrics.write(to_row(cfg.run_id + "/advisor", summarize_lifetime(p.advisor, static_cast<int>(k), 0, p.task_id), wall));
            metrics.write(to_row(cfg.run_id + "/random", summarize_lifetime(p.random, static_cast<int>(k), 0, p.task_id), wall));
            pairs.rows.push_back({p.task_id, std::to_string(p.repeat), format_number(p.advisor.lifetime_return),
                                  format_number(p.random.lifetime_return),
                                  format_number(p.advisor.lifetime_return - p.random.lifetime_return)});
        }
        metrics.flush();
        write_csv(opts.out / "eval_pairs.csv", pairs);

        const bool animat = cfg.problem.kind == ClassKind::animat;
        const double enumerated = static_cast<double>(count_poor_actions(0.0)) / kAnimatActions;
        CsvTable curves{{"episode", "advisor", "random"}, {}};
        if (animat) {
            curves.header.insert(curves.header.end(), {"advisor_poor_rate", "random_poor_rate", "enumerated_poor_rate"});
        }
        for (std::size_t e = 0; e < rep.advisor_curve.size(); ++e) {
            std::vector<std::string> row{std::to_string(e), format_number(rep.advisor_curve[e]),
                                         format_number(rep.random_curve[e])};
            if (animat) {
                row.push_back(format_number(rep.advisor_poor_curve[e]));
                row.push_back(format_number(rep.random_poor_curve[e]));
                row.push_back(format_number(enumerated));
            }
            curves.rows.push_back(std::move(row));
        }
        write_csv(opts.out / "eval_curves.csv", curves);

        CsvTable summary{{"label", "mean", "standard_error"}, {}};
        summary.rows.push_back({"advisor", format_number(rep.advisor_mean), format_number(rep.advisor_se)});
        summary.rows.push_back({"random", format_number(rep.random_mean), format_number(rep.random_se)});
        summary.rows.push_back({"difference", format_number(rep.difference_mean), format_number(rep.difference_se)});
        write_csv(opts.out / "eval_summary.csv", summary);

        write_line_plot(opts.out / "eval_curves.csv", "episode", {"advisor", "random"}, opts.out / "fig3a_curves.svg",
                        "Per-episode return, advisor vs random exploration", "mean episode return");
        write_bar_plot(opts.out / "eval_summary.csv", "label", "mean", "standard_error", opts.out / "fig3b_returns.svg",
                       "Mean lifetime return", "lifetime return");
        if (animat) {
            write_line_plot(opts.out / "eval_curves.csv", "episode",
                            {"advisor_poor_rate", "random_poor_rate", "enumerated_poor_rate"},
                            opts.out / "fig4b_poor_actions.svg", "Poor-action rate among explored steps", "rate");
            files.push_back("fig4b_poor_actions.svg");
        }

        // Exploration-only rollouts against task-trained exploitation policies.
        CsvTable fig6{{"label", "mean_return"}, {}};
        const int n_fig6 = std::min<int>(3, static_cast<int>(tasks.size()));
        const int exploit_episodes = cfg.eval.exploitation_episodes > 0 ? cfg.eval.exploitation_episodes
                                                                         : cfg.advisor_run.lifetime.episodes;
        const int steps = cfg.advisor_run.lifetime.steps;
        const int horizon = cfg.eval.rollout_steps > 0 ? cfg.eval.rollout_steps : steps;
        const LearnerConfig exploit_agent = cfg.eval.exploitation_agent.value_or(cfg.advisor_run.agent);
        AgentInit exploit_init = init;
        if (cfg.eval.exploitation_agent) {
            Rng rng = Rng(cfg.seed).substream("exploitation-init");
            exploit_init = make_agent_init(exploit_agent, observation_dim(cfg.problem), cfg.problem.num_actions, rng);
        }
        for (int j = 0; j < n_fig6; ++j) {
            const Task& task = tasks[static_cast<std::size_t>(j)];
            const Rng rng = Rng(cfg.seed).substream("fig6", static_cast<std::uint64_t>(j));
            const auto pi = train_exploitation_policy(task, exploit_agent, exploit_init, {exploit_episodes, horizon},
                                                      cfg.advisor_run.schedule, rng.substream("train"));
            const auto exploit = exploitation_rollout(pi, task, cfg.eval.rollout_episodes, horizon, true,
                                                      rng.substream("exploit"));
            const auto explore = exploration_only_rollout(mu, task, cfg.eval.rollout_episodes, horizon,
                                                          rng.substream("explore"));
            fig6.rows.push_back({"task" + std::to_string(j) + "/exploration", format_number(mean(explore))});
            fig6.rows.push_back({"task" + std::to_string(j) + "/exploitation", format_number(mean(exploit))});
        }
        write_csv(opts.out / "fig6.csv", fig6);
        write_bar_plot(opts.out / "fig6.csv", "label", "mean_return", "", opts.out / "fig6.svg",
                       "Exploration-only vs exploitation policy", "mean episode return");
        files.insert(files.end(), {"fig6.csv", "fig6.svg"});

        std::ostringstream text;
        text << "advisor_mean=" << format_number(rep.advisor_mean) << " se=" << format_number(rep.advisor_se) << "\n"
             << "random_mean=" << format_number(rep.random_mean) << " se=" << format_number(rep.random_se) << "\n"
             << "difference_mean=" << format_number(rep.difference_mean)
             << " se=" << format_number(rep.difference_se) << "\n";
        if (animat) {
            text << "enumerated_poor_rate=" << format_number(enumerated) << "\n";
        }
        write_text(opts.out / "summary.txt", text.str());
        files.push_back("summary.txt");
        log << text.str();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        mark_failure(opts.out, e.what());
        write_manifest(opts.out, "eval", cfg, files, "failed");
        log << "eval failed: " << e.what() << "\n";
        return 1;
    }
    write_manifest(opts.out, "eval", cfg, files, "ok");
    return 0;
}

int cmd_verify(const CommandOptions& opts, std::ostream& log)
{
    const RunConfig cfg = load_run_config(opts);
    set_threads(cfg.run.threads);
    std::filesystem::create_directories(opts.out);
    std::filesystem::remove(opts.out / "FAILED");
    std::vector<CheckLine> lines;
    try {
        lines = run_oracle_suite(cfg.oracle);
    } catch (const std::exception& e) {
        mark_failure(opts.out, e.what());
        write_manifest(opts.out, "verify", cfg, {}, "failed");
        log << "verify failed: " << e.what() << "\n";
        return 1;
    }
    std::string report;
    int failures = 0;
    for (const auto& l : lines) {
        report += format_check(l) + "\n";
        failures += l.pass ? 0 : 1;
    }
    write_text(opts.out / "report.txt", report);
    write_manifest(opts.out, "verify", cfg, {"report.txt"}, failures == 0 ? "ok" : "checks-failed");
    for (const auto& l : lines) {
        if (!l.pass) {
            log << format_check(l) << "\n";
        }
    }
    log << lines.size() - static_cast<std::size_t>(failures) << "/" << lines.size() << " checks passed\n";
    return failures == 0 ? 0 : 1;
}

RunConfig scaled(const RunConfig& cfg, double scale)
{
    if (!(scale > 0.0 && scale <= 1.0)) {
        throw ConfigError("scale must lie in (0, 1]");
    }
    RunConfig out = cfg;
    auto shrink = [scale](int v) { return std::max(1, static_cast<int>(std::lround(v * scale))); };
    out.advisor_run.lifetime.episodes = shrink(cfg.advisor_run.lifetime.episodes);
    out.advisor_run.meta_episodes = shrink(cfg.advisor_run.meta_episodes);
    return out;
}

double tail_mean(const std::vector<double>& returns, int window)
{
    if (returns.empty()) {
        return std::nan("");
    }
    const auto w = std::min(returns.size(), static_cast<std::size_t>(std::max(window, 1)));
    double s = 0.0;
    for (std::size_t k = returns.size() - w; k < returns.size(); ++k) {
        s += returns[k];
    }
    return s / static_cast<double>(w);
}

std::pair<Table1Cell, Table1Cell> table1_pair(const std::string& domain, const std::string& method,
                                              const RunConfig& cfg, int tasks, int repeats, int window,
                                              std::vector<std::pair<std::string, MetaEpisodeMetrics>>* training)
{
    const auto trained = train_advisor(cfg.problem, cfg.advisor_run);
    if (training != nullptr) {
        for (const auto& m : trained.metrics) {
            training->emplace_back(domain + "/" + method + "+Advisor", m);
        }
    }
    AdvisorPolicy mu;
    mu.params = trained.mu;
    mu.observe_episode_index = cfg.advisor_run.advisor.observe_episode_index;
    mu.episodes = cfg.advisor_run.lifetime.episodes;

    auto ecfg = evaluation_config(cfg);
    ecfg.repeats = repeats;
    const auto test_tasks = held_out_tasks(cfg, tasks);
    const auto rep = evaluate_exploration(mu, std::span<const Task>(test_tasks), trained.agent_init, ecfg,
                                          Rng(cfg.seed).substream("table1-eval"));
    Table1Cell without{domain, method, {}, 0.0, 0.0};
    Table1Cell with{domain, method + "+Advisor", {}, 0.0, 0.0};
    for (const auto& p : rep.pairs) {
        if (p.advisor.valid && p.random.valid) {
            with.scores.push_back(tail_mean(p.advisor.episode_returns, window));
            without.scores.push_back(tail_mean(p.random.episode_returns, window));
        }
    }
    for (auto* c : {&without, &with}) {
        c->mean = mean(c->scores);
        c->sd = sample_sd(c->scores);
    }
    return {without, with};
}

std::string format_table1(const std::vector<Table1Cell>& cells)
{
    const char* methods[] = {"R", "R+Advisor", "PPO", "PPO+Advisor"};
    std::vector<std::string> domains;
    for (const auto& c : cells) {
        if (std::find(domains.begin(), domains.end(), c.domain) == domains.end()) {
            domains.push_back(c.domain);
        }
    }
    std::ostringstream os;
    os << "| Problem | R | R+Advisor | PPO | PPO+Advisor |\n";
    os << "|---|---|---|---|---|\n";
    for (const auto& d : domains) {
        os << "| " << d;
        for (const char* m : methods) {
            const auto it = std::find_if(cells.begin(), cells.end(),
                                         [&](const Table1Cell& c) { return c.domain == d && c.method == m; });
            if (it == cells.end()) {
                os << " | -";
            } else {
                char buf[64];
                std::snprintf(buf, sizeof buf, "%.2f ± %.2f", it->mean, it->sd);
                os << " | " << buf;
            }
        }
        os << " |\n";
    }
    return os.str();
}

int cmd_reproduce_table1(const CommandOptions& opts, std::ostream& log)
{
    const RunConfig cfg = load_run_config(opts);
    set_threads(cfg.run.threads);
    if (cfg.table1.domains.empty()) {
        throw ConfigError(opts.config.string() + ": table1.domains lists no problem classes");
    }
    const double scale = opts.scale.value_or(cfg.table1.scale);
    auto window_for = [&](const Table1Domain& d) {
        return std::max(1, static_cast<int>(std::lround(d.window.value_or(cfg.table1.window) * scale)));
    };

    std::vector<std::pair<Table1Domain, std::pair<RunConfig, RunConfig>>> domains;
    for (const auto& d : cfg.table1.domains) {
        auto load = [&](const std::filesystem::path& rel) {
            CommandOptions sub;
            sub.config = rel.is_absolute() ? rel : opts.config.parent_path() / rel;
            sub.seed = cfg.seed;
            const auto doc = load_config(sub.config, {"seed=" + std::to_string(cfg.seed)});
            require_training_blocks(doc);
            doc.require("/advisor");
            return scaled(parse_run_config(doc), scale);
        };
        domains.push_back({d, {load(d.reinforce), load(d.ppo)}});
    }

    std::filesystem::create_directories(opts.out);
    std::filesystem::remove(opts.out / "FAILED");
    std::vector<std::string> files{"metrics.csv", "table1.csv", "table1.md"};
    std::vector<Table1Cell> cells;
    std::vector<std::pair<std::string, MetaEpisodeMetrics>> training;
    try {
        for (const auto& [d, pair] : domains) {
            for (const auto& [method, c] : {std::pair<std::string, const RunConfig*>{"R", &pair.first},
                                            std::pair<std::string, const RunConfig*>{"PPO", &pair.second}}) {
                log << "table1: " << d.name << " / " << method << "\n";
                auto [without, with] = table1_pair(d.name, method, *c, cfg.table1.tasks, cfg.table1.repeats,
                                                   window_for(d), &training);
                cells.push_back(std::move(without));
                cells.push_back(std::move(with));
            }
        }
    } catch (const std::exception& e) {
        mark_failure(opts.out, e.what());
        write_manifest(opts.out, "reproduce-table1", cfg, {}, "failed");
        log << "reproduce-table1 failed: " << e.what() << "\n";
        return 1;
    }

    MetricsWriter metrics(opts.out / "metrics.csv");
    for (const auto& [run, m] : training) {
        metrics.write(to_row(run, m));
    }
    metrics.flush();
    CsvTable table{{"problem", "method", "mean", "sd", "n"}, {}};
    for (const auto& c : cells) {
        table.rows.push_back({c.domain, c.method, format_number(c.mean), format_number(c.sd),
                              std::to_string(c.scores.size())});
    }
    write_csv(opts.out / "table1.csv", table);
    const std::string md = format_table1(cells);
    write_text(opts.out / "table1.md", md);
    write_manifest(opts.out, "reproduce-table1", cfg, files, "ok");
    log << md;
    return 0;
}

} // namespace metaexplore::harness
