#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "metaexplore/harness/commands.hpp"

using namespace metaexplore::harness;

namespace {

void add_common(CLI::App* cmd, CommandOptions& opts, bool config_required = true)
{
    auto* c = cmd->add_option("--config", opts.config, "run config (JSON)")->envname("METAEXPLORE_CONFIG");
    if (config_required) {
        c->required();
    }
    cmd->add_option("--seed", opts.seed, "root seed, overrides the config")->envname("METAEXPLORE_SEED");
    cmd->add_option("--out", opts.out, "output directory")->envname("METAEXPLORE_OUT");
    cmd->add_option("--set", opts.overrides, "config override key.path=value (repeatable)");
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Learned exploration advisors for reinforcement-learning agents"};
    app.require_subcommand(1);

    CommandOptions opts;
    int threads = 0;
    app.add_option("--threads", threads, "OpenMP threads (0: config or runtime default)")
        ->envname("METAEXPLORE_THREADS");

    auto* train = app.add_subcommand("train", "meta-train an advisor");
    add_common(train, opts);

    auto* eval = app.add_subcommand("eval", "evaluate a trained advisor on held-out tasks");
    add_common(eval, opts);
    eval->add_option("--checkpoint", opts.checkpoint, "advisor checkpoint")
        ->envname("METAEXPLORE_CHECKPOINT")
        ->required();

    auto* verify = app.add_subcommand("verify", "run the exact and Monte Carlo oracle checks");
    add_common(verify, opts);

    auto* table1 = app.add_subcommand("reproduce-table1", "train and score every method pair in the table config");
    add_common(table1, opts);
    table1->add_option("--scale", opts.scale, "fraction of lifetime and meta-training length")
        ->envname("METAEXPLORE_SCALE");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }
    if (threads > 0) {
        opts.overrides.push_back("run.threads=" + std::to_string(threads));
    }

    try {
        if (train->parsed()) {
            return cmd_train(opts, std::cout);
        }
        if (eval->parsed()) {
            return cmd_eval(opts, std::cout);
        }
        if (verify->parsed()) {
            return cmd_verify(opts, std::cout);
        }
        return cmd_reproduce_table1(opts, std::cout);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
