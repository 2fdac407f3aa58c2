#include <benchmark/benchmark.h>

#include "metaexplore/advisor.hpp"
#include "metaexplore/oracle.hpp"

using namespace metaexplore;

namespace {

struct LifetimeFixture {
    ProblemClass pc = make_cartpole_class();
    std::vector<Task> tasks;
    LearnerConfig agent;
    AgentInit init;
    AdvisorPolicy mu = AdvisorPolicy::uniform();

    explicit LifetimeFixture(int n)
    {
        Rng rng(1);
        tasks = sample_tasks(pc, n, rng);
        agent.network.hidden = {16};
        Rng init_rng(2);
        init = make_agent_init(agent, 4, 2, init_rng);
    }
};

void run_lifetimes_kernel(benchmark::State& state, Execution exec)
{
    const LifetimeFixture fx(static_cast<int>(state.range(0)));
    std::vector<LifetimeJob> jobs;
    for (std::size_t j = 0; j < fx.tasks.size(); ++j) {
        jobs.push_back({&fx.tasks[j], &fx.mu, Rng(3).substream("job", j)});
    }
    for (auto _ : state) {
        auto out = run_lifetimes(jobs, fx.agent, fx.init, {5, 200}, {}, {false}, exec);
        benchmark::DoNotOptimize(out);
    }
}

void BM_LifetimesSerial(benchmark::State& state) { run_lifetimes_kernel(state, Execution::serial); }
void BM_LifetimesParallel(benchmark::State& state) { run_lifetimes_kernel(state, Execution::parallel); }

void monte_carlo_kernel(benchmark::State& state, Execution exec)
{
    TabularAdvisor mu;
    MetaModel model = exact_fixture(3, &mu);
    model.rule = AgentRule::quantized_q(model.num_states(), model.num_actions(), 1.0);
    Theorem1Options opt;
    opt.mode = VerifyMode::monte_carlo;
    opt.n_samples = state.range(0);
    opt.execution = exec;
    for (auto _ : state) {
        auto rep = verify_theorem1(model, mu, opt);
        benchmark::DoNotOptimize(rep);
    }
}

void BM_MonteCarloSerial(benchmark::State& state) { monte_carlo_kernel(state, Execution::serial); }
void BM_MonteCarloParallel(benchmark::State& state) { monte_carlo_kernel(state, Execution::parallel); }

} // namespace

BENCHMARK(BM_LifetimesSerial)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LifetimesParallel)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MonteCarloSerial)->Arg(10000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MonteCarloParallel)->Arg(10000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
