#include <gtest/gtest.h>

#include <cmath>

#include "metaexplore/oracle.hpp"

using namespace metaexplore;

namespace {

MetaModel chain_model(double goal, EpsilonSchedule schedule, LifetimeConfig lifetime = {2, 2})
{
    MetaModel m;
    m.tasks = {make_two_state_chain(goal)};
    m.task_weights = {1.0};
    m.rule = AgentRule::frozen(2, 2, {0.5, 0.5, 0.5, 0.5});
    m.lifetime = lifetime;
    m.schedule = schedule;
    m.validate();
    return m;
}

MetaState at(int s, int i, int t)
{
    return {s, i, t, 0, {}};
}

// Closed form for the chain: the goal is reached on a step with probability
// p_i = eps_i * mu(1) + (1 - eps_i) * pi(1), and the episode pays `goal` once.
double chain_return(double goal, double mu_goal, double pi_goal, EpsilonSchedule schedule, LifetimeConfig lt)
{
    double total = 0.0;
    for (int i = 0; i < lt.episodes; ++i) {
        const double eps = schedule.at(i);
        const double p = eps * mu_goal + (1 - eps) * pi_goal;
        total += goal * (1.0 - std::pow(1.0 - p, lt.steps));
    }
    return total;
}

TabularAdvisor always(int action)
{
    TabularAdvisor mu = TabularAdvisor::uniform(2, 2);
    for (int s = 0; s < 2; ++s) {
        mu.probs[static_cast<std::size_t>(s * 2 + action)] = 1.0;
        mu.probs[static_cast<std::size_t>(s * 2 + 1 - action)] = 0.0;
    }
    return mu;
}

} // namespace

TEST(MetaTransition, ChainInteriorRows)
{
    const auto m = chain_model(1.0, {0.5, 1.0});
    EXPECT_DOUBLE_EQ(meta_transition(m, at(0, 0, 0), 1, at(1, 0, 1)), 0.75);
    EXPECT_DOUBLE_EQ(meta_reward(m, at(0, 0, 0), 1, at(1, 0, 1)), 1.0);
    EXPECT_DOUBLE_EQ(meta_transition(m, at(0, 0, 0), 0, at(1, 0, 1)), 0.25);
    EXPECT_DOUBLE_EQ(meta_reward(m, at(0, 0, 0), 0, at(1, 0, 1)), 1.0);
    EXPECT_DOUBLE_EQ(meta_transition(m, at(0, 0, 0), 1, at(0, 0, 1)), 0.25);
    EXPECT_DOUBLE_EQ(meta_reward(m, at(0, 0, 0), 1, at(0, 0, 1)), 0.0);
    EXPECT_DOUBLE_EQ(meta_transition(m, at(0, 0, 0), 0, at(0, 0, 1)), 0.75);
}

TEST(MetaTransition, ImpossibleTransitionHasNoReward)
{
    const auto m = chain_model(1.0, {0.5, 1.0});
    EXPECT_EQ(meta_transition(m, at(0, 0, 0), 1, at(0, 0, 2)), 0.0);
    EXPECT_THROW(meta_reward(m, at(0, 0, 0), 1, at(0, 0, 2)), std::domain_error);
    EXPECT_THROW(meta_reward(m, at(0, 0, 0), 1, at(0, 1, 0)), std::domain_error);
}

TEST(MetaTransition, EpisodeBoundaryKeepsMemory)
{
    const auto m = chain_model(1.0, {0.5, 1.0});
    // Terminal state and step cap both end the episode.
    for (const auto& x : {at(1, 0, 1), at(0, 0, 2)}) {
        EXPECT_DOUBLE_EQ(meta_transition(m, x, 0, at(0, 1, 0)), 1.0);
        EXPECT_DOUBLE_EQ(meta_transition(m, x, 1, at(0, 1, 0)), 1.0);
        EXPECT_EQ(meta_reward(m, x, 1, at(0, 1, 0)), 0.0);
        EXPECT_EQ(meta_transition(m, x, 1, at(1, 1, 0)), 0.0);
    }
}

TEST(MetaTransition, LifetimeBoundaryResamplesTask)
{
    MetaModel m;
    m.tasks = {make_two_state_chain(1.0), make_two_state_chain(2.0)};
    m.task_weights = {0.25, 0.75};
    m.rule = AgentRule::quantized_q(2, 2, 1.0);
    m.lifetime = {2, 2};
    m.schedule = {0.5, 1.0};
    m.validate();
    Memory learned = m.rule.initial_memory();
    learned[1] = 3;
    const MetaState last{1, 1, 1, 0, learned};
    EXPECT_DOUBLE_EQ(meta_transition(m, last, 0, {0, 0, 0, 0, m.rule.initial_memory()}), 0.25);
    EXPECT_DOUBLE_EQ(meta_transition(m, last, 0, {0, 0, 0, 1, m.rule.initial_memory()}), 0.75);
    EXPECT_EQ(meta_transition(m, last, 0, {0, 0, 0, 1, learned}), 0.0);
    // Within the lifetime the episode boundary carries the learned memory.
    const MetaState mid{1, 0, 1, 0, learned};
    EXPECT_DOUBLE_EQ(meta_transition(m, mid, 0, {0, 1, 0, 0, learned}), 1.0);
}

TEST(MetaTransition, IndicesOutsideTheLifetimeRejected)
{
    const auto m = chain_model(1.0, {0.5, 1.0});
    EXPECT_THROW(meta_transition(m, at(0, 2, 0), 0, at(0, 0, 0)), std::invalid_argument);
    EXPECT_THROW(meta_transition(m, at(0, 0, 3), 0, at(0, 0, 0)), std::invalid_argument);
    EXPECT_THROW(meta_transition(m, at(0, 0, 0), 2, at(0, 0, 1)), std::invalid_argument);
}

TEST(AgentRule, QuantizedUpdateRoundsHalfUpOnTheGrid)
{
    const auto rule = AgentRule::quantized_q(2, 2, 1.0, 0.5, 1.0);
    const Memory m0 = rule.initial_memory();
    ASSERT_EQ(m0.size(), 4u);
    // 0 + 0.5 * (1 - 0) = 0.5 -> level 2.
    EXPECT_EQ(rule.update(m0, 0, 1, 1.0, 1, true)[1], 2);
    // 0.125 is half a level: rounds up to 0.25.
    EXPECT_EQ(rule.update(m0, 0, 1, 0.25, 1, true)[1], 1);
    // Targets past the top of the grid clamp to it.
    Memory high = m0;
    high[1] = 4;
    EXPECT_EQ(rule.update(high, 0, 1, 5.0, 1, true)[1], 4);
    // Bootstrapping reads max Q(s') unless s' is terminal.
    Memory boot = m0;
    boot[2] = 4;
    EXPECT_EQ(rule.update(boot, 0, 0, 0.0, 1, false)[0], 2);
    EXPECT_EQ(rule.update(boot, 0, 0, 0.0, 1, true)[0], 0);
}

TEST(AgentRule, GreedyPolicySplitsTies)
{
    const auto rule = AgentRule::quantized_q(1, 3, 1.0);
    Memory m{2, 2, 1};
    std::vector<double> pi(3);
    rule.policy(m, 0, pi);
    EXPECT_DOUBLE_EQ(pi[0], 0.5);
    EXPECT_DOUBLE_EQ(pi[1], 0.5);
    EXPECT_DOUBLE_EQ(pi[2], 0.0);
}

TEST(BuildMetaMdp, ChainStateCountByHand)
{
    const auto m = chain_model(1.0, {0.5, 1.0});
    const auto meta = build_meta_mdp(m);
    // Per episode: (s,t) in {(0,0), (0,1), (1,1), (0,2), (1,2)}; two episodes.
    EXPECT_EQ(meta.states.size(), 10u);
    EXPECT_DOUBLE_EQ(meta.initial[static_cast<std::size_t>(meta.index.at(at(0, 0, 0)))], 1.0);
    for (std::size_t x = 0; x < meta.states.size(); ++x) {
        for (int u = 0; u < 2; ++u) {
            double total = 0.0;
            for (const auto& e : meta.row(static_cast<int>(x), u)) {
                total += e.p;
            }
            EXPECT_NEAR(total, 1.0, 1e-15);
        }
    }
}

TEST(BuildMetaMdp, StateCapEnforced)
{
    const auto m = chain_model(1.0, {0.5, 1.0});
    EXPECT_THROW(build_meta_mdp(m, 4), std::length_error);
}

TEST(DpExpectedReturn, ChainClosedForm)
{
    const LifetimeConfig lt{2, 2};
    for (EpsilonSchedule sch : {EpsilonSchedule{0.5, 1.0}, EpsilonSchedule{0.8, 0.5}}) {
        const auto m = chain_model(1.0, sch, lt);
        const auto meta = build_meta_mdp(m);
        for (int u : {0, 1}) {
            const double expect = chain_return(1.0, u, 0.5, sch, lt);
            EXPECT_NEAR(dp_expected_return(m, meta, always(u)), expect, 1e-14);
            EXPECT_NEAR(brute_force_lifetime_return(m, always(u)), expect, 1e-14);
        }
        const double uniform = chain_return(1.0, 0.5, 0.5, sch, lt);
        EXPECT_NEAR(dp_expected_return(m, meta, TabularAdvisor::uniform(2, 2)), uniform, 1e-14);
    }
    // Frozen values of the closed form: eps 0.8 then 0.4, always exploring to the goal.
    const auto m = chain_model(1.0, {0.8, 0.5});
    EXPECT_NEAR(dp_expected_return(m, build_meta_mdp(m), always(1)), 1.9, 1e-14);
}

TEST(DpExpectedReturn, ZeroRewardsGiveZero)
{
    const auto m = chain_model(0.0, {0.8, 0.9}, {3, 3});
    Rng rng(3);
    const auto mu = TabularAdvisor::random(2, 2, rng);
    EXPECT_EQ(dp_expected_return(m, build_meta_mdp(m), mu), 0.0);
}

TEST(DpExpectedReturn, ScalesWithRewards)
{
    TabularAdvisor mu;
    const auto model = exact_fixture(3, &mu);
    auto scaled = model;
    for (auto& t : scaled.tasks) {
        for (auto& r : t.reward) {
            r *= 10.0;
        }
    }
    const double base = dp_expected_return(model, build_meta_mdp(model), mu);
    const double big = dp_expected_return(scaled, build_meta_mdp(scaled), mu);
    EXPECT_NEAR(big, 10.0 * base, 1e-9 * std::max(1.0, std::abs(big)));
}

TEST(DpExpectedReturn, LearningAgentMatchesBruteForce)
{
    MetaModel m;
    m.tasks = {make_two_state_chain(1.0), make_two_state_chain(0.75)};
    m.task_weights = {0.5, 0.5};
    m.rule = AgentRule::quantized_q(2, 2, 1.0);
    m.lifetime = {3, 2};
    m.schedule = {0.8, 0.5};
    m.validate();
    Rng rng(11);
    const auto mu = TabularAdvisor::random(2, 2, rng);
    EXPECT_NEAR(dp_expected_return(m, build_meta_mdp(m), mu), brute_force_lifetime_return(m, mu), 1e-12);
}

TEST(DpExpectedReturn, FullExplorationDependsOnlyOnAdvisor)
{
    TabularAdvisor mu;
    auto model = exact_fixture(5, &mu);
    ASSERT_EQ(model.schedule.epsilon0, 1.0);
    const double a = dp_expected_return(model, build_meta_mdp(model), mu);
    Rng rng(4);
    std::vector<double> other(model.rule.frozen_policy.size());
    for (std::size_t s = 0; s < other.size(); s += 2) {
        other[s] = 1.0;
    }
    model.rule = AgentRule::frozen(model.num_states(), model.num_actions(), other);
    const double b = dp_expected_return(model, build_meta_mdp(model), mu);
    EXPECT_NEAR(a, b, 1e-12);
}

TEST(SingleStepIdentity, ExactAtEpsilonZeroAndOne)
{
    const TabularClassSpec spec{4, 3, 1, 3, 1, 0.0, 1.0, true};
    Rng rng(21);
    const auto task = sample_tabular_model(spec, rng);
    const auto mu = TabularAdvisor::uniform(4, 3);
    std::vector<double> pi(12, 0.25);
    for (int s = 0; s < 4; ++s) {
        pi[static_cast<std::size_t>(s * 3)] = 0.5;
    }
    for (double eps : {0.0, 1.0}) {
        const auto r = verify_lemma1(task, 0, mu, pi, {eps, 1.0}, {1, 2});
        EXPECT_EQ(r.diff, 0.0);
    }
}

TEST(SingleStepIdentity, RandomConfigurations)
{
    Rng rng(22);
    for (int j = 0; j < 20; ++j) {
        TabularClassSpec spec;
        spec.num_states = 2 + static_cast<int>(rng.uniform_index(5));
        spec.num_actions = 2 + static_cast<int>(rng.uniform_index(3));
        spec.max_successors = spec.num_states;
        spec.reward_min = -1.0;
        const auto task = sample_tabular_model(spec, rng);
        const auto mu = TabularAdvisor::random(spec.num_states, spec.num_actions, rng);
        const auto pi = TabularAdvisor::random(spec.num_states, spec.num_actions, rng).probs;
        const auto r = verify_lemma1(task, 1, mu, pi, {rng.uniform(), 0.9}, {3, 3});
        EXPECT_LT(r.diff, 1e-12);
    }
}

TEST(SingleStepIdentity, OffsetIsDetected)
{
    const auto task = make_two_state_chain(1.0);
    const auto mu = TabularAdvisor::uniform(2, 2);
    const std::vector<double> pi(4, 0.5);
    EXPECT_GT(verify_lemma1(task, 0, mu, pi, {0.5, 1.0}, {1, 2}, {}, 1e-6).diff, 1e-12);
}

TEST(LifetimeIdentity, ExactOnEveryFixture)
{
    for (int k = 0; k < 6; ++k) {
        TabularAdvisor mu;
        const auto model = exact_fixture(k, &mu);
        EXPECT_LE(model.num_states(), 4);
        EXPECT_LE(model.lifetime.episodes, 3);
        EXPECT_LE(model.lifetime.steps, 3);
        const auto rep = verify_theorem1(model, mu, {});
        EXPECT_TRUE(rep.pass) << "fixture " << k << " diff " << rep.diff;
        EXPECT_LT(rep.diff, 1e-9);
    }
    EXPECT_THROW(exact_fixture(6, nullptr), std::out_of_range);
}

TEST(LifetimeIdentity, MonteCarloWithLearningAgent)
{
    MetaModel m;
    m.tasks = {make_two_state_chain(1.0), make_two_state_chain(0.5)};
    m.task_weights = {0.5, 0.5};
    m.rule = AgentRule::quantized_q(2, 2, 1.0);
    m.lifetime = {3, 3};
    m.schedule = {0.8, 0.9};
    m.validate();
    Rng rng(5);
    const auto mu = TabularAdvisor::random(2, 2, rng);
    Theorem1Options opt;
    opt.mode = VerifyMode::monte_carlo;
    opt.n_samples = 4000;
    opt.seed = 3;
    const auto rep = verify_theorem1(m, mu, opt);
    EXPECT_TRUE(rep.pass);
    EXPECT_EQ(rep.samples, 4000);
    EXPECT_GT(rep.standard_error, 0.0);
}

TEST(PairedLifetime, RewardAndYSumsAgreeForFrozenChain)
{
    // Y on an interior row is the realized reward averaged over executed
    // actions that reach the same successor; on the chain that is exact.
    const auto m = chain_model(1.0, {0.5, 1.0});
    const auto mu = TabularAdvisor::uniform(2, 2);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto sums = simulate_paired_lifetime(m, mu, Rng(seed));
        EXPECT_DOUBLE_EQ(sums.rewards, sums.y);
    }
}

TEST(OracleSuite, PassesAndDetectsTampering)
{
    OracleSuiteConfig cfg;
    cfg.lemma_configs = 10;
    cfg.mc_lifetimes = 2000;
    const auto lines = run_oracle_suite(cfg);
    ASSERT_FALSE(lines.empty());
    for (const auto& l : lines) {
        EXPECT_TRUE(l.pass) << format_check(l);
    }
    cfg.y_offset = 1e-6;
    int failed = 0;
    for (const auto& l : run_oracle_suite(cfg)) {
        failed += l.pass ? 0 : 1;
    }
    EXPECT_GT(failed, 0);
}

TEST(CheckLine, FormatParseRoundTrip)
{
    const CheckLine line{"meta/rows-normalized-0", 0.1, 0.30000000000000004, 2e-16, 1e-12, true};
    const auto text = format_check(line);
    EXPECT_EQ(text.rfind("check=meta/rows-normalized-0 lhs=", 0), 0u);
    const auto back = parse_check(text);
    ASSERT_TRUE(back.has_value());
    EXPECT_EQ(back->name, line.name);
    EXPECT_EQ(back->lhs, line.lhs);
    EXPECT_EQ(back->rhs, line.rhs);
    EXPECT_TRUE(back->pass);
}

TEST(CheckLine, MalformedLinesRejected)
{
    EXPECT_FALSE(parse_check("").has_value());
    EXPECT_FALSE(parse_check("check=a lhs=1 rhs=1 diff=0 tol=0").has_value());
    EXPECT_FALSE(parse_check("check=a lhs=1 rhs=1 diff=0 tol=0 result=OK").has_value());
    EXPECT_FALSE(parse_check("check=a rhs=1 lhs=1 diff=0 tol=0 result=PASS").has_value());
    EXPECT_FALSE(parse_check("check=a lhs=1x rhs=1 diff=0 tol=0 result=PASS").has_value());
    EXPECT_FALSE(parse_check("check=a lhs=1 rhs=1 diff=0 tol=0 result=PASS extra=1").has_value());
}
