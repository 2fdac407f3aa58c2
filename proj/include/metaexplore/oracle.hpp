#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "metaexplore/core.hpp"
#include "metaexplore/parallel.hpp"

namespace metaexplore {

// Finite agent memory: empty for a frozen agent, one grid index per (s, a)
// entry of the Q-table for the quantized learner.
using Memory = std::vector<std::uint8_t>;

enum class AgentRuleKind { frozen, quantized_q };

// A deterministic learning rule l(M, s, a, r, s') with a policy pi_M.
struct AgentRule {
    AgentRuleKind kind = AgentRuleKind::frozen;
    int num_states = 0;
    int num_actions = 0;
    // Frozen: pi(a | s) stored row-major [s][a].
    std::vector<double> frozen_policy;
    // Quantized Q-learning: Q values live on {0, 1/4, 1/2, 3/4, 1} * scale.
    double scale = 1.0;
    double alpha = 0.5;
    double gamma = 1.0;
    Memory initial_q;

    static AgentRule frozen(int num_states, int num_actions, std::vector<double> policy);
    static AgentRule quantized_q(int num_states, int num_actions, double scale, double alpha = 0.5,
                                 double gamma = 1.0, Memory initial = {});

    void validate() const;
    Memory initial_memory() const;
    // pi_M(. | s); ties in Q are broken uniformly.
    void policy(const Memory& m, int s, std::span<double> out) const;
    Memory update(const Memory& m, int s, int a, double r, int s_next, bool terminal) const;
};

inline constexpr int kQuantizationLevels = 5;

// Meta-state (s, i, c, M), extended with the in-episode step t so that the
// step cap T is part of the state.
struct MetaState {
    int s = 0;
    int i = 0;
    int t = 0;
    int c = 0;
    Memory m;

    friend auto operator<=>(const MetaState&, const MetaState&) = default;
    friend bool operator==(const MetaState&, const MetaState&) = default;
};

// A task-blind exploration policy over task states: mu(u | s), row-major.
struct TabularAdvisor {
    int num_states = 0;
    int num_actions = 0;
    std::vector<double> probs;

    static TabularAdvisor uniform(int num_states, int num_actions);
    static TabularAdvisor random(int num_states, int num_actions, Rng& rng);
    void validate() const;
    std::span<const double> at(int s) const
    {
        return std::span<const double>(probs).subspan(static_cast<std::size_t>(s * num_actions),
                                                      static_cast<std::size_t>(num_actions));
    }
};

// Everything the meta-MDP is built from.
struct MetaModel {
    std::vector<TabularModel> tasks;
    std::vector<double> task_weights;
    AgentRule rule;
    LifetimeConfig lifetime;
    EpsilonSchedule schedule;
    // Added to every defined Y value; nonzero only to test that checks notice.
    double y_offset = 0.0;

    static MetaModel from_class(const ProblemClass& pc, AgentRule rule, LifetimeConfig lifetime,
                                EpsilonSchedule schedule);
    void validate() const;
    int num_states() const { return tasks.front().num_states; }
    int num_actions() const { return tasks.front().num_actions; }
    // True where the episode is over (terminal s or t == T).
    bool boundary(const MetaState& x) const;
};

// T(x, u, x'). Throws std::invalid_argument when i >= I or t > T.
double meta_transition(const MetaModel& model, const MetaState& x, int u, const MetaState& x_next);

// Y(x, u, x'). Episode and lifetime boundaries carry reward 0. Throws
// std::domain_error when T(x, u, x') = 0.
double meta_reward(const MetaModel& model, const MetaState& x, int u, const MetaState& x_next);

struct MetaEdge {
    int next = 0;
    double p = 0.0;
    double y = 0.0;
};

struct MetaMdp {
    std::vector<MetaState> states;
    std::map<MetaState, int> index;
    int num_actions = 0;
    std::vector<std::vector<MetaEdge>> rows; // [x * num_actions + u]
    std::vector<double> initial;             // d0'

    const std::vector<MetaEdge>& row(int x, int u) const
    {
        return rows[static_cast<std::size_t>(x) * static_cast<std::size_t>(num_actions)
                    + static_cast<std::size_t>(u)];
    }
};

inline constexpr std::size_t kMetaStateCap = 1000000;

// Candidate successors of (x, u); meta_transition is positive on each.
std::vector<MetaState> meta_successors(const MetaModel& model, const MetaState& x, int u);

// Breadth-first enumeration of meta-states reachable from d0'. Throws
// std::length_error past max_states.
MetaMdp build_meta_mdp(const MetaModel& model, std::size_t max_states = kMetaStateCap);

// Expected sum of Y over one lifetime under mu, by backward induction over
// (i, t). The lifetime boundary is terminal for the value.
double dp_expected_return(const MetaModel& model, const MetaMdp& meta, const TabularAdvisor& mu);

// Expected lifetime return of the agent-side process by exhaustive
// enumeration of executed actions and next states (no meta-MDP tables).
double brute_force_lifetime_return(const MetaModel& model, const TabularAdvisor& mu);

struct Lemma1Result {
    double lhs = 0.0;
    double rhs = 0.0;
    double diff = 0.0;
};

// Single-step expected reward in episode i with state weights w (uniform over
// states when empty): agent-side mixture of mu and pi_M against P and R, and
// the advisor-side sum of Pr(u | x) T Y over (x, u, x').
Lemma1Result verify_lemma1(const TabularModel& task, int episode, const TabularAdvisor& mu,
                           std::span<const double> pi, const EpsilonSchedule& schedule,
                           const LifetimeConfig& lifetime, std::span<const double> weights = {},
                           double y_offset = 0.0);

enum class VerifyMode { exact, monte_carlo };

struct Theorem1Report {
    VerifyMode mode = VerifyMode::exact;
    double lhs = 0.0;
    double rhs = 0.0;
    double diff = 0.0;
    double tolerance = 0.0;
    double standard_error = 0.0;
    std::size_t meta_states = 0;
    long long samples = 0;
    bool pass = false;
};

struct Theorem1Options {
    VerifyMode mode = VerifyMode::exact;
    long long n_samples = 10000;
    double exact_tolerance = 1e-9;
    double se_multiple = 3.0;
    std::uint64_t seed = 0;
    Execution execution = Execution::parallel;
};

Theorem1Report verify_theorem1(const MetaModel& model, const TabularAdvisor& mu, const Theorem1Options& options);

// One simulated lifetime of the agent-side process: summed environment
// rewards and summed Y along the same trajectory.
struct PairedLifetimeSums {
    double rewards = 0.0;
    double y = 0.0;
};

PairedLifetimeSums simulate_paired_lifetime(const MetaModel& model, const TabularAdvisor& mu, Rng rng);

// One line per check: "check=<name> lhs=<v> rhs=<v> diff=<v> tol=<v> result=PASS|FAIL".
struct CheckLine {
    std::string name;
    double lhs = 0.0;
    double rhs = 0.0;
    double diff = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

std::string format_check(const CheckLine& line);
std::optional<CheckLine> parse_check(const std::string& text);

struct OracleSuiteConfig {
    int lemma_configs = 100;
    std::uint64_t lemma_seed = 0;
    int exact_fixtures = 6;
    long long mc_lifetimes = 10000;
    std::uint64_t seed = 0;
    double y_offset = 0.0;
    Execution execution = Execution::parallel;
};

// The single-step identity on random configurations, the lifetime identity on the exact fixtures and in
// Monte Carlo mode with a quantized-Q agent, plus table invariants.
std::vector<CheckLine> run_oracle_suite(const OracleSuiteConfig& cfg);

// Fixture i of the exact-mode suite (frozen agents, at most |S|=4, I=3, T=3,
// two tasks).
MetaModel exact_fixture(int index, TabularAdvisor* mu);

} // namespace metaexplore
