#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "metaexplore/envs/animat.hpp"
#include "metaexplore/envs/cartpole.hpp"
#include "metaexplore/envs/tabular.hpp"
#include "metaexplore/interval.hpp"
#include "metaexplore/rng.hpp"

namespace metaexplore {

// eps_i = epsilon0 * decay^i, clamped to [0, 1].
struct EpsilonSchedule {
    double epsilon0 = 0.8;
    double decay = 0.995;

    void validate() const;
    double at(long long episode) const;

    friend bool operator==(const EpsilonSchedule&, const EpsilonSchedule&) = default;
};

double epsilon_at(const EpsilonSchedule& schedule, long long episode);

// I episodes of at most T steps each; K = I * T advisor steps per task.
struct LifetimeConfig {
    int episodes = 1;
    int steps = 1;

    void validate() const;
    long long horizon() const { return static_cast<long long>(episodes) * steps; }

    friend bool operator==(const LifetimeConfig&, const LifetimeConfig&) = default;
};

// k = i * T + t. Throws std::invalid_argument when t > T or an index is negative.
long long advisor_timestep(long long episode, long long step, long long steps_per_episode);

struct GateResult {
    int executed = 0;
    bool explored = false;

    friend bool operator==(const GateResult&, const GateResult&) = default;
};

// Executes the advisor's suggestion with probability epsilon, the agent's
// action otherwise. Draws exactly one uniform variate.
GateResult gate_action(int suggested, int agent_action, double epsilon, Rng& rng);

struct TransitionRecord {
    std::vector<double> s;
    int u_suggested = 0;
    int a_executed = 0;
    bool explored = false;
    double r = 0.0;
    std::vector<double> s_next;
    bool done = false;
    int episode = 0;
    long long k = 0;
};

enum class ClassKind { tabular, cartpole, animat };

const char* to_string(ClassKind kind);
ClassKind class_kind_from_string(const std::string& name);

struct StateSpace {
    std::size_t dimension = 0;
    std::vector<Interval> bounds;
    int finite_states = 0; // 0 for continuous spaces

    friend bool operator==(const StateSpace&, const StateSpace&) = default;
};

struct Task {
    std::string id;
    std::variant<TabularModel, CartPoleParams, AnimatParams> params;

    ClassKind kind() const;
};

// A problem class: shared state/action spaces and the task distribution d_C.
// Tabular classes carry an explicit task list with weights; the continuous
// classes carry per-parameter sampler ranges.
struct ProblemClass {
    ClassKind kind = ClassKind::cartpole;
    StateSpace state_space;
    int num_actions = 0;
    CartPoleRanges cartpole;
    AnimatRanges animat;
    std::vector<TabularModel> tabular_tasks;
    std::vector<double> task_weights;

    void validate() const;
};

ProblemClass make_cartpole_class(const CartPoleRanges& ranges = {});
ProblemClass make_animat_class(const AnimatRanges& ranges = {});
ProblemClass make_tabular_class(const TabularClassSpec& spec, Rng& rng);
ProblemClass make_tabular_class(std::vector<TabularModel> tasks, std::vector<double> weights = {});

// Draws c ~ d_C. Deterministic in the rng state.
Task sample_task(const ProblemClass& pc, Rng& rng);

std::vector<Task> sample_tasks(const ProblemClass& pc, int count, Rng& rng);

// The observation layout a task produces; equal for every task of a class.
StateSpace task_state_space(const Task& task);
int task_num_actions(const Task& task);

} // namespace metaexplore
