#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "metaexplore/rng.hpp"

namespace metaexplore {

inline constexpr int kMaxTabularStates = 20;
inline constexpr int kMaxTabularActions = 4;

// Finite MDP with dense |S| x |A| x |S| tables. Terminal states self-loop with
// reward 0 under every action.
struct TabularModel {
    int num_states = 0;
    int num_actions = 0;
    std::vector<double> transition; // [s][a][s']
    std::vector<double> reward;     // [s][a][s']
    std::vector<double> initial;    // d0
    std::vector<std::uint8_t> terminal;

    TabularModel() = default;
    TabularModel(int states, int actions);

    std::size_t index(int s, int a, int next) const
    {
        return (static_cast<std::size_t>(s) * num_actions + a) * num_states + next;
    }
    double p(int s, int a, int next) const { return transition[index(s, a, next)]; }
    double r(int s, int a, int next) const { return reward[index(s, a, next)]; }
    double& p(int s, int a, int next) { return transition[index(s, a, next)]; }
    double& r(int s, int a, int next) { return reward[index(s, a, next)]; }
    bool is_terminal(int s) const { return terminal[static_cast<std::size_t>(s)] != 0; }

    // Marks s terminal and rewrites its rows as a zero-reward self-loop.
    void make_terminal(int s);

    // Throws std::invalid_argument when any row or d0 is not a distribution
    // (tolerance 1e-12) or a terminal state is not an absorbing zero-reward loop.
    void validate() const;

    double min_reward() const;
    double max_reward() const;

    friend bool operator==(const TabularModel&, const TabularModel&) = default;
};

struct TabularClassSpec {
    int num_states = 4;
    int num_actions = 2;
    int num_tasks = 2;
    int max_successors = 2;
    int num_terminal = 1;
    double reward_min = 0.0;
    double reward_max = 1.0;
    // Restrict probabilities and rewards to multiples of 1/4, which keeps every
    // meta-MDP quantity exactly representable.
    bool dyadic = false;
};

void validate_tabular_spec(const TabularClassSpec& spec);

TabularModel sample_tabular_model(const TabularClassSpec& spec, Rng& rng);

// Two states: 0 is the start, 1 is terminal. Action 1 moves to the goal with
// goal_reward, action 0 stays in place with reward 0.
TabularModel make_two_state_chain(double goal_reward = 1.0);

} // namespace metaexplore
