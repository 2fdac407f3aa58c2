#include "metaexplore/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace metaexplore {

void EpsilonSchedule::validate() const
{
    if (!(epsilon0 >= 0.0 && epsilon0 <= 1.0)) {
        throw std::invalid_argument("epsilon0 must lie in [0, 1]");
    }
    if (!(decay > 0.0 && decay <= 1.0)) {
        throw std::invalid_argument("epsilon decay must lie in (0, 1]");
    }
}

double EpsilonSchedule::at(long long episode) const
{
    if (episode < 0) {
        throw std::invalid_argument("epsilon_at: negative episode index");
    }
    const double eps = epsilon0 * std::pow(decay, static_cast<double>(episode));
    return std::clamp(eps, 0.0, 1.0);
}

double epsilon_at(const EpsilonSchedule& schedule, long long episode)
{
    return schedule.at(episode);
}

void LifetimeConfig::validate() const
{
    if (episodes < 1 || steps < 1) {
        throw std::invalid_argument("lifetime needs I >= 1 episodes and T >= 1 steps");
    }
}

long long advisor_timestep(long long episode, long long step, long long steps_per_episode)
{
    if (episode < 0 || step < 0 || steps_per_episode < 1) {
        throw std::invalid_argument("advisor_timestep: indices must be non-negative");
    }
    if (step > steps_per_episode) {
        throw std::invalid_argument("advisor_timestep: t exceeds T");
    }
    return episode * steps_per_episode + step;
}

GateResult gate_action(int suggested, int agent_action, double epsilon, Rng& rng)
{
    const double u = rng.uniform();
    if (u < epsilon) {
        return {suggested, true};
    }
    return {agent_action, false};
}

const char* to_string(ClassKind kind)
{
    switch (kind) {
    case ClassKind::tabular: return "tabular";
    case ClassKind::cartpole: return "cartpole";
    case ClassKind::animat: return "animat";
    }
    return "unknown";
}

ClassKind class_kind_from_string(const std::string& name)
{
    if (name == "tabular") return ClassKind::tabular;
    if (name == "cartpole") return ClassKind::cartpole;
    if (name == "animat") return ClassKind::animat;
    throw std::invalid_argument("unknown problem class kind '" + name + "'");
}

ClassKind Task::kind() const
{
    switch (params.index()) {
    case 0: return ClassKind::tabular;
    case 1: return ClassKind::cartpole;
    default: return ClassKind::animat;
    }
}

namespace {

StateSpace cartpole_space()
{
    StateSpace s;
    s.dimension = 4;
    s.bounds = {{-2.4, 2.4}, {-1e9, 1e9}, {-0.21, 0.21}, {-1e9, 1e9}};
    return s;
}

StateSpace animat_space(double width, double height)
{
    StateSpace s;
    s.dimension = 2;
    s.bounds = {{0.0, width}, {0.0, height}};
    return s;
}

StateSpace tabular_space(int states)
{
    StateSpace s;
    s.dimension = static_cast<std::size_t>(states);
    s.finite_states = states;
    s.bounds.assign(s.dimension, Interval{0.0, 1.0});
    return s;
}

std::string hex_id(const char* prefix, std::uint64_t v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s-%016llx", prefix, static_cast<unsigned long long>(v));
    return buf;
}

} // namespace

void ProblemClass::validate() const
{
    switch (kind) {
    case ClassKind::cartpole:
        cartpole.validate();
        if (num_actions != 2) {
            throw std::invalid_argument("cart-pole class has exactly 2 actions");
        }
        break;
    case ClassKind::animat:
        animat.validate();
        if (num_actions != kAnimatActions) {
            throw std::invalid_argument("animat class has exactly 256 actions");
        }
        break;
    case ClassKind::tabular:
        if (tabular_tasks.empty()) {
            throw std::invalid_argument("tabular class has no tasks");
        }
        if (task_weights.size() != tabular_tasks.size()) {
            throw std::invalid_argument("tabular class: one weight per task required");
        }
        {
            double total = 0.0;
            for (double w : task_weights) {
                if (!(w >= 0.0)) {
                    throw std::invalid_argument("tabular class: negative task weight");
                }
                total += w;
            }
            if (std::abs(total - 1.0) > 1e-12) {
                throw std::invalid_argument("tabular class: task weights must sum to 1");
            }
        }
        for (const auto& t : tabular_tasks) {
            t.validate();
            if (t.num_states != state_space.finite_states || t.num_actions != num_actions) {
                throw std::invalid_argument("tabular class: tasks must share S and A");
            }
        }
        break;
    }
}

ProblemClass make_cartpole_class(const CartPoleRanges& ranges)
{
    ProblemClass pc;
    pc.kind = ClassKind::cartpole;
    pc.state_space = cartpole_space();
    pc.num_actions = 2;
    pc.cartpole = ranges;
    pc.validate();
    return pc;
}

ProblemClass make_animat_class(const AnimatRanges& ranges)
{
    ProblemClass pc;
    pc.kind = ClassKind::animat;
    pc.state_space = animat_space(ranges.width, ranges.height);
    pc.num_actions = kAnimatActions;
    pc.animat = ranges;
    pc.validate();
    return pc;
}

ProblemClass make_tabular_class(std::vector<TabularModel> tasks, std::vector<double> weights)
{
    if (tasks.empty()) {
        throw std::invalid_argument("tabular class needs at least one task");
    }
    ProblemClass pc;
    pc.kind = ClassKind::tabular;
    pc.state_space = tabular_space(tasks.front().num_states);
    pc.num_actions = tasks.front().num_actions;
    if (weights.empty()) {
        weights.assign(tasks.size(), 1.0 / static_cast<double>(tasks.size()));
        double rest = std::accumulate(weights.begin() + 1, weights.end(), 0.0);
        weights[0] = 1.0 - rest;
    }
    pc.tabular_tasks = std::move(tasks);
    pc.task_weights = std::move(weights);
    pc.validate();
    return pc;
}

ProblemClass make_tabular_class(const TabularClassSpec& spec, Rng& rng)
{
    validate_tabular_spec(spec);
    std::vector<TabularModel> tasks;
    tasks.reserve(static_cast<std::size_t>(spec.num_tasks));
    for (int c = 0; c < spec.num_tasks; ++c) {
        tasks.push_back(sample_tabular_model(spec, rng));
    }
    return make_tabular_class(std::move(tasks));
}

Task sample_task(const ProblemClass& pc, Rng& rng)
{
    pc.validate();
    Task task;
    switch (pc.kind) {
    case ClassKind::cartpole: {
        const std::uint64_t tag = rng();
        task.params = sample_cartpole_params(pc.cartpole, rng);
        task.id = hex_id("cartpole", tag);
        break;
    }
    case ClassKind::animat: {
        const std::uint64_t tag = rng();
        task.params = sample_animat_params(pc.animat, rng);
        task.id = hex_id("animat", tag);
        break;
    }
    case ClassKind::tabular: {
        const std::size_t c = rng.categorical(pc.task_weights);
        task.params = pc.tabular_tasks[c];
        task.id = "tabular-" + std::to_string(c);
        break;
    }
    }
    return task;
}

std::vector<Task> sample_tasks(const ProblemClass& pc, int count, Rng& rng)
{
    std::vector<Task> out;
    out.reserve(static_cast<std::size_t>(std::max(count, 0)));
    for (int i = 0; i < count; ++i) {
        out.push_back(sample_task(pc, rng));
    }
    return out;
}

StateSpace task_state_space(const Task& task)
{
    switch (task.kind()) {
    case ClassKind::cartpole: return cartpole_space();
    case ClassKind::animat: {
        const auto& p = std::get<AnimatParams>(task.params);
        return animat_space(p.width, p.height);
    }
    case ClassKind::tabular:
        return tabular_space(std::get<TabularModel>(task.params).num_states);
    }
    return {};
}

int task_num_actions(const Task& task)
{
    switch (task.kind()) {
    case ClassKind::cartpole: return 2;
    case ClassKind::animat: return kAnimatActions;
    case ClassKind::tabular: return std::get<TabularModel>(task.params).num_actions;
    }
    return 0;
}

} // namespace metaexplore
