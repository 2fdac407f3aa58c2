#include "metaexplore/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace metaexplore {

namespace {

std::vector<double> random_rows(int rows, int cols, Rng& rng)
{
    std::vector<double> out(static_cast<std::size_t>(rows * cols));
    for (int r = 0; r < rows; ++r) {
        double total = 0.0;
        for (int c = 0; c < cols; ++c) {
            out[static_cast<std::size_t>(r * cols + c)] = 0.1 + rng.uniform();
            total += out[static_cast<std::size_t>(r * cols + c)];
        }
        double rest = 0.0;
        for (int c = 1; c < cols; ++c) {
            auto& v = out[static_cast<std::size_t>(r * cols + c)];
            v /= total;
            rest += v;
        }
        out[static_cast<std::size_t>(r * cols)] = 1.0 - rest;
    }
    return out;
}

void check_rows(std::span<const double> probs, int rows, int cols, const char* what)
{
    if (rows < 1 || cols < 1 || probs.size() != static_cast<std::size_t>(rows * cols)) {
        throw std::invalid_argument(std::string(what) + ": table has the wrong shape");
    }
    for (int r = 0; r < rows; ++r) {
        double total = 0.0;
        for (int c = 0; c < cols; ++c) {
            const double v = probs[static_cast<std::size_t>(r * cols + c)];
            if (!(v >= 0.0) || !std::isfinite(v)) {
                throw std::invalid_argument(std::string(what) + ": negative or non-finite probability");
            }
            total += v;
        }
        if (std::abs(total - 1.0) > 1e-12) {
            throw std::invalid_argument(std::string(what) + ": row does not sum to 1");
        }
    }
}

double grid_value(std::uint8_t k, double scale)
{
    return static_cast<double>(k) * scale / (kQuantizationLevels - 1);
}

} // namespace

AgentRule AgentRule::frozen(int num_states, int num_actions, std::vector<double> policy)
{
    AgentRule rule;
    rule.kind = AgentRuleKind::frozen;
    rule.num_states = num_states;
    rule.num_actions = num_actions;
    rule.frozen_policy = std::move(policy);
    rule.validate();
    return rule;
}

AgentRule AgentRule::quantized_q(int num_states, int num_actions, double scale, double alpha, double gamma,
                                 Memory initial)
{
    AgentRule rule;
    rule.kind = AgentRuleKind::quantized_q;
    rule.num_states = num_states;
    rule.num_actions = num_actions;
    rule.scale = scale;
    rule.alpha = alpha;
    rule.gamma = gamma;
    rule.initial_q = initial.empty() ? Memory(static_cast<std::size_t>(num_states * num_actions), 0)
                                     : std::move(initial);
    rule.validate();
    return rule;
}

void AgentRule::validate() const
{
    if (num_states < 1 || num_actions < 1) {
        throw std::invalid_argument("agent rule needs positive state and action counts");
    }
    if (kind == AgentRuleKind::frozen) {
        check_rows(frozen_policy, num_states, num_actions, "frozen policy");
        return;
    }
    if (!(scale > 0.0) || !(alpha > 0.0 && alpha <= 1.0) || !(gamma >= 0.0 && gamma <= 1.0)) {
        throw std::invalid_argument("quantized Q rule needs scale > 0, alpha in (0, 1], gamma in [0, 1]");
    }
    if (initial_q.size() != static_cast<std::size_t>(num_states * num_actions)) {
        throw std::invalid_argument("quantized Q rule: initial table has the wrong size");
    }
    for (auto k : initial_q) {
        if (k >= kQuantizationLevels) {
            throw std::invalid_argument("quantized Q rule: grid index out of range");
        }
    }
}

Memory AgentRule::initial_memory() const
{
    return kind == AgentRuleKind::frozen ? Memory{} : initial_q;
}

void AgentRule::policy(const Memory& m, int s, std::span<double> out) const
{
    const auto A = static_cast<std::size_t>(num_actions);
    if (kind == AgentRuleKind::frozen) {
        std::copy_n(frozen_policy.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(s) * A), A,
                    out.begin());
        return;
    }
    const auto* row = m.data() + static_cast<std::size_t>(s) * A;
    const auto best = *std::max_element(row, row + A);
    const auto ties = static_cast<double>(std::count(row, row + A, best));
    for (std::size_t a = 0; a < A; ++a) {
        out[a] = row[a] == best ? 1.0 / ties : 0.0;
    }
}

Memory AgentRule::update(const Memory& m, int s, int a, double r, int s_next, bool terminal) const
{
    if (kind == AgentRuleKind::frozen) {
        return m;
    }
    const auto A = static_cast<std::size_t>(num_actions);
    double next_max = 0.0;
    if (!terminal) {
        const auto* row = m.data() + static_cast<std::size_t>(s_next) * A;
        next_max = grid_value(*std::max_element(row, row + A), scale);
    }
    const std::size_t at = static_cast<std::size_t>(s) * A + static_cast<std::size_t>(a);
    const double q = grid_value(m[at], scale);
    const double target = q + alpha * (r + gamma * next_max - q);
    const double step = scale / (kQuantizationLevels - 1);
    const double k = std::clamp(std::floor(target / step + 0.5), 0.0, double(kQuantizationLevels - 1));
    Memory out = m;
    out[at] = static_cast<std::uint8_t>(k);
    return out;
}

TabularAdvisor TabularAdvisor::uniform(int num_states, int num_actions)
{
    TabularAdvisor mu{num_states, num_actions,
                      std::vector<double>(static_cast<std::size_t>(num_states * num_actions),
                                          1.0 / num_actions)};
    return mu;
}

TabularAdvisor TabularAdvisor::random(int num_states, int num_actions, Rng& rng)
{
    return {num_states, num_actions, random_rows(num_states, num_actions, rng)};
}

void TabularAdvisor::validate() const
{
    check_rows(probs, num_states, num_actions, "advisor");
}

MetaModel MetaModel::from_class(const ProblemClass& pc, AgentRule rule, LifetimeConfig lifetime,
                                EpsilonSchedule schedule)
{
    if (pc.kind != ClassKind::tabular) {
        throw std::invalid_argument("meta-MDP construction needs a tabular class");
    }
    MetaModel model;
    model.tasks = pc.tabular_tasks;
    model.task_weights = pc.task_weights;
    if (model.task_weights.empty()) {
        model.task_weights.assign(model.tasks.size(), 1.0 / static_cast<double>(model.tasks.size()));
    }
    model.rule = std::move(rule);
    model.lifetime = lifetime;
    model.schedule = schedule;
    model.validate();
    return model;
}

void MetaModel::validate() const
{
    if (tasks.empty()) {
        throw std::invalid_argument("meta model needs at least one task");
    }
    for (const auto& t : tasks) {
        t.validate();
        if (t.num_states != tasks.front().num_states || t.num_actions != tasks.front().num_actions) {
            throw std::invalid_argument("meta model tasks must share state and action spaces");
        }
    }
    check_rows(task_weights, 1, static_cast<int>(tasks.size()), "task weights");
    rule.validate();
    if (rule.num_states != num_states() || rule.num_actions != num_actions()) {
        throw std::invalid_argument("agent rule does not match the tasks' spaces");
    }
    lifetime.validate();
    schedule.validate();
}

bool MetaModel::boundary(const MetaState& x) const
{
    return tasks[static_cast<std::size_t>(x.c)].is_terminal(x.s) || x.t == lifetime.steps;
}

namespace {

void check_state(const MetaModel& model, const MetaState& x)
{
    if (x.i < 0 || x.i >= model.lifetime.episodes) {
        throw std::invalid_argument("meta-state episode index outside [0, I)");
    }
    if (x.t < 0 || x.t > model.lifetime.steps) {
        throw std::invalid_argument("meta-state step index outside [0, T]");
    }
    if (x.c < 0 || x.c >= static_cast<int>(model.tasks.size()) || x.s < 0 || x.s >= model.num_states()) {
        throw std::invalid_argument("meta-state task or state index out of range");
    }
}

// Numerator and denominator of Y over executed actions b whose memory update
// lands on x_next.m.
struct InteriorSums {
    double p = 0.0;
    double pr = 0.0;
};

InteriorSums interior_sums(const MetaModel& model, const MetaState& x, int u, const MetaState& x_next)
{
    InteriorSums out;
    if (x_next.c != x.c || x_next.i != x.i || x_next.t != x.t + 1) {
        return out;
    }
    const auto& task = model.tasks[static_cast<std::size_t>(x.c)];
    const double eps = model.schedule.at(x.i);
    std::vector<double> pi(static_cast<std::size_t>(model.num_actions()));
    model.rule.policy(x.m, x.s, pi);
    const bool terminal = task.is_terminal(x_next.s);
    for (int b = 0; b < model.num_actions(); ++b) {
        const double exec = (b == u ? eps : 0.0) + (1.0 - eps) * pi[static_cast<std::size_t>(b)];
        const double p = task.p(x.s, b, x_next.s);
        if (exec == 0.0 || p == 0.0) {
            continue;
        }
        const double r = task.r(x.s, b, x_next.s);
        if (model.rule.update(x.m, x.s, b, r, x_next.s, terminal) != x_next.m) {
            continue;
        }
        out.p += exec * p;
        out.pr += exec * p * r;
    }
    return out;
}

double boundary_transition(const MetaModel& model, const MetaState& x, const MetaState& x_next)
{
    if (x.i + 1 < model.lifetime.episodes) {
        if (x_next.c != x.c || x_next.i != x.i + 1 || x_next.t != 0 || x_next.m != x.m) {
            return 0.0;
        }
        return model.tasks[static_cast<std::size_t>(x.c)].initial[static_cast<std::size_t>(x_next.s)];
    }
    if (x_next.i != 0 || x_next.t != 0 || x_next.m != model.rule.initial_memory()) {
        return 0.0;
    }
    const auto c = static_cast<std::size_t>(x_next.c);
    return model.task_weights[c] * model.tasks[c].initial[static_cast<std::size_t>(x_next.s)];
}

} // namespace

double meta_transition(const MetaModel& model, const MetaState& x, int u, const MetaState& x_next)
{
    check_state(model, x);
    if (u < 0 || u >= model.num_actions()) {
        throw std::invalid_argument("meta_transition: action out of range");
    }
    check_state(model, x_next);
    if (model.boundary(x)) {
        return boundary_transition(model, x, x_next);
    }
    return interior_sums(model, x, u, x_next).p;
}

double meta_reward(const MetaModel& model, const MetaState& x, int u, const MetaState& x_next)
{
    check_state(model, x);
    if (u < 0 || u >= model.num_actions()) {
        throw std::invalid_argument("meta_reward: action out of range");
    }
    check_state(model, x_next);
    if (model.boundary(x)) {
        if (boundary_transition(model, x, x_next) == 0.0) {
            throw std::domain_error("meta_reward: impossible transition");
        }
        return 0.0 + model.y_offset;
    }
    const auto sums = interior_sums(model, x, u, x_next);
    if (sums.p == 0.0) {
        throw std::domain_error("meta_reward: impossible transition");
    }
    return sums.pr / sums.p + model.y_offset;
}

std::vector<MetaState> meta_successors(const MetaModel& model, const MetaState& x, int u)
{
    check_state(model, x);
    std::vector<MetaState> out;
    if (model.boundary(x)) {
        if (x.i + 1 < model.lifetime.episodes) {
            const auto& task = model.tasks[static_cast<std::size_t>(x.c)];
            for (int s = 0; s < task.num_states; ++s) {
                if (task.initial[static_cast<std::size_t>(s)] > 0.0) {
                    out.push_back({s, x.i + 1, 0, x.c, x.m});
                }
            }
        } else {
            for (std::size_t c = 0; c < model.tasks.size(); ++c) {
                if (model.task_weights[c] == 0.0) {
                    continue;
                }
                for (int s = 0; s < model.tasks[c].num_states; ++s) {
                    if (model.tasks[c].initial[static_cast<std::size_t>(s)] > 0.0) {
                        out.push_back({s, 0, 0, static_cast<int>(c), model.rule.initial_memory()});
                    }
                }
            }
        }
        return out;
    }
    const auto& task = model.tasks[static_cast<std::size_t>(x.c)];
    const double eps = model.schedule.at(x.i);
    std::vector<double> pi(static_cast<std::size_t>(model.num_actions()));
    model.rule.policy(x.m, x.s, pi);
    for (int b = 0; b < model.num_actions(); ++b) {
        const double exec = (b == u ? eps : 0.0) + (1.0 - eps) * pi[static_cast<std::size_t>(b)];
        if (exec == 0.0) {
            continue;
        }
        for (int s = 0; s < task.num_states; ++s) {
            if (task.p(x.s, b, s) == 0.0) {
                continue;
            }
            out.push_back({s, x.i, x.t + 1, x.c,
                           model.rule.update(x.m, x.s, b, task.r(x.s, b, s), s, task.is_terminal(s))});
        }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

MetaMdp build_meta_mdp(const MetaModel& model, std::size_t max_states)
{
    model.validate();
    MetaMdp meta;
    meta.num_actions = model.num_actions();
    auto intern = [&](const MetaState& x) {
        auto [it, inserted] = meta.index.emplace(x, static_cast<int>(meta.states.size()));
        if (inserted) {
            if (meta.states.size() >= max_states) {
                throw std::length_error("meta-MDP enumeration exceeded " + std::to_string(max_states) + " states");
            }
            meta.states.push_back(x);
            meta.initial.push_back(0.0);
        }
        return it->second;
    };

    for (std::size_t c = 0; c < model.tasks.size(); ++c) {
        for (int s = 0; s < model.num_states(); ++s) {
            const double p = model.task_weights[c] * model.tasks[c].initial[static_cast<std::size_t>(s)];
            if (p > 0.0) {
                const int id = intern({s, 0, 0, static_cast<int>(c), model.rule.initial_memory()});
                meta.initial[static_cast<std::size_t>(id)] += p;
            }
        }
    }

    for (std::size_t id = 0; id < meta.states.size(); ++id) {
        const MetaState x = meta.states[id];
        for (int u = 0; u < meta.num_actions; ++u) {
            std::vector<MetaEdge> row;
            for (const auto& next : meta_successors(model, x, u)) {
                const double p = meta_transition(model, x, u, next);
                if (p == 0.0) {
                    continue;
                }
                row.push_back({intern(next), p, meta_reward(model, x, u, next)});
            }
            meta.rows.push_back(std::move(row));
        }
    }
    return meta;
}

double dp_expected_return(const MetaModel& model, const MetaMdp& meta, const TabularAdvisor& mu)
{
    mu.validate();
    if (mu.num_states != model.num_states() || mu.num_actions != model.num_actions()) {
        throw std::invalid_argument("dp_expected_return: advisor does not match the meta-MDP");
    }
    std::vector<int> order(meta.states.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        const auto& xa = meta.states[static_cast<std::size_t>(a)];
        const auto& xb = meta.states[static_cast<std::size_t>(b)];
        return std::tie(xa.i, xa.t) > std::tie(xb.i, xb.t);
    });

    std::vector<double> value(meta.states.size(), 0.0);
    for (int id : order) {
        const auto& x = meta.states[static_cast<std::size_t>(id)];
        if (model.boundary(x) && x.i + 1 == model.lifetime.episodes) {
            continue;
        }
        const auto probs = mu.at(x.s);
        double v = 0.0;
        for (int u = 0; u < meta.num_actions; ++u) {
            const double pu = probs[static_cast<std::size_t>(u)];
            if (pu == 0.0) {
                continue;
            }
            double q = 0.0;
            for (const auto& e : meta.row(id, u)) {
                q += e.p * (e.y + value[static_cast<std::size_t>(e.next)]);
            }
            v += pu * q;
        }
        value[static_cast<std::size_t>(id)] = v;
    }
    double total = 0.0;
    for (std::size_t id = 0; id < meta.states.size(); ++id) {
        total += meta.initial[id] * value[id];
    }
    return total;
}

namespace {

struct BruteForce {
    const MetaModel& model;
    const TabularAdvisor& mu;

    double episode_start(int c, int i, const Memory& m) const
    {
        if (i == model.lifetime.episodes) {
            return 0.0;
        }
        const auto& task = model.tasks[static_cast<std::size_t>(c)];
        double total = 0.0;
        for (int s = 0; s < task.num_states; ++s) {
            const double p0 = task.initial[static_cast<std::size_t>(s)];
            if (p0 > 0.0) {
                total += p0 * step(c, i, 0, s, m);
            }
        }
        return total;
    }

    double step(int c, int i, int t, int s, const Memory& m) const
    {
        const auto& task = model.tasks[static_cast<std::size_t>(c)];
        if (task.is_terminal(s) || t == model.lifetime.steps) {
            return episode_start(c, i + 1, m);
        }
        const double eps = model.schedule.at(i);
        std::vector<double> pi(static_cast<std::size_t>(task.num_actions));
        model.rule.policy(m, s, pi);
        const auto mu_s = mu.at(s);
        double total = 0.0;
        for (int b = 0; b < task.num_actions; ++b) {
            const double q = eps * mu_s[static_cast<std::size_t>(b)] + (1.0 - eps) * pi[static_cast<std::size_t>(b)];
            if (q == 0.0) {
                continue;
            }
            for (int s2 = 0; s2 < task.num_states; ++s2) {
                const double p = task.p(s, b, s2);
                if (p == 0.0) {
                    continue;
                }
                const double r = task.r(s, b, s2);
                const Memory m2 = model.rule.update(m, s, b, r, s2, task.is_terminal(s2));
                total += q * p * (r + step(c, i, t + 1, s2, m2));
            }
        }
        return total;
    }
};

} // namespace

double brute_force_lifetime_return(const MetaModel& model, const TabularAdvisor& mu)
{
    model.validate();
    mu.validate();
    const BruteForce bf{model, mu};
    double total = 0.0;
    for (std::size_t c = 0; c < model.tasks.size(); ++c) {
        if (model.task_weights[c] > 0.0) {
            total += model.task_weights[c] * bf.episode_start(static_cast<int>(c), 0, model.rule.initial_memory());
        }
    }
    return total;
}

Lemma1Result verify_lemma1(const TabularModel& task, int episode, const TabularAdvisor& mu,
                           std::span<const double> pi, const EpsilonSchedule& schedule,
                           const LifetimeConfig& lifetime, std::span<const double> weights, double y_offset)
{
    MetaModel model;
    model.tasks = {task};
    model.task_weights = {1.0};
    model.rule = AgentRule::frozen(task.num_states, task.num_actions, std::vector<double>(pi.begin(), pi.end()));
    model.lifetime = lifetime;
    model.schedule = schedule;
    model.y_offset = y_offset;
    model.validate();
    mu.validate();
    if (episode < 0 || episode >= lifetime.episodes) {
        throw std::invalid_argument("verify_lemma1: episode index outside [0, I)");
    }
    std::vector<double> w(weights.begin(), weights.end());
    if (w.empty()) {
        w.assign(static_cast<std::size_t>(task.num_states), 1.0 / task.num_states);
    }
    if (w.size() != static_cast<std::size_t>(task.num_states)) {
        throw std::invalid_argument("verify_lemma1: one weight per state required");
    }

    const double eps = schedule.at(episode);
    Lemma1Result out;
    for (int s = 0; s < task.num_states; ++s) {
        const double ws = w[static_cast<std::size_t>(s)];
        if (!task.is_terminal(s)) {
            double lhs = 0.0;
            for (int b = 0; b < task.num_actions; ++b) {
                const double q = eps * mu.at(s)[static_cast<std::size_t>(b)]
                                 + (1.0 - eps) * pi[static_cast<std::size_t>(s * task.num_actions + b)];
                double expected = 0.0;
                for (int s2 = 0; s2 < task.num_states; ++s2) {
                    expected += task.p(s, b, s2) * task.r(s, b, s2);
                }
                lhs += q * expected;
            }
            out.lhs += ws * lhs;
        }

        const MetaState x{s, episode, 0, 0, {}};
        double rhs = 0.0;
        for (int u = 0; u < task.num_actions; ++u) {
            const double pu = mu.at(s)[static_cast<std::size_t>(u)];
            double inner = 0.0;
            for (const auto& next : meta_successors(model, x, u)) {
                const double p = meta_transition(model, x, u, next);
                if (p > 0.0) {
                    inner += p * meta_reward(model, x, u, next);
                }
            }
            rhs += pu * inner;
        }
        out.rhs += ws * rhs;
    }
    out.diff = std::abs(out.lhs - out.rhs);
    return out;
}

PairedLifetimeSums simulate_paired_lifetime(const MetaModel& model, const TabularAdvisor& mu, Rng rng)
{
    Rng task_rng = rng.substream("tasks");
    Rng env_rng = rng.substream("env");
    Rng gate_rng = rng.substream("gating");
    Rng mu_rng = rng.substream("advisor-policy");
    Rng agent_rng = rng.substream("agent-policy");

    const int c = static_cast<int>(task_rng.categorical(model.task_weights));
    const auto& task = model.tasks[static_cast<std::size_t>(c)];
    Memory m = model.rule.initial_memory();
    std::vector<double> pi(static_cast<std::size_t>(task.num_actions));
    PairedLifetimeSums out;
    MetaState last_boundary;
    bool have_boundary = false;

    for (int i = 0; i < model.lifetime.episodes; ++i) {
        const double eps = model.schedule.at(i);
        int s = static_cast<int>(env_rng.categorical(task.initial));
        if (have_boundary) {
            out.y += meta_reward(model, last_boundary, 0, MetaState{s, i, 0, c, m});
        }
        int t = 0;
        for (; t < model.lifetime.steps && !task.is_terminal(s); ++t) {
            const int u = static_cast<int>(mu_rng.categorical(mu.at(s)));
            model.rule.policy(m, s, pi);
            const int a = static_cast<int>(agent_rng.categorical(pi));
            const auto g = gate_action(u, a, eps, gate_rng);
            const auto row = std::span<const double>(task.transition)
                                 .subspan(task.index(s, g.executed, 0), static_cast<std::size_t>(task.num_states));
            const int s2 = static_cast<int>(env_rng.categorical(row));
            const double r = task.r(s, g.executed, s2);
            Memory m2 = model.rule.update(m, s, g.executed, r, s2, task.is_terminal(s2));
            out.rewards += r;
            out.y += meta_reward(model, MetaState{s, i, t, c, m}, u, MetaState{s2, i, t + 1, c, m2});
            s = s2;
            m = std::move(m2);
        }
        last_boundary = MetaState{s, i, t, c, m};
        have_boundary = true;
    }
    return out;
}

Theorem1Report verify_theorem1(const MetaModel& model, const TabularAdvisor& mu, const Theorem1Options& options)
{
    model.validate();
    mu.validate();
    Theorem1Report rep;
    rep.mode = options.mode;
    if (options.mode == VerifyMode::exact) {
        const auto meta = build_meta_mdp(model);
        rep.meta_states = meta.states.size();
        rep.lhs = brute_force_lifetime_return(model, mu);
        rep.rhs = dp_expected_return(model, meta, mu);
        rep.diff = std::abs(rep.lhs - rep.rhs);
        rep.tolerance = options.exact_tolerance;
        rep.pass = rep.diff < rep.tolerance;
        return rep;
    }

    if (options.n_samples < 2) {
        throw std::invalid_argument("Monte Carlo mode needs at least 2 samples");
    }
    const auto n = static_cast<std::size_t>(options.n_samples);
    std::vector<PairedLifetimeSums> sums(n);
    const Rng root = Rng(options.seed).substream("theorem1-mc");
    for_each_index(n, options.execution,
                   [&](std::size_t j) { sums[j] = simulate_paired_lifetime(model, mu, root.substream("lifetime", j)); });
    std::vector<double> lhs(n), rhs(n);
    for (std::size_t j = 0; j < n; ++j) {
        lhs[j] = sums[j].rewards;
        rhs[j] = sums[j].y;
    }
    auto mean_var = [](const std::vector<double>& v) {
        const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        double ss = 0.0;
        for (double x : v) {
            ss += (x - m) * (x - m);
        }
        return std::pair{m, ss / static_cast<double>(v.size() - 1)};
    };
    const auto [ml, vl] = mean_var(lhs);
    const auto [mr, vr] = mean_var(rhs);
    rep.samples = options.n_samples;
    rep.lhs = ml;
    rep.rhs = mr;
    rep.diff = std::abs(ml - mr);
    rep.standard_error = std::sqrt(vl / static_cast<double>(n) + vr / static_cast<double>(n));
    rep.tolerance = options.se_multiple * rep.standard_error;
    rep.pass = rep.diff <= rep.tolerance;
    return rep;
}

std::string format_check(const CheckLine& line)
{
    char buf[256];
    std::snprintf(buf, sizeof buf, " lhs=%.17g rhs=%.17g diff=%.6e tol=%.6e result=%s", line.lhs, line.rhs,
                  line.diff, line.tolerance, line.pass ? "PASS" : "FAIL");
    return "check=" + line.name + buf;
}

std::optional<CheckLine> parse_check(const std::string& text)
{
    std::istringstream in(text);
    std::string token;
    CheckLine line;
    int seen = 0;
    const char* keys[] = {"check=", "lhs=", "rhs=", "diff=", "tol=", "result="};
    while (in >> token) {
        if (seen >= 6 || token.rfind(keys[seen], 0) != 0) {
            return std::nullopt;
        }
        const std::string value = token.substr(std::char_traits<char>::length(keys[seen]));
        try {
            std::size_t used = 0;
            switch (seen) {
            case 0: line.name = value; used = value.size(); break;
            case 1: line.lhs = std::stod(value, &used); break;
            case 2: line.rhs = std::stod(value, &used); break;
            case 3: line.diff = std::stod(value, &used); break;
            case 4: line.tolerance = std::stod(value, &used); break;
            case 5:
                if (value != "PASS" && value != "FAIL") {
                    return std::nullopt;
                }
                line.pass = value == "PASS";
                used = value.size();
                break;
            }
            if (used != value.size() || value.empty()) {
                return std::nullopt;
            }
        } catch (const std::exception&) {
            return std::nullopt;
        }
        ++seen;
    }
    if (seen != 6) {
        return std::nullopt;
    }
    return line;
}

namespace {

TabularAdvisor dyadic_advisor(int num_states, int num_actions, Rng& rng)
{
    // Rows of quarters: one action gets the remainder after random quarter picks.
    TabularAdvisor mu{num_states, num_actions, std::vector<double>(static_cast<std::size_t>(num_states * num_actions))};
    for (int s = 0; s < num_states; ++s) {
        int left = 4;
        for (int a = 0; a + 1 < num_actions; ++a) {
            const int take = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(left + 1)));
            mu.probs[static_cast<std::size_t>(s * num_actions + a)] = take / 4.0;
            left -= take;
        }
        mu.probs[static_cast<std::size_t>(s * num_actions + num_actions - 1)] = left / 4.0;
    }
    return mu;
}

MetaModel random_class_model(const TabularClassSpec& spec, Rng& rng, LifetimeConfig lifetime,
                             EpsilonSchedule schedule)
{
    MetaModel model;
    for (int j = 0; j < spec.num_tasks; ++j) {
        model.tasks.push_back(sample_tabular_model(spec, rng));
    }
    model.task_weights.assign(static_cast<std::size_t>(spec.num_tasks), 1.0 / spec.num_tasks);
    model.rule = AgentRule::frozen(spec.num_states, spec.num_actions,
                                   random_rows(spec.num_states, spec.num_actions, rng));
    model.lifetime = lifetime;
    model.schedule = schedule;
    return model;
}

} // namespace

MetaModel exact_fixture(int index, TabularAdvisor* mu)
{
    Rng rng = Rng(0x5eedULL).substream("exact-fixture", static_cast<std::uint64_t>(index));
    MetaModel model;
    switch (index) {
    case 0: {
        model.tasks = {make_two_state_chain(1.0)};
        model.task_weights = {1.0};
        model.rule = AgentRule::frozen(2, 2, {0.5, 0.5, 0.5, 0.5});
        model.lifetime = {2, 2};
        model.schedule = {0.5, 1.0};
        break;
    }
    case 1: {
        model.tasks = {make_two_state_chain(1.0), make_two_state_chain(2.0)};
        model.task_weights = {0.5, 0.5};
        model.rule = AgentRule::frozen(2, 2, {0.75, 0.25, 0.5, 0.5});
        model.lifetime = {3, 3};
        model.schedule = {0.8, 0.5};
        break;
    }
    case 2: {
        TabularClassSpec spec{3, 2, 2, 2, 1, 0.0, 1.0, true};
        model = random_class_model(spec, rng, {2, 3}, {0.5, 0.5});
        break;
    }
    case 3: {
        TabularClassSpec spec{4, 2, 2, 2, 1, -1.0, 1.0, false};
        model = random_class_model(spec, rng, {3, 3}, {0.8, 0.995});
        break;
    }
    case 4: {
        TabularClassSpec spec{4, 3, 1, 2, 1, 0.0, 1.0, false};
        model = random_class_model(spec, rng, {2, 3}, {0.37, 0.9});
        break;
    }
    case 5: {
        TabularClassSpec spec{4, 2, 2, 2, 1, 0.0, 1.0, false};
        model = random_class_model(spec, rng, {3, 3}, {1.0, 1.0});
        break;
    }
    default:
        throw std::out_of_range("no exact fixture " + std::to_string(index));
    }
    model.validate();
    if (mu != nullptr) {
        *mu = TabularAdvisor::random(model.num_states(), model.num_actions(), rng);
    }
    return model;
}

std::vector<CheckLine> run_oracle_suite(const OracleSuiteConfig& cfg)
{
    std::vector<CheckLine> lines;

    const Rng lemma_root(cfg.lemma_seed);
    std::vector<CheckLine> lemma(static_cast<std::size_t>(std::max(cfg.lemma_configs, 0)));
    for_each_index(lemma.size(), cfg.execution, [&](std::size_t j) {
        Rng rng = lemma_root.substream("lemma1", j);
        TabularClassSpec spec;
        spec.num_states = 2 + static_cast<int>(rng.uniform_index(5));
        spec.num_actions = 2 + static_cast<int>(rng.uniform_index(3));
        spec.max_successors = 1 + static_cast<int>(rng.uniform_index(static_cast<std::size_t>(spec.num_states)));
        spec.num_terminal = 1;
        spec.reward_min = -1.0;
        spec.reward_max = 1.0;
        const auto task = sample_tabular_model(spec, rng);
        const auto mu = TabularAdvisor::random(spec.num_states, spec.num_actions, rng);
        const auto pi = random_rows(spec.num_states, spec.num_actions, rng);
        const auto w = random_rows(1, spec.num_states, rng);
        const EpsilonSchedule schedule{rng.uniform(), 1.0};
        const int episode = static_cast<int>(rng.uniform_index(3));
        const auto r = verify_lemma1(task, episode, mu, pi, schedule, {3, 3}, w, cfg.y_offset);
        lemma[j] = {"lemma1/random-" + std::to_string(j), r.lhs, r.rhs, r.diff, 1e-12, r.diff < 1e-12};
    });
    lines.insert(lines.end(), lemma.begin(), lemma.end());

    {
        Rng rng = lemma_root.substream("lemma1-degenerate");
        const TabularClassSpec spec{4, 3, 1, 3, 1, 0.0, 1.0, true};
        const auto task = sample_tabular_model(spec, rng);
        const auto mu = dyadic_advisor(spec.num_states, spec.num_actions, rng);
        const auto pi = dyadic_advisor(spec.num_states, spec.num_actions, rng).probs;
        for (double eps : {0.0, 1.0}) {
            const auto r = verify_lemma1(task, 0, mu, pi, {eps, 1.0}, {1, 2}, {}, cfg.y_offset);
            lines.push_back({std::string("lemma1/epsilon-") + (eps == 0.0 ? "0" : "1"), r.lhs, r.rhs, r.diff, 0.0,
                             r.diff == 0.0});
        }
    }

    for (int k = 0; k < cfg.exact_fixtures; ++k) {
        TabularAdvisor mu;
        MetaModel model = exact_fixture(k, &mu);
        model.y_offset = cfg.y_offset;
        const auto meta = build_meta_mdp(model);

        double row_err = 0.0;
        double y_violation = 0.0;
        double lo = model.tasks.front().min_reward();
        double hi = model.tasks.front().max_reward();
        for (const auto& t : model.tasks) {
            lo = std::min(lo, t.min_reward());
            hi = std::max(hi, t.max_reward());
        }
        // Boundary rows carry Y = 0, so 0 is inside the admissible range too.
        lo = std::min(lo, 0.0);
        hi = std::max(hi, 0.0);
        for (const auto& row : meta.rows) {
            double total = 0.0;
            for (const auto& e : row) {
                total += e.p;
                y_violation = std::max({y_violation, lo - e.y, e.y - hi});
            }
            row_err = std::max(row_err, std::abs(total - 1.0));
        }
        double off_support = 0.0;
        for (std::size_t id = 0; id < meta.states.size(); ++id) {
            const auto& x = meta.states[id];
            if (x.i != 0 || x.t != 0 || x.m != model.rule.initial_memory()) {
                off_support += meta.initial[id];
            }
        }
        const std::string tag = std::to_string(k);
        lines.push_back({"meta/rows-normalized-" + tag, row_err, 0.0, row_err, 1e-10, row_err <= 1e-10});
        // Y is a ratio of sums, so it may leave [lo, hi] by a rounding error.
        const double y_tol = 1e-12 * std::max({1.0, std::abs(lo), std::abs(hi)});
        lines.push_back({"meta/y-bounded-" + tag, y_violation, 0.0, y_violation, y_tol, y_violation <= y_tol});
        lines.push_back({"meta/initial-support-" + tag, off_support, 0.0, off_support, 0.0, off_support == 0.0});

        Theorem1Options opt;
        opt.mode = VerifyMode::exact;
        const auto rep = verify_theorem1(model, mu, opt);
        lines.push_back({"theorem1/exact-" + tag, rep.lhs, rep.rhs, rep.diff, rep.tolerance, rep.pass});
    }

    if (cfg.mc_lifetimes > 0) {
        Rng rng = Rng(cfg.seed).substream("theorem1-mc-class");
        const TabularClassSpec spec{4, 2, 2, 2, 1, 0.0, 1.0, false};
        MetaModel model = random_class_model(spec, rng, {4, 4}, {0.8, 0.9});
        model.rule = AgentRule::quantized_q(spec.num_states, spec.num_actions, 1.0);
        model.y_offset = cfg.y_offset;
        const auto mu = TabularAdvisor::random(spec.num_states, spec.num_actions, rng);
        Theorem1Options opt;
        opt.mode = VerifyMode::monte_carlo;
        opt.n_samples = cfg.mc_lifetimes;
        opt.seed = cfg.seed;
        opt.execution = cfg.execution;
        const auto rep = verify_theorem1(model, mu, opt);
        lines.push_back({"theorem1/monte-carlo-quantized-q", rep.lhs, rep.rhs, rep.diff, rep.tolerance, rep.pass});
    }
    return lines;
}

} // namespace metaexplore
