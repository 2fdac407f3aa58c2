#include "metaexplore/envs/tabular.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace metaexplore {

namespace {

constexpr double kRowTolerance = 1e-12;

std::string where(int s, int a)
{
    return "(s=" + std::to_string(s) + ", a=" + std::to_string(a) + ")";
}

// Splits 1 into k positive multiples of 1/4 (k <= 4).
std::vector<double> dyadic_split(int k, Rng& rng)
{
    std::vector<int> quarters(static_cast<std::size_t>(k), 1);
    for (int extra = 4 - k; extra > 0; --extra) {
        quarters[rng.uniform_index(quarters.size())] += 1;
    }
    std::vector<double> out;
    out.reserve(quarters.size());
    for (int q : quarters) {
        out.push_back(0.25 * q);
    }
    return out;
}

} // namespace

TabularModel::TabularModel(int states, int actions)
    : num_states(states),
      num_actions(actions),
      transition(static_cast<std::size_t>(states) * actions * states, 0.0),
      reward(transition.size(), 0.0),
      initial(static_cast<std::size_t>(states), 0.0),
      terminal(static_cast<std::size_t>(states), 0)
{
}

void TabularModel::make_terminal(int s)
{
    terminal[static_cast<std::size_t>(s)] = 1;
    for (int a = 0; a < num_actions; ++a) {
        for (int n = 0; n < num_states; ++n) {
            p(s, a, n) = n == s ? 1.0 : 0.0;
            r(s, a, n) = 0.0;
        }
    }
}

void TabularModel::validate() const
{
    if (num_states <= 0 || num_actions <= 0) {
        throw std::invalid_argument("tabular model needs at least one state and one action");
    }
    const auto n = static_cast<std::size_t>(num_states);
    if (transition.size() != n * num_actions * n || reward.size() != transition.size() ||
        initial.size() != n || terminal.size() != n) {
        throw std::invalid_argument("tabular model tables have inconsistent sizes");
    }
    for (int s = 0; s < num_states; ++s) {
        for (int a = 0; a < num_actions; ++a) {
            double sum = 0.0;
            for (int next = 0; next < num_states; ++next) {
                const double prob = p(s, a, next);
                if (!(prob >= 0.0) || !std::isfinite(r(s, a, next))) {
                    throw std::invalid_argument("invalid transition entry at " + where(s, a));
                }
                sum += prob;
            }
            if (std::abs(sum - 1.0) > kRowTolerance) {
                throw std::invalid_argument("transition row " + where(s, a) + " sums to " +
                                            std::to_string(sum));
            }
            if (is_terminal(s) && (p(s, a, s) != 1.0 || r(s, a, s) != 0.0)) {
                throw std::invalid_argument("terminal state " + std::to_string(s) +
                                            " must self-loop with reward 0");
            }
        }
    }
    double d0 = 0.0;
    for (double v : initial) {
        if (!(v >= 0.0)) {
            throw std::invalid_argument("initial distribution has a negative entry");
        }
        d0 += v;
    }
    if (std::abs(d0 - 1.0) > kRowTolerance) {
        throw std::invalid_argument("initial distribution sums to " + std::to_string(d0));
    }
}

double TabularModel::min_reward() const
{
    return reward.empty() ? 0.0 : *std::min_element(reward.begin(), reward.end());
}

double TabularModel::max_reward() const
{
    return reward.empty() ? 0.0 : *std::max_element(reward.begin(), reward.end());
}

void validate_tabular_spec(const TabularClassSpec& spec)
{
    if (spec.num_states < 2 || spec.num_states > kMaxTabularStates) {
        throw std::invalid_argument("tabular class: num_states must be in [2, " +
                                    std::to_string(kMaxTabularStates) + "]");
    }
    if (spec.num_actions < 1 || spec.num_actions > kMaxTabularActions) {
        throw std::invalid_argument("tabular class: num_actions must be in [1, " +
                                    std::to_string(kMaxTabularActions) + "]");
    }
    if (spec.num_tasks < 1) {
        throw std::invalid_argument("tabular class: num_tasks must be positive");
    }
    if (spec.num_terminal < 0 || spec.num_terminal >= spec.num_states) {
        throw std::invalid_argument("tabular class: need at least one non-terminal state");
    }
    if (spec.max_successors < 1 || spec.max_successors > spec.num_states) {
        throw std::invalid_argument("tabular class: max_successors out of range");
    }
    if (spec.dyadic && spec.max_successors > 4) {
        throw std::invalid_argument("tabular class: dyadic tasks allow at most 4 successors");
    }
    if (!(spec.reward_min <= spec.reward_max)) {
        throw std::invalid_argument("tabular class: empty reward range");
    }
}

TabularModel sample_tabular_model(const TabularClassSpec& spec, Rng& rng)
{
    validate_tabular_spec(spec);
    TabularModel m(spec.num_states, spec.num_actions);
    const int first_terminal = spec.num_states - spec.num_terminal;

    std::vector<int> order(static_cast<std::size_t>(spec.num_states));
    for (int s = 0; s < first_terminal; ++s) {
        for (int a = 0; a < spec.num_actions; ++a) {
            std::iota(order.begin(), order.end(), 0);
            // Partial Fisher-Yates for the successor set.
            const int k = 1 + static_cast<int>(rng.uniform_index(static_cast<std::size_t>(spec.max_successors)));
            for (int j = 0; j < k; ++j) {
                const auto pick = j + rng.uniform_index(order.size() - static_cast<std::size_t>(j));
                std::swap(order[static_cast<std::size_t>(j)], order[pick]);
            }
            std::vector<double> probs;
            if (spec.dyadic) {
                probs = dyadic_split(k, rng);
            } else {
                double total = 0.0;
                for (int j = 0; j < k; ++j) {
                    probs.push_back(0.1 + rng.uniform());
                    total += probs.back();
                }
                for (auto& v : probs) {
                    v /= total;
                }
                // Put rounding slack on the first entry so the row sums to 1.
                double rest = 0.0;
                for (std::size_t j = 1; j < probs.size(); ++j) {
                    rest += probs[j];
                }
                probs[0] = 1.0 - rest;
            }
            for (int j = 0; j < k; ++j) {
                const int next = order[static_cast<std::size_t>(j)];
                m.p(s, a, next) = probs[static_cast<std::size_t>(j)];
                double r = rng.uniform(spec.reward_min, spec.reward_max);
                if (spec.dyadic) {
                    r = std::round(r * 4.0) / 4.0;
                }
                m.r(s, a, next) = r;
            }
        }
    }
    for (int s = first_terminal; s < spec.num_states; ++s) {
        m.make_terminal(s);
    }
    // d0 uniform over the non-terminal states; dyadic tasks start in state 0.
    if (spec.dyadic) {
        m.initial[0] = 1.0;
    } else {
        for (int s = 0; s < first_terminal; ++s) {
            m.initial[static_cast<std::size_t>(s)] = 1.0 / first_terminal;
        }
        double rest = 0.0;
        for (int s = 1; s < first_terminal; ++s) {
            rest += m.initial[static_cast<std::size_t>(s)];
        }
        m.initial[0] = 1.0 - rest;
    }
    m.validate();
    return m;
}

TabularModel make_two_state_chain(double goal_reward)
{
    TabularModel m(2, 2);
    m.p(0, 0, 0) = 1.0;
    m.p(0, 1, 1) = 1.0;
    m.r(0, 1, 1) = goal_reward;
    m.make_terminal(1);
    m.initial[0] = 1.0;
    return m;
}

} // namespace metaexplore
