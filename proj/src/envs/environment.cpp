#include "metaexplore/environment.hpp"

#include <algorithm>
#include <stdexcept>

namespace metaexplore {

std::unique_ptr<Environment> make_environment(const Task& task)
{
    switch (task.kind()) {
    case ClassKind::tabular:
        return std::make_unique<TabularEnvironment>(std::get<TabularModel>(task.params));
    case ClassKind::cartpole:
        return std::make_unique<CartPoleEnvironment>(std::get<CartPoleParams>(task.params));
    case ClassKind::animat:
        return std::make_unique<AnimatEnvironment>(std::get<AnimatParams>(task.params));
    }
    throw std::invalid_argument("make_environment: unknown task kind");
}

TabularEnvironment::TabularEnvironment(TabularModel model) : model_(std::move(model))
{
    model_.validate();
}

std::size_t TabularEnvironment::observation_dim() const
{
    return static_cast<std::size_t>(model_.num_states);
}

int TabularEnvironment::num_actions() const
{
    return model_.num_actions;
}

void TabularEnvironment::reset(Rng& rng)
{
    state_ = static_cast<int>(rng.categorical(model_.initial));
}

StepOutcome TabularEnvironment::step(int action, Rng& rng)
{
    if (action < 0 || action >= model_.num_actions) {
        throw std::invalid_argument("tabular step: action out of range");
    }
    const auto row = std::span<const double>(model_.transition)
                         .subspan(model_.index(state_, action, 0),
                                  static_cast<std::size_t>(model_.num_states));
    const int next = static_cast<int>(rng.categorical(row));
    StepOutcome out;
    out.reward = model_.r(state_, action, next);
    state_ = next;
    out.done = model_.is_terminal(next);
    return out;
}

void TabularEnvironment::observe(std::span<double> out) const
{
    std::fill(out.begin(), out.end(), 0.0);
    out[static_cast<std::size_t>(state_)] = 1.0;
}

CartPoleEnvironment::CartPoleEnvironment(CartPoleParams params) : params_(params)
{
    params_.validate();
}

void CartPoleEnvironment::reset(Rng& rng)
{
    state_ = cartpole_reset(rng);
}

StepOutcome CartPoleEnvironment::step(int action, Rng& /*rng*/)
{
    const auto next = cartpole_step(state_, action, params_);
    state_ = next.state;
    return {next.reward, next.done};
}

void CartPoleEnvironment::observe(std::span<double> out) const
{
    out[0] = state_.x;
    out[1] = state_.v;
    out[2] = state_.theta;
    out[3] = state_.theta_dot;
}

AnimatEnvironment::AnimatEnvironment(AnimatParams params) : params_(std::move(params))
{
    params_.validate();
}

void AnimatEnvironment::reset(Rng& /*rng*/)
{
    state_.position = params_.start;
}

StepOutcome AnimatEnvironment::step(int action, Rng& rng)
{
    if (action < 0 || action >= kAnimatActions) {
        throw std::invalid_argument("animat step: action out of range");
    }
    const auto next = animat_step(state_, static_cast<unsigned>(action), params_, rng);
    state_ = next.state;
    return {next.reward, next.done};
}

void AnimatEnvironment::observe(std::span<double> out) const
{
    out[0] = 2.0 * state_.position.x / params_.width - 1.0;
    out[1] = 2.0 * state_.position.y / params_.height - 1.0;
}

bool AnimatEnvironment::is_poor(int action) const
{
    return is_poor_action(static_cast<unsigned>(action));
}

} // namespace metaexplore
