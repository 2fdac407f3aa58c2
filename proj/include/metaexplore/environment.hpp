#pragma once

#include <memory>
#include <span>

#include "metaexplore/core.hpp"

namespace metaexplore {

struct StepOutcome {
    double reward = 0.0;
    bool done = false;
};

// Episodic environment over a finite action set. Observations are written
// into caller-provided buffers of observation_dim() doubles.
class Environment {
public:
    virtual ~Environment() = default;

    virtual std::size_t observation_dim() const = 0;
    virtual int num_actions() const = 0;
    virtual void reset(Rng& rng) = 0;
    virtual StepOutcome step(int action, Rng& rng) = 0;
    virtual void observe(std::span<double> out) const = 0;

    // Only the animat class has a notion of poor actions.
    virtual bool tracks_poor_actions() const { return false; }
    virtual bool is_poor(int /*action*/) const { return false; }
};

std::unique_ptr<Environment> make_environment(const Task& task);

// Tabular environment exposing its current state index (one-hot observation).
class TabularEnvironment final : public Environment {
public:
    explicit TabularEnvironment(TabularModel model);

    std::size_t observation_dim() const override;
    int num_actions() const override;
    void reset(Rng& rng) override;
    StepOutcome step(int action, Rng& rng) override;
    void observe(std::span<double> out) const override;

    int state() const { return state_; }

private:
    TabularModel model_;
    int state_ = 0;
};

class CartPoleEnvironment final : public Environment {
public:
    explicit CartPoleEnvironment(CartPoleParams params);

    std::size_t observation_dim() const override { return 4; }
    int num_actions() const override { return 2; }
    void reset(Rng& rng) override;
    StepOutcome step(int action, Rng& rng) override;
    void observe(std::span<double> out) const override;

    const CartPoleState& state() const { return state_; }

private:
    CartPoleParams params_;
    CartPoleState state_;
};

// Observations are positions rescaled to [-1, 1] per axis.
class AnimatEnvironment final : public Environment {
public:
    explicit AnimatEnvironment(AnimatParams params);

    std::size_t observation_dim() const override { return 2; }
    int num_actions() const override { return kAnimatActions; }
    void reset(Rng& rng) override;
    StepOutcome step(int action, Rng& rng) override;
    void observe(std::span<double> out) const override;

    bool tracks_poor_actions() const override { return true; }
    bool is_poor(int action) const override;

    const AnimatState& state() const { return state_; }

private:
    AnimatParams params_;
    AnimatState state_;
};

} // namespace metaexplore
