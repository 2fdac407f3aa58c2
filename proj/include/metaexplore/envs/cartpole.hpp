#pragma once

#include <numbers>

#include "metaexplore/interval.hpp"
#include "metaexplore/rng.hpp"

namespace metaexplore {

struct CartPoleParams {
    double cart_mass = 1.0;
    double pole_mass = 0.1;
    double pole_half_length = 0.5;
    double force_magnitude = 10.0;
    double gravity = 9.8;
    double dt = 0.02;
    double fail_angle = 12.0 * std::numbers::pi / 180.0;
    double fail_position = 2.4;

    void validate() const;

    friend bool operator==(const CartPoleParams&, const CartPoleParams&) = default;
};

struct CartPoleState {
    double x = 0.0;
    double v = 0.0;
    double theta = 0.0;
    double theta_dot = 0.0;

    friend bool operator==(const CartPoleState&, const CartPoleState&) = default;
};

struct CartPoleStep {
    CartPoleState state;
    double reward = 0.0;
    bool done = false;
};

// One explicit Euler step of the classic cart-pole equations of motion with
// force +force_magnitude for action 1 and -force_magnitude for action 0.
// Reward is 1 while the pole stays up and 0 on the failing step.
CartPoleStep cartpole_step(const CartPoleState& s, int action, const CartPoleParams& p);

bool cartpole_failed(const CartPoleState& s, const CartPoleParams& p);

// Each state component uniform in [-0.05, 0.05].
CartPoleState cartpole_reset(Rng& rng);

// Per-task variation: each range is applied to the matching physical
// parameter; the defaults span [0.5x, 2x] of the reference values.
struct CartPoleRanges {
    Interval cart_mass{0.5, 2.0};
    Interval pole_mass{0.05, 0.2};
    Interval pole_half_length{0.25, 1.0};
    Interval force_magnitude{5.0, 20.0};

    void validate() const;

    friend bool operator==(const CartPoleRanges&, const CartPoleRanges&) = default;
};

CartPoleParams sample_cartpole_params(const CartPoleRanges& ranges, Rng& rng);

} // namespace metaexplore
