#include "metaexplore/envs/cartpole.hpp"

#include <cmath>
#include <stdexcept>

namespace metaexplore {

void CartPoleParams::validate() const
{
    if (!(cart_mass > 0.0) || !(pole_mass > 0.0) || !(pole_half_length > 0.0) ||
        !(force_magnitude > 0.0)) {
        throw std::invalid_argument("cart-pole masses, length and force must be strictly positive");
    }
    if (!(dt > 0.0) || !(fail_angle > 0.0) || !(fail_position > 0.0) || !std::isfinite(gravity)) {
        throw std::invalid_argument("cart-pole integration constants are invalid");
    }
}

bool cartpole_failed(const CartPoleState& s, const CartPoleParams& p)
{
    return std::abs(s.theta) > p.fail_angle || std::abs(s.x) > p.fail_position;
}

CartPoleStep cartpole_step(const CartPoleState& s, int action, const CartPoleParams& p)
{
    if (!std::isfinite(s.x) || !std::isfinite(s.v) || !std::isfinite(s.theta) ||
        !std::isfinite(s.theta_dot)) {
        throw std::domain_error("cartpole_step: non-finite state");
    }
    if (action != 0 && action != 1) {
        throw std::invalid_argument("cartpole_step: action must be 0 or 1");
    }
    const double force = action == 1 ? p.force_magnitude : -p.force_magnitude;
    const double total_mass = p.cart_mass + p.pole_mass;
    const double polemass_length = p.pole_mass * p.pole_half_length;
    const double cos_t = std::cos(s.theta);
    const double sin_t = std::sin(s.theta);

    const double temp = (force + polemass_length * s.theta_dot * s.theta_dot * sin_t) / total_mass;
    const double theta_acc =
        (p.gravity * sin_t - cos_t * temp) /
        (p.pole_half_length * (4.0 / 3.0 - p.pole_mass * cos_t * cos_t / total_mass));
    const double x_acc = temp - polemass_length * theta_acc * cos_t / total_mass;

    CartPoleStep out;
    out.state.x = s.x + p.dt * s.v;
    out.state.v = s.v + p.dt * x_acc;
    out.state.theta = s.theta + p.dt * s.theta_dot;
    out.state.theta_dot = s.theta_dot + p.dt * theta_acc;
    out.done = cartpole_failed(out.state, p);
    out.reward = out.done ? 0.0 : 1.0;
    return out;
}

CartPoleState cartpole_reset(Rng& rng)
{
    CartPoleState s;
    s.x = rng.uniform(-0.05, 0.05);
    s.v = rng.uniform(-0.05, 0.05);
    s.theta = rng.uniform(-0.05, 0.05);
    s.theta_dot = rng.uniform(-0.05, 0.05);
    return s;
}

void CartPoleRanges::validate() const
{
    cart_mass.require_valid("cart_mass");
    pole_mass.require_valid("pole_mass");
    pole_half_length.require_valid("pole_half_length");
    force_magnitude.require_valid("force_magnitude");
    if (!(cart_mass.lo > 0.0) || !(pole_mass.lo > 0.0) || !(pole_half_length.lo > 0.0) ||
        !(force_magnitude.lo > 0.0)) {
        throw std::invalid_argument("cart-pole sampler ranges must be strictly positive");
    }
}

CartPoleParams sample_cartpole_params(const CartPoleRanges& ranges, Rng& rng)
{
    ranges.validate();
    CartPoleParams p;
    p.pole_half_length = ranges.pole_half_length.sample(rng);
    p.pole_mass = ranges.pole_mass.sample(rng);
    p.cart_mass = ranges.cart_mass.sample(rng);
    p.force_magnitude = ranges.force_magnitude.sample(rng);
    return p;
}

} // namespace metaexplore
