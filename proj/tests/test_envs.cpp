#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "metaexplore/environment.hpp"

using namespace metaexplore;

namespace {

// Independent restatement of the cart-pole equations of motion.
CartPoleState reference_step(CartPoleState s, int action, const CartPoleParams& p)
{
    const double f = action == 1 ? p.force_magnitude : -p.force_magnitude;
    const double m = p.cart_mass + p.pole_mass;
    const double ml = p.pole_mass * p.pole_half_length;
    const double c = std::cos(s.theta);
    const double sn = std::sin(s.theta);
    const double tmp = (f + ml * s.theta_dot * s.theta_dot * sn) / m;
    const double th_acc = (p.gravity * sn - c * tmp) / (p.pole_half_length * (4.0 / 3.0 - p.pole_mass * c * c / m));
    const double x_acc = tmp - ml * th_acc * c / m;
    return {s.x + p.dt * s.v, s.v + p.dt * x_acc, s.theta + p.dt * s.theta_dot, s.theta_dot + p.dt * th_acc};
}

} // namespace

TEST(CartPole, MatchesReferenceDynamics)
{
    CartPoleParams p;
    p.cart_mass = 1.3;
    p.pole_mass = 0.15;
    p.pole_half_length = 0.7;
    p.force_magnitude = 12.0;
    Rng r(1);
    CartPoleState s = cartpole_reset(r);
    CartPoleState ref = s;
    for (int t = 0; t < 20; ++t) {
        const int a = t % 3 == 0 ? 1 : 0;
        const auto out = cartpole_step(s, a, p);
        ref = reference_step(ref, a, p);
        EXPECT_NEAR(out.state.x, ref.x, 1e-14);
        EXPECT_NEAR(out.state.v, ref.v, 1e-14);
        EXPECT_NEAR(out.state.theta, ref.theta, 1e-14);
        EXPECT_NEAR(out.state.theta_dot, ref.theta_dot, 1e-14);
        s = out.state;
        if (out.done) {
            break;
        }
    }
}

TEST(CartPole, RewardAndTermination)
{
    CartPoleParams p;
    CartPoleState s;
    auto out = cartpole_step(s, 1, p);
    EXPECT_FALSE(out.done);
    EXPECT_EQ(out.reward, 1.0);

    s.theta = 12.0 * std::numbers::pi / 180.0 - 1e-6;
    s.theta_dot = 1.0;
    out = cartpole_step(s, 1, p);
    EXPECT_TRUE(out.done);
    EXPECT_EQ(out.reward, 0.0);

    CartPoleState off;
    off.x = 2.39;
    off.v = 1.0;
    EXPECT_TRUE(cartpole_step(off, 1, p).done);
}

TEST(CartPole, UprightAtRestOnlyMovesCart)
{
    CartPoleParams p;
    const auto out = cartpole_step({}, 1, p);
    EXPECT_EQ(out.state.x, 0.0);
    EXPECT_GT(out.state.v, 0.0);
    EXPECT_EQ(out.state.theta, 0.0);
    EXPECT_LT(out.state.theta_dot, 0.0);
}

TEST(CartPole, RejectsBadInput)
{
    CartPoleParams p;
    EXPECT_THROW(cartpole_step({}, 2, p), std::invalid_argument);
    CartPoleState s;
    s.v = std::nan("");
    EXPECT_THROW(cartpole_step(s, 0, p), std::domain_error);
}

TEST(Animat, PoorActionCountByEnumeration)
{
    // Independent count: compare the summed force vector against zero using
    // the actuator angles directly.
    int poor = 0;
    for (unsigned a = 0; a < 256; ++a) {
        double fx = 0.0;
        double fy = 0.0;
        for (int j = 0; j < 8; ++j) {
            if (a & (1u << j)) {
                fx += std::cos(j * std::numbers::pi / 4.0);
                fy += std::sin(j * std::numbers::pi / 4.0);
            }
        }
        const bool zero = std::hypot(fx, fy) < 1e-9;
        poor += zero ? 1 : 0;
        EXPECT_EQ(is_poor_action(a), zero) << a;
    }
    EXPECT_EQ(poor, 16);
    EXPECT_EQ(count_poor_actions(), 16);
}

TEST(Animat, NetForceOfSingleActuators)
{
    for (int j = 0; j < 8; ++j) {
        const auto f = animat_net_force(1u << j, 2.0);
        EXPECT_NEAR(f.x, 2.0 * std::cos(j * std::numbers::pi / 4.0), 1e-12);
        EXPECT_NEAR(f.y, 2.0 * std::sin(j * std::numbers::pi / 4.0), 1e-12);
    }
}

TEST(Animat, ObstacleStopsMotion)
{
    AnimatParams p;
    p.obstacles = {{5.0, 0.0, 6.0, 20.0}};
    const Vec2 to = animat_resolve_motion({2.0, 2.0}, {9.0, 2.0}, p);
    EXPECT_LT(to.x, 5.0);
    EXPECT_GT(to.x, 4.9);
    EXPECT_DOUBLE_EQ(to.y, 2.0);
    const Vec2 clipped = animat_resolve_motion({19.0, 19.0}, {25.0, 30.0}, p);
    EXPECT_DOUBLE_EQ(clipped.x, 20.0);
    EXPECT_DOUBLE_EQ(clipped.y, 20.0);
}

TEST(Animat, GoalEndsEpisodeWithGoalReward)
{
    AnimatParams p;
    p.noise_std = 0.0;
    p.start = {10.0, 10.0};
    p.goal = {11.5, 10.0};
    Rng r(0);
    const auto step = animat_step({p.start}, 1u, p, r);
    EXPECT_TRUE(step.done);
    EXPECT_EQ(step.reward, p.goal_reward);
    const auto idle = animat_step({p.start}, 0u, p, r);
    EXPECT_FALSE(idle.done);
    EXPECT_EQ(idle.reward, p.step_reward);
}

TEST(Animat, SampledTasksAreValid)
{
    Rng r(5);
    AnimatRanges ranges;
    for (int i = 0; i < 50; ++i) {
        const auto p = sample_animat_params(ranges, r);
        EXPECT_NO_THROW(p.validate());
        EXPECT_TRUE(p.free(p.start));
        EXPECT_GE(std::hypot(p.start.x - p.goal.x, p.start.y - p.goal.y), ranges.min_start_goal_distance);
    }
}

TEST(Tabular, SampledModelsAreDistributions)
{
    Rng r(2);
    TabularClassSpec spec;
    spec.num_states = 6;
    spec.num_actions = 3;
    for (int i = 0; i < 20; ++i) {
        const auto m = sample_tabular_model(spec, r);
        EXPECT_NO_THROW(m.validate());
        for (int s = 0; s < m.num_states; ++s) {
            for (int a = 0; a < m.num_actions; ++a) {
                int support = 0;
                for (int n = 0; n < m.num_states; ++n) {
                    support += m.p(s, a, n) > 0.0 ? 1 : 0;
                }
                EXPECT_LE(support, m.is_terminal(s) ? 1 : spec.max_successors);
            }
        }
    }
}

TEST(Tabular, DyadicModelsUseQuarters)
{
    Rng r(3);
    TabularClassSpec spec;
    spec.dyadic = true;
    const auto m = sample_tabular_model(spec, r);
    for (double v : m.transition) {
        EXPECT_EQ(v * 4.0, std::floor(v * 4.0));
    }
    for (double v : m.reward) {
        EXPECT_EQ(v * 4.0, std::floor(v * 4.0));
    }
}

TEST(Tabular, ValidateRejectsBrokenRows)
{
    auto m = make_two_state_chain();
    m.p(0, 0, 0) = 0.5;
    EXPECT_THROW(m.validate(), std::invalid_argument);
}

TEST(Tabular, EnvironmentFollowsChain)
{
    TabularEnvironment env(make_two_state_chain(3.0));
    Rng r(0);
    env.reset(r);
    std::vector<double> obs(env.observation_dim());
    env.observe(obs);
    EXPECT_EQ(obs, (std::vector<double>{1.0, 0.0}));
    auto out = env.step(0, r);
    EXPECT_EQ(out.reward, 0.0);
    EXPECT_FALSE(out.done);
    out = env.step(1, r);
    EXPECT_EQ(out.reward, 3.0);
    EXPECT_TRUE(out.done);
}
