#pragma once

#include <vector>

#include "metaexplore/interval.hpp"
#include "metaexplore/rng.hpp"

namespace metaexplore {

inline constexpr int kAnimatActuators = 8;
inline constexpr int kAnimatActions = 1 << kAnimatActuators;

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Vec2&, const Vec2&) = default;
};

double norm(Vec2 v);

// Axis-aligned rectangle [x0, x1] x [y0, y1].
struct Rect {
    double x0 = 0.0;
    double y0 = 0.0;
    double x1 = 0.0;
    double y1 = 0.0;

    bool contains(Vec2 p) const { return p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1; }

    friend bool operator==(const Rect&, const Rect&) = default;
};

struct AnimatParams {
    double width = 20.0;
    double height = 20.0;
    std::vector<Rect> obstacles;
    Vec2 start{2.0, 2.0};
    Vec2 goal{18.0, 18.0};
    double goal_radius = 1.0;
    double actuator_gain = 1.0;
    double noise_std = 1.0;
    double step_reward = -1.0;
    double goal_reward = 100.0;

    bool free(Vec2 p) const;
    void validate() const;

    friend bool operator==(const AnimatParams&, const AnimatParams&) = default;
};

struct AnimatState {
    Vec2 position;

    friend bool operator==(const AnimatState&, const AnimatState&) = default;
};

struct AnimatStep {
    AnimatState state;
    double reward = 0.0;
    bool done = false;
};

// Bit j of the action switches on the actuator pointing at 45 * j degrees.
Vec2 animat_net_force(unsigned action, double gain = 1.0);

// True iff |net force| <= threshold. With threshold 0 the test is exact:
// every opposing actuator pair must be both on or both off.
bool is_poor_action(unsigned action, double threshold = 0.0);

// Number of poor actions among all 256, by enumeration.
int count_poor_actions(double threshold = 0.0);

// Moves from `from` towards `to`, clipped to the arena and stopped just before
// the first obstacle crossed on the way.
Vec2 animat_resolve_motion(Vec2 from, Vec2 to, const AnimatParams& p);

AnimatStep animat_step(const AnimatState& s, unsigned action, const AnimatParams& p, Rng& rng);

struct AnimatRanges {
    double width = 20.0;
    double height = 20.0;
    int min_obstacles = 0;
    int max_obstacles = 3;
    Interval obstacle_size{2.0, 6.0};
    double goal_radius = 1.0;
    double actuator_gain = 1.0;
    double noise_std = 1.0;
    double min_start_goal_distance = 6.0;

    void validate() const;

    friend bool operator==(const AnimatRanges&, const AnimatRanges&) = default;
};

AnimatParams sample_animat_params(const AnimatRanges& ranges, Rng& rng);

} // namespace metaexplore
