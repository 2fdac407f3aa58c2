#include "metaexplore/envs/animat.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace metaexplore {

namespace {

const std::array<Vec2, kAnimatActuators>& actuator_directions()
{
    static const std::array<Vec2, kAnimatActuators> dirs = [] {
        std::array<Vec2, kAnimatActuators> d{};
        const double h = std::numbers::sqrt2 / 2.0;
        d[0] = {1.0, 0.0};
        d[1] = {h, h};
        d[2] = {0.0, 1.0};
        d[3] = {-h, h};
        d[4] = {-1.0, 0.0};
        d[5] = {-h, -h};
        d[6] = {0.0, -1.0};
        d[7] = {h, -h};
        return d;
    }();
    return dirs;
}

// Entry parameter of the segment a + t (b - a), t in [0, 1], into r; infinity if
// the segment misses r.
double segment_entry(Vec2 a, Vec2 b, const Rect& r)
{
    double t0 = 0.0;
    double t1 = 1.0;
    const double d[2] = {b.x - a.x, b.y - a.y};
    const double origin[2] = {a.x, a.y};
    const double lo[2] = {r.x0, r.y0};
    const double hi[2] = {r.x1, r.y1};
    for (int k = 0; k < 2; ++k) {
        if (d[k] == 0.0) {
            if (origin[k] < lo[k] || origin[k] > hi[k]) {
                return std::numeric_limits<double>::infinity();
            }
            continue;
        }
        double ta = (lo[k] - origin[k]) / d[k];
        double tb = (hi[k] - origin[k]) / d[k];
        if (ta > tb) {
            std::swap(ta, tb);
        }
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
        if (t0 > t1) {
            return std::numeric_limits<double>::infinity();
        }
    }
    return t0;
}

} // namespace

double norm(Vec2 v)
{
    return std::hypot(v.x, v.y);
}

bool AnimatParams::free(Vec2 p) const
{
    if (p.x < 0.0 || p.x > width || p.y < 0.0 || p.y > height) {
        return false;
    }
    return std::none_of(obstacles.begin(), obstacles.end(),
                        [&](const Rect& r) { return r.contains(p); });
}

void AnimatParams::validate() const
{
    if (!(width > 0.0) || !(height > 0.0)) {
        throw std::invalid_argument("animat arena must have positive extent");
    }
    if (!(goal_radius > 0.0)) {
        throw std::invalid_argument("animat goal_radius must be positive");
    }
    if (!(noise_std >= 0.0) || !(actuator_gain >= 0.0)) {
        throw std::invalid_argument("animat gain and noise must be non-negative");
    }
    if (!free(start) || !free(goal)) {
        throw std::invalid_argument("animat start and goal must lie in free arena space");
    }
}

Vec2 animat_net_force(unsigned action, double gain)
{
    const auto& dirs = actuator_directions();
    Vec2 f;
    for (int j = 0; j < kAnimatActuators; ++j) {
        if (action & (1u << j)) {
            f.x += dirs[static_cast<std::size_t>(j)].x;
            f.y += dirs[static_cast<std::size_t>(j)].y;
        }
    }
    return {gain * f.x, gain * f.y};
}

bool is_poor_action(unsigned action, double threshold)
{
    if (threshold <= 0.0) {
        // Components are integers plus integer multiples of sqrt(2)/2, so the
        // force vanishes exactly when each opposing pair agrees.
        for (int j = 0; j < kAnimatActuators / 2; ++j) {
            const bool a = action & (1u << j);
            const bool b = action & (1u << (j + kAnimatActuators / 2));
            if (a != b) {
                return false;
            }
        }
        return true;
    }
    return norm(animat_net_force(action)) <= threshold;
}

int count_poor_actions(double threshold)
{
    int count = 0;
    for (unsigned a = 0; a < static_cast<unsigned>(kAnimatActions); ++a) {
        count += is_poor_action(a, threshold) ? 1 : 0;
    }
    return count;
}

Vec2 animat_resolve_motion(Vec2 from, Vec2 to, const AnimatParams& p)
{
    const Vec2 target{std::clamp(to.x, 0.0, p.width), std::clamp(to.y, 0.0, p.height)};
    double hit = std::numeric_limits<double>::infinity();
    for (const auto& r : p.obstacles) {
        hit = std::min(hit, segment_entry(from, target, r));
    }
    if (!std::isfinite(hit)) {
        return target;
    }
    const double len = norm({target.x - from.x, target.y - from.y});
    const double t = std::max(0.0, hit - (len > 0.0 ? 1e-9 / len : 0.0));
    const Vec2 stop{from.x + t * (target.x - from.x), from.y + t * (target.y - from.y)};
    return p.free(stop) ? stop : from;
}

AnimatStep animat_step(const AnimatState& s, unsigned action, const AnimatParams& p, Rng& rng)
{
    if (action >= static_cast<unsigned>(kAnimatActions)) {
        throw std::invalid_argument("animat_step: action must be an 8-bit vector");
    }
    const Vec2 f = animat_net_force(action, p.actuator_gain);
    Vec2 to{s.position.x + f.x, s.position.y + f.y};
    if (p.noise_std > 0.0) {
        to.x += p.noise_std * rng.normal();
        to.y += p.noise_std * rng.normal();
    }
    AnimatStep out;
    out.state.position = animat_resolve_motion(s.position, to, p);
    const double dist = norm({out.state.position.x - p.goal.x, out.state.position.y - p.goal.y});
    out.done = dist <= p.goal_radius;
    out.reward = out.done ? p.goal_reward : p.step_reward;
    return out;
}

void AnimatRanges::validate() const
{
    if (!(width > 0.0) || !(height > 0.0)) {
        throw std::invalid_argument("animat ranges: arena must have positive extent");
    }
    if (min_obstacles < 0 || min_obstacles > max_obstacles) {
        throw std::invalid_argument("animat ranges: obstacle count range is empty");
    }
    obstacle_size.require_valid("obstacle_size");
    if (!(obstacle_size.lo > 0.0)) {
        throw std::invalid_argument("animat ranges: obstacle sizes must be positive");
    }
    if (!(goal_radius > 0.0)) {
        throw std::invalid_argument("animat ranges: goal_radius must be positive");
    }
    if (!(min_start_goal_distance >= 0.0) ||
        min_start_goal_distance >= std::hypot(width, height)) {
        throw std::invalid_argument("animat ranges: start/goal separation is unattainable");
    }
}

AnimatParams sample_animat_params(const AnimatRanges& ranges, Rng& rng)
{
    ranges.validate();
    AnimatParams p;
    p.width = ranges.width;
    p.height = ranges.height;
    p.goal_radius = ranges.goal_radius;
    p.actuator_gain = ranges.actuator_gain;
    p.noise_std = ranges.noise_std;

    const int count = ranges.min_obstacles +
                      static_cast<int>(rng.uniform_index(
                          static_cast<std::size_t>(ranges.max_obstacles - ranges.min_obstacles + 1)));
    for (int k = 0; k < count; ++k) {
        const double w = ranges.obstacle_size.sample(rng);
        const double h = ranges.obstacle_size.sample(rng);
        const double x0 = rng.uniform(0.0, std::max(0.0, p.width - w));
        const double y0 = rng.uniform(0.0, std::max(0.0, p.height - h));
        p.obstacles.push_back({x0, y0, x0 + w, y0 + h});
    }

    constexpr int kMaxAttempts = 100000;
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        const Vec2 start{rng.uniform(0.0, p.width), rng.uniform(0.0, p.height)};
        const Vec2 goal{rng.uniform(0.0, p.width), rng.uniform(0.0, p.height)};
        if (!p.free(start) || !p.free(goal)) {
            continue;
        }
        if (norm({start.x - goal.x, start.y - goal.y}) < ranges.min_start_goal_distance) {
            continue;
        }
        p.start = start;
        p.goal = goal;
        p.validate();
        return p;
    }
    throw std::runtime_error("sample_animat_params: could not place start and goal");
}

} // namespace metaexplore
