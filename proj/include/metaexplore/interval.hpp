#pragma once

#include <stdexcept>
#include <string>

#include "metaexplore/rng.hpp"

namespace metaexplore {

// Closed interval used for task-sampler ranges.
struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    bool valid() const { return lo <= hi; }
    bool contains(double v) const { return v >= lo && v <= hi; }
    double sample(Rng& rng) const { return lo == hi ? lo : rng.uniform(lo, hi); }

    void require_valid(const std::string& name) const
    {
        if (!(lo <= hi)) {
            throw std::invalid_argument("sampler range '" + name + "' is empty: [" +
                                        std::to_string(lo) + ", " + std::to_string(hi) + "]");
        }
    }

    friend bool operator==(const Interval&, const Interval&) = default;
};

} // namespace metaexplore
