#include "metaexplore/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace metaexplore {

namespace {
constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
}

std::uint64_t mix64(std::uint64_t z)
{
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t fnv1a64(std::string_view text)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

Rng::Rng(std::uint64_t seed) : key_(mix64(seed ^ 0x6a09e667f3bcc909ULL)) {}

Rng::result_type Rng::operator()()
{
    ++counter_;
    return mix64(key_ + counter_ * kGolden);
}

Rng Rng::substream(std::string_view label, std::uint64_t index) const
{
    Rng child(0);
    child.key_ = mix64(key_ ^ mix64(fnv1a64(label) + mix64(index + kGolden)));
    return child;
}

double Rng::uniform()
{
    return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi)
{
    return lo + (hi - lo) * uniform();
}

std::size_t Rng::uniform_index(std::size_t n)
{
    if (n == 0) {
        throw std::invalid_argument("uniform_index: empty range");
    }
    auto idx = static_cast<std::size_t>(uniform() * static_cast<double>(n));
    return idx < n ? idx : n - 1;
}

double Rng::normal()
{
    // 1 - u keeps the log argument in (0, 1].
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t Rng::categorical(std::span<const double> probs)
{
    if (probs.empty()) {
        throw std::invalid_argument("categorical: empty distribution");
    }
    const double u = uniform();
    double acc = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (probs[i] > 0.0) {
            last_positive = i;
        }
        acc += probs[i];
        if (u < acc) {
            return i;
        }
    }
    return last_positive;
}

} // namespace metaexplore
