#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace metaexplore {

// Counter-based random stream. Output n is mix(key + n * golden), so a stream
// is fully described by (key, counter) and substreams derived from distinct
// labels never overlap in practice. Every consumer (task sampling, gating,
// environment noise, parameter init) takes its own labeled substream so that
// one of them can be replayed without touching the others.
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed = 0);

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return ~result_type{0}; }

    result_type operator()();

    // Independent stream keyed by (this key, label, index). Does not advance
    // this stream.
    Rng substream(std::string_view label, std::uint64_t index = 0) const;

    // Uniform on [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi);
    // Uniform on {0, ..., n-1}; n must be positive.
    std::size_t uniform_index(std::size_t n);
    // Standard normal via Box-Muller; consumes exactly two outputs.
    double normal();
    // Inverse-CDF draw from a probability vector; consumes one output.
    std::size_t categorical(std::span<const double> probs);

    std::uint64_t key() const { return key_; }
    std::uint64_t counter() const { return counter_; }

    friend bool operator==(const Rng&, const Rng&) = default;

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t z);
std::uint64_t fnv1a64(std::string_view text);

} // namespace metaexplore
