#include <gtest/gtest.h>

#include <set>
#include <vector>

#include "metaexplore/rng.hpp"

using metaexplore::Rng;

TEST(Rng, SameSeedSameSequence)
{
    Rng a(42);
    Rng b(42);
    for (int i = 0; i < 100; ++i) {
        EXPECT_EQ(a(), b());
    }
}

TEST(Rng, CounterDescribesState)
{
    Rng a(7);
    for (int i = 0; i < 5; ++i) {
        a();
    }
    EXPECT_EQ(a.counter(), 5u);
    Rng b(7);
    for (int i = 0; i < 5; ++i) {
        b();
    }
    EXPECT_EQ(a, b);
}

TEST(Rng, SubstreamDoesNotAdvanceParent)
{
    Rng a(3);
    const auto before = a;
    Rng s = a.substream("env", 2);
    s();
    EXPECT_EQ(a, before);
}

TEST(Rng, SubstreamLabelsAndIndicesDiffer)
{
    const Rng root(11);
    std::set<std::uint64_t> firsts;
    for (const char* label : {"gating", "env", "agent-policy", "advisor-policy", "learner"}) {
        for (std::uint64_t k = 0; k < 4; ++k) {
            Rng s = root.substream(label, k);
            firsts.insert(s());
        }
    }
    EXPECT_EQ(firsts.size(), 20u);
}

TEST(Rng, UniformInRange)
{
    Rng r(5);
    double lo = 1.0;
    double hi = 0.0;
    double sum = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double u = r.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        lo = std::min(lo, u);
        hi = std::max(hi, u);
        sum += u;
    }
    EXPECT_LT(lo, 0.001);
    EXPECT_GT(hi, 0.999);
    EXPECT_NEAR(sum / n, 0.5, 0.01);
}

TEST(Rng, UniformIndexCoversAll)
{
    Rng r(9);
    std::vector<int> counts(7, 0);
    for (int i = 0; i < 7000; ++i) {
        ++counts[r.uniform_index(7)];
    }
    for (int c : counts) {
        EXPECT_NEAR(c, 1000, 150);
    }
}

TEST(Rng, CategoricalConsumesOneOutputAndRespectsZeros)
{
    Rng r(1);
    const std::vector<double> p{0.0, 0.25, 0.0, 0.75};
    int ones = 0;
    for (int i = 0; i < 4000; ++i) {
        const auto before = r.counter();
        const auto k = r.categorical(p);
        EXPECT_EQ(r.counter(), before + 1);
        ASSERT_TRUE(k == 1 || k == 3);
        ones += k == 1 ? 1 : 0;
    }
    EXPECT_NEAR(ones / 4000.0, 0.25, 0.03);
}

TEST(Rng, NormalMoments)
{
    Rng r(2);
    double s = 0.0;
    double s2 = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double z = r.normal();
        s += z;
        s2 += z * z;
    }
    EXPECT_NEAR(s / n, 0.0, 0.03);
    EXPECT_NEAR(s2 / n, 1.0, 0.04);
}

TEST(Rng, Fnv1aKnownValues)
{
    EXPECT_EQ(metaexplore::fnv1a64(""), 0xcbf29ce484222325ull);
    EXPECT_EQ(metaexplore::fnv1a64("a"), 0xaf63dc4c8601ec8cull);
}
