#include "qrbsde/philox.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>

using qrbsde::Philox4x32;

// Known-answer vectors of the Random123 distribution (kat_vectors, philox4x32_10).
TEST(Philox, KnownAnswerZero) {
    const auto r = Philox4x32::block({0, 0, 0, 0}, {0, 0});
    EXPECT_EQ(r[0], 0x6627e8d5u);
    EXPECT_EQ(r[1], 0xe169c58du);
    EXPECT_EQ(r[2], 0xbc57ac4cu);
    EXPECT_EQ(r[3], 0x9b00dbd8u);
}

TEST(Philox, KnownAnswerAllOnes) {
    const auto r = Philox4x32::block({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
    EXPECT_EQ(r[0], 0x408f276du);
    EXPECT_EQ(r[1], 0x41c83b0eu);
    EXPECT_EQ(r[2], 0xa20bc7c6u);
    EXPECT_EQ(r[3], 0x6d5451fdu);
}

TEST(Philox, KnownAnswerPi) {
    const auto r = Philox4x32::block({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u});
    EXPECT_EQ(r[0], 0xd16cfe09u);
    EXPECT_EQ(r[1], 0x94fdccebu);
    EXPECT_EQ(r[2], 0x5001e420u);
    EXPECT_EQ(r[3], 0x24126ea1u);
}

TEST(Philox, OpenUnitNeverHitsEndpoints) {
    EXPECT_GT(qrbsde::to_open_unit(0, 0), 0.0);
    EXPECT_LT(qrbsde::to_open_unit(0xffffffffu, 0xffffffffu), 1.0);
}

TEST(Philox, NormalsArePureFunctionsOfTheirKey) {
    EXPECT_EQ(qrbsde::standard_normal(42, 7, 3, 1), qrbsde::standard_normal(42, 7, 3, 1));
    std::set<double> distinct;
    for (std::uint32_t c = 0; c < 4; ++c) distinct.insert(qrbsde::standard_normal(42, 7, 3, c));
    distinct.insert(qrbsde::standard_normal(43, 7, 3, 0));
    distinct.insert(qrbsde::standard_normal(42, 8, 3, 0));
    distinct.insert(qrbsde::standard_normal(42, 7, 4, 0));
    EXPECT_EQ(distinct.size(), 7u);
}

TEST(Philox, NormalMoments) {
    const int n = 200000;
    double s = 0.0, s2 = 0.0, s4 = 0.0;
    for (int p = 0; p < n; ++p) {
        const double z = qrbsde::standard_normal(1, static_cast<std::uint64_t>(p), 0, 0);
        s += z;
        s2 += z * z;
        s4 += z * z * z * z;
    }
    EXPECT_NEAR(s / n, 0.0, 4.0 / std::sqrt(n));
    EXPECT_NEAR(s2 / n, 1.0, 4.0 * std::sqrt(2.0 / n));
    EXPECT_NEAR(s4 / n, 3.0, 4.0 * std::sqrt(96.0 / n));
}
