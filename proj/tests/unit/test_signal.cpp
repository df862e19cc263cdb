#include "wogan/error.hpp"
#include "wogan/rng.hpp"
#include "wogan/signal.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace wogan;

TEST(Normalize, EndpointsAndMidpoint) {
    const Interval r{0.0, 325.0};
    EXPECT_DOUBLE_EQ(normalize(0.0, r), -1.0);
    EXPECT_DOUBLE_EQ(normalize(325.0, r), 1.0);
    EXPECT_DOUBLE_EQ(normalize(162.5, r), 0.0);
}

TEST(Normalize, OutOfRangeIsRejected) {
    EXPECT_THROW(normalize(-0.1, {0.0, 1.0}), RangeError);
    EXPECT_THROW(normalize(1.1, {0.0, 1.0}), RangeError);
    EXPECT_THROW(denormalize(1.5, {0.0, 1.0}), RangeError);
    EXPECT_THROW(normalize(0.5, {1.0, 1.0}), PreconditionError);
}

TEST(Normalize, RoundTripProperty) {
    Rng rng(7);
    for (int i = 0; i < 10000; ++i) {
        const double a = uniform(rng, -1000.0, 1000.0);
        const double b = a + uniform(rng, 1e-3, 500.0);
        const double x = uniform(rng, a, b);
        const double back = denormalize(normalize(x, {a, b}), {a, b});
        ASSERT_NEAR(back, x, 1e-12 * std::max(1.0, std::fabs(x)) * 1000) << a << " " << b << " " << x;
        ASSERT_NEAR(back, x, 1e-9);
    }
}

TEST(BuildSignal, ConstantCase) {
    const std::vector<double> coords(6, -1.0);
    const Signal s = build_signal({6, 5.0, {0.0, 100.0}}, coords);
    EXPECT_DOUBLE_EQ(s.dt, 0.01);
    EXPECT_EQ(s.size(), 3001u);
    EXPECT_NEAR(s.duration(), 30.0, 1e-9);
    for (double v : s.values) ASSERT_EQ(v, 0.0);
}

TEST(BuildSignal, TwoStepBoundaryGoesToLaterSegment) {
    const std::vector<double> coords{-1.0, 1.0};
    const Signal s = build_signal({2, 1.0, {0.0, 10.0}}, coords);
    ASSERT_EQ(s.size(), 201u);
    for (std::size_t k = 0; k < 100; ++k) EXPECT_EQ(s.values[k], 0.0) << k;
    for (std::size_t k = 100; k <= 200; ++k) EXPECT_EQ(s.values[k], 10.0) << k;
}

TEST(BuildSignal, MidpointReconstructionRoundTrip) {
    Rng rng(11);
    const PiecewiseSpec spec{6, 5.0, {0.0, 100.0}};
    for (int rep = 0; rep < 100; ++rep) {
        const auto coords = uniform_box(rng, 6);
        const Signal s = build_signal(spec, coords);
        for (std::size_t seg = 0; seg < 6; ++seg) {
            const double mid = (static_cast<double>(seg) + 0.5) * spec.piece_duration;
            const auto idx = static_cast<std::size_t>(std::llround(mid / s.dt));
            ASSERT_NEAR(normalize(s.values[idx], spec.range), coords[seg], 1e-12);
        }
    }
}

TEST(BuildSignal, LengthMismatchIsDimensionError) {
    const std::vector<double> coords{0.0, 0.0};
    EXPECT_THROW(build_signal({3, 1.0, {0.0, 1.0}}, coords), DimensionError);
}

TEST(Trace, RejectsMismatchedSamplePeriodAndUnknownNames) {
    Trace tr;
    tr.add(Signal{"x", 0.0, 0.01, {1.0, 2.0}});
    EXPECT_THROW(tr.add(Signal{"y", 0.0, 0.02, {1.0}}), SchemaError);
    EXPECT_THROW(tr.add(Signal{"x", 0.0, 0.01, {1.0}}), SchemaError);
    EXPECT_THROW(tr.at("nope"), SchemaError);
    EXPECT_THROW(tr.add(Signal{"z", 0.0, 0.01, {NAN}}), NonFiniteError);
}

TEST(Trace, CsvHasTimeColumn) {
    Trace tr;
    tr.add(Signal{"x", 0.0, 0.5, {1.0, 2.0}});
    tr.add(Signal{"y", 0.0, 0.5, {3.0, 4.0}});
    EXPECT_EQ(tr.to_csv(), "time,x,y\n0,1,3\n0.5,2,4\n");
}
