#include "wogan/error.hpp"
#include "wogan/sut.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace wogan;

namespace {

double max_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

// Independent reference: RK4 on the first-order system with a finer step.
std::vector<double> reference_oscillator(const std::vector<double>& force, double dt) {
    const auto n = static_cast<std::size_t>(std::llround(30.0 / dt));
    std::vector<double> xs{0.0};
    double x = 0.0, v = 0.0;
    auto f = [&](double t) {
        const auto piece = std::min<std::size_t>(5, static_cast<std::size_t>(std::floor(t / 5.0 + 1e-9)));
        return force[piece];
    };
    for (std::size_t k = 0; k < n; ++k) {
        const double u = f(static_cast<double>(k) * dt);
        auto acc = [&](double p, double q) { return u - p - 0.2 * q; };
        const double a1 = v, b1 = acc(x, v);
        const double a2 = v + dt / 2 * b1, b2 = acc(x + dt / 2 * a1, v + dt / 2 * b1);
        const double a3 = v + dt / 2 * b2, b3 = acc(x + dt / 2 * a2, v + dt / 2 * b2);
        const double a4 = v + dt * b3, b4 = acc(x + dt * a3, v + dt * b3);
        x += dt / 6 * (a1 + 2 * a2 + 2 * a3 + a4);
        v += dt / 6 * (b1 + 2 * b2 + 2 * b3 + b4);
        xs.push_back(x);
    }
    return xs;
}

// Oracle for segment intersection: solve the 2x2 system for both parameters,
// handling the parallel case by collinear overlap.
bool brute_intersect(const Point& p, const Point& p2, const Point& q, const Point& q2) {
    const double rx = p2[0] - p[0], ry = p2[1] - p[1];
    const double sx = q2[0] - q[0], sy = q2[1] - q[1];
    const double den = rx * sy - ry * sx;
    const double qpx = q[0] - p[0], qpy = q[1] - p[1];
    if (den == 0.0) {
        if (qpx * ry - qpy * rx != 0.0) return false;
        const double rr = rx * rx + ry * ry;
        const double t0 = (qpx * rx + qpy * ry) / rr;
        const double t1 = t0 + (sx * rx + sy * ry) / rr;
        return std::max(std::min(t0, t1), 0.0) <= std::min(std::max(t0, t1), 1.0);
    }
    const double t = (qpx * sy - qpy * sx) / den;
    const double u = (qpx * ry - qpy * rx) / den;
    return t >= 0.0 && t <= 1.0 && u >= 0.0 && u <= 1.0;
}

bool brute_valid(const Road& road) {
    for (std::size_t i = 0; i + 1 < road.points.size(); ++i) {
        for (std::size_t j = i + 2; j + 1 < road.points.size(); ++j) {
            if (brute_intersect(road.points[i], road.points[i + 1], road.points[j], road.points[j + 1])) return false;
        }
    }
    return true;
}

}  // namespace

TEST(Oscillator, ZeroForceStaysAtRest) {
    const OscillatorSut osc;
    const auto f = stl::parse(osc.default_requirement());
    const auto e = execute(osc, f, wogan::Test(6, 0.0));
    EXPECT_EQ(max_abs(e.trace.at("x").values), 0.0);
    EXPECT_EQ(e.robustness.raw, OscillatorSut::kDefaultLimit);
    EXPECT_EQ(e.robustness.scaled, 1.0);
    EXPECT_EQ(e.trace.at("x").size(), 3001u);
}

TEST(Oscillator, StepResponseMatchesClosedForm) {
    const OscillatorSut osc;
    const Trace tr = osc.simulate(wogan::Test(6, 1.0));
    // zeta = 0.1, omega_n = 1
    const double wd = std::sqrt(1.0 - 0.01);
    const auto& x = tr.at("x");
    double worst = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double t = x.time_at(k);
        const double exact = 1.0 - std::exp(-0.1 * t) * (std::cos(wd * t) + 0.1 / wd * std::sin(wd * t));
        worst = std::max(worst, std::abs(x.values[k] - exact));
    }
    EXPECT_LE(worst, 1e-8);
    EXPECT_NEAR(x.values.back(), 1.0, 0.1);
    EXPECT_TRUE(execute(osc, stl::parse("always[0,30] (abs(x) < 0.5)"), wogan::Test(6, 1.0)).robustness.falsified());
}

TEST(Oscillator, StepHalvingConvergence) {
    const OscillatorSut osc;
    Rng rng(3);
    for (int trial = 0; trial < 5; ++trial) {
        const auto t = uniform_box(rng, 6);
        const auto coarse = osc.simulate(t).at("x").values;
        const auto fine = reference_oscillator(t, 0.001);
        double worst = 0.0;
        for (std::size_t k = 0; k < coarse.size(); ++k) worst = std::max(worst, std::abs(coarse[k] - fine[10 * k]));
        EXPECT_LE(worst, 1e-6);
    }
}

TEST(Oscillator, DeclaredRangesHoldAtEveryVertex) {
    // Outputs are linear in the six piece values, so extremes sit on vertices.
    const OscillatorSut osc;
    double mx = 0.0, mv = 0.0;
    for (int m = 0; m < 64; ++m) {
        wogan::Test t(6);
        for (int i = 0; i < 6; ++i) t[i] = (m >> i & 1) ? 1.0 : -1.0;
        const Trace tr = osc.simulate(t);
        mx = std::max(mx, max_abs(tr.at("x").values));
        mv = std::max(mv, max_abs(tr.at("xdot").values));
    }
    EXPECT_LT(mx, OscillatorSut::kOutputBound);
    EXPECT_LT(mv, OscillatorSut::kOutputBound);
}

TEST(Suts, DeterministicAndWithinRanges) {
    std::vector<std::unique_ptr<Sut>> suts;
    suts.push_back(make_sut("oscillator"));
    suts.push_back(make_sut("multimodal"));
    for (std::size_t d : {5u, 7u, 9u}) suts.push_back(make_sut("pathfollow", {{"segments", d}}));
    Rng rng(4);
    for (const auto& sut : suts) {
        const auto f = stl::parse(sut->default_requirement());
        std::size_t checked = 0;
        while (checked < 10000) {
            const auto t = uniform_box(rng, sut->dimension());
            if (!sut->valid(t)) continue;
            const auto e = execute(*sut, f, t);
            ASSERT_EQ(e.range_violations, 0u) << sut->name();
            ASSERT_GE(e.robustness.scaled, 0.0);
            ASSERT_LE(e.robustness.scaled, 1.0);
            if (checked < 100) {
                const auto again = execute(*sut, f, t);
                ASSERT_EQ(again.trace.to_csv(), e.trace.to_csv());
                ASSERT_EQ(again.robustness.raw, e.robustness.raw);
            }
            ++checked;
        }
    }
}

TEST(Suts, ExecuteRejectsBadTests) {
    const auto osc = make_sut("oscillator");
    const auto f = stl::parse(osc->default_requirement());
    EXPECT_THROW(execute(*osc, f, wogan::Test(5, 0.0)), DimensionError);
    EXPECT_THROW(execute(*osc, f, wogan::Test{0, 0, 0, 0, 0, 1.5}), RangeError);
    const auto pf = make_sut("pathfollow", {{"segments", 9}});
    EXPECT_THROW(execute(*pf, stl::parse(pf->default_requirement()), wogan::Test(9, 1.0)), PreconditionError);
    EXPECT_THROW(make_sut("nope"), SchemaError);
    EXPECT_THROW(make_sut("pathfollow", {{"segments", 6}}), PreconditionError);
}

TEST(Multimodal, CentersFalsifyAndFarPointsDoNot) {
    const MultimodalSut mm;
    const auto f = stl::parse(mm.default_requirement());
    for (const auto& c : mm.centers()) {
        const wogan::Test t(c.begin(), c.end());
        EXPECT_NEAR(mm.objective(t), mm.baseline() - 1.0, 1e-3);
        EXPECT_LT(mm.objective(t), 0.0);
        EXPECT_EQ(execute(mm, f, t).robustness.scaled, 0.0);
    }
    const wogan::Test far{0.6, 0.6, -0.6};
    EXPECT_NEAR(mm.objective(far), mm.baseline(), 1e-3);
    EXPECT_GT(execute(mm, f, far).robustness.scaled, 0.99);
    // Near the ball boundary one bump reaches the baseline; the other tails add little.
    const auto& c = mm.centers()[0];
    EXPECT_NEAR(mm.objective({c[0] + mm.ball_radius(), c[1], c[2]}), 0.0, 2e-3);
    EXPECT_NEAR(mm.baseline(), std::exp(-mm.ball_radius() * mm.ball_radius() / (2 * 0.16)), 1e-15);
}

TEST(Multimodal, FalsifyingVolumeMatchesMonteCarlo) {
    const MultimodalSut mm;
    EXPECT_NEAR(mm.falsifying_fraction(), 0.02, 1e-3);
    Rng rng(5);
    std::size_t hits = 0;
    const std::size_t n = 1000000;
    for (std::size_t i = 0; i < n; ++i) hits += mm.objective(uniform_box(rng, 3)) <= 0.0;
    EXPECT_NEAR(static_cast<double>(hits) / static_cast<double>(n), mm.falsifying_fraction(), 0.002);
}

TEST(Roads, ZeroCurvatureIsStraight) {
    const std::vector<double> c(5, 0.0);
    const Road r = curvature_to_road(c);
    ASSERT_EQ(r.points.size(), 6u);
    for (std::size_t k = 0; k < 6; ++k) {
        EXPECT_NEAR(r.points[k][0], 100.0, 1e-12);
        EXPECT_NEAR(r.points[k][1], 10.0 + 15.0 * static_cast<double>(k), 1e-12);
    }
}

TEST(Roads, FirstTurnIsAppliedBeforeTheStep) {
    const std::vector<double> c{0.07, 0.0};
    const Road r = curvature_to_road(c);
    const double h = std::numbers::pi / 2 + 1.05;
    EXPECT_NEAR(r.points[1][0], 100.0 + 15.0 * std::cos(h), 1e-12);
    EXPECT_NEAR(r.points[1][1], 10.0 + 15.0 * std::sin(h), 1e-12);
}

TEST(Roads, MirroredCurvaturesMirrorTheRoad) {
    Rng rng(6);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> c(7), m(7);
        for (std::size_t i = 0; i < 7; ++i) {
            c[i] = uniform(rng, -0.07, 0.07);
            m[i] = -c[i];
        }
        const Road a = curvature_to_road(c), b = curvature_to_road(m);
        for (std::size_t k = 0; k < a.points.size(); ++k) {
            EXPECT_NEAR(a.points[k][0] - 100.0, 100.0 - b.points[k][0], 1e-9);
            EXPECT_NEAR(a.points[k][1], b.points[k][1], 1e-9);
        }
    }
}

TEST(Roads, LoopingRoadIsInvalid) {
    const std::vector<double> c(9, 0.07);
    EXPECT_FALSE(road_valid(curvature_to_road(c), c));
    const std::vector<double> straight(9, 0.0);
    EXPECT_TRUE(road_valid(curvature_to_road(straight), straight));
    const std::vector<double> sharp{0.09, 0.0};
    EXPECT_FALSE(road_valid(curvature_to_road(sharp), sharp));
}

TEST(Roads, ValidityAgreesWithBruteForceGeometry) {
    Rng rng(7);
    std::size_t invalid = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        // Bias toward strong same-sign curvature so both outcomes occur.
        std::vector<double> c(9);
        const double bias = uniform(rng, 0.0, 0.07);
        for (auto& v : c) v = std::clamp(bias + uniform(rng, -0.02, 0.02), -0.07, 0.07);
        const Road r = curvature_to_road(c);
        const bool ok = road_valid(r, c);
        EXPECT_EQ(ok, brute_valid(r)) << "trial " << trial;
        invalid += !ok;
    }
    EXPECT_GT(invalid, 50u);
    EXPECT_LT(invalid, 950u);
}

TEST(Roads, SegmentIntersectionCases) {
    EXPECT_TRUE(segments_intersect({0, 0}, {2, 2}, {0, 2}, {2, 0}));
    EXPECT_FALSE(segments_intersect({0, 0}, {1, 1}, {2, 2}, {3, 3}));
    EXPECT_TRUE(segments_intersect({0, 0}, {2, 2}, {1, 1}, {3, 3}));
    EXPECT_TRUE(segments_intersect({0, 0}, {2, 0}, {1, 0}, {1, 5}));
    EXPECT_FALSE(segments_intersect({0, 0}, {2, 0}, {1, 0.1}, {1, 5}));
}

TEST(PathFollow, StraightRoadIsFollowedExactly) {
    const PathFollowSut pf(5);
    const auto dist = pf.simulate(wogan::Test(5, 0.0)).at("dist").values;
    EXPECT_EQ(dist.size(), pf.steps() + 1);
    EXPECT_LE(max_abs(dist), 1e-9);
}

TEST(PathFollow, SharperRoadsDeviateMore) {
    const PathFollowSut pf(5);
    const double straight = max_abs(pf.simulate(wogan::Test(5, 0.0)).at("dist").values);
    const double curved = max_abs(pf.simulate(wogan::Test(5, 1.0)).at("dist").values);
    EXPECT_GT(curved, straight + 0.1);
    EXPECT_NEAR(pf.curvatures(wogan::Test(5, 1.0))[0], 0.07, 1e-15);
}
