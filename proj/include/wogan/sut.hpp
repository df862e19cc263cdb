#pragma once

// Systems under test: deterministic maps from normalized tests to traces.

#include "wogan/models.hpp"
#include "wogan/signal.hpp"
#include "wogan/stl.hpp"

#include <array>
#include <functional>
#include <memory>
#include <span>
#include <string>

namespace wogan {

enum class SimilarityKind { MaxNorm, Path };

class Sut {
public:
    virtual ~Sut() = default;

    virtual std::string name() const = 0;
    /// Number of normalized input coordinates.
    virtual std::size_t dimension() const = 0;
    /// Whether tests parametrize an input signal (selects the convolutional analyzer).
    virtual bool signal_input() const = 0;
    virtual const SignalRanges& output_ranges() const = 0;
    virtual std::string default_requirement() const = 0;

    virtual SimilarityKind similarity_kind() const { return SimilarityKind::MaxNorm; }
    virtual double default_similarity_bound() const { return 0.9; }

    /// Pure function of the test; coordinates in [-1,1].
    virtual Trace simulate(const Test& test) const = 0;

    virtual bool has_validity() const { return false; }
    virtual bool valid(const Test&) const { return true; }

    /// SUT parameters as given to make_sut.
    virtual nlohmann::json parameters() const { return nlohmann::json::object(); }
};

struct Execution {
    Trace trace;
    stl::Robustness robustness;
    /// Output samples found outside the declared ranges (0 for a well-behaved SUT).
    std::size_t range_violations = 0;
};

/// Simulates `test` and scores it against `requirement`. Throws DimensionError,
/// RangeError (coordinates outside [-1,1]), PreconditionError (invalid test)
/// and ExecutionError (non-finite trace).
Execution execute(const Sut& sut, const stl::Formula& requirement, const Test& test);

// ------------------------------------------------------------ oscillator

/// Damped oscillator x'' = -0.2 x' - x + u driven by a piecewise-constant force
/// of 6 pieces of 5 s with values in [-1, 1]; outputs x and xdot.
class OscillatorSut : public Sut {
public:
    static constexpr std::size_t kSegments = 6;
    static constexpr double kPieceDuration = 5.0;
    static constexpr double kDamping = 0.2;
    static constexpr double kStep = 0.01;
    static constexpr double kOutputBound = 6.0;
    static constexpr double kDefaultLimit = 3.0;

    explicit OscillatorSut(double limit = kDefaultLimit);

    std::string name() const override { return "oscillator"; }
    std::size_t dimension() const override { return kSegments; }
    bool signal_input() const override { return true; }
    const SignalRanges& output_ranges() const override { return ranges_; }
    std::string default_requirement() const override;
    double default_similarity_bound() const override { return 0.95; }
    Trace simulate(const Test& test) const override;
    nlohmann::json parameters() const override { return {{"limit", limit_}}; }

    PiecewiseSpec input_spec() const { return {kSegments, kPieceDuration, {-1.0, 1.0}}; }

private:
    double limit_;
    SignalRanges ranges_;
};

// ------------------------------------------------------------ multimodal

/// y(t) = g(x) on [0, 1] for x in [-1,1]^3 with g = b - sum of three Gaussian
/// bumps exp(-|x - c_i|² / 2s²). {g <= 0} is three disjoint, nearly round balls.
class MultimodalSut : public Sut {
public:
    static constexpr double kBumpWidth = 0.4;
    /// Volume fraction of {g <= 0}, from 10^7 Monte Carlo points.
    static constexpr double kFalsifyingFraction = 0.02006;

    MultimodalSut();

    std::string name() const override { return "multimodal"; }
    std::size_t dimension() const override { return 3; }
    bool signal_input() const override { return false; }
    const SignalRanges& output_ranges() const override { return ranges_; }
    std::string default_requirement() const override { return "always[0,1] (y > 0)"; }
    Trace simulate(const Test& test) const override;

    double objective(const Test& x) const;
    const std::array<std::array<double, 3>, 3>& centers() const noexcept { return centers_; }
    double ball_radius() const noexcept { return radius_; }
    double baseline() const noexcept { return baseline_; }
    double falsifying_fraction() const;

private:
    std::array<std::array<double, 3>, 3> centers_;
    double radius_;
    double baseline_;
    SignalRanges ranges_;
};

// ------------------------------------------------------------ roads

using Point = std::array<double, 2>;

struct Road {
    std::vector<Point> points;

    double length() const;
};

inline constexpr double kRoadStep = 15.0;
inline constexpr double kMaxCurvature = 0.07;
inline constexpr double kMaxTurn = 1.2;
inline constexpr Point kRoadStart{100.0, 10.0};

/// Control points from raw curvatures: start at (100, 10) facing +y; before
/// each 15-unit step the heading turns by c_i * 15 radians.
Road curvature_to_road(std::span<const double> curvatures);

/// Closed-segment intersection by exact orientation tests (touching counts).
bool segments_intersect(const Point& p1, const Point& p2, const Point& q1, const Point& q2);

/// Non-adjacent segments pairwise disjoint and every turn at most 1.2 rad.
bool road_valid(const Road& road, std::span<const double> curvatures);

/// Distance from p to the polyline.
double distance_to_road(const Road& road, const Point& p);

/// Point-mass follower on a road described by d curvatures.
class PathFollowSut : public Sut {
public:
    static constexpr double kSpeed = 5.0;        // units per second
    static constexpr double kStep = 0.1;         // seconds
    static constexpr double kMaxHeadingRate = 0.05;  // radians per step
    static constexpr double kLookahead = 10.0;
    static constexpr double kCoverage = 0.9;     // fraction of the road driven
    static constexpr double kDistanceBound = 20.0;
    static constexpr double kDefaultLimit = 3.5;

    explicit PathFollowSut(std::size_t segments, double limit = kDefaultLimit);

    std::string name() const override { return "pathfollow"; }
    std::size_t dimension() const override { return segments_; }
    bool signal_input() const override { return true; }
    const SignalRanges& output_ranges() const override { return ranges_; }
    std::string default_requirement() const override;
    SimilarityKind similarity_kind() const override { return SimilarityKind::Path; }
    Trace simulate(const Test& test) const override;
    bool has_validity() const override { return true; }
    bool valid(const Test& test) const override;
    nlohmann::json parameters() const override { return {{"segments", segments_}, {"limit", limit_}}; }

    std::vector<double> curvatures(const Test& test) const;
    std::size_t steps() const;
    double duration() const { return kStep * static_cast<double>(steps()); }

private:
    std::size_t segments_;
    double limit_;
    SignalRanges ranges_;
};

/// Builds a registered SUT ("oscillator", "multimodal", "pathfollow") from
/// its JSON parameters.
std::unique_ptr<Sut> make_sut(const std::string& name, const nlohmann::json& params = nlohmann::json::object());

using SutFactory = std::function<std::unique_ptr<Sut>(const nlohmann::json& params)>;

/// Adds (or replaces) a named SUT in the registry. Built-in names cannot be replaced.
void register_sut(const std::string& name, SutFactory factory);

}  // namespace wogan
