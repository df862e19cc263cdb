#include "wogan/sut.hpp"

#include "wogan/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>

namespace wogan {

namespace {

void check_test(const Sut& sut, const Test& test) {
    if (test.size() != sut.dimension()) {
        throw DimensionError(sut.name() + " expects " + std::to_string(sut.dimension()) + " coordinates, got " +
                             std::to_string(test.size()));
    }
    for (double v : test) {
        if (!(v >= -1.0 && v <= 1.0)) throw RangeError("test coordinate outside [-1, 1]");
    }
}

std::string number(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace

Execution execute(const Sut& sut, const stl::Formula& requirement, const Test& test) {
    check_test(sut, test);
    if (sut.has_validity() && !sut.valid(test)) throw PreconditionError("invalid test for " + sut.name());
    Execution e;
    e.trace = sut.simulate(test);
    for (const auto& s : e.trace.signals()) {
        for (double v : s.values) {
            if (!std::isfinite(v)) throw ExecutionError(sut.name() + ": simulation produced a non-finite sample");
        }
        const auto range = sut.output_ranges().find(s.name);
        if (range == sut.output_ranges().end()) continue;
        for (double v : s.values) e.range_violations += !range->second.contains(v);
    }
    e.robustness = stl::scaled_robustness(requirement, e.trace, sut.output_ranges());
    return e;
}

// ------------------------------------------------------------ oscillator

OscillatorSut::OscillatorSut(double limit) : limit_(limit) {
    if (!(limit > 0.0)) throw PreconditionError("oscillator limit must be positive");
    ranges_ = {{"x", {-kOutputBound, kOutputBound}}, {"xdot", {-kOutputBound, kOutputBound}}};
}

std::string OscillatorSut::default_requirement() const {
    return "always[0,30] (abs(x) < " + number(limit_) + ")";
}

Trace OscillatorSut::simulate(const Test& test) const {
    check_test(*this, test);
    const Signal u = build_signal(input_spec(), test, "u", kStep);
    const std::size_t n = u.size();
    Signal x{"x", 0.0, kStep, std::vector<double>(n)};
    Signal v{"xdot", 0.0, kStep, std::vector<double>(n)};
    double pos = 0.0, vel = 0.0;
    const double h = kStep;
    auto accel = [](double p, double q, double f) { return -kDamping * q - p + f; };
    for (std::size_t k = 0; k + 1 < n; ++k) {
        x.values[k] = pos;
        v.values[k] = vel;
        const double f = u.values[k];  // zero-order hold over [t_k, t_k+1)
        const double k1p = vel, k1v = accel(pos, vel, f);
        const double k2p = vel + 0.5 * h * k1v, k2v = accel(pos + 0.5 * h * k1p, vel + 0.5 * h * k1v, f);
        const double k3p = vel + 0.5 * h * k2v, k3v = accel(pos + 0.5 * h * k2p, vel + 0.5 * h * k2v, f);
        const double k4p = vel + h * k3v, k4v = accel(pos + h * k3p, vel + h * k3v, f);
        pos += h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
        vel += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    }
    x.values[n - 1] = pos;
    v.values[n - 1] = vel;
    return Trace({std::move(x), std::move(v)});
}

// ------------------------------------------------------------ multimodal

MultimodalSut::MultimodalSut()
    : centers_{{{-0.6, -0.6, -0.6}, {0.6, -0.6, 0.6}, {-0.6, 0.6, 0.6}}} {
    // Radius of three isolated balls filling 2% of the volume-8 box; the
    // tails of the other bumps shift the set only slightly.
    radius_ = std::cbrt(0.02 * 8.0 / (3.0 * 4.0 / 3.0 * std::numbers::pi));
    baseline_ = std::exp(-radius_ * radius_ / (2.0 * kBumpWidth * kBumpWidth));
    ranges_ = {{"y", {baseline_ - 1.1, baseline_}}};
}

double MultimodalSut::objective(const Test& x) const {
    double bumps = 0.0;
    for (const auto& c : centers_) {
        double d2 = 0.0;
        for (std::size_t i = 0; i < 3; ++i) d2 += (x[i] - c[i]) * (x[i] - c[i]);
        bumps += std::exp(-d2 / (2.0 * kBumpWidth * kBumpWidth));
    }
    return baseline_ - bumps;
}

double MultimodalSut::falsifying_fraction() const { return kFalsifyingFraction; }

Trace MultimodalSut::simulate(const Test& test) const {
    check_test(*this, test);
    const double y = objective(test);
    return Trace({Signal{"y", 0.0, kDefaultSampleStep, std::vector<double>(101, y)}});
}

// ------------------------------------------------------------ roads

double Road::length() const {
    double total = 0.0;
    for (std::size_t i = 1; i < points.size(); ++i) {
        total += std::hypot(points[i][0] - points[i - 1][0], points[i][1] - points[i - 1][1]);
    }
    return total;
}

Road curvature_to_road(std::span<const double> curvatures) {
    Road road;
    road.points.push_back(kRoadStart);
    double heading = std::numbers::pi / 2.0;
    for (double c : curvatures) {
        heading += c * kRoadStep;
        const Point& last = road.points.back();
        road.points.push_back({last[0] + kRoadStep * std::cos(heading), last[1] + kRoadStep * std::sin(heading)});
    }
    return road;
}

namespace {

double cross(const Point& o, const Point& a, const Point& b) {
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
}

int sign(double v) { return (v > 0.0) - (v < 0.0); }

bool on_segment(const Point& p, const Point& q, const Point& r) {
    return std::min(p[0], q[0]) <= r[0] && r[0] <= std::max(p[0], q[0]) && std::min(p[1], q[1]) <= r[1] &&
           r[1] <= std::max(p[1], q[1]);
}

}  // namespace

bool segments_intersect(const Point& p1, const Point& p2, const Point& q1, const Point& q2) {
    const int d1 = sign(cross(q1, q2, p1));
    const int d2 = sign(cross(q1, q2, p2));
    const int d3 = sign(cross(p1, p2, q1));
    const int d4 = sign(cross(p1, p2, q2));
    if (d1 * d2 < 0 && d3 * d4 < 0) return true;
    if (d1 == 0 && on_segment(q1, q2, p1)) return true;
    if (d2 == 0 && on_segment(q1, q2, p2)) return true;
    if (d3 == 0 && on_segment(p1, p2, q1)) return true;
    if (d4 == 0 && on_segment(p1, p2, q2)) return true;
    return false;
}

bool road_valid(const Road& road, std::span<const double> curvatures) {
    for (double c : curvatures) {
        if (std::abs(c * kRoadStep) > kMaxTurn) return false;
    }
    const std::size_t segs = road.points.size() < 2 ? 0 : road.points.size() - 1;
    for (std::size_t i = 0; i < segs; ++i) {
        for (std::size_t j = i + 2; j < segs; ++j) {
            if (segments_intersect(road.points[i], road.points[i + 1], road.points[j], road.points[j + 1])) return false;
        }
    }
    return true;
}

namespace {

struct Projection {
    double distance;
    double arc;  // arc length of the closest point
};

Projection project(const Road& road, const Point& p) {
    Projection best{std::numeric_limits<double>::infinity(), 0.0};
    double arc = 0.0;
    for (std::size_t i = 0; i + 1 < road.points.size(); ++i) {
        const Point& a = road.points[i];
        const Point& b = road.points[i + 1];
        const double dx = b[0] - a[0], dy = b[1] - a[1];
        const double len2 = dx * dx + dy * dy;
        const double len = std::sqrt(len2);
        const double t = std::clamp(((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2, 0.0, 1.0);
        const double d = std::hypot(p[0] - (a[0] + t * dx), p[1] - (a[1] + t * dy));
        if (d < best.distance) best = {d, arc + t * len};
        arc += len;
    }
    return best;
}

Point point_at(const Road& road, double arc) {
    for (std::size_t i = 0; i + 1 < road.points.size(); ++i) {
        const Point& a = road.points[i];
        const Point& b = road.points[i + 1];
        const double len = std::hypot(b[0] - a[0], b[1] - a[1]);
        if (arc <= len) {
            const double t = arc / len;
            return {a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])};
        }
        arc -= len;
    }
    return road.points.back();
}

}  // namespace

double distance_to_road(const Road& road, const Point& p) { return project(road, p).distance; }

PathFollowSut::PathFollowSut(std::size_t segments, double limit) : segments_(segments), limit_(limit) {
    if (segments != 5 && segments != 7 && segments != 9) throw PreconditionError("pathfollow supports 5, 7 or 9 segments");
    if (!(limit > 0.0)) throw PreconditionError("pathfollow limit must be positive");
    ranges_ = {{"dist", {0.0, kDistanceBound}}};
}

std::size_t PathFollowSut::steps() const {
    const double road = kRoadStep * static_cast<double>(segments_);
    return static_cast<std::size_t>(std::llround(kCoverage * road / (kSpeed * kStep)));
}

std::string PathFollowSut::default_requirement() const {
    return "always[0," + number(duration()) + "] (dist <= " + number(limit_) + ")";
}

std::vector<double> PathFollowSut::curvatures(const Test& test) const {
    std::vector<double> c(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) c[i] = denormalize(test[i], {-kMaxCurvature, kMaxCurvature});
    return c;
}

bool PathFollowSut::valid(const Test& test) const {
    const auto c = curvatures(test);
    return road_valid(curvature_to_road(c), c);
}

Trace PathFollowSut::simulate(const Test& test) const {
    check_test(*this, test);
    const Road road = curvature_to_road(curvatures(test));
    const double total = road.length();
    const std::size_t n = steps() + 1;
    Signal dist{"dist", 0.0, kStep, std::vector<double>(n)};
    Point pos = kRoadStart;
    double heading = std::numbers::pi / 2.0;
    for (std::size_t k = 0; k < n; ++k) {
        const Projection proj = project(road, pos);
        dist.values[k] = proj.distance;
        const Point target = point_at(road, std::min(proj.arc + kLookahead, total));
        const double desired = std::atan2(target[1] - pos[1], target[0] - pos[0]);
        const double turn = std::remainder(desired - heading, 2.0 * std::numbers::pi);
        heading += std::clamp(turn, -kMaxHeadingRate, kMaxHeadingRate);
        pos = {pos[0] + kSpeed * kStep * std::cos(heading), pos[1] + kSpeed * kStep * std::sin(heading)};
    }
    return Trace({std::move(dist)});
}

// ------------------------------------------------------------ registry

namespace {

std::mutex registry_mutex;

std::map<std::string, SutFactory>& registry() {
    static std::map<std::string, SutFactory> r;
    return r;
}

bool builtin(const std::string& name) { return name == "oscillator" || name == "multimodal" || name == "pathfollow"; }

}  // namespace

void register_sut(const std::string& name, SutFactory factory) {
    if (builtin(name)) throw PreconditionError("cannot replace built-in SUT " + name);
    std::lock_guard lock(registry_mutex);
    registry()[name] = std::move(factory);
}

std::unique_ptr<Sut> make_sut(const std::string& name, const nlohmann::json& given) {
    const nlohmann::json params = given.is_null() ? nlohmann::json::object() : given;
    if (!params.is_object()) throw SchemaError("SUT parameters must be an object");
    if (!builtin(name)) {
        SutFactory f;
        {
            std::lock_guard lock(registry_mutex);
            if (auto it = registry().find(name); it != registry().end()) f = it->second;
        }
        if (f) return f(params);
    }
    try {
        if (name == "oscillator") return std::make_unique<OscillatorSut>(params.value("limit", OscillatorSut::kDefaultLimit));
        if (name == "multimodal") return std::make_unique<MultimodalSut>();
        if (name == "pathfollow") {
            return std::make_unique<PathFollowSut>(params.value("segments", std::size_t{5}),
                                                   params.value("limit", PathFollowSut::kDefaultLimit));
        }
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError("bad parameters for SUT " + name + ": " + e.what());
    }
    throw SchemaError("unknown SUT " + name);
}

}  // namespace wogan
