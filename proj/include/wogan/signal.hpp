#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace wogan {

/// Closed interval [lo, hi].
struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    bool contains(double x) const noexcept { return lo <= x && x <= hi; }
    bool operator==(const Interval&) const = default;
};

/// Uniformly sampled real signal starting at t0.
struct Signal {
    std::string name;
    double t0 = 0.0;
    double dt = 0.01;
    std::vector<double> values;

    std::size_t size() const noexcept { return values.size(); }
    double time_at(std::size_t i) const noexcept { return t0 + dt * static_cast<double>(i); }
    double duration() const noexcept { return dt * static_cast<double>(values.empty() ? 0 : values.size() - 1); }

    /// Throws if dt <= 0, values is empty, or a sample is not finite.
    void validate() const;
};

/// Set of signals produced by one SUT execution. All signals share dt.
class Trace {
public:
    Trace() = default;
    explicit Trace(std::vector<Signal> signals);

    void add(Signal s);
    const Signal& at(const std::string& name) const;
    const Signal* find(const std::string& name) const noexcept;
    const std::vector<Signal>& signals() const noexcept { return signals_; }
    bool empty() const noexcept { return signals_.empty(); }

    /// Common sample period; throws SchemaError when the trace is empty.
    double dt() const;

    /// CSV with a `time` column followed by one column per signal.
    std::string to_csv() const;

private:
    std::vector<Signal> signals_;
};

/// Ranges of attainable values, keyed by signal name.
using SignalRanges = std::map<std::string, Interval>;

/// Piecewise-constant signal of `segments` equal pieces taking values in `range`.
struct PiecewiseSpec {
    std::size_t segments = 1;
    double piece_duration = 1.0;
    Interval range{0.0, 1.0};

    double duration() const noexcept { return piece_duration * static_cast<double>(segments); }
    void validate() const;
};

inline constexpr double kDefaultSampleStep = 0.01;

/// Maps x in [A, B] to (-2x + A + B) / (A - B) in [-1, 1].
double normalize(double x, const Interval& range);

/// Inverse of normalize; y must lie in [-1, 1].
double denormalize(double y, const Interval& range);

/// Samples the piecewise-constant signal described by normalized `coords`.
/// A sample exactly on a segment boundary belongs to the later segment.
Signal build_signal(const PiecewiseSpec& spec, std::span<const double> coords, std::string name = "u",
                    double dt = kDefaultSampleStep);

}  // namespace wogan
