#include "wogan/signal.hpp"

#include "wogan/error.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace wogan {

void Signal::validate() const {
    if (!(dt > 0.0)) throw PreconditionError("signal '" + name + "': dt must be positive");
    if (values.empty()) throw PreconditionError("signal '" + name + "': no samples");
    for (double v : values) {
        if (!std::isfinite(v)) throw NonFiniteError("signal '" + name + "': non-finite sample");
    }
}

Trace::Trace(std::vector<Signal> signals) {
    for (auto& s : signals) add(std::move(s));
}

void Trace::add(Signal s) {
    s.validate();
    if (find(s.name) != nullptr) throw SchemaError("duplicate signal '" + s.name + "'");
    if (!signals_.empty() && std::abs(signals_.front().dt - s.dt) > 1e-12 * s.dt) {
        throw SchemaError("signal '" + s.name + "' has a different sample period");
    }
    signals_.push_back(std::move(s));
}

const Signal* Trace::find(const std::string& name) const noexcept {
    auto it = std::find_if(signals_.begin(), signals_.end(), [&](const Signal& s) { return s.name == name; });
    return it == signals_.end() ? nullptr : &*it;
}

const Signal& Trace::at(const std::string& name) const {
    const Signal* s = find(name);
    if (s == nullptr) throw SchemaError("unknown signal '" + name + "'");
    return *s;
}

double Trace::dt() const {
    if (signals_.empty()) throw SchemaError("empty trace");
    return signals_.front().dt;
}

std::string Trace::to_csv() const {
    std::ostringstream out;
    out << std::setprecision(17);
    out << "time";
    std::size_t n = 0;
    for (const auto& s : signals_) {
        out << ',' << s.name;
        n = std::max(n, s.size());
    }
    out << '\n';
    for (std::size_t i = 0; i < n; ++i) {
        out << (signals_.empty() ? 0.0 : signals_.front().time_at(i));
        for (const auto& s : signals_) {
            out << ',';
            if (i < s.size()) out << s.values[i];
        }
        out << '\n';
    }
    return out.str();
}

void PiecewiseSpec::validate() const {
    if (segments < 1) throw PreconditionError("piecewise signal needs at least one segment");
    if (!(piece_duration > 0.0)) throw PreconditionError("piece duration must be positive");
    if (!(range.lo < range.hi)) throw PreconditionError("piecewise range must satisfy A < B");
}

double normalize(double x, const Interval& range) {
    if (!(range.lo < range.hi)) throw PreconditionError("normalize: range must satisfy A < B");
    if (!range.contains(x)) throw RangeError("normalize: value outside [A, B]");
    const double a = range.lo;
    const double b = range.hi;
    return (-2.0 * x + a + b) / (a - b);
}

double denormalize(double y, const Interval& range) {
    if (!(range.lo < range.hi)) throw PreconditionError("denormalize: range must satisfy A < B");
    if (!(y >= -1.0 && y <= 1.0)) throw RangeError("denormalize: value outside [-1, 1]");
    const double a = range.lo;
    const double b = range.hi;
    // Evaluated so that the endpoints map back exactly.
    return 0.5 * (a + b) + 0.5 * (b - a) * y;
}

Signal build_signal(const PiecewiseSpec& spec, std::span<const double> coords, std::string name, double dt) {
    spec.validate();
    if (!(dt > 0.0)) throw PreconditionError("build_signal: dt must be positive");
    if (coords.size() != spec.segments) {
        throw DimensionError("build_signal: expected " + std::to_string(spec.segments) + " coordinates, got " +
                             std::to_string(coords.size()));
    }
    std::vector<double> levels(coords.size());
    std::transform(coords.begin(), coords.end(), levels.begin(), [&](double c) { return denormalize(c, spec.range); });

    const auto samples = static_cast<std::size_t>(std::llround(spec.duration() / dt)) + 1;
    Signal s{std::move(name), 0.0, dt, std::vector<double>(samples)};
    const double per_piece = spec.piece_duration / dt;
    for (std::size_t k = 0; k < samples; ++k) {
        // Tolerance absorbs k * dt rounding so boundaries go to the later piece.
        auto seg = static_cast<std::size_t>(std::floor(static_cast<double>(k) / per_piece + 1e-9));
        s.values[k] = levels[std::min(seg, spec.segments - 1)];
    }
    return s;
}

}  // namespace wogan
