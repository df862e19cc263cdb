#pragma once

// Test-only oracles for the STL module: a direct boolean evaluator that
// quantifies over the sample grid, plus random formula and trace generators.

#include "wogan/rng.hpp"
#include "wogan/signal.hpp"
#include "wogan/stl.hpp"

#include <cmath>
#include <stdexcept>
#include <variant>

namespace wogan::oracle {

inline double expr_at(const stl::Expr& e, const Trace& tr, std::size_t i) {
    if (auto* s = std::get_if<stl::SignalRef>(&e.node)) return tr.at(s->name).values.at(i);
    if (auto* s = std::get_if<stl::Scaled>(&e.node)) return s->coefficient * tr.at(s->name).values.at(i);
    if (auto* d = std::get_if<stl::Difference>(&e.node)) return expr_at(*d->lhs, tr, i) - expr_at(*d->rhs, tr, i);
    if (auto* a = std::get_if<stl::Absolute>(&e.node)) return std::fabs(expr_at(*a->inner, tr, i));
    throw std::logic_error("unknown expression node");
}

/// Boolean satisfaction at sample index i, by exhaustive quantification.
inline bool satisfies(const stl::Formula& f, const Trace& tr, std::size_t i) {
    const double dt = tr.dt();
    const auto& n = f.node();
    if (auto* p = std::get_if<stl::Predicate>(&n)) {
        const double v = expr_at(*p->expr, tr, i);
        switch (p->op) {
            case stl::Comparison::Less: return v < p->bound;
            case stl::Comparison::LessEqual: return v <= p->bound;
            case stl::Comparison::Greater: return v > p->bound;
            case stl::Comparison::GreaterEqual: return v >= p->bound;
        }
    }
    if (auto* x = std::get_if<stl::Not>(&n)) return !satisfies(*x->child, tr, i);
    if (auto* x = std::get_if<stl::And>(&n)) return satisfies(*x->lhs, tr, i) && satisfies(*x->rhs, tr, i);
    if (auto* x = std::get_if<stl::Or>(&n)) return satisfies(*x->lhs, tr, i) || satisfies(*x->rhs, tr, i);
    if (auto* x = std::get_if<stl::Implies>(&n)) return !satisfies(*x->lhs, tr, i) || satisfies(*x->rhs, tr, i);
    if (auto* g = std::get_if<stl::Globally>(&n)) {
        const auto lo = static_cast<std::size_t>(std::llround(g->a / dt));
        const auto hi = static_cast<std::size_t>(std::llround(g->b / dt));
        for (std::size_t j = i + lo; j <= i + hi; ++j) {
            if (!satisfies(*g->child, tr, j)) return false;
        }
        return true;
    }
    if (auto* e = std::get_if<stl::Eventually>(&n)) {
        const auto lo = static_cast<std::size_t>(std::llround(e->a / dt));
        const auto hi = static_cast<std::size_t>(std::llround(e->b / dt));
        for (std::size_t j = i + lo; j <= i + hi; ++j) {
            if (satisfies(*e->child, tr, j)) return true;
        }
        return false;
    }
    throw std::logic_error("unknown formula node");
}

/// Random formula over signals "a" and "b" with values in [-1, 1].
/// `budget` is the remaining temporal horizon in seconds.
inline stl::Formula random_formula(Rng& rng, int depth, double budget, double dt) {
    const std::size_t kind = depth <= 1 ? 0 : uniform_index(rng, 7);
    if (kind == 0) {
        stl::ExprPtr e;
        switch (uniform_index(rng, 4)) {
            case 0: e = stl::signal(uniform_index(rng, 2) ? "a" : "b"); break;
            case 1: e = stl::scaled(uniform(rng, -2.0, 2.0), uniform_index(rng, 2) ? "a" : "b"); break;
            case 2: e = stl::difference(stl::signal("a"), stl::signal("b")); break;
            default: e = stl::absolute(stl::signal(uniform_index(rng, 2) ? "a" : "b")); break;
        }
        const auto op = static_cast<stl::Comparison>(uniform_index(rng, 4));
        return stl::predicate(e, op, uniform(rng, -1.0, 1.0));
    }
    auto sub = [&](double b) { return random_formula(rng, depth - 1, b, dt); };
    switch (kind) {
        case 1: return stl::negation(sub(budget));
        case 2: return stl::conjunction(sub(budget), sub(budget));
        case 3: return stl::disjunction(sub(budget), sub(budget));
        case 4: return stl::implication(sub(budget), sub(budget));
        default: {
            const auto steps = static_cast<std::size_t>(std::floor(budget / dt + 1e-9));
            const std::size_t hi = uniform_index(rng, std::min<std::size_t>(steps, 8) + 1);
            const std::size_t lo = uniform_index(rng, hi + 1);
            const double a = static_cast<double>(lo) * dt;
            const double b = static_cast<double>(hi) * dt;
            auto child = sub(budget - b);
            return kind == 5 ? stl::always(a, b, child) : stl::eventually(a, b, child);
        }
    }
}

/// Random piecewise-constant two-signal trace with values in [-1, 1].
inline Trace random_trace(Rng& rng, double duration, double dt) {
    Trace tr;
    for (const char* name : {"a", "b"}) {
        const std::size_t segments = 2 + uniform_index(rng, 8);
        PiecewiseSpec spec{segments, duration / static_cast<double>(segments), {-1.0, 1.0}};
        tr.add(build_signal(spec, uniform_box(rng, segments), name, dt));
    }
    return tr;
}

}  // namespace wogan::oracle
