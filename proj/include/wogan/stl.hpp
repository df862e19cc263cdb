#pragma once

// Signal temporal logic with bounded future-time operators evaluated on
// uniformly sampled traces.
//
// Concrete syntax:
//   formula := implication
//   implication := disjunction [ '->' implication ]
//   disjunction := conjunction { 'or' conjunction }
//   conjunction := unary { 'and' unary }
//   unary := 'not' unary | 'always' '[' a ',' b ']' unary
//          | 'eventually' '[' a ',' b ']' unary | '(' formula ')' | predicate
//   predicate := expr ('<' | '<=' | '>' | '>=') number
//   expr := term [ '-' term ]
//   term := 'abs' '(' expr ')' | number '*' signal | signal

#include "wogan/signal.hpp"

#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace wogan::stl {

enum class Comparison { Less, LessEqual, Greater, GreaterEqual };

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct SignalRef {
    std::string name;
};
struct Scaled {
    double coefficient;
    std::string name;
};
struct Difference {
    ExprPtr lhs;
    ExprPtr rhs;
};
struct Absolute {
    ExprPtr inner;
};

/// Real-valued term over signal values at one time instant.
struct Expr {
    std::variant<SignalRef, Scaled, Difference, Absolute> node;
};

ExprPtr signal(std::string name);
ExprPtr scaled(double coefficient, std::string name);
ExprPtr difference(ExprPtr lhs, ExprPtr rhs);
ExprPtr absolute(ExprPtr inner);

class Formula;

struct Predicate {
    ExprPtr expr;
    Comparison op;
    double bound;
};
struct Not {
    std::shared_ptr<const Formula> child;
};
struct And {
    std::shared_ptr<const Formula> lhs, rhs;
};
struct Or {
    std::shared_ptr<const Formula> lhs, rhs;
};
struct Implies {
    std::shared_ptr<const Formula> lhs, rhs;
};
struct Globally {
    double a, b;
    std::shared_ptr<const Formula> child;
};
struct Eventually {
    double a, b;
    std::shared_ptr<const Formula> child;
};

/// Immutable STL abstract syntax tree; cheap to copy.
class Formula {
public:
    using Node = std::variant<Predicate, Not, And, Or, Implies, Globally, Eventually>;

    explicit Formula(Node node);

    const Node& node() const noexcept { return node_; }

    /// Canonical text that parses back to an equal tree.
    std::string to_string() const;

private:
    Node node_;
};

Formula predicate(ExprPtr expr, Comparison op, double bound);
Formula negation(const Formula& f);
Formula conjunction(const Formula& lhs, const Formula& rhs);
Formula disjunction(const Formula& lhs, const Formula& rhs);
Formula implication(const Formula& lhs, const Formula& rhs);
Formula always(double a, double b, const Formula& f);
Formula eventually(double a, double b, const Formula& f);

Formula parse(std::string_view text);

std::set<std::string> signal_names(const Formula& f);

/// Longest time span (seconds) past the evaluation time that the formula reads.
double horizon(const Formula& f);

/// Quantitative robustness at time t. Temporal bounds snap to the nearest sample.
double robustness(const Formula& f, const Trace& trace, double t = 0.0);

/// Robustness at every sample index for which the formula's horizon fits in the trace.
std::vector<double> robustness_signal(const Formula& f, const Trace& trace);

/// Interval containing the robustness of every trace whose signals respect `ranges`.
Interval robustness_interval(const Formula& f, const SignalRanges& ranges);

/// Upper endpoint of robustness_interval, or 1 when that endpoint is not positive.
double effective_range_bound(const Formula& f, const SignalRanges& ranges);

/// 0 when rho <= 0, otherwise rho / bound capped at 1.
double scale_robustness(double rho, double bound);

struct Robustness {
    double raw = 0.0;     ///< unscaled robustness; 0 is reported as falsified
    double scaled = 0.0;  ///< in [0, 1]

    bool falsified() const noexcept { return scaled == 0.0; }
};

Robustness scaled_robustness(const Formula& f, const Trace& trace, const SignalRanges& ranges, double t = 0.0);

}  // namespace wogan::stl
