#include "wogan/stl.hpp"

#include "wogan/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <deque>
#include <limits>
#include <optional>

namespace wogan::stl {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::shared_ptr<const Formula> share(const Formula& f) { return std::make_shared<const Formula>(f); }

std::string number_text(double x) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

const char* comparison_text(Comparison op) {
    switch (op) {
        case Comparison::Less: return "<";
        case Comparison::LessEqual: return "<=";
        case Comparison::Greater: return ">";
        case Comparison::GreaterEqual: return ">=";
    }
    return "?";
}

std::string expr_text(const Expr& e) {
    return std::visit(overloaded{
                          [](const SignalRef& s) { return s.name; },
                          [](const Scaled& s) { return number_text(s.coefficient) + " * " + s.name; },
                          [](const Difference& d) { return expr_text(*d.lhs) + " - " + expr_text(*d.rhs); },
                          [](const Absolute& a) { return "abs(" + expr_text(*a.inner) + ")"; },
                      },
                      e.node);
}

void check_bounds(double a, double b) {
    if (!(a >= 0.0) || !(a <= b) || !std::isfinite(b)) {
        throw PreconditionError("temporal bounds must satisfy 0 <= a <= b < inf");
    }
}

// ---------------------------------------------------------------- parser

enum class Tok { Ident, Number, LBrack, RBrack, Comma, LParen, RParen, Lt, Le, Gt, Ge, Minus, Star, Arrow, End };

struct Token {
    Tok kind;
    std::string_view text;
    std::size_t offset;
};

class Lexer {
public:
    explicit Lexer(std::string_view s) : src_(s) {}

    std::vector<Token> run() {
        std::vector<Token> out;
        while (true) {
            skip_space();
            const std::size_t start = pos_;
            if (pos_ >= src_.size()) {
                out.push_back({Tok::End, {}, pos_});
                return out;
            }
            const char c = src_[pos_];
            if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
                while (pos_ < src_.size() &&
                       (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
                    ++pos_;
                }
                out.push_back({Tok::Ident, src_.substr(start, pos_ - start), start});
            } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
                lex_number();
                out.push_back({Tok::Number, src_.substr(start, pos_ - start), start});
            } else {
                ++pos_;
                Tok kind;
                switch (c) {
                    case '[': kind = Tok::LBrack; break;
                    case ']': kind = Tok::RBrack; break;
                    case ',': kind = Tok::Comma; break;
                    case '(': kind = Tok::LParen; break;
                    case ')': kind = Tok::RParen; break;
                    case '*': kind = Tok::Star; break;
                    case '<':
                        kind = Tok::Lt;
                        if (pos_ < src_.size() && src_[pos_] == '=') {
                            ++pos_;
                            kind = Tok::Le;
                        }
                        break;
                    case '>':
                        kind = Tok::Gt;
                        if (pos_ < src_.size() && src_[pos_] == '=') {
                            ++pos_;
                            kind = Tok::Ge;
                        }
                        break;
                    case '-':
                        kind = Tok::Minus;
                        if (pos_ < src_.size() && src_[pos_] == '>') {
                            ++pos_;
                            kind = Tok::Arrow;
                        }
                        break;
                    default: throw ParseError(start, std::string("unexpected character '") + c + "'");
                }
                out.push_back({kind, src_.substr(start, pos_ - start), start});
            }
        }
    }

private:
    void skip_space() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }

    void lex_number() {
        auto digits = [&] {
            while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
        };
        digits();
        if (pos_ < src_.size() && src_[pos_] == '.') {
            ++pos_;
            digits();
        }
        if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
            std::size_t save = pos_++;
            if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
            if (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
                digits();
            } else {
                pos_ = save;
            }
        }
    }

    std::string_view src_;
    std::size_t pos_ = 0;
};

class Parser {
public:
    explicit Parser(std::string_view text) : tokens_(Lexer(text).run()) {}

    Formula parse_all() {
        Formula f = parse_implication();
        if (peek().kind != Tok::End) fail(peek(), "unexpected trailing input");
        return f;
    }

private:
    const Token& peek() const { return tokens_[pos_]; }
    const Token& next() { return tokens_[pos_ < tokens_.size() - 1 ? pos_++ : pos_]; }

    bool is_keyword(const Token& t, std::string_view kw) const { return t.kind == Tok::Ident && t.text == kw; }

    [[noreturn]] void fail(const Token& at, const std::string& what) const {
        // Running out of input inside parentheses is reported at the unclosed parenthesis.
        if (at.kind == Tok::End && !open_parens_.empty()) throw ParseError(open_parens_.back(), "unclosed '('");
        throw ParseError(at.offset, what);
    }

    const Token& expect(Tok kind, const char* what) {
        if (peek().kind != kind) fail(peek(), std::string("expected ") + what);
        return next();
    }

    double parse_number() {
        bool negative = false;
        if (peek().kind == Tok::Minus) {
            next();
            negative = true;
        }
        const Token& t = expect(Tok::Number, "number");
        double value = 0.0;
        auto res = std::from_chars(t.text.data(), t.text.data() + t.text.size(), value);
        if (res.ec != std::errc() || res.ptr != t.text.data() + t.text.size()) fail(t, "malformed number");
        return negative ? -value : value;
    }

    Formula parse_implication() {
        Formula lhs = parse_disjunction();
        if (peek().kind == Tok::Arrow) {
            next();
            return implication(lhs, parse_implication());
        }
        return lhs;
    }

    Formula parse_disjunction() {
        Formula lhs = parse_conjunction();
        while (is_keyword(peek(), "or")) {
            next();
            lhs = disjunction(lhs, parse_conjunction());
        }
        return lhs;
    }

    Formula parse_conjunction() {
        Formula lhs = parse_unary();
        while (is_keyword(peek(), "and")) {
            next();
            lhs = conjunction(lhs, parse_unary());
        }
        return lhs;
    }

    Formula parse_unary() {
        const Token& t = peek();
        if (is_keyword(t, "not")) {
            next();
            return negation(parse_unary());
        }
        if (is_keyword(t, "always") || is_keyword(t, "eventually")) {
            const bool is_always = t.text == "always";
            next();
            expect(Tok::LBrack, "'[' with explicit time bounds");
            const Token& at = peek();
            const double a = parse_number();
            expect(Tok::Comma, "','");
            const double b = parse_number();
            expect(Tok::RBrack, "']'");
            if (!(a >= 0.0 && a <= b)) fail(at, "time bounds must satisfy 0 <= a <= b");
            Formula child = parse_unary();
            return is_always ? always(a, b, child) : eventually(a, b, child);
        }
        if (t.kind == Tok::LParen) {
            open_parens_.push_back(t.offset);
            next();
            Formula inner = parse_implication();
            expect(Tok::RParen, "')'");
            open_parens_.pop_back();
            return inner;
        }
        return parse_predicate();
    }

    Formula parse_predicate() {
        ExprPtr e = parse_expr();
        const Token& t = peek();
        Comparison op;
        switch (t.kind) {
            case Tok::Lt: op = Comparison::Less; break;
            case Tok::Le: op = Comparison::LessEqual; break;
            case Tok::Gt: op = Comparison::Greater; break;
            case Tok::Ge: op = Comparison::GreaterEqual; break;
            default: fail(t, "expected comparison operator");
        }
        next();
        return predicate(std::move(e), op, parse_number());
    }

    ExprPtr parse_expr() {
        ExprPtr lhs = parse_term();
        if (peek().kind == Tok::Minus) {
            next();
            return difference(std::move(lhs), parse_term());
        }
        return lhs;
    }

    ExprPtr parse_term() {
        const Token& t = peek();
        if (is_keyword(t, "abs")) {
            next();
            const Token& open = expect(Tok::LParen, "'('");
            open_parens_.push_back(open.offset);
            ExprPtr inner = parse_expr();
            expect(Tok::RParen, "')'");
            open_parens_.pop_back();
            return absolute(std::move(inner));
        }
        if (t.kind == Tok::Number || t.kind == Tok::Minus) {
            const double c = parse_number();
            expect(Tok::Star, "'*'");
            return scaled(c, std::string(parse_signal_name()));
        }
        return signal(std::string(parse_signal_name()));
    }

    std::string_view parse_signal_name() {
        const Token& t = peek();
        static constexpr std::string_view reserved[] = {"always", "eventually", "not", "and", "or", "abs"};
        if (t.kind != Tok::Ident || std::find(std::begin(reserved), std::end(reserved), t.text) != std::end(reserved)) {
            fail(t, "expected signal name");
        }
        return next().text;
    }

    std::vector<Token> tokens_;
    std::size_t pos_ = 0;
    std::vector<std::size_t> open_parens_;
};

// ------------------------------------------------------------ evaluation

struct Series {
    const Trace& trace;

    std::vector<double> expr(const Expr& e) const {
        return std::visit(overloaded{
                              [&](const SignalRef& s) { return trace.at(s.name).values; },
                              [&](const Scaled& s) {
                                  auto v = trace.at(s.name).values;
                                  for (auto& x : v) x *= s.coefficient;
                                  return v;
                              },
                              [&](const Difference& d) {
                                  auto a = expr(*d.lhs);
                                  auto b = expr(*d.rhs);
                                  a.resize(std::min(a.size(), b.size()));
                                  for (std::size_t i = 0; i < a.size(); ++i) a[i] -= b[i];
                                  return a;
                              },
                              [&](const Absolute& a) {
                                  auto v = expr(*a.inner);
                                  for (auto& x : v) x = std::abs(x);
                                  return v;
                              },
                          },
                          e.node);
    }

    std::vector<double> formula(const Formula& f) const {
        return std::visit(overloaded{
                              [&](const Predicate& p) {
                                  auto v = expr(*p.expr);
                                  const bool upper = p.op == Comparison::Less || p.op == Comparison::LessEqual;
                                  for (auto& x : v) x = upper ? p.bound - x : x - p.bound;
                                  return v;
                              },
                              [&](const Not& n) {
                                  auto v = formula(*n.child);
                                  for (auto& x : v) x = -x;
                                  return v;
                              },
                              [&](const And& a) { return combine(formula(*a.lhs), formula(*a.rhs), true); },
                              [&](const Or& o) { return combine(formula(*o.lhs), formula(*o.rhs), false); },
                              [&](const Implies& i) {
                                  auto lhs = formula(*i.lhs);
                                  for (auto& x : lhs) x = -x;
                                  return combine(std::move(lhs), formula(*i.rhs), false);
                              },
                              [&](const Globally& g) { return window(formula(*g.child), g.a, g.b, true); },
                              [&](const Eventually& e) { return window(formula(*e.child), e.a, e.b, false); },
                          },
                          f.node());
    }

    static std::vector<double> combine(std::vector<double> a, const std::vector<double>& b, bool take_min) {
        a.resize(std::min(a.size(), b.size()));
        for (std::size_t i = 0; i < a.size(); ++i) a[i] = take_min ? std::min(a[i], b[i]) : std::max(a[i], b[i]);
        return a;
    }

    std::size_t snap(double seconds) const {
        return static_cast<std::size_t>(std::llround(seconds / trace.dt()));
    }

    // Sliding-window extreme over [i + a, i + b] with a monotone deque.
    std::vector<double> window(const std::vector<double>& x, double a, double b, bool take_min) const {
        const std::size_t ia = snap(a);
        const std::size_t ib = snap(b);
        if (ib >= x.size()) return {};
        const std::size_t len = x.size() - ib;
        std::vector<double> out(len);
        std::deque<std::size_t> dq;
        auto worse = [&](double incumbent, double candidate) {
            return take_min ? candidate <= incumbent : candidate >= incumbent;
        };
        std::size_t next = ia;
        for (std::size_t i = 0; i < len; ++i) {
            for (; next <= i + ib; ++next) {
                while (!dq.empty() && worse(x[dq.back()], x[next])) dq.pop_back();
                dq.push_back(next);
            }
            while (dq.front() < i + ia) dq.pop_front();
            out[i] = x[dq.front()];
        }
        return out;
    }
};

void collect_names(const Expr& e, std::set<std::string>& out) {
    std::visit(overloaded{
                   [&](const SignalRef& s) { out.insert(s.name); },
                   [&](const Scaled& s) { out.insert(s.name); },
                   [&](const Difference& d) {
                       collect_names(*d.lhs, out);
                       collect_names(*d.rhs, out);
                   },
                   [&](const Absolute& a) { collect_names(*a.inner, out); },
               },
               e.node);
}

const Interval& range_of(const SignalRanges& ranges, const std::string& name) {
    auto it = ranges.find(name);
    if (it == ranges.end()) throw SchemaError("no range declared for signal '" + name + "'");
    return it->second;
}

Interval expr_interval(const Expr& e, const SignalRanges& ranges) {
    return std::visit(overloaded{
                          [&](const SignalRef& s) { return range_of(ranges, s.name); },
                          [&](const Scaled& s) {
                              const Interval& r = range_of(ranges, s.name);
                              const double p = s.coefficient * r.lo;
                              const double q = s.coefficient * r.hi;
                              return Interval{std::min(p, q), std::max(p, q)};
                          },
                          [&](const Difference& d) {
                              const Interval a = expr_interval(*d.lhs, ranges);
                              const Interval b = expr_interval(*d.rhs, ranges);
                              return Interval{a.lo - b.hi, a.hi - b.lo};
                          },
                          [&](const Absolute& a) {
                              const Interval r = expr_interval(*a.inner, ranges);
                              if (r.lo >= 0.0) return r;
                              if (r.hi <= 0.0) return Interval{-r.hi, -r.lo};
                              return Interval{0.0, std::max(-r.lo, r.hi)};
                          },
                      },
                      e.node);
}

}  // namespace

// ---------------------------------------------------------------- builders

ExprPtr signal(std::string name) { return std::make_shared<const Expr>(Expr{SignalRef{std::move(name)}}); }
ExprPtr scaled(double c, std::string name) { return std::make_shared<const Expr>(Expr{Scaled{c, std::move(name)}}); }
ExprPtr difference(ExprPtr lhs, ExprPtr rhs) {
    return std::make_shared<const Expr>(Expr{Difference{std::move(lhs), std::move(rhs)}});
}
ExprPtr absolute(ExprPtr inner) { return std::make_shared<const Expr>(Expr{Absolute{std::move(inner)}}); }

Formula::Formula(Node node) : node_(std::move(node)) {}

Formula predicate(ExprPtr expr, Comparison op, double bound) {
    if (!std::isfinite(bound)) throw PreconditionError("predicate bound must be finite");
    return Formula(Predicate{std::move(expr), op, bound});
}
Formula negation(const Formula& f) { return Formula(Not{share(f)}); }
Formula conjunction(const Formula& l, const Formula& r) { return Formula(And{share(l), share(r)}); }
Formula disjunction(const Formula& l, const Formula& r) { return Formula(Or{share(l), share(r)}); }
Formula implication(const Formula& l, const Formula& r) { return Formula(Implies{share(l), share(r)}); }
Formula always(double a, double b, const Formula& f) {
    check_bounds(a, b);
    return Formula(Globally{a, b, share(f)});
}
Formula eventually(double a, double b, const Formula& f) {
    check_bounds(a, b);
    return Formula(Eventually{a, b, share(f)});
}

std::string Formula::to_string() const {
    auto bounds = [](double a, double b) { return "[" + number_text(a) + "," + number_text(b) + "] "; };
    return std::visit(
        overloaded{
            [](const Predicate& p) {
                return "(" + expr_text(*p.expr) + " " + comparison_text(p.op) + " " + number_text(p.bound) + ")";
            },
            [](const Not& n) { return "not " + n.child->to_string(); },
            [](const And& a) { return "(" + a.lhs->to_string() + " and " + a.rhs->to_string() + ")"; },
            [](const Or& o) { return "(" + o.lhs->to_string() + " or " + o.rhs->to_string() + ")"; },
            [](const Implies& i) { return "(" + i.lhs->to_string() + " -> " + i.rhs->to_string() + ")"; },
            [&](const Globally& g) { return "always" + bounds(g.a, g.b) + g.child->to_string(); },
            [&](const Eventually& e) { return "eventually" + bounds(e.a, e.b) + e.child->to_string(); },
        },
        node_);
}

Formula parse(std::string_view text) { return Parser(text).parse_all(); }

std::set<std::string> signal_names(const Formula& f) {
    std::set<std::string> out;
    std::visit(overloaded{
                   [&](const Predicate& p) { collect_names(*p.expr, out); },
                   [&](const Not& n) { out.merge(signal_names(*n.child)); },
                   [&](const And& a) {
                       out.merge(signal_names(*a.lhs));
                       out.merge(signal_names(*a.rhs));
                   },
                   [&](const Or& o) {
                       out.merge(signal_names(*o.lhs));
                       out.merge(signal_names(*o.rhs));
                   },
                   [&](const Implies& i) {
                       out.merge(signal_names(*i.lhs));
                       out.merge(signal_names(*i.rhs));
                   },
                   [&](const Globally& g) { out.merge(signal_names(*g.child)); },
                   [&](const Eventually& e) { out.merge(signal_names(*e.child)); },
               },
               f.node());
    return out;
}

double horizon(const Formula& f) {
    return std::visit(overloaded{
                          [](const Predicate&) { return 0.0; },
                          [](const Not& n) { return horizon(*n.child); },
                          [](const And& a) { return std::max(horizon(*a.lhs), horizon(*a.rhs)); },
                          [](const Or& o) { return std::max(horizon(*o.lhs), horizon(*o.rhs)); },
                          [](const Implies& i) { return std::max(horizon(*i.lhs), horizon(*i.rhs)); },
                          [](const Globally& g) { return g.b + horizon(*g.child); },
                          [](const Eventually& e) { return e.b + horizon(*e.child); },
                      },
                      f.node());
}

std::vector<double> robustness_signal(const Formula& f, const Trace& trace) {
    for (const auto& name : signal_names(f)) trace.at(name);
    return Series{trace}.formula(f);
}

double robustness(const Formula& f, const Trace& trace, double t) {
    const auto rho = robustness_signal(f, trace);
    const double t0 = trace.signals().front().t0;
    const double pos = (t - t0) / trace.dt();
    if (pos < -1e-9) throw InsufficientTraceError("evaluation time precedes the trace");
    const auto index = static_cast<std::size_t>(std::llround(std::max(pos, 0.0)));
    if (index >= rho.size()) throw InsufficientTraceError("trace is shorter than the formula horizon");
    return rho[index];
}

Interval robustness_interval(const Formula& f, const SignalRanges& ranges) {
    return std::visit(overloaded{
                          [&](const Predicate& p) {
                              const Interval e = expr_interval(*p.expr, ranges);
                              const bool upper = p.op == Comparison::Less || p.op == Comparison::LessEqual;
                              return upper ? Interval{p.bound - e.hi, p.bound - e.lo}
                                           : Interval{e.lo - p.bound, e.hi - p.bound};
                          },
                          [&](const Not& n) {
                              const Interval c = robustness_interval(*n.child, ranges);
                              return Interval{-c.hi, -c.lo};
                          },
                          [&](const And& a) {
                              const Interval l = robustness_interval(*a.lhs, ranges);
                              const Interval r = robustness_interval(*a.rhs, ranges);
                              return Interval{std::min(l.lo, r.lo), std::min(l.hi, r.hi)};
                          },
                          [&](const Or& o) {
                              const Interval l = robustness_interval(*o.lhs, ranges);
                              const Interval r = robustness_interval(*o.rhs, ranges);
                              return Interval{std::max(l.lo, r.lo), std::max(l.hi, r.hi)};
                          },
                          [&](const Implies& i) {
                              const Interval l = robustness_interval(*i.lhs, ranges);
                              const Interval r = robustness_interval(*i.rhs, ranges);
                              return Interval{std::max(-l.hi, r.lo), std::max(-l.lo, r.hi)};
                          },
                          [&](const Globally& g) { return robustness_interval(*g.child, ranges); },
                          [&](const Eventually& e) { return robustness_interval(*e.child, ranges); },
                      },
                      f.node());
}

double effective_range_bound(const Formula& f, const SignalRanges& ranges) {
    const double upper = robustness_interval(f, ranges).hi;
    return upper > 0.0 ? upper : 1.0;
}

double scale_robustness(double rho, double bound) {
    if (!(bound > 0.0)) throw PreconditionError("robustness bound must be positive");
    if (std::isnan(rho)) throw NonFiniteError("robustness is NaN");
    if (rho <= 0.0) return 0.0;
    return std::min(rho / bound, 1.0);
}

Robustness scaled_robustness(const Formula& f, const Trace& trace, const SignalRanges& ranges, double t) {
    const double raw = robustness(f, trace, t);
    return {raw, scale_robustness(raw, effective_range_bound(f, ranges))};
}

}  // namespace wogan::stl
