#include "wogan/nn/autodiff.hpp"

#include "wogan/error.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <functional>
#include <unordered_map>

namespace wogan::nn {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

void require_same_shape(const Var& a, const Var& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
    }
}

void require_row(const Var& a, const Var& row, const char* op) {
    if (row.value().rows() != 1 || row.value().cols() != a.value().cols()) {
        throw ShapeError(std::string(op) + ": expected row of width " + std::to_string(a.value().cols()) + ", got " +
                         shape_string(row.shape()));
    }
}

template <class F>
Tensor map_values(const Tensor& a, F f) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
    return out;
}

template <class F>
Tensor zip_values(const Tensor& a, const Tensor& b, F f) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
    return out;
}

}  // namespace

Var Var::constant(Tensor value) {
    auto node = std::make_shared<Node>();
    node->value = std::make_shared<const Tensor>(std::move(value));
    node->op = "constant";
    return Var(std::move(node));
}

Var Var::leaf(Tensor value) {
    auto node = std::make_shared<Node>();
    node->value = std::make_shared<const Tensor>(std::move(value));
    node->requires_grad = true;
    return Var(std::move(node));
}

Var Var::detach() const {
    auto node = std::make_shared<Node>();
    node->value = node_->value;
    node->op = "detached";
    return Var(std::move(node));
}

Var make_op(Tensor value, std::vector<Var> inputs, BackwardFn backward, const char* op) {
    if (!value.all_finite()) throw NonFiniteError(std::string("non-finite value produced by ") + op);
    auto node = std::make_shared<Node>();
    node->value = std::make_shared<const Tensor>(std::move(value));
    node->op = op;
    for (const auto& in : inputs) node->requires_grad = node->requires_grad || in.requires_grad();
    if (node->requires_grad) {
        node->inputs = std::move(inputs);
        node->backward = std::move(backward);
    }
    return Var(std::move(node));
}

std::vector<Var> grad(const Var& loss, const std::vector<Var>& wrt, bool create_graph) {
    if (!loss.defined() || !loss.requires_grad()) throw PreconditionError("grad: loss is not on the tape");
    if (loss.value().size() != 1) throw ShapeError("grad: loss must be a scalar, got " + shape_string(loss.shape()));

    // Post-order DFS yields a topological order (inputs before consumers).
    std::vector<std::shared_ptr<Node>> order;
    std::unordered_map<const Node*, bool> visited;
    std::vector<std::pair<std::shared_ptr<Node>, std::size_t>> stack{{loss.node_, 0}};
    visited[loss.node()] = true;
    while (!stack.empty()) {
        auto& top = stack.back();
        if (top.second < top.first->inputs.size()) {
            std::shared_ptr<Node> child = top.first->inputs[top.second++].node_;
            if (child->requires_grad && !visited[child.get()]) {
                visited[child.get()] = true;
                stack.emplace_back(std::move(child), 0);
            }
        } else {
            order.push_back(std::move(top.first));
            stack.pop_back();
        }
    }

    // Without create_graph the backward rules see tape-free copies: inputs keep
    // their requires_grad flag (rules skip inputs that need nothing) but carry
    // no history, so nothing recorded here reaches the forward tape.
    auto cut = [](const Var& v, bool keep_flag) {
        auto node = std::make_shared<Node>();
        node->value = v.node_->value;
        node->requires_grad = keep_flag && v.requires_grad();
        node->op = "detached";
        return Var(std::move(node));
    };

    std::unordered_map<const Node*, Var> grads;
    grads[loss.node()] = Var::constant(Tensor(loss.shape(), 1.0));

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const std::shared_ptr<Node>& node = *it;
        auto found = grads.find(node.get());
        if (found == grads.end() || !node->backward) continue;
        Var g = found->second;
        Var self(node);
        std::vector<Var> inputs = node->inputs;
        if (!create_graph) {
            for (auto& in : inputs) in = cut(in, true);
            g = cut(g, false);
            self = cut(self, false);
        }
        std::vector<Var> in_grads = node->backward(inputs, self, g);
        for (std::size_t i = 0; i < node->inputs.size(); ++i) {
            if (!in_grads[i].defined() || !node->inputs[i].requires_grad()) continue;
            Var gi = create_graph ? in_grads[i] : cut(in_grads[i], false);
            const Node* target = node->inputs[i].node();
            auto existing = grads.find(target);
            if (existing == grads.end()) {
                grads.emplace(target, gi);
            } else {
                existing->second = add(existing->second, gi);
            }
        }
    }

    std::vector<Var> out;
    out.reserve(wrt.size());
    for (const auto& w : wrt) {
        auto it = grads.find(w.node());
        if (it == grads.end()) {
            out.push_back(Var::constant(Tensor(w.shape(), 0.0)));
        } else {
            out.push_back(create_graph ? it->second : it->second.detach());
        }
    }
    return out;
}

// ------------------------------------------------------------ primitives

Var matmul(const Var& a, const Var& b) {
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    if (x.cols() != y.rows()) {
        throw ShapeError("matmul: inner dimensions differ " + shape_string(x.shape()) + " x " + shape_string(y.shape()));
    }
    Tensor out = Tensor::matrix(x.rows(), y.cols());
    MutMap(out.data(), x.rows(), y.cols()).noalias() =
        ConstMap(x.data(), x.rows(), x.cols()) * ConstMap(y.data(), y.rows(), y.cols());
    return make_op(std::move(out), {a, b},
                   [](const std::vector<Var>& in, const Var&, const Var& g) -> std::vector<Var> {
                       return {in[0].requires_grad() ? matmul(g, transpose(in[1])) : Var(),
                               in[1].requires_grad() ? matmul(transpose(in[0]), g) : Var()};
                   },
                   "matmul");
}

Var transpose(const Var& a) {
    const Tensor& x = a.value();
    Tensor out = Tensor::matrix(x.cols(), x.rows());
    MutMap(out.data(), x.cols(), x.rows()) = ConstMap(x.data(), x.rows(), x.cols()).transpose();
    return make_op(std::move(out), {a},
                   [](const std::vector<Var>&, const Var&, const Var& g) -> std::vector<Var> { return {transpose(g)}; },
                   "transpose");
}

Var add(const Var& a, const Var& b) {
    require_same_shape(a, b, "add");
    return make_op(zip_values(a.value(), b.value(), std::plus<>()), {a, b},
                   [](const std::vector<Var>&, const Var&, const Var& g) -> std::vector<Var> { return {g, g}; },
                   "add");
}

Var sub(const Var& a, const Var& b) {
    require_same_shape(a, b, "sub");
    return make_op(zip_values(a.value(), b.value(), std::minus<>()), {a, b},
                   [](const std::vector<Var>& in, const Var&, const Var& g) -> std::vector<Var> {
                       return {g, in[1].requires_grad() ? neg(g) : Var()};
                   },
                   "sub");
}

Var mul(const Var& a, const Var& b) {
    require_same_shape(a, b, "mul");
    return make_op(zip_values(a.value(), b.value(), std::multiplies<>()), {a, b},
                   [](const std::vector<Var>& in, const Var&, const Var& g) -> std::vector<Var> {
                       return {in[0].requires_grad() ? mul(g, in[1]) : Var(),
                               in[1].requires_grad() ? mul(g, in[0]) : Var()};
                   },
                   "mul");
}

Var scale(const Var& a, double s) {
    return make_op(map_values(a.value(), [s](double x) { return s * x; }), {a},
                   [s](const std::vector<Var>&, const Var&, const Var& g) -> std::vector<Var> { return {scale(g, s)}; },
                   "scale");
}

Var add_scalar(const Var& a, double s) {
    return make_op(map_values(a.value(), [s](double x) { return x + s; }), {a},
                   [](const std::vector<Var>&, const Var&, const Var& g) -> std::vector<Var> { return {g}; },
                   "add_scalar");
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var mul_const(const Var& a, std::shared_ptr<const Tensor> mask) {
    if (mask->shape() != a.shape()) throw ShapeError("mul_const: mask shape mismatch");
    Tensor out = zip_values(a.value(), *mask, std::multiplies<>());
    return make_op(std::move(out), {a},
                   [mask](const std::vector<Var>&, const Var&, const Var& g) -> std::vector<Var> {
                       return {mul_const(g, mask)};
                   },
                   "mul_const");
}

Var add_row(const Var& a, const Var& row) {
    require_row(a, row, "add_row");
    const Tensor& x = a.value();
    const Tensor& r = row.value();
    Tensor out(x.shape());
    const std::size_t n = x.rows(), m = x.cols();
    const double* xs = x.data();
    const double* rs = r.data();
    double* os = out.data();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) os[i * m + j] = xs[i * m + j] + rs[j];
    }
    return make_op(std::move(out), {a, row},
                   [](const std::vector<Var>& in, const Var&, const Var& g) -> std::vector<Var> {
                       return {g, in[1].requires_grad() ? reshape(sum_rows(g), in[1].shape()) : Var()};
                   },
                   "add_row");
}

Var mul_row(const Var& a, const Var& row) {
    require_row(a, row, "mul_row");
    const Tensor& x = a.value();
    const Tensor& r = row.value();
    Tensor out(x.shape());
    const std::size_t n = x.rows(), m = x.cols();
    const double* xs = x.data();
    const double* rs = r.data();
    double* os = out.data();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) os[i * m + j] = xs[i * m + j] * rs[j];
    }
    return make_op(std::move(out), {a, row},
                   [](const std::vector<Var>& in, const Var&, const Var& g) -> std::vector<Var> {
                       return {in[0].requires_grad() ? mul_row(g, in[1]) : Var(),
                               in[1].requires_grad() ? reshape(sum_rows(mul(g, in[0])), in[1].shape()) : Var()};
                   },
                   "mul_row");
}

Var sum_rows(const Var& a) {
    const Tensor& x = a.value();
    Tensor out = Tensor::matrix(1, x.cols());
    {
        const std::size_t rows = x.rows(), cols = x.cols();
        const double* xs = x.data();
        double* os = out.data();
        for (std::size_t i = 0; i < rows; ++i) {
            for (std::size_t j = 0; j < cols; ++j) os[j] += xs[i * cols + j];
        }
    }
    const std::size_t n = x.rows();
    const Shape shape = a.shape();
    return make_op(std::move(out), {a},
                   [n, shape](const std::vector<Var>&, const Var&, const Var& g) -> std::vector<Var> {
                       return {reshape(broadcast_rows(g, n), shape)};
                   },
                   "sum_rows");
}

Var sum_cols(const Var& a) {
    const Tensor& x = a.value();
    Tensor out = Tensor::matrix(x.rows(), 1);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double s = 0.0;
        for (double v : x.row(i)) s += v;
        out[i] = s;
    }
    const std::size_t m = x.cols();
    const Shape shape = a.shape();
    return make_op(std::move(out), {a},
                   [m, shape](const std::vector<Var>&, const Var&, const Var& g) -> std::vector<Var> {
                       return {reshape(broadcast_cols(g, m), shape)};
                   },
                   "sum_cols");
}

Var broadcast_rows(const Var& row, std::size_t n) {
    const Tensor& r = row.value();
    if (r.rows() != 1) throw ShapeError("broadcast_rows: expected a single row, got " + shape_string(r.shape()));
    Tensor out = Tensor::matrix(n, r.cols());
    for (std::size_t i = 0; i < n; ++i) std::copy(r.data(), r.data() + r.size(), out.data() + i * r.size());
    const Shape shape = row.shape();
    return make_op(std::move(out), {row},
                   [shape](const std::vector<Var>&, const Var&, const Var& g) -> std::vector<Var> {
                       return {reshape(sum_rows(g), shape)};
                   },
                   "broadcast_rows");
}

Var broadcast_cols(const Var& col, std::size_t m) {
    const Tensor& c = col.value();
    if (c.cols() != 1) throw ShapeError("broadcast_cols: expected a single column, got " + shape_string(c.shape()));
    Tensor out = Tensor::matrix(c.rows(), m);
    for (std::size_t i = 0; i < c.rows(); ++i) std::fill_n(out.data() + i * m, m, c[i]);
    const Shape shape = col.shape();
    return make_op(std::move(out), {col},
                   [shape](const std::vector<Var>&, const Var&, const Var& g) -> std::vector<Var> {
                       return {reshape(sum_cols(g), shape)};
                   },
                   "broadcast_cols");
}

Var sum(const Var& a) {
    double s = 0.0;
    for (double v : a.value().values()) s += v;
    const Shape shape = a.shape();
    return make_op(Tensor::scalar(s), {a},
                   [shape](const std::vector<Var>&, const Var&, const Var& g) -> std::vector<Var> {
                       return {broadcast_scalar(g, shape)};
                   },
                   "sum");
}

Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var broadcast_scalar(const Var& s, const Shape& shape) {
    return make_op(Tensor(shape, s.value().item()), {s},
                   [](const std::vector<Var>&, const Var&, const Var& g) -> std::vector<Var> { return {sum(g)}; },
                   "broadcast_scalar");
}

Var leaky_relu(const Var& a, double slope) {
    // Derivative at 0 uses the negative-side slope.
    auto mask = std::make_shared<Tensor>(map_values(a.value(), [slope](double x) { return x > 0.0 ? 1.0 : slope; }));
    return mul_const(a, std::move(mask));
}

Var tanh(const Var& a) {
    return make_op(map_values(a.value(), [](double x) { return std::tanh(x); }), {a},
                   [](const std::vector<Var>&, const Var& y, const Var& g) -> std::vector<Var> {
                       return {mul(g, add_scalar(neg(mul(y, y)), 1.0))};
                   },
                   "tanh");
}

Var sigmoid(const Var& a) {
    auto f = [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
    };
    return make_op(map_values(a.value(), f), {a},
                   [](const std::vector<Var>&, const Var& y, const Var& g) -> std::vector<Var> {
                       return {mul(g, mul(y, add_scalar(neg(y), 1.0)))};
                   },
                   "sigmoid");
}

Var log(const Var& a) {
    return make_op(map_values(a.value(), [](double x) { return std::log(x); }), {a},
                   [](const std::vector<Var>& in, const Var&, const Var& g) -> std::vector<Var> {
                       return {mul(g, reciprocal(in[0]))};
                   },
                   "log");
}

Var sqrt(const Var& a) {
    return make_op(map_values(a.value(), [](double x) { return std::sqrt(x); }), {a},
                   [](const std::vector<Var>&, const Var& y, const Var& g) -> std::vector<Var> {
                       return {mul(g, scale(reciprocal(y), 0.5))};
                   },
                   "sqrt");
}

Var reciprocal(const Var& a) {
    return make_op(map_values(a.value(), [](double x) { return x == 0.0 ? 0.0 : 1.0 / x; }), {a},
                   [](const std::vector<Var>&, const Var& y, const Var& g) -> std::vector<Var> {
                       return {mul(g, neg(mul(y, y)))};
                   },
                   "reciprocal");
}

Var gather(const Var& a, std::shared_ptr<const std::vector<std::ptrdiff_t>> index, Shape out_shape) {
    if (index->size() != shape_size(out_shape)) throw ShapeError("gather: index length does not match output shape");
    const Tensor& x = a.value();
    Tensor out(out_shape);
    for (std::size_t i = 0; i < index->size(); ++i) {
        const std::ptrdiff_t k = (*index)[i];
        if (k >= static_cast<std::ptrdiff_t>(x.size())) throw ShapeError("gather: index out of range");
        out[i] = k < 0 ? 0.0 : x[static_cast<std::size_t>(k)];
    }
    const Shape in_shape = a.shape();
    return make_op(std::move(out), {a},
                   [index, in_shape](const std::vector<Var>&, const Var&, const Var& g) -> std::vector<Var> {
                       return {scatter_add(g, index, in_shape)};
                   },
                   "gather");
}

Var scatter_add(const Var& a, std::shared_ptr<const std::vector<std::ptrdiff_t>> index, Shape out_shape) {
    const Tensor& x = a.value();
    if (index->size() != x.size()) throw ShapeError("scatter_add: index length does not match input");
    Tensor out(out_shape);
    for (std::size_t i = 0; i < index->size(); ++i) {
        const std::ptrdiff_t k = (*index)[i];
        if (k >= static_cast<std::ptrdiff_t>(out.size())) throw ShapeError("scatter_add: index out of range");
        if (k >= 0) out[static_cast<std::size_t>(k)] += x[i];
    }
    const Shape in_shape = a.shape();
    return make_op(std::move(out), {a},
                   [index, in_shape](const std::vector<Var>&, const Var&, const Var& g) -> std::vector<Var> {
                       return {gather(g, index, in_shape)};
                   },
                   "scatter_add");
}

Var reshape(const Var& a, Shape shape) {
    if (shape == a.shape()) return a;
    const Shape original = a.shape();
    return make_op(a.value().reshaped(std::move(shape)), {a},
                   [original](const std::vector<Var>&, const Var&, const Var& g) -> std::vector<Var> {
                       return {reshape(g, original)};
                   },
                   "reshape");
}

}  // namespace wogan::nn
