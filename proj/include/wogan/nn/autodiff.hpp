#pragma once

// Reverse-mode automatic differentiation over a dynamically recorded tape.
//
// Every primitive's backward rule is itself written with primitives, so the
// gradients returned by grad(..., create_graph = true) are on the tape and can
// be differentiated again. The gradient penalty of WGAN-GP relies on this.

#include "wogan/nn/tensor.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace wogan::nn {

class Var;

/// Returns one gradient per input (an empty Var when the input needs none).
using BackwardFn = std::function<std::vector<Var>(const std::vector<Var>& inputs, const Var& output, const Var& grad)>;

struct Node {
    std::shared_ptr<const Tensor> value;
    bool requires_grad = false;
    std::vector<Var> inputs;
    BackwardFn backward;
    const char* op = "leaf";
};

/// Handle to a tape node. Copies share the node.
class Var {
public:
    Var() = default;

    static Var constant(Tensor value);
    /// Differentiable leaf (parameters, inputs of input-gradients).
    static Var leaf(Tensor value);

    bool defined() const noexcept { return node_ != nullptr; }
    const Tensor& value() const { return *node_->value; }
    const Shape& shape() const { return node_->value->shape(); }
    bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
    const char* op() const noexcept { return node_ ? node_->op : "undefined"; }

    /// Same value, cut from the tape.
    Var detach() const;

    const Node* node() const noexcept { return node_.get(); }

private:
    friend Var make_op(Tensor, std::vector<Var>, BackwardFn, const char*);
    friend std::vector<Var> grad(const Var&, const std::vector<Var>&, bool);

    explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    std::shared_ptr<Node> node_;
};

/// Records a primitive. Throws NonFiniteError when `value` has NaN/Inf entries.
Var make_op(Tensor value, std::vector<Var> inputs, BackwardFn backward, const char* op);

/// Gradients of the scalar `loss` with respect to each of `wrt`. Variables the
/// loss does not depend on get zero gradients. With `create_graph` the result
/// is recorded on the tape.
std::vector<Var> grad(const Var& loss, const std::vector<Var>& wrt, bool create_graph = false);

// Matrix primitives. Shapes are read as [rows, cols].
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var neg(const Var& a);
/// Elementwise product with a constant mask of the same shape.
Var mul_const(const Var& a, std::shared_ptr<const Tensor> mask);

Var add_row(const Var& a, const Var& row);  ///< a[n,m] + row[1,m]
Var mul_row(const Var& a, const Var& row);  ///< a[n,m] * row[1,m]
Var sum_rows(const Var& a);                 ///< column sums, [1,m]
Var sum_cols(const Var& a);                 ///< row sums, [n,1]
Var broadcast_rows(const Var& row, std::size_t n);
Var broadcast_cols(const Var& col, std::size_t m);
Var sum(const Var& a);  ///< [1,1]
Var mean(const Var& a);
Var broadcast_scalar(const Var& s, const Shape& shape);

Var leaky_relu(const Var& a, double slope);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var log(const Var& a);
Var sqrt(const Var& a);
/// 1/a, with 0 where a == 0.
Var reciprocal(const Var& a);

/// out[i] = a.flat[index[i]], or 0 where index[i] < 0.
Var gather(const Var& a, std::shared_ptr<const std::vector<std::ptrdiff_t>> index, Shape out_shape);
/// Adjoint of gather: out.flat[index[i]] += a.flat[i].
Var scatter_add(const Var& a, std::shared_ptr<const std::vector<std::ptrdiff_t>> index, Shape out_shape);
Var reshape(const Var& a, Shape shape);

}  // namespace wogan::nn
