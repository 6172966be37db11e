#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "seadate/tensor.hpp"

namespace seadate {

struct Node;

/// Handle to a node in the reverse-mode tape. Cheap to copy; the graph is
/// owned by shared_ptr chains hanging off whatever roots are still alive.
class Var {
public:
    Var() = default;

    static Var leaf(Tensor value, bool requires_grad = false);
    static Var constant(Tensor value) { return leaf(std::move(value), false); }

    const Tensor& value() const;
    /// In-place access for optimizers/checkpoint loading; leaves only.
    Tensor& mutable_value();
    /// Accumulated gradient; zeros until the first backward reaches this node.
    const Tensor& grad() const;
    bool has_grad() const;
    bool requires_grad() const;
    void zero_grad();

    explicit operator bool() const { return static_cast<bool>(node_); }
    Node* raw() const { return node_.get(); }

    std::shared_ptr<Node> node_;
};

struct Node {
    Tensor value;
    Tensor grad;  // allocated lazily; additive across backward calls
    bool requires_grad = false;
    std::vector<Var> parents;
    std::function<void(Node&)> backprop;  // reads this->grad, accumulates into parents

    void accumulate(const Tensor& g);
};

/// Reverse-mode sweep from a scalar (or any) root. `seed` defaults to ones.
void backward(const Var& root);
void backward(const Var& root, const Tensor& seed);

// -- primitive differentiable operations --------------------------------------

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& x);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);   // elementwise
Var divide(const Var& a, const Var& b);
Var scale(const Var& x, double c);
Var add_scalar(const Var& x, double c);
Var negate(const Var& x);
/// y[r] = x[r] + v, v has shape {1, D}.
Var add_rowvec(const Var& x, const Var& v);
Var relu(const Var& x);
Var sigmoid(const Var& x);
Var exp_elem(const Var& x);
/// Elementwise min/max; ties route the gradient to `a`.
Var elem_min(const Var& a, const Var& b);
Var elem_max(const Var& a, const Var& b);

/// Row-wise softmax with max-subtraction stabilization.
Var softmax_rows(const Var& x);
Var log_softmax_rows(const Var& x);
/// Per-row normalization with affine scale/shift. gamma/beta: {1, D}.
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

Var concat(const std::vector<Var>& parts, std::size_t axis);
std::vector<Var> split(const Var& x, std::size_t axis, const std::vector<std::size_t>& sizes);
Var reshape(const Var& x, std::vector<std::size_t> new_shape);
Var gather_rows(const Var& x, std::vector<std::size_t> indices);

Var sum_all(const Var& x);   // -> {1,1}
Var mean_all(const Var& x);  // -> {1,1}
/// Mean over rows: {N,D} -> {1,D}.
Var mean_rows(const Var& x);
/// Unit-sphere projection of each row; a zero row is an error.
Var l2_normalize_rows(const Var& x);

/// 3x3 convolution, stride 1, zero padding 1. x: {Cin,H,W}, w: {Cout,Cin,3,3},
/// b: {Cout}. Output {Cout,H,W}.
Var conv2d_3x3(const Var& x, const Var& w, const Var& b);
/// 2x2 average pooling, stride 2. H and W must be even.
Var avg_pool2(const Var& x);

/// Mean over all elements of the stable binary cross-entropy between logits x
/// and fixed targets t in [0,1].
Var bce_with_logits_mean(const Var& x, const Tensor& targets);

/// ReLU(x*w1 + b1)*w2 + b2. First layer activated, second linear.
Var feed_forward(const Var& x, const Var& w1, const Var& b1, const Var& w2, const Var& b2);

/// Fused softmax(alpha * q k^T) v. Equivalent to the composition of matmul,
/// scale and softmax_rows but stores the row-stochastic weight matrix only
/// once, which matters at training scale. q: {N,dk}, k: {M,dk}, v: {M,dv}.
/// When weights_out is non-null the weight matrix is copied there.
Var scaled_dot_attention(const Var& q, const Var& k, const Var& v, double alpha,
                         Tensor* weights_out = nullptr);

}  // namespace seadate
