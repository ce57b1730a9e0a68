#pragma once

// Minimal tape-free reverse-mode autodiff over dense matrices. Every op
// records its inputs and a closure that pushes the output gradient back;
// backward() walks the graph in reverse topological order.

#include <functional>
#include <memory>
#include <vector>

#include "chembfn/matrix.hpp"

namespace chembfn::ag {

struct Node {
    Matrix value;
    const Matrix* external = nullptr;  // leaf that aliases parameter storage
    Matrix grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backprop;

    const Matrix& val() const { return external ? *external : value; }
    Matrix& grad_buffer();
};

class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    const Matrix& value() const { return node_->val(); }
    const Matrix& grad() const { return node_->grad; }
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    double scalar() const;

    Node* node() const { return node_.get(); }
    const std::shared_ptr<Node>& ptr() const { return node_; }
    explicit operator bool() const { return static_cast<bool>(node_); }

private:
    std::shared_ptr<Node> node_;
};

Var constant(Matrix m);
// Leaf aliasing `m`; `m` must outlive the graph.
Var reference(const Matrix& m, bool requires_grad);
Var parameter(Matrix m);

// Seeds d(root)/d(root) = 1 and accumulates gradients into every reachable
// node that requires them. `root` must be 1x1.
void backward(const Var& root);

Var matmul(const Var& a, const Var& b);
Var matmul_nt(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_row(const Var& a, const Var& row);
Var mul_row(const Var& a, const Var& row);
Var affine(const Var& x, const Var& weight, const Var& bias);

Var add_const(const Var& a, const Matrix& c);
Var mul_const(const Var& a, const Matrix& c);

Var selu(const Var& a);
Var softmax_rows(const Var& a);
Var log_softmax_rows(const Var& a);
Var layer_norm_rows(const Var& a, double eps);

// out[:, 2i], out[:, 2i+1] = rotation of the pair by (cos, sin)[:, i]; the
// cos/sin tables may carry an extra magnitude factor.
Var rotate_pairs(const Var& a, const Matrix& cos_table, const Matrix& sin_table);

Var slice_cols(const Var& a, std::size_t start, std::size_t count);
Var slice_rows(const Var& a, std::size_t start, std::size_t count);
Var concat_cols(const std::vector<Var>& parts);

Var sum_squares(const Var& a);
Var sum_all(const Var& a);
// sum(a .* weights)
Var weighted_sum(const Var& a, const Matrix& weights);
Var add_scalars(const std::vector<Var>& scalars);

inline constexpr double kSeluScale = 1.0507009873554804934193349852946;
inline constexpr double kSeluAlpha = 1.6732632423543772848170429916717;

double selu_value(double x);

}  // namespace chembfn::ag
