#include "chembfn/autograd.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_set>

namespace chembfn::ag {

Matrix& Node::grad_buffer() {
    if (grad.empty() && !val().empty()) grad = Matrix(val().rows(), val().cols());
    return grad;
}

double Var::scalar() const {
    if (value().size() != 1) throw ShapeError("Var::scalar on " + value().shape_string());
    return value()(0, 0);
}

namespace {

using NodePtr = std::shared_ptr<Node>;

bool any_requires(const std::vector<Var>& inputs) {
    for (const auto& v : inputs)
        if (v.requires_grad()) return true;
    return false;
}

Var make(Matrix value, std::vector<Var> inputs, std::function<void(Node&)> backprop) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->requires_grad = any_requires(inputs);
    if (node->requires_grad) {
        node->inputs.reserve(inputs.size());
        for (auto& v : inputs) node->inputs.push_back(v.ptr());
        node->backprop = std::move(backprop);
    }
    return Var(std::move(node));
}

Node& in(Node& self, std::size_t i) { return *self.inputs[i]; }

}  // namespace

Var constant(Matrix m) {
    auto node = std::make_shared<Node>();
    node->value = std::move(m);
    return Var(std::move(node));
}

Var reference(const Matrix& m, bool requires_grad) {
    auto node = std::make_shared<Node>();
    node->external = &m;
    node->requires_grad = requires_grad;
    return Var(std::move(node));
}

Var parameter(Matrix m) {
    auto node = std::make_shared<Node>();
    node->value = std::move(m);
    node->requires_grad = true;
    return Var(std::move(node));
}

void backward(const Var& root) {
    if (root.value().size() != 1) throw ShapeError("backward: root must be a scalar");
    if (!root.requires_grad()) return;

    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{root.node(), 0}};
    seen.insert(root.node());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* child = node->inputs[next++].get();
            if (child->requires_grad && seen.insert(child).second) stack.push_back({child, 0});
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root.node()->grad_buffer()(0, 0) += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop && !n->grad.empty()) n->backprop(*n);
    }
}

Var matmul(const Var& a, const Var& b) {
    return make(chembfn::matmul(a.value(), b.value()), {a, b}, [](Node& self) {
        Node& na = in(self, 0);
        Node& nb = in(self, 1);
        if (na.requires_grad) matmul_nt_accumulate(self.grad, nb.val(), na.grad_buffer());
        if (nb.requires_grad) matmul_tn_accumulate(na.val(), self.grad, nb.grad_buffer());
    });
}

Var matmul_nt(const Var& a, const Var& b) {
    return make(chembfn::matmul_nt(a.value(), b.value()), {a, b}, [](Node& self) {
        Node& na = in(self, 0);
        Node& nb = in(self, 1);
        // C = A B^T: dA = dC B, dB = dC^T A
        if (na.requires_grad) matmul_accumulate(self.grad, nb.val(), na.grad_buffer());
        if (nb.requires_grad) matmul_tn_accumulate(self.grad, na.val(), nb.grad_buffer());
    });
}

Var add(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "add");
    Matrix out = a.value();
    out += b.value();
    return make(std::move(out), {a, b}, [](Node& self) {
        for (std::size_t i = 0; i < 2; ++i)
            if (in(self, i).requires_grad) in(self, i).grad_buffer() += self.grad;
    });
}

Var sub(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "sub");
    Matrix out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= b.value().data()[i];
    return make(std::move(out), {a, b}, [](Node& self) {
        if (in(self, 0).requires_grad) in(self, 0).grad_buffer() += self.grad;
        if (in(self, 1).requires_grad) {
            Matrix& g = in(self, 1).grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] -= self.grad.data()[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "mul");
    Matrix out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= b.value().data()[i];
    return make(std::move(out), {a, b}, [](Node& self) {
        Node& na = in(self, 0);
        Node& nb = in(self, 1);
        const std::size_t n = self.grad.size();
        if (na.requires_grad) {
            double* g = na.grad_buffer().data();
            for (std::size_t i = 0; i < n; ++i) g[i] += self.grad.data()[i] * nb.val().data()[i];
        }
        if (nb.requires_grad) {
            double* g = nb.grad_buffer().data();
            for (std::size_t i = 0; i < n; ++i) g[i] += self.grad.data()[i] * na.val().data()[i];
        }
    });
}

Var scale(const Var& a, double s) {
    Matrix out = a.value();
    for (double& v : out.storage()) v *= s;
    return make(std::move(out), {a}, [s](Node& self) {
        double* g = in(self, 0).grad_buffer().data();
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += s * self.grad.data()[i];
    });
}

Var add_row(const Var& a, const Var& row) {
    if (row.rows() != 1 || row.cols() != a.cols()) {
        throw ShapeError("add_row: " + a.value().shape_string() + " + " +
                         row.value().shape_string());
    }
    Matrix out = a.value();
    for (std::size_t r = 0; r < out.rows(); ++r)
        for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += row.value()(0, c);
    return make(std::move(out), {a, row}, [](Node& self) {
        if (in(self, 0).requires_grad) in(self, 0).grad_buffer() += self.grad;
        if (in(self, 1).requires_grad) {
            Matrix& g = in(self, 1).grad_buffer();
            for (std::size_t r = 0; r < self.grad.rows(); ++r)
                for (std::size_t c = 0; c < self.grad.cols(); ++c) g(0, c) += self.grad(r, c);
        }
    });
}

Var mul_row(const Var& a, const Var& row) {
    if (row.rows() != 1 || row.cols() != a.cols()) {
        throw ShapeError("mul_row: " + a.value().shape_string() + " * " +
                         row.value().shape_string());
    }
    Matrix out = a.value();
    for (std::size_t r = 0; r < out.rows(); ++r)
        for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) *= row.value()(0, c);
    return make(std::move(out), {a, row}, [](Node& self) {
        Node& na = in(self, 0);
        Node& nr = in(self, 1);
        if (na.requires_grad) {
            Matrix& g = na.grad_buffer();
            for (std::size_t r = 0; r < g.rows(); ++r)
                for (std::size_t c = 0; c < g.cols(); ++c)
                    g(r, c) += self.grad(r, c) * nr.val()(0, c);
        }
        if (nr.requires_grad) {
            Matrix& g = nr.grad_buffer();
            for (std::size_t r = 0; r < self.grad.rows(); ++r)
                for (std::size_t c = 0; c < self.grad.cols(); ++c)
                    g(0, c) += self.grad(r, c) * na.val()(r, c);
        }
    });
}

Var affine(const Var& x, const Var& weight, const Var& bias) {
    return add_row(matmul(x, weight), bias);
}

Var add_const(const Var& a, const Matrix& c) {
    require_same_shape(a.value(), c, "add_const");
    Matrix out = a.value();
    out += c;
    return make(std::move(out), {a}, [](Node& self) { in(self, 0).grad_buffer() += self.grad; });
}

Var mul_const(const Var& a, const Matrix& c) {
    require_same_shape(a.value(), c, "mul_const");
    Matrix out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= c.data()[i];
    return make(std::move(out), {a}, [c](Node& self) {
        double* g = in(self, 0).grad_buffer().data();
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad.data()[i] * c.data()[i];
    });
}

double selu_value(double x) {
    return x > 0.0 ? kSeluScale * x : kSeluScale * kSeluAlpha * std::expm1(x);
}

Var selu(const Var& a) {
    Matrix out = a.value();
    for (double& v : out.storage()) v = selu_value(v);
    return make(std::move(out), {a}, [](Node& self) {
        const Matrix& x = in(self, 0).val();
        double* g = in(self, 0).grad_buffer().data();
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double xi = x.data()[i];
            const double d = xi > 0.0 ? kSeluScale : kSeluScale * kSeluAlpha * std::exp(xi);
            g[i] += self.grad.data()[i] * d;
        }
    });
}

Var softmax_rows(const Var& a) {
    return make(chembfn::softmax_rows(a.value()), {a}, [](Node& self) {
        Matrix& g = in(self, 0).grad_buffer();
        const Matrix& p = self.value;
        for (std::size_t r = 0; r < p.rows(); ++r) {
            double dot = 0.0;
            for (std::size_t c = 0; c < p.cols(); ++c) dot += self.grad(r, c) * p(r, c);
            for (std::size_t c = 0; c < p.cols(); ++c) g(r, c) += p(r, c) * (self.grad(r, c) - dot);
        }
    });
}

Var log_softmax_rows(const Var& a) {
    Matrix out = a.value();
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        double mx = -std::numeric_limits<double>::infinity();
        for (double v : row) mx = std::max(mx, v);
        double sum = 0.0;
        for (double v : row) sum += std::exp(v - mx);
        const double lse = mx + std::log(sum);
        for (double& v : row) v -= lse;
    }
    return make(std::move(out), {a}, [](Node& self) {
        Matrix& g = in(self, 0).grad_buffer();
        const Matrix& lp = self.value;
        for (std::size_t r = 0; r < lp.rows(); ++r) {
            double total = 0.0;
            for (std::size_t c = 0; c < lp.cols(); ++c) total += self.grad(r, c);
            for (std::size_t c = 0; c < lp.cols(); ++c)
                g(r, c) += self.grad(r, c) - std::exp(lp(r, c)) * total;
        }
    });
}

Var layer_norm_rows(const Var& a, double eps) {
    const Matrix& x = a.value();
    Matrix out(x.rows(), x.cols());
    auto inv_std = std::make_shared<std::vector<double>>(x.rows());
    const double n = static_cast<double>(x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double mean = 0.0;
        for (double v : x.row(r)) mean += v;
        mean /= n;
        double var = 0.0;
        for (double v : x.row(r)) var += (v - mean) * (v - mean);
        var /= n;
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[r] = is;
        for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) = (x(r, c) - mean) * is;
    }
    return make(std::move(out), {a}, [inv_std, n](Node& self) {
        Matrix& g = in(self, 0).grad_buffer();
        const Matrix& y = self.value;
        for (std::size_t r = 0; r < y.rows(); ++r) {
            double mg = 0.0;
            double mgy = 0.0;
            for (std::size_t c = 0; c < y.cols(); ++c) {
                mg += self.grad(r, c);
                mgy += self.grad(r, c) * y(r, c);
            }
            mg /= n;
            mgy /= n;
            const double is = (*inv_std)[r];
            for (std::size_t c = 0; c < y.cols(); ++c)
                g(r, c) += is * (self.grad(r, c) - mg - y(r, c) * mgy);
        }
    });
}

Var rotate_pairs(const Var& a, const Matrix& cos_table, const Matrix& sin_table) {
    const Matrix& x = a.value();
    if (x.cols() % 2 != 0 || cos_table.rows() != x.rows() || cos_table.cols() * 2 != x.cols()) {
        throw ShapeError("rotate_pairs: table " + cos_table.shape_string() + " vs input " +
                         x.shape_string());
    }
    require_same_shape(cos_table, sin_table, "rotate_pairs tables");
    Matrix out(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        for (std::size_t i = 0; i < cos_table.cols(); ++i) {
            const double c = cos_table(r, i);
            const double s = sin_table(r, i);
            const double x0 = x(r, 2 * i);
            const double x1 = x(r, 2 * i + 1);
            out(r, 2 * i) = x0 * c - x1 * s;
            out(r, 2 * i + 1) = x0 * s + x1 * c;
        }
    }
    return make(std::move(out), {a}, [cos_table, sin_table](Node& self) {
        Matrix& g = in(self, 0).grad_buffer();
        for (std::size_t r = 0; r < g.rows(); ++r) {
            for (std::size_t i = 0; i < cos_table.cols(); ++i) {
                const double c = cos_table(r, i);
                const double s = sin_table(r, i);
                const double g0 = self.grad(r, 2 * i);
                const double g1 = self.grad(r, 2 * i + 1);
                g(r, 2 * i) += g0 * c + g1 * s;
                g(r, 2 * i + 1) += -g0 * s + g1 * c;
            }
        }
    });
}

Var slice_cols(const Var& a, std::size_t start, std::size_t count) {
    const Matrix& x = a.value();
    if (start + count > x.cols()) throw ShapeError("slice_cols out of range");
    Matrix out(x.rows(), count);
    for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < count; ++c) out(r, c) = x(r, start + c);
    return make(std::move(out), {a}, [start, count](Node& self) {
        Matrix& g = in(self, 0).grad_buffer();
        for (std::size_t r = 0; r < self.grad.rows(); ++r)
            for (std::size_t c = 0; c < count; ++c) g(r, start + c) += self.grad(r, c);
    });
}

Var slice_rows(const Var& a, std::size_t start, std::size_t count) {
    const Matrix& x = a.value();
    if (start + count > x.rows()) throw ShapeError("slice_rows out of range");
    Matrix out(count, x.cols());
    for (std::size_t r = 0; r < count; ++r)
        for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) = x(start + r, c);
    return make(std::move(out), {a}, [start, count](Node& self) {
        Matrix& g = in(self, 0).grad_buffer();
        for (std::size_t r = 0; r < count; ++r)
            for (std::size_t c = 0; c < self.grad.cols(); ++c) g(start + r, c) += self.grad(r, c);
    });
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const std::size_t rows = parts.front().rows();
    std::size_t cols = 0;
    for (const auto& p : parts) {
        if (p.rows() != rows) throw ShapeError("concat_cols: row mismatch");
        cols += p.cols();
    }
    Matrix out(rows, cols);
    std::size_t off = 0;
    for (const auto& p : parts) {
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < p.cols(); ++c) out(r, off + c) = p.value()(r, c);
        off += p.cols();
    }
    return make(std::move(out), parts, [](Node& self) {
        std::size_t off = 0;
        for (auto& child : self.inputs) {
            const std::size_t w = child->val().cols();
            if (child->requires_grad) {
                Matrix& g = child->grad_buffer();
                for (std::size_t r = 0; r < g.rows(); ++r)
                    for (std::size_t c = 0; c < w; ++c) g(r, c) += self.grad(r, off + c);
            }
            off += w;
        }
    });
}

Var sum_squares(const Var& a) {
    double s = 0.0;
    for (double v : a.value().storage()) s += v * v;
    return make(Matrix(1, 1, s), {a}, [](Node& self) {
        const double g0 = self.grad(0, 0);
        const Matrix& x = in(self, 0).val();
        double* g = in(self, 0).grad_buffer().data();
        for (std::size_t i = 0; i < x.size(); ++i) g[i] += 2.0 * x.data()[i] * g0;
    });
}

Var sum_all(const Var& a) {
    double s = 0.0;
    for (double v : a.value().storage()) s += v;
    return make(Matrix(1, 1, s), {a}, [](Node& self) {
        const double g0 = self.grad(0, 0);
        for (double& g : in(self, 0).grad_buffer().storage()) g += g0;
    });
}

Var weighted_sum(const Var& a, const Matrix& weights) {
    require_same_shape(a.value(), weights, "weighted_sum");
    double s = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) s += a.value().data()[i] * weights.data()[i];
    return make(Matrix(1, 1, s), {a}, [weights](Node& self) {
        const double g0 = self.grad(0, 0);
        double* g = in(self, 0).grad_buffer().data();
        for (std::size_t i = 0; i < weights.size(); ++i) g[i] += g0 * weights.data()[i];
    });
}

Var add_scalars(const std::vector<Var>& scalars) {
    double s = 0.0;
    for (const auto& v : scalars) s += v.scalar();
    return make(Matrix(1, 1, s), scalars, [](Node& self) {
        for (auto& child : self.inputs)
            if (child->requires_grad) child->grad_buffer()(0, 0) += self.grad(0, 0);
    });
}

}  // namespace chembfn::ag
