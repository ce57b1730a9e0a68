#include "chembfn/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace chembfn {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw ShapeError("Matrix: data size does not match " + shape_string());
    }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) throw ShapeError("Matrix: ragged initializer");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Matrix Matrix::row_vector(std::span<const double> values) {
    return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

std::string Matrix::shape_string() const {
    return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
}

Matrix& Matrix::operator+=(const Matrix& other) {
    require_same_shape(*this, other, "Matrix::operator+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(what) + ": shape mismatch " + a.shape_string() + " vs " +
                         b.shape_string());
    }
}

void matmul_accumulate(const Matrix& a, const Matrix& b, Matrix& c) {
    if (a.cols() != b.rows() || c.rows() != a.rows() || c.cols() != b.cols()) {
        throw ShapeError("matmul: incompatible shapes " + a.shape_string() + " * " +
                         b.shape_string() + " -> " + c.shape_string());
    }
    const std::size_t n = b.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* __restrict crow = c.data() + i * n;
        const double* arow = a.data() + i * a.cols();
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            const double* __restrict brow = b.data() + k * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
        }
    }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    Matrix c(a.rows(), b.cols());
    matmul_accumulate(a, b, c);
    return c;
}

namespace {
Matrix transpose(const Matrix& m) {
    Matrix t(m.cols(), m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) t(c, r) = m(r, c);
    return t;
}
}  // namespace

void matmul_nt_accumulate(const Matrix& a, const Matrix& b, Matrix& c) {
    if (a.cols() != b.cols()) {
        throw ShapeError("matmul_nt: incompatible shapes " + a.shape_string() + " * " +
                         b.shape_string() + "^T");
    }
    matmul_accumulate(a, transpose(b), c);
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    Matrix c(a.rows(), b.rows());
    matmul_nt_accumulate(a, b, c);
    return c;
}

void matmul_tn_accumulate(const Matrix& a, const Matrix& b, Matrix& c) {
    if (a.rows() != b.rows() || c.rows() != a.cols() || c.cols() != b.cols()) {
        throw ShapeError("matmul_tn: incompatible shapes " + a.shape_string() + "^T * " +
                         b.shape_string() + " -> " + c.shape_string());
    }
    const std::size_t n = b.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* arow = a.data() + i * a.cols();
        const double* __restrict brow = b.data() + i * n;
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            double* __restrict crow = c.data() + k * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
        }
    }
}

void softmax_inplace(std::span<double> row) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : row) mx = std::max(mx, v);
    if (!std::isfinite(mx)) {
        // All -inf (or a +inf present): fall back to a mass on the maxima.
        std::size_t count = 0;
        for (double v : row) count += (v == mx);
        for (double& v : row) v = (v == mx) ? 1.0 / static_cast<double>(count) : 0.0;
        return;
    }
    double sum = 0.0;
    for (double& v : row) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (double& v : row) v /= sum;
}

Matrix softmax_rows(const Matrix& logits) {
    Matrix out = logits;
    for (std::size_t r = 0; r < out.rows(); ++r) softmax_inplace(out.row(r));
    return out;
}

}  // namespace chembfn
