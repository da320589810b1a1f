#include "mhf/matrix.hpp"

#include <algorithm>
#include <cmath>

#include "mhf/errors.hpp"

namespace mhf {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw ShapeError("matrix data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_string());
    }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) {
            throw ShapeError("ragged matrix literal: expected " + std::to_string(cols_) +
                             " columns, got " + std::to_string(r.size()));
        }
        for (double v : r) {
            if (!std::isfinite(v)) throw NumericError("non-finite entry in matrix literal");
            data_.push_back(v);
        }
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::column(std::span<const double> values) {
    return Matrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

Matrix Matrix::row(std::span<const double> values) {
    return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

std::vector<double> Matrix::column_values(std::size_t c) const {
    std::vector<double> out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
    return out;
}

void Matrix::set_column(std::size_t c, std::span<const double> values) {
    if (values.size() != rows_ || c >= cols_) {
        throw ShapeError("set_column: column of length " + std::to_string(values.size()) +
                         " at index " + std::to_string(c) + " into " + shape_string());
    }
    for (std::size_t r = 0; r < rows_; ++r) (*this)(r, c) = values[r];
}

bool Matrix::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Matrix::shape_string() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
}

Matrix Matrix::transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: " + a.shape_string() + " * " + b.shape_string());
    }
    const std::size_t n = a.rows(), m = a.cols(), p = b.cols();
    Matrix c(n, p);
    for (std::size_t i = 0; i < n; ++i) {
        double* ci = &c(i, 0);
        for (std::size_t k = 0; k < m; ++k) {
            const double aik = a(i, k);
            const double* bk = &b.values()[k * p];
            for (std::size_t j = 0; j < p; ++j) ci[j] += aik * bk[j];
        }
    }
    return c;
}

Matrix matmul_at(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw ShapeError("matmul_at: " + a.shape_string() + "^T * " + b.shape_string());
    }
    const std::size_t n = a.rows(), m = a.cols(), p = b.cols();
    Matrix c(m, p);
    for (std::size_t r = 0; r < n; ++r) {
        const double* br = &b.values()[r * p];
        for (std::size_t i = 0; i < m; ++i) {
            const double ari = a(r, i);
            double* ci = &c(i, 0);
            for (std::size_t j = 0; j < p; ++j) ci[j] += ari * br[j];
        }
    }
    return c;
}

Matrix matmul_bt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw ShapeError("matmul_bt: " + a.shape_string() + " * " + b.shape_string() + "^T");
    }
    const std::size_t n = a.rows(), m = a.cols(), p = b.rows();
    Matrix c(n, p);
    for (std::size_t i = 0; i < n; ++i) {
        const double* ai = &a.values()[i * m];
        for (std::size_t j = 0; j < p; ++j) {
            const double* bj = &b.values()[j * m];
            double s = 0.0;
            for (std::size_t k = 0; k < m; ++k) s += ai[k] * bj[k];
            c(i, j) = s;
        }
    }
    return c;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("max_abs_diff: " + a.shape_string() + " vs " + b.shape_string());
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    return worst;
}

double frobenius_norm(const Matrix& m) {
    double s = 0.0;
    for (double v : m.values()) s += v * v;
    return std::sqrt(s);
}

}  // namespace mhf
