#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace mhf {

/// Dense row-major matrix of doubles. The numeric carrier for every layer.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    /// Literal construction; rejects ragged rows and non-finite entries.
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix zeros(std::size_t rows, std::size_t cols) { return Matrix(rows, cols, 0.0); }
    static Matrix ones(std::size_t rows, std::size_t cols) { return Matrix(rows, cols, 1.0); }
    static Matrix identity(std::size_t n);
    static Matrix column(std::span<const double> values);
    static Matrix row(std::span<const double> values);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    std::span<double> row_span(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row_span(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::vector<double> column_values(std::size_t c) const;
    void set_column(std::size_t c, std::span<const double> values);

    bool same_shape(const Matrix& other) const noexcept {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }
    bool all_finite() const noexcept;
    std::string shape_string() const;

    Matrix transposed() const;

    friend bool operator==(const Matrix& a, const Matrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Dense kernels. All accumulate in a fixed loop order so results are
// reproducible bit for bit.

/// C = A * B
Matrix matmul(const Matrix& a, const Matrix& b);
/// C = A^T * B
Matrix matmul_at(const Matrix& a, const Matrix& b);
/// C = A * B^T
Matrix matmul_bt(const Matrix& a, const Matrix& b);

/// Largest absolute entrywise difference; shapes must match.
double max_abs_diff(const Matrix& a, const Matrix& b);
double frobenius_norm(const Matrix& m);

}  // namespace mhf
