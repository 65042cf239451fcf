#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace normkit {

using Vector = std::vector<double>;

// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
    Vector col(std::size_t c) const;

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool all_finite() const;
    void fill(double v);

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// a * b
Matrix matmul(const Matrix& a, const Matrix& b);
// a^T * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// a * b^T
Matrix matmul_nt(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& a);

// Rows of `rows` gathered in the given order.
Matrix take_rows(const Matrix& m, std::span<const std::size_t> rows);
// Horizontal concatenation; row counts must agree.
Matrix hconcat(const Matrix& a, const Matrix& b);
Matrix from_rows(const std::vector<Vector>& rows, std::size_t cols);

// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
// Throws NumericError if a pivot is not strictly positive.
Matrix cholesky(const Matrix& spd);
// Solves L y = b for lower-triangular L.
Vector forward_substitute(const Matrix& lower, std::span<const double> b);
// Solves L^T x = y for lower-triangular L.
Vector backward_substitute_t(const Matrix& lower, std::span<const double> y);

double dot(std::span<const double> a, std::span<const double> b);

} // namespace normkit
