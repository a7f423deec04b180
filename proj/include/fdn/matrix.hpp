#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace fdn {

/// Dense row-major matrix of doubles. The sole value type of the toolkit.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Matrix column(std::span<const double> values);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }
    std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

    bool same_shape(const Matrix& other) const noexcept {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }
    bool all_finite() const noexcept;
    void fill(double v);

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> values_;
};

std::string shape_string(const Matrix& m);

Matrix transpose(const Matrix& m);

// GEMM kernels; each accumulates into `out`, which must already be sized.
void gemm_nn_acc(const Matrix& a, const Matrix& b, Matrix& out);  // out += a * b
void gemm_tn_acc(const Matrix& a, const Matrix& b, Matrix& out);  // out += a^T * b
void gemm_nt_acc(const Matrix& a, const Matrix& b, Matrix& out);  // out += a * b^T

Matrix matmul(const Matrix& a, const Matrix& b);

/// out += alpha * x (same shape).
void axpy(double alpha, const Matrix& x, Matrix& out);

}  // namespace fdn
