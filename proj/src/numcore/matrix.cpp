#include "fdn/matrix.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

#include "fdn/errors.hpp"

namespace fdn {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {
    if (rows == 0 || cols == 0) {
        throw ShapeError("matrix dimensions must be positive, got " + std::to_string(rows) + "x" +
                         std::to_string(cols));
    }
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (rows == 0 || cols == 0) {
        throw ShapeError("matrix dimensions must be positive, got " + std::to_string(rows) + "x" +
                         std::to_string(cols));
    }
    if (values_.size() != rows * cols) {
        throw ShapeError("matrix " + std::to_string(rows) + "x" + std::to_string(cols) + " given " +
                         std::to_string(values_.size()) + " values");
    }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> v;
    v.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw ShapeError("ragged initializer for matrix");
        v.insert(v.end(), row.begin(), row.end());
    }
    return Matrix(r, c, std::move(v));
}

Matrix Matrix::column(std::span<const double> values) {
    return Matrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

bool Matrix::all_finite() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](double x) { return std::isfinite(x); });
}

void Matrix::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

std::string shape_string(const Matrix& m) {
    return "[" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + "]";
}

Matrix transpose(const Matrix& m) {
    Matrix t(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
    }
    return t;
}

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

ConstMap view(const Matrix& m) { return ConstMap(m.values().data(), m.rows(), m.cols()); }
MutMap view(Matrix& m) { return MutMap(m.values().data(), m.rows(), m.cols()); }

}  // namespace

void gemm_nn_acc(const Matrix& a, const Matrix& b, Matrix& out) {
    view(out).noalias() += view(a) * view(b);
}

void gemm_tn_acc(const Matrix& a, const Matrix& b, Matrix& out) {
    view(out).noalias() += view(a).transpose() * view(b);
}

void gemm_nt_acc(const Matrix& a, const Matrix& b, Matrix& out) {
    view(out).noalias() += view(a) * view(b).transpose();
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul shape mismatch: " + shape_string(a) + " * " + shape_string(b));
    }
    Matrix out(a.rows(), b.cols());
    gemm_nn_acc(a, b, out);
    return out;
}

void axpy(double alpha, const Matrix& x, Matrix& out) {
    auto src = x.values();
    auto dst = out.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += alpha * src[i];
}

}  // namespace fdn
