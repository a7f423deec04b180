#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fdn/matrix.hpp"

namespace fdn {

/// A trainable matrix living outside any tape. Tapes read `value` and
/// accumulate into `grad`.
struct Parameter {
    std::string name;
    Matrix value;
    Matrix grad;

    Parameter(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}
};

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
public:
    Var() = default;

    const Matrix& value() const;
    const Matrix& grad() const;
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }
    bool requires_grad() const;

    Tape* tape() const noexcept { return tape_; }
    std::uint32_t id() const noexcept { return id_; }
    bool valid() const noexcept { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* t, std::uint32_t id) : tape_(t), id_(id) {}
    Tape* tape_ = nullptr;
    std::uint32_t id_ = 0;
};

namespace detail {
struct Recorder;
}

/// Reverse-mode tape. Nodes are appended in evaluation order, so the reverse
/// of insertion order is a valid reverse topological order.
///
/// Confined to a single thread. One backward() per tape until
/// reset_gradients() is called.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Matrix value);
    Var variable(Matrix value);
    Var parameter(Parameter& p);

    void backward(Var loss);
    /// Zeroes every node gradient and every bound parameter gradient.
    void reset_gradients();

    std::size_t size() const noexcept { return nodes_.size(); }

private:
    friend class Var;
    friend struct detail::Recorder;

public:
    /// Backward rule attached to a recorded node.
    enum class Op : std::uint8_t {
        Leaf,
        MatMul,
        MatMulTN,
        AddBias,
        Add,
        Sub,
        Mul,
        Scale,
        Relu,
        Sigmoid,
        SoftmaxRows,
        Concat,
        SliceCols,
        ScaleRows,
        GatherRows,
        Sum,
        SumSquares,
        RowDot,
        Mse,
        BceLogits,
    };

private:

    struct Node {
        Op op = Op::Leaf;
        bool requires_grad = false;
        std::vector<std::uint32_t> parents;
        Matrix owned_value;
        const Matrix* external_value = nullptr;
        Matrix grad;  // allocated lazily during backward
        Parameter* param = nullptr;
        double scalar = 0.0;
        std::size_t offset = 0;
        std::vector<std::uint32_t> indices;
        Matrix target;

        const Matrix& value() const { return external_value ? *external_value : owned_value; }
    };

    Node& node(Var v);
    const Node& node(Var v) const;
    Var push(Node n);
    void propagate(std::uint32_t id);

    std::vector<Node> nodes_;
    bool backward_done_ = false;
};

// Differentiable operations. All operands must live on the same tape.

Var matmul(Var a, Var b);
/// a^T * b, without materialising the transpose.
Var matmul_tn(Var a, Var b);
Var add_bias(Var a, Var bias);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var relu(Var a);
Var sigmoid(Var a);
Var softmax_rows(Var a);
Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t begin, std::size_t count);
/// Multiplies row r of `a` by s(r, 0).
Var scale_rows(Var a, Var s);
/// Row i of the result is row indices[i] of `table`.
Var gather_rows(Var table, std::span<const std::uint32_t> indices);
Var sum(Var a);
Var sum_squares(Var a);
/// Per-row dot product of two equally shaped matrices; r x 1.
Var row_dot(Var a, Var b);
/// Mean of (pred - target)^2 over all entries.
Var mse_loss(Var pred, const Matrix& target);
/// Mean binary cross-entropy computed from logits in the stable form
/// max(z, 0) - z*y + log(1 + exp(-|z|)).
Var bce_with_logits(Var logits, const Matrix& target);

double stable_sigmoid(double x) noexcept;

}  // namespace fdn
