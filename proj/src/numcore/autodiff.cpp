#include "fdn/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "fdn/errors.hpp"

namespace fdn {

double stable_sigmoid(double x) noexcept {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

const Matrix& Var::value() const {
    if (!tape_) throw AutodiffError("use of an unbound Var");
    return tape_->node(*this).value();
}

const Matrix& Var::grad() const {
    if (!tape_) throw AutodiffError("use of an unbound Var");
    const auto& n = tape_->node(*this);
    if (n.param) return n.param->grad;
    return n.grad;
}

bool Var::requires_grad() const {
    if (!tape_) throw AutodiffError("use of an unbound Var");
    return tape_->node(*this).requires_grad;
}

Tape::Node& Tape::node(Var v) {
    if (v.tape_ != this || v.id_ >= nodes_.size()) throw AutodiffError("Var does not belong to this tape");
    return nodes_[v.id_];
}

const Tape::Node& Tape::node(Var v) const {
    if (v.tape_ != this || v.id_ >= nodes_.size()) throw AutodiffError("Var does not belong to this tape");
    return nodes_[v.id_];
}

Var Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::constant(Matrix value) {
    Node n;
    n.owned_value = std::move(value);
    return push(std::move(n));
}

Var Tape::variable(Matrix value) {
    Node n;
    n.owned_value = std::move(value);
    n.requires_grad = true;
    return push(std::move(n));
}

Var Tape::parameter(Parameter& p) {
    if (!p.grad.same_shape(p.value)) p.grad = Matrix(p.value.rows(), p.value.cols());
    Node n;
    n.external_value = &p.value;
    n.param = &p;
    n.requires_grad = true;
    return push(std::move(n));
}

void Tape::reset_gradients() {
    for (auto& n : nodes_) {
        if (n.param) {
            n.param->grad.fill(0.0);
        } else if (!n.grad.empty()) {
            n.grad.fill(0.0);
        }
    }
    backward_done_ = false;
}

namespace detail {

// Shared plumbing for the op implementations below.
struct Recorder {
    static Tape& tape_of(std::initializer_list<Var> vars) {
        Tape* t = nullptr;
        for (const Var& v : vars) {
            if (!v.valid()) throw AutodiffError("use of an unbound Var");
            if (t && v.tape() != t) throw AutodiffError("operands recorded on different tapes");
            t = v.tape();
        }
        return *t;
    }

    static const Matrix& val(Tape& t, std::uint32_t id) { return t.nodes_[id].value(); }

    static Var record(Tape& t, Tape::Op op, std::vector<std::uint32_t> parents, Matrix value,
                      const char* name) {
        if (!value.all_finite()) throw NumericError(std::string(name) + " produced a non-finite value");
        Tape::Node n;
        n.op = op;
        n.owned_value = std::move(value);
        for (auto p : parents) n.requires_grad = n.requires_grad || t.nodes_[p].requires_grad;
        n.parents = std::move(parents);
        return t.push(std::move(n));
    }

    static Tape::Node& last(Tape& t) { return t.nodes_.back(); }

    template <typename F>
    static Var elementwise2(Var a, Var b, Tape::Op op, const char* name, F f);
    template <typename F>
    static Var elementwise1(Var a, Tape::Op op, const char* name, F f);

    static Matrix& grad_slot(Tape& t, std::uint32_t id) {
        auto& n = t.nodes_[id];
        if (n.param) return n.param->grad;
        if (n.grad.empty()) n.grad = Matrix(n.value().rows(), n.value().cols());
        return n.grad;
    }
};

}  // namespace detail

using detail::Recorder;

void Tape::backward(Var loss) {
    Node& l = node(loss);
    if (l.value().rows() != 1 || l.value().cols() != 1) {
        throw AutodiffError("backward requires a 1x1 loss, got " + shape_string(l.value()));
    }
    if (backward_done_) throw AutodiffError("backward called twice without reset_gradients");
    backward_done_ = true;
    if (!l.requires_grad) return;

    if (l.param) {
        l.param->grad(0, 0) += 1.0;
        return;
    }
    if (l.grad.empty()) l.grad = Matrix(1, 1);
    l.grad(0, 0) += 1.0;

    for (std::int64_t id = loss.id(); id >= 0; --id) {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.op == Op::Leaf || !n.requires_grad || n.grad.empty()) continue;
        propagate(static_cast<std::uint32_t>(id));
    }
}

void Tape::propagate(std::uint32_t id) {
    // grad_slot touches other nodes only; nodes_ is never reallocated here.
    const Node& n = nodes_[id];
    const Matrix& g = n.grad;
    const auto& ps = n.parents;
    auto wants = [&](std::size_t i) { return nodes_[ps[i]].requires_grad; };
    auto pval = [&](std::size_t i) -> const Matrix& { return nodes_[ps[i]].value(); };
    auto slot = [&](std::size_t i) -> Matrix& { return Recorder::grad_slot(*this, ps[i]); };

    switch (n.op) {
        case Op::Leaf:
            break;
        case Op::MatMul:
            if (wants(0)) gemm_nt_acc(g, pval(1), slot(0));
            if (wants(1)) gemm_tn_acc(pval(0), g, slot(1));
            break;
        case Op::MatMulTN:
            // out = a^T b ; da = b g^T ; db = a g
            if (wants(0)) gemm_nt_acc(pval(1), g, slot(0));
            if (wants(1)) gemm_nn_acc(pval(0), g, slot(1));
            break;
        case Op::AddBias:
            if (wants(0)) axpy(1.0, g, slot(0));
            if (wants(1)) {
                Matrix& gb = slot(1);
                for (std::size_t r = 0; r < g.rows(); ++r) {
                    auto row = g.row(r);
                    for (std::size_t c = 0; c < g.cols(); ++c) gb(0, c) += row[c];
                }
            }
            break;
        case Op::Add:
            if (wants(0)) axpy(1.0, g, slot(0));
            if (wants(1)) axpy(1.0, g, slot(1));
            break;
        case Op::Sub:
            if (wants(0)) axpy(1.0, g, slot(0));
            if (wants(1)) axpy(-1.0, g, slot(1));
            break;
        case Op::Mul: {
            if (wants(0)) {
                auto dst = slot(0).values();
                auto other = pval(1).values();
                auto gv = g.values();
                for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += gv[i] * other[i];
            }
            if (wants(1)) {
                auto dst = slot(1).values();
                auto other = pval(0).values();
                auto gv = g.values();
                for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += gv[i] * other[i];
            }
            break;
        }
        case Op::Scale:
            if (wants(0)) axpy(n.scalar, g, slot(0));
            break;
        case Op::Relu:
            if (wants(0)) {
                auto dst = slot(0).values();
                auto x = pval(0).values();
                auto gv = g.values();
                for (std::size_t i = 0; i < dst.size(); ++i) {
                    if (x[i] > 0.0) dst[i] += gv[i];
                }
            }
            break;
        case Op::Sigmoid:
            if (wants(0)) {
                auto dst = slot(0).values();
                auto y = n.value().values();
                auto gv = g.values();
                for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += gv[i] * y[i] * (1.0 - y[i]);
            }
            break;
        case Op::SoftmaxRows:
            if (wants(0)) {
                Matrix& dst = slot(0);
                const Matrix& y = n.value();
                for (std::size_t r = 0; r < y.rows(); ++r) {
                    auto yr = y.row(r);
                    auto gr = g.row(r);
                    double dot = 0.0;
                    for (std::size_t c = 0; c < y.cols(); ++c) dot += gr[c] * yr[c];
                    auto dr = dst.row(r);
                    for (std::size_t c = 0; c < y.cols(); ++c) dr[c] += yr[c] * (gr[c] - dot);
                }
            }
            break;
        case Op::Concat: {
            std::size_t offset = 0;
            for (std::size_t i = 0; i < ps.size(); ++i) {
                const std::size_t w = pval(i).cols();
                if (wants(i)) {
                    Matrix& dst = slot(i);
                    for (std::size_t r = 0; r < g.rows(); ++r) {
                        auto gr = g.row(r);
                        auto dr = dst.row(r);
                        for (std::size_t c = 0; c < w; ++c) dr[c] += gr[offset + c];
                    }
                }
                offset += w;
            }
            break;
        }
        case Op::SliceCols:
            if (wants(0)) {
                Matrix& dst = slot(0);
                for (std::size_t r = 0; r < g.rows(); ++r) {
                    auto gr = g.row(r);
                    auto dr = dst.row(r);
                    for (std::size_t c = 0; c < g.cols(); ++c) dr[n.offset + c] += gr[c];
                }
            }
            break;
        case Op::ScaleRows: {
            const Matrix& a = pval(0);
            const Matrix& s = pval(1);
            if (wants(0)) {
                Matrix& dst = slot(0);
                for (std::size_t r = 0; r < a.rows(); ++r) {
                    const double sr = s(r, 0);
                    auto gr = g.row(r);
                    auto dr = dst.row(r);
                    for (std::size_t c = 0; c < a.cols(); ++c) dr[c] += gr[c] * sr;
                }
            }
            if (wants(1)) {
                Matrix& dst = slot(1);
                for (std::size_t r = 0; r < a.rows(); ++r) {
                    auto gr = g.row(r);
                    auto ar = a.row(r);
                    double acc = 0.0;
                    for (std::size_t c = 0; c < a.cols(); ++c) acc += gr[c] * ar[c];
                    dst(r, 0) += acc;
                }
            }
            break;
        }
        case Op::GatherRows:
            if (wants(0)) {
                Matrix& dst = slot(0);
                for (std::size_t r = 0; r < n.indices.size(); ++r) {
                    auto gr = g.row(r);
                    auto dr = dst.row(n.indices[r]);
                    for (std::size_t c = 0; c < gr.size(); ++c) dr[c] += gr[c];
                }
            }
            break;
        case Op::Sum:
            if (wants(0)) {
                for (double& v : slot(0).values()) v += g(0, 0);
            }
            break;
        case Op::SumSquares:
            if (wants(0)) axpy(2.0 * g(0, 0), pval(0), slot(0));
            break;
        case Op::RowDot: {
            const Matrix& a = pval(0);
            const Matrix& b = pval(1);
            for (int side = 0; side < 2; ++side) {
                if (!wants(side)) continue;
                const Matrix& other = side == 0 ? b : a;
                Matrix& dst = slot(side);
                for (std::size_t r = 0; r < a.rows(); ++r) {
                    const double gr = g(r, 0);
                    auto orow = other.row(r);
                    auto drow = dst.row(r);
                    for (std::size_t c = 0; c < a.cols(); ++c) drow[c] += gr * orow[c];
                }
            }
            break;
        }
        case Op::Mse:
            if (wants(0)) {
                const Matrix& p = pval(0);
                auto dst = slot(0).values();
                auto pv = p.values();
                auto tv = n.target.values();
                const double k = 2.0 * g(0, 0) / static_cast<double>(pv.size());
                for (std::size_t i = 0; i < pv.size(); ++i) dst[i] += k * (pv[i] - tv[i]);
            }
            break;
        case Op::BceLogits:
            if (wants(0)) {
                const Matrix& z = pval(0);
                auto dst = slot(0).values();
                auto zv = z.values();
                auto tv = n.target.values();
                const double k = g(0, 0) / static_cast<double>(zv.size());
                for (std::size_t i = 0; i < zv.size(); ++i) dst[i] += k * (stable_sigmoid(zv[i]) - tv[i]);
            }
            break;
    }
}

// ---------------------------------------------------------------------------
// Forward definitions

Var matmul(Var a, Var b) {
    Tape& t = Recorder::tape_of({a, b});
    const Matrix& av = a.value();
    const Matrix& bv = b.value();
    if (av.cols() != bv.rows()) {
        throw ShapeError("matmul shape mismatch: " + shape_string(av) + " * " + shape_string(bv));
    }
    Matrix out(av.rows(), bv.cols());
    gemm_nn_acc(av, bv, out);
    return Recorder::record(t, Tape::Op::MatMul, {a.id(), b.id()}, std::move(out), "matmul");
}

Var matmul_tn(Var a, Var b) {
    Tape& t = Recorder::tape_of({a, b});
    const Matrix& av = a.value();
    const Matrix& bv = b.value();
    if (av.rows() != bv.rows()) {
        throw ShapeError("matmul_tn shape mismatch: " + shape_string(av) + "^T * " + shape_string(bv));
    }
    Matrix out(av.cols(), bv.cols());
    gemm_tn_acc(av, bv, out);
    return Recorder::record(t, Tape::Op::MatMulTN, {a.id(), b.id()}, std::move(out), "matmul_tn");
}

Var add_bias(Var a, Var bias) {
    Tape& t = Recorder::tape_of({a, bias});
    const Matrix& av = a.value();
    const Matrix& bv = bias.value();
    if (bv.rows() != 1 || bv.cols() != av.cols()) {
        throw ShapeError("add_bias shape mismatch: " + shape_string(av) + " + " + shape_string(bv));
    }
    Matrix out = av;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        for (std::size_t c = 0; c < out.cols(); ++c) row[c] += bv(0, c);
    }
    return Recorder::record(t, Tape::Op::AddBias, {a.id(), bias.id()}, std::move(out), "add_bias");
}

namespace detail {

template <typename F>
Var Recorder::elementwise2(Var a, Var b, Tape::Op op, const char* name, F f) {
    Tape& t = Recorder::tape_of({a, b});
    const Matrix& av = a.value();
    const Matrix& bv = b.value();
    if (!av.same_shape(bv)) {
        throw ShapeError(std::string(name) + " shape mismatch: " + shape_string(av) + " vs " + shape_string(bv));
    }
    Matrix out(av.rows(), av.cols());
    auto o = out.values();
    auto x = av.values();
    auto y = bv.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = f(x[i], y[i]);
    return Recorder::record(t, op, {a.id(), b.id()}, std::move(out), name);
}

template <typename F>
Var Recorder::elementwise1(Var a, Tape::Op op, const char* name, F f) {
    Tape& t = Recorder::tape_of({a});
    const Matrix& av = a.value();
    Matrix out(av.rows(), av.cols());
    auto o = out.values();
    auto x = av.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = f(x[i]);
    return Recorder::record(t, op, {a.id()}, std::move(out), name);
}

}  // namespace detail

Var add(Var a, Var b) {
    return Recorder::elementwise2(a, b, Tape::Op::Add, "add", [](double x, double y) { return x + y; });
}

Var sub(Var a, Var b) {
    return Recorder::elementwise2(a, b, Tape::Op::Sub, "sub", [](double x, double y) { return x - y; });
}

Var mul(Var a, Var b) {
    return Recorder::elementwise2(a, b, Tape::Op::Mul, "mul", [](double x, double y) { return x * y; });
}

Var scale(Var a, double c) {
    Var out = Recorder::elementwise1(a, Tape::Op::Scale, "scale", [c](double x) { return c * x; });
    Recorder::last(*a.tape()).scalar = c;
    return out;
}

Var relu(Var a) {
    return Recorder::elementwise1(a, Tape::Op::Relu, "relu", [](double x) { return x > 0.0 ? x : 0.0; });
}

Var sigmoid(Var a) {
    return Recorder::elementwise1(a, Tape::Op::Sigmoid, "sigmoid", [](double x) { return stable_sigmoid(x); });
}

Var softmax_rows(Var a) {
    Tape& t = Recorder::tape_of({a});
    const Matrix& av = a.value();
    Matrix out(av.rows(), av.cols());
    for (std::size_t r = 0; r < av.rows(); ++r) {
        auto in = av.row(r);
        auto o = out.row(r);
        const double mx = *std::max_element(in.begin(), in.end());
        double total = 0.0;
        for (std::size_t c = 0; c < in.size(); ++c) {
            o[c] = std::exp(in[c] - mx);
            total += o[c];
        }
        for (double& v : o) v /= total;
    }
    return Recorder::record(t, Tape::Op::SoftmaxRows, {a.id()}, std::move(out), "softmax_rows");
}

Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("concat_cols needs at least one part");
    Tape* tp = parts.front().tape();
    if (!tp) throw AutodiffError("use of an unbound Var");
    const std::size_t rows = parts.front().rows();
    std::size_t width = 0;
    std::vector<std::uint32_t> ids;
    ids.reserve(parts.size());
    for (const Var& p : parts) {
        if (p.tape() != tp) throw AutodiffError("operands recorded on different tapes");
        if (p.rows() != rows) {
            throw ShapeError("concat_cols row mismatch: " + std::to_string(rows) + " vs " +
                             std::to_string(p.rows()));
        }
        width += p.cols();
        ids.push_back(p.id());
    }
    Matrix out(rows, width);
    std::size_t offset = 0;
    for (const Var& p : parts) {
        const Matrix& v = p.value();
        for (std::size_t r = 0; r < rows; ++r) {
            auto src = v.row(r);
            std::copy(src.begin(), src.end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(offset));
        }
        offset += v.cols();
    }
    return Recorder::record(*tp, Tape::Op::Concat, std::move(ids), std::move(out), "concat_cols");
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
    Tape& t = Recorder::tape_of({a});
    const Matrix& av = a.value();
    if (count == 0 || begin + count > av.cols()) {
        throw ShapeError("slice_cols [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") out of range for " + shape_string(av));
    }
    Matrix out(av.rows(), count);
    for (std::size_t r = 0; r < av.rows(); ++r) {
        auto src = av.row(r).subspan(begin, count);
        std::copy(src.begin(), src.end(), out.row(r).begin());
    }
    Var v = Recorder::record(t, Tape::Op::SliceCols, {a.id()}, std::move(out), "slice_cols");
    Recorder::last(t).offset = begin;
    return v;
}

Var scale_rows(Var a, Var s) {
    Tape& t = Recorder::tape_of({a, s});
    const Matrix& av = a.value();
    const Matrix& sv = s.value();
    if (sv.cols() != 1 || sv.rows() != av.rows()) {
        throw ShapeError("scale_rows shape mismatch: " + shape_string(av) + " by " + shape_string(sv));
    }
    Matrix out(av.rows(), av.cols());
    for (std::size_t r = 0; r < av.rows(); ++r) {
        const double k = sv(r, 0);
        auto src = av.row(r);
        auto dst = out.row(r);
        for (std::size_t c = 0; c < src.size(); ++c) dst[c] = k * src[c];
    }
    return Recorder::record(t, Tape::Op::ScaleRows, {a.id(), s.id()}, std::move(out), "scale_rows");
}

Var gather_rows(Var table, std::span<const std::uint32_t> indices) {
    Tape& t = Recorder::tape_of({table});
    const Matrix& tv = table.value();
    if (indices.empty()) throw ShapeError("gather_rows with no indices");
    Matrix out(indices.size(), tv.cols());
    for (std::size_t r = 0; r < indices.size(); ++r) {
        if (indices[r] >= tv.rows()) {
            throw ShapeError("gather_rows index " + std::to_string(indices[r]) + " out of range for " +
                             shape_string(tv));
        }
        auto src = tv.row(indices[r]);
        std::copy(src.begin(), src.end(), out.row(r).begin());
    }
    Var v = Recorder::record(t, Tape::Op::GatherRows, {table.id()}, std::move(out), "gather_rows");
    Recorder::last(t).indices.assign(indices.begin(), indices.end());
    return v;
}

Var sum(Var a) {
    Tape& t = Recorder::tape_of({a});
    double total = 0.0;
    for (double v : a.value().values()) total += v;
    return Recorder::record(t, Tape::Op::Sum, {a.id()}, Matrix(1, 1, total), "sum");
}

Var sum_squares(Var a) {
    Tape& t = Recorder::tape_of({a});
    double total = 0.0;
    for (double v : a.value().values()) total += v * v;
    return Recorder::record(t, Tape::Op::SumSquares, {a.id()}, Matrix(1, 1, total), "sum_squares");
}

Var row_dot(Var a, Var b) {
    Tape& t = Recorder::tape_of({a, b});
    const Matrix& av = a.value();
    const Matrix& bv = b.value();
    if (!av.same_shape(bv)) {
        throw ShapeError("row_dot shape mismatch: " + shape_string(av) + " vs " + shape_string(bv));
    }
    Matrix out(av.rows(), 1);
    for (std::size_t r = 0; r < av.rows(); ++r) {
        auto x = av.row(r);
        auto y = bv.row(r);
        double acc = 0.0;
        for (std::size_t c = 0; c < x.size(); ++c) acc += x[c] * y[c];
        out(r, 0) = acc;
    }
    return Recorder::record(t, Tape::Op::RowDot, {a.id(), b.id()}, std::move(out), "row_dot");
}

Var mse_loss(Var pred, const Matrix& target) {
    Tape& t = Recorder::tape_of({pred});
    const Matrix& p = pred.value();
    if (!p.same_shape(target)) {
        throw ShapeError("mse_loss shape mismatch: " + shape_string(p) + " vs " + shape_string(target));
    }
    double total = 0.0;
    auto pv = p.values();
    auto tv = target.values();
    for (std::size_t i = 0; i < pv.size(); ++i) {
        const double d = pv[i] - tv[i];
        total += d * d;
    }
    Var v = Recorder::record(t, Tape::Op::Mse, {pred.id()}, Matrix(1, 1, total / static_cast<double>(pv.size())),
                             "mse_loss");
    Recorder::last(t).target = target;
    return v;
}

Var bce_with_logits(Var logits, const Matrix& target) {
    Tape& t = Recorder::tape_of({logits});
    const Matrix& z = logits.value();
    if (!z.same_shape(target)) {
        throw ShapeError("bce_with_logits shape mismatch: " + shape_string(z) + " vs " + shape_string(target));
    }
    double total = 0.0;
    auto zv = z.values();
    auto tv = target.values();
    for (std::size_t i = 0; i < zv.size(); ++i) {
        const double x = zv[i];
        total += std::max(x, 0.0) - x * tv[i] + std::log1p(std::exp(-std::abs(x)));
    }
    Var v = Recorder::record(t, Tape::Op::BceLogits, {logits.id()},
                             Matrix(1, 1, total / static_cast<double>(zv.size())), "bce_with_logits");
    Recorder::last(t).target = target;
    return v;
}

}  // namespace fdn
