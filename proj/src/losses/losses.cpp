#include "fdn/losses.hpp"

#include <stdexcept>

#include "fdn/errors.hpp"

namespace fdn {

void LossWeights::validate() const {
    if (!(task >= 0.0) || !(orth >= 0.0) || !(aux >= 0.0)) {
        throw std::invalid_argument("loss weights must be non-negative");
    }
}

namespace {

Var single_task_loss(Var logits, const Matrix& labels, const TaskInfo& task) {
    if (logits.rows() != labels.rows() || logits.cols() != 1 || labels.cols() != 1) {
        throw ShapeError("task '" + task.name + "': logits " + shape_string(logits.value()) + " vs labels " +
                         shape_string(labels));
    }
    if (task.kind == TaskKind::Binary) {
        for (double y : labels.values()) {
            if (y != 0.0 && y != 1.0) throw DataError("binary task '" + task.name + "' has a label outside {0,1}");
        }
        return bce_with_logits(logits, labels);
    }
    return mse_loss(logits, labels);
}

void check_counts(std::size_t heads, std::span<const Matrix> labels, std::span<const TaskInfo> tasks) {
    if (heads != labels.size() || heads != tasks.size()) {
        throw ShapeError("loss: " + std::to_string(heads) + " heads, " + std::to_string(labels.size()) +
                         " label columns, " + std::to_string(tasks.size()) + " tasks");
    }
}

Var accumulate(Var acc, Var term) { return acc.valid() ? add(acc, term) : term; }

}  // namespace

Var task_loss(std::span<const Var> logits, std::span<const Matrix> labels, std::span<const TaskInfo> tasks) {
    check_counts(logits.size(), labels, tasks);
    if (logits.empty()) throw ShapeError("task_loss needs at least one task");
    Var acc;
    for (std::size_t k = 0; k < logits.size(); ++k) acc = accumulate(acc, single_task_loss(logits[k], labels[k], tasks[k]));
    return acc;
}

Var orth_loss(Tape& tape, const std::vector<std::vector<Var>>& shared, const std::vector<std::vector<Var>>& specific,
              OrthMode mode) {
    if (shared.size() != specific.size()) throw ShapeError("orth_loss: shared and specific task counts differ");
    Var acc;
    for (std::size_t k = 0; k < shared.size(); ++k) {
        if (shared[k].size() != specific[k].size()) throw ShapeError("orth_loss: pair counts differ");
        for (std::size_t m = 0; m < shared[k].size(); ++m) {
            const Var s = shared[k][m], p = specific[k][m];
            if (!s.value().same_shape(p.value())) {
                throw ShapeError("orth_loss: " + shape_string(s.value()) + " vs " + shape_string(p.value()));
            }
            const double b = static_cast<double>(s.rows());
            Var term = mode == OrthMode::BatchGram ? scale(sum_squares(matmul_tn(s, p)), 1.0 / (b * b))
                                                   : scale(sum_squares(row_dot(s, p)), 1.0 / b);
            acc = accumulate(acc, term);
        }
    }
    return acc.valid() ? acc : tape.constant(Matrix(1, 1));
}

Var aux_loss(Tape& tape, const std::vector<std::vector<Var>>& aux_logits, std::span<const Matrix> labels,
             std::span<const TaskInfo> tasks) {
    if (aux_logits.empty()) return tape.constant(Matrix(1, 1));
    check_counts(aux_logits.size(), labels, tasks);
    Var acc;
    for (std::size_t k = 0; k < aux_logits.size(); ++k) {
        for (const Var& logit : aux_logits[k]) acc = accumulate(acc, single_task_loss(logit, labels[k], tasks[k]));
    }
    return acc.valid() ? acc : tape.constant(Matrix(1, 1));
}

Var total_loss(Var task, Var orth, Var aux, const LossWeights& weights) {
    weights.validate();
    return add(add(scale(task, weights.task), scale(orth, weights.orth)), scale(aux, weights.aux));
}

LossParts compute_losses(Tape& tape, const ForwardOutput& out, std::span<const Matrix> labels,
                         std::span<const TaskInfo> tasks, const LossWeights& weights, OrthMode mode) {
    LossParts parts;
    parts.task = task_loss(out.logits, labels, tasks);
    parts.orth = orth_loss(tape, out.shared_features, out.specific_features, mode);
    parts.aux = aux_loss(tape, out.aux_logits, labels, tasks);
    parts.total = total_loss(parts.task, parts.orth, parts.aux, weights);
    return parts;
}

}  // namespace fdn
