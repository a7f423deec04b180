#pragma once

#include <span>
#include <vector>

#include "fdn/autodiff.hpp"
#include "fdn/dataset.hpp"
#include "fdn/models.hpp"

namespace fdn {

struct LossWeights {
    double task = 1.0;
    double orth = 1.0;
    double aux = 1.0;

    void validate() const;
};

enum class OrthMode {
    BatchGram,  // sum of ||Fs^T Fp||_F^2 / b^2 over pairs
    PerSample,  // sum over pairs of the mean squared row-wise dot product
};

/// Sum over tasks of mean BCE (binary, computed from logits) or mean MSE
/// (regression). Throws DataError on a non-{0,1} label for a binary task.
Var task_loss(std::span<const Var> logits, std::span<const Matrix> labels, std::span<const TaskInfo> tasks);

/// Orthogonality penalty between paired shared and specific feature matrices.
/// Zero when there are no pairs.
Var orth_loss(Tape& tape, const std::vector<std::vector<Var>>& shared, const std::vector<std::vector<Var>>& specific,
              OrthMode mode = OrthMode::BatchGram);

/// Each auxiliary head is scored against its task's labels with the task's
/// loss form. Zero when there are no heads.
Var aux_loss(Tape& tape, const std::vector<std::vector<Var>>& aux_logits, std::span<const Matrix> labels,
             std::span<const TaskInfo> tasks);

struct LossParts {
    Var task;
    Var orth;
    Var aux;
    Var total;
};

Var total_loss(Var task, Var orth, Var aux, const LossWeights& weights);

/// All components of the objective for one forward pass.
LossParts compute_losses(Tape& tape, const ForwardOutput& out, std::span<const Matrix> labels,
                         std::span<const TaskInfo> tasks, const LossWeights& weights,
                         OrthMode mode = OrthMode::BatchGram);

}  // namespace fdn
