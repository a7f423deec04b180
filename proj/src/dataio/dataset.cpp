#include "fdn/dataset.hpp"

#include "fdn/errors.hpp"

namespace fdn {

std::string_view to_string(TaskKind kind) {
    return kind == TaskKind::Binary ? "binary" : "regression";
}

TaskKind parse_task_kind(std::string_view text) {
    if (text == "binary") return TaskKind::Binary;
    if (text == "regression") return TaskKind::Regression;
    throw DataError("unknown task kind '" + std::string(text) + "'");
}

std::string_view to_string(DatasetName name) {
    switch (name) {
        case DatasetName::A: return "A";
        case DatasetName::B: return "B";
        case DatasetName::I: return "I";
        case DatasetName::External: return "external";
    }
    return "external";
}

std::size_t Dataset::size() const {
    if (!labels.empty()) return labels.front().size();
    if (!features.empty()) return features.rows();
    return categorical.rows;
}

void Dataset::validate() const {
    const std::size_t n = size();
    if (n == 0) throw DataError("dataset is empty");
    if (tasks.empty()) throw DataError("dataset has no tasks");
    if (labels.size() != tasks.size()) throw DataError("label column count does not match task count");
    for (std::size_t k = 0; k < tasks.size(); ++k) {
        if (labels[k].size() != n) throw DataError("label column '" + tasks[k].name + "' has the wrong length");
        if (tasks[k].kind == TaskKind::Binary) {
            for (double y : labels[k]) {
                if (y != 0.0 && y != 1.0) throw DataError("binary task '" + tasks[k].name + "' has a label outside {0,1}");
            }
        }
    }
    if (dense_names.empty() != features.empty()) throw DataError("dense feature names do not match feature matrix");
    if (!features.empty() && (features.rows() != n || features.cols() != dense_names.size())) {
        throw DataError("feature matrix shape " + shape_string(features) + " does not match dataset");
    }
    if (categorical.cols != categorical_names.size()) throw DataError("categorical names do not match id grid");
    if (categorical.cols > 0 && categorical.rows != n) throw DataError("categorical grid has the wrong row count");
    if (dense_names.empty() && categorical_names.empty()) throw DataError("dataset has no feature fields");
}

Dataset Dataset::select_rows(std::span<const std::size_t> rows) const {
    const std::size_t n = size();
    Dataset out;
    out.name = name;
    out.dense_names = dense_names;
    out.categorical_names = categorical_names;
    out.tasks = tasks;
    for (std::size_t r : rows) {
        if (r >= n) throw DataError("row index " + std::to_string(r) + " out of range");
    }
    if (rows.empty()) throw DataError("selection is empty");
    if (!features.empty()) {
        out.features = Matrix(rows.size(), features.cols());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            auto src = features.row(rows[i]);
            std::copy(src.begin(), src.end(), out.features.row(i).begin());
        }
    }
    out.categorical = IndexGrid(categorical.cols > 0 ? rows.size() : 0, categorical.cols);
    for (std::size_t i = 0; i < rows.size() && categorical.cols > 0; ++i) {
        for (std::size_t c = 0; c < categorical.cols; ++c) out.categorical(i, c) = categorical(rows[i], c);
    }
    out.labels.resize(labels.size());
    for (std::size_t k = 0; k < labels.size(); ++k) {
        out.labels[k].reserve(rows.size());
        for (std::size_t r : rows) out.labels[k].push_back(labels[k][r]);
    }
    return out;
}

}  // namespace fdn
