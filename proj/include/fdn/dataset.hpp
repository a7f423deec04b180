#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fdn/matrix.hpp"

namespace fdn {

enum class TaskKind { Regression, Binary };

std::string_view to_string(TaskKind kind);
TaskKind parse_task_kind(std::string_view text);

struct TaskInfo {
    std::string name;
    TaskKind kind = TaskKind::Regression;

    friend bool operator==(const TaskInfo&, const TaskInfo&) = default;
};

/// Row-major grid of categorical ids.
struct IndexGrid {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint32_t> values;

    IndexGrid() = default;
    IndexGrid(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0) {}

    std::uint32_t& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
    std::uint32_t operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }

    friend bool operator==(const IndexGrid&, const IndexGrid&) = default;
};

enum class DatasetName { A, B, I, External };

std::string_view to_string(DatasetName name);

/// Features plus one label column per task.
///
/// `features` is empty when there are no dense fields; `categorical` has zero
/// columns when there are no categorical fields.
struct Dataset {
    DatasetName name = DatasetName::External;
    std::vector<std::string> dense_names;
    Matrix features;
    std::vector<std::string> categorical_names;
    IndexGrid categorical;
    std::vector<TaskInfo> tasks;
    std::vector<std::vector<double>> labels;

    std::size_t size() const;
    std::size_t dense_width() const { return dense_names.size(); }

    /// Throws DataError when any structural invariant is violated.
    void validate() const;

    /// Copies the given rows, in order.
    Dataset select_rows(std::span<const std::size_t> rows) const;

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

}  // namespace fdn
