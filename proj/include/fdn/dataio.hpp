#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fdn/dataset.hpp"

namespace fdn {

struct CategoricalField {
    std::string name;
    std::size_t vocabulary_size = 1;

    friend bool operator==(const CategoricalField&, const CategoricalField&) = default;
};

/// Describes the columns of a tabular file: which are labels (tasks), which
/// are dense features and which are categorical ids.
///
/// Categorical id 0 is reserved for unknown values; ids outside
/// [1, vocabulary_size) are mapped to it on load.
struct Schema {
    std::vector<TaskInfo> tasks;
    std::vector<CategoricalField> categorical_fields;
    std::vector<std::string> dense_fields;
    std::size_t embedding_dim = 8;

    void validate() const;

    nlohmann::json to_json() const;
    /// Accepts either a bare schema object or a document with a "schema" member
    /// (the synthetic-data sidecar).
    static Schema from_json(const nlohmann::json& j);
    static Schema load(const std::filesystem::path& path);

    std::vector<std::size_t> vocabulary_sizes() const;

    friend bool operator==(const Schema&, const Schema&) = default;
};

Schema schema_of(const Dataset& ds, std::size_t embedding_dim = 8);

struct LoadResult {
    Dataset dataset;
    std::size_t skipped_rows = 0;
};

/// Parses a comma-separated file with a header row. Rows that cannot be
/// parsed are skipped and counted.
LoadResult load_csv(const std::filesystem::path& path, const Schema& schema);

/// Header: dense names, categorical names, task names. Values use the
/// shortest round-trip decimal form.
void write_csv(const Dataset& ds, const std::filesystem::path& path);

/// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);

/// Uniform subset of `n` rows drawn by a seeded partial Fisher-Yates shuffle.
Dataset sample_without_replacement(const Dataset& ds, std::size_t n, std::uint64_t seed);

/// Seeded permutation of [0, n).
std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed);

struct Batch {
    Matrix dense;
    IndexGrid categorical;
    std::vector<Matrix> labels;  // one b x 1 column per task
    std::vector<std::size_t> rows;

    std::size_t size() const { return rows.size(); }
};

Batch make_batch(const Dataset& ds, std::span<const std::size_t> rows);

/// Shuffles once, then yields contiguous slices; the final batch may be short.
class BatchStream {
public:
    BatchStream(const Dataset& ds, std::size_t batch_size, std::uint64_t shuffle_seed);

    std::optional<Batch> next();
    std::size_t batch_count() const;

private:
    const Dataset* ds_;
    std::size_t batch_size_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
};

}  // namespace fdn
