#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "fdn/datagen.hpp"
#include "fdn/training.hpp"

namespace fdn {

/// Synthetic multi-task benchmark: single-task oracles on datasets A and B,
/// multi-task models on dataset I, optional FDN ablations.
struct BenchmarkConfig {
    SynthConfig synth;  // n_samples and seed are overridden per seed
    std::size_t n_train = 50000;
    std::size_t n_test = 10000;
    std::size_t seeds = 5;
    std::uint64_t first_seed = 1;

    TrainConfig train;

    std::vector<std::size_t> expert_widths{128, 64};
    std::size_t tower_width = 32;
    std::size_t mmoe_experts = 8;
    std::size_t cgc_shared = 4;
    std::size_t cgc_specific = 4;
    std::size_t ple_levels = 2;
    std::size_t fdn_dcp = 2;

    bool ablations = true;
    /// Rows of the test split used by the orthogonality diagnostic.
    std::size_t diagnostic_rows = 2000;
    /// 0 means FDN_THREADS, falling back to the number of cores.
    std::size_t threads = 0;

    void validate() const;
    nlohmann::json to_json() const;
};

/// Outcome of one training run inside the benchmark.
struct BenchmarkRun {
    std::uint64_t seed = 0;
    std::string label;    // oracle_a, oracle_b, mmoe, cgc, ple, fdn, fdn_no_orth, ...
    std::string dataset;  // A, B or I
    std::vector<double> mse;  // per benchmark task (A, B); NaN when not trained on that task
    std::vector<double> gap;  // percent vs oracle; NaN when not applicable
    std::size_t param_count = 0;
    double initial_task_loss = 0.0;
    double final_task_loss = 0.0;
    double orth_cosine = -1.0;  // FDN variants only
    double final_orth_loss = -1.0;
    double wall_seconds = 0.0;
};

struct BenchmarkResult {
    BenchmarkConfig config;
    std::vector<BenchmarkRun> runs;  // ordered by seed, then job

    std::vector<const BenchmarkRun*> select(const std::string& label) const;
};

/// Default benchmark specs for a two-task regression problem.
ModelSpec benchmark_spec(ModelKind kind, const BenchmarkConfig& config, std::vector<TaskInfo> tasks);

/// Runs every job; `progress` (if set) is called after each run finishes.
BenchmarkResult run_synthetic_benchmark(const BenchmarkConfig& config,
                                        const std::function<void(const BenchmarkRun&)>& progress = {});

/// Writes table1_gap.csv, table3_ablation.csv (with ablations),
/// orthogonality.csv (with ablations), runs.csv and summary.csv.
void write_benchmark_tables(const BenchmarkResult& result, const std::filesystem::path& dir);

double median(std::vector<double> values);
/// Interquartile range with linear interpolation between order statistics.
double iqr(std::vector<double> values);

/// FDN_THREADS if set and positive, otherwise the number of cores (at least 1).
std::size_t default_thread_count();

}  // namespace fdn
