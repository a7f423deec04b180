#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fdn/dataset.hpp"
#include "fdn/losses.hpp"
#include "fdn/metrics.hpp"
#include "fdn/models.hpp"

namespace fdn {

enum class OptimizerKind { SGD, Adam };

std::string_view to_string(OptimizerKind kind);
OptimizerKind parse_optimizer_kind(std::string_view text);

struct TrainConfig {
    std::size_t epochs = 5;
    std::size_t batch_size = 1024;
    OptimizerKind optimizer = OptimizerKind::Adam;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 1;
    LossWeights weights;
    OrthMode orth_mode = OrthMode::BatchGram;

    bool no_orth = false;
    bool no_aux = false;
    bool no_shared_fusion = false;

    /// Initial and final losses are measured on this many leading rows.
    std::size_t monitor_rows = 8192;

    void validate() const;
    /// Weights after applying the ablation flags.
    LossWeights effective_weights() const;
    /// Spec after applying the ablation flags.
    ModelSpec effective_spec(const ModelSpec& spec) const;

    nlohmann::json to_json() const;
};

class Optimizer {
public:
    virtual ~Optimizer() = default;
    virtual void step(const std::vector<Parameter*>& params) = 0;
};

class Sgd final : public Optimizer {
public:
    explicit Sgd(double lr) : lr_(lr) {}
    void step(const std::vector<Parameter*>& params) override;

private:
    double lr_;
};

class Adam final : public Optimizer {
public:
    Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}
    void step(const std::vector<Parameter*>& params) override;

private:
    double lr_, beta1_, beta2_, eps_;
    std::size_t t_ = 0;
    std::vector<Matrix> m_, v_;
};

std::unique_ptr<Optimizer> make_optimizer(const TrainConfig& config);

struct EpochLosses {
    std::size_t epoch = 0;
    double task = 0.0;
    double orth = 0.0;
    double aux = 0.0;
    double total = 0.0;

    friend bool operator==(const EpochLosses&, const EpochLosses&) = default;
};

struct TaskMetric {
    std::string task;
    MetricKind kind = MetricKind::MSE;
    double value = 0.0;
    std::optional<double> gap;

    friend bool operator==(const TaskMetric&, const TaskMetric&) = default;
};

struct RunReport {
    std::string model;
    std::uint64_t seed = 0;
    std::size_t param_count = 0;
    nlohmann::json config;
    nlohmann::json spec;
    double initial_task_loss = 0.0;
    double final_task_loss = 0.0;
    std::vector<EpochLosses> epochs;
    std::vector<TaskMetric> metrics;
    double wall_seconds = 0.0;

    /// Wall time is left out when `include_timing` is false.
    nlohmann::json to_json(bool include_timing = true) const;
};

struct TrainResult {
    Model model;
    RunReport report;
};

/// Throws DataError when the dataset layout does not match the spec.
void check_compatible(const ModelSpec& spec, const Dataset& ds);

/// Mini-batch training on the total loss. Throws DivergenceError naming the
/// epoch and batch when a loss becomes non-finite. When `eval` is given the
/// report's metrics are computed on it, otherwise on `train_set`.
TrainResult train(const ModelSpec& spec, const Dataset& train_set, const TrainConfig& config,
                  const Dataset* eval = nullptr);

/// Per-task predictions (after the output activation), evaluated in chunks.
std::vector<std::vector<double>> predict(const Model& model, const Dataset& ds, std::size_t chunk = 4096);

/// MSE for regression tasks, AUC for binary tasks.
std::vector<TaskMetric> evaluate(const Model& model, const Dataset& ds);

/// Task loss of the model on the first `rows` rows of `ds`.
double task_loss_on(const Model& model, const Dataset& ds, std::size_t rows);

struct PairCosine {
    std::string task;
    std::size_t dcp = 0;
    double mean_abs_cosine = 0.0;
    std::size_t used = 0;
    std::size_t excluded = 0;  // rows where either feature vector had zero norm
};

struct OrthogonalityReport {
    std::vector<PairCosine> pairs;
    /// Mean over pairs of mean_abs_cosine.
    double mean = 0.0;
};

/// Mean |cos| between paired shared and specific feature rows on the first
/// `rows` rows of `ds`. FDN only.
OrthogonalityReport orthogonality_diagnostic(const Model& model, const Dataset& ds, std::size_t rows = 2000);

/// Mean |cos| between two equally shaped feature matrices, row by row.
PairCosine mean_abs_cosine(const Matrix& a, const Matrix& b);

/// CSV of expert outputs: task, index, role, then one column per unit.
/// Rows are grouped by expert, then by sample in dataset order.
void export_features(const Model& model, const Dataset& ds, const std::filesystem::path& path,
                     std::size_t max_rows = 0);

}  // namespace fdn
