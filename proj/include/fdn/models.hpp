#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fdn/autodiff.hpp"
#include "fdn/dataio.hpp"
#include "fdn/dataset.hpp"
#include "fdn/rng.hpp"

namespace fdn {

enum class ModelKind { SingleTask, MMoE, CGC, PLE, FDN };

/// CLI spelling: single, mmoe, cgc, ple, fdn.
std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view text);

/// Which shared-expert outputs an FDN task head consumes.
enum class FusionScope {
    AllShared,  // shared outputs of every task's pairs
    OwnShared,  // only the task's own pairs
};

struct ModelSpec {
    ModelKind kind = ModelKind::FDN;
    std::vector<TaskInfo> tasks;

    std::size_t dense_width = 0;
    std::vector<std::size_t> vocabulary_sizes;
    std::size_t embedding_dim = 8;

    std::vector<std::size_t> expert_widths{128, 64};
    std::size_t tower_width = 32;

    /// MMoE: size of the expert pool. CGC/PLE: shared experts per level.
    std::size_t num_experts = 8;
    /// CGC/PLE: task-specific experts per task per level.
    std::size_t num_specific = 8;
    /// FDN: decomposition pairs per task.
    std::size_t dcp = 2;
    /// PLE: number of extraction levels.
    std::size_t levels = 2;
    FusionScope fusion = FusionScope::AllShared;

    std::size_t task_count() const { return tasks.size(); }
    std::size_t input_width() const { return dense_width + vocabulary_sizes.size() * embedding_dim; }
    std::size_t expert_output_width() const { return expert_widths.back(); }
    /// FDN prediction-layer input width.
    std::size_t fusion_width() const;

    /// Throws std::invalid_argument.
    void validate() const;

    nlohmann::json to_json() const;
    static ModelSpec from_json(const nlohmann::json& j);

    friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

/// Spec with the given kind and the input layout and tasks of `schema`.
ModelSpec spec_for_schema(ModelKind kind, const Schema& schema);

/// Exact number of scalar parameters, computed from the spec alone.
std::size_t param_count(const ModelSpec& spec);

/// Weights plus biases of one affine map.
std::size_t affine_param_count(std::size_t in, std::size_t out);
std::size_t expert_param_count(std::size_t in, const std::vector<std::size_t>& widths);

struct Affine {
    Parameter* weight = nullptr;
    Parameter* bias = nullptr;

    Var apply(Tape& tape, Var x) const;
};

/// Stack of affine layers, ReLU after each.
struct ExpertNet {
    std::vector<Affine> layers;

    Var apply(Tape& tape, Var x) const;
};

/// Hidden ReLU layer followed by a one-unit affine output.
struct Tower {
    Affine hidden;
    Affine out;

    Var apply(Tape& tape, Var x) const;
};

struct DcpBlock {
    ExpertNet shared_expert;
    ExpertNet specific_expert;
    Affine aux_head;
};

/// Expert output labelled for feature export.
struct ExpertFeature {
    std::string task;  // task name, or "shared" for experts serving every task
    std::size_t index = 0;
    std::string role;  // shared, specific or expert
    Var value;
};

struct ForwardOutput {
    std::vector<Var> logits;       // per task, b x 1
    std::vector<Var> predictions;  // sigma(logits)
    /// FDN only: [task][pair].
    std::vector<std::vector<Var>> aux_logits;
    std::vector<std::vector<Var>> aux_predictions;
    std::vector<std::vector<Var>> shared_features;
    std::vector<std::vector<Var>> specific_features;
    /// Every softmax gate evaluated, rows are distributions.
    std::vector<Var> gates;
    std::vector<ExpertFeature> expert_features;
};

/// Concatenation of dense fields and embedding rows.
Var embed(Tape& tape, const Matrix& dense, const IndexGrid& categorical, std::span<Parameter* const> tables);

/// Parameters and layer layout for one architecture.
///
/// Parameters are owned here and keep stable addresses; a model is confined
/// to the thread that trains it.
class Model {
public:
    /// Glorot-uniform weights, zero biases, drawn in declaration order.
    Model(ModelSpec spec, std::uint64_t init_seed);

    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;
    Model(Model&&) = default;
    Model& operator=(Model&&) = default;

    const ModelSpec& spec() const { return spec_; }

    ForwardOutput forward(Tape& tape, const Matrix& dense, const IndexGrid& categorical) const;

    /// Declaration order.
    std::vector<Parameter*> parameters();
    std::vector<const Parameter*> parameters() const;
    std::size_t parameter_count() const;

    void zero_grad();

    /// Parameters whose name starts with `prefix`.
    std::vector<Parameter*> parameters_with_prefix(std::string_view prefix);

private:
    Parameter* add(Rng& rng, std::string name, std::size_t rows, std::size_t cols, bool is_bias);
    Affine make_affine(Rng& rng, const std::string& name, std::size_t in, std::size_t out);
    ExpertNet make_expert(Rng& rng, const std::string& name, std::size_t in);
    Tower make_tower(Rng& rng, const std::string& name, std::size_t in);
    void build(Rng& rng);

    ForwardOutput forward_single(Tape& tape, Var x) const;
    ForwardOutput forward_mmoe(Tape& tape, Var x) const;
    ForwardOutput forward_ple(Tape& tape, Var x) const;
    ForwardOutput forward_fdn(Tape& tape, Var x) const;
    void finish_heads(Tape& tape, ForwardOutput& out, const std::vector<Var>& task_inputs) const;

    ModelSpec spec_;
    std::deque<Parameter> params_;

    std::vector<Parameter*> embeddings_;

    // SingleTask
    std::vector<ExpertNet> task_experts_;
    std::vector<Affine> heads_;

    // MMoE
    std::vector<ExpertNet> pool_;
    std::vector<Affine> task_gates_;
    std::vector<Tower> towers_;

    // CGC / PLE, indexed by level
    struct Level {
        std::vector<ExpertNet> shared;
        std::vector<std::vector<ExpertNet>> specific;  // [task][expert]
        std::vector<Affine> task_gates;
        Affine shared_gate;  // absent on the last level
        bool has_shared_gate = false;
    };
    std::vector<Level> levels_;

    // FDN
    std::vector<std::vector<DcpBlock>> dcps_;  // [task][pair]
    std::vector<Affine> fusion_heads_;
};

/// Sigmoid for binary tasks, identity for regression.
Var output_activation(Var logits, TaskKind kind);

/// Binary checkpoint: magic, spec JSON, spec hash, parameter values.
void save_checkpoint(const Model& model, const std::filesystem::path& path);
/// Throws CheckpointError on corruption or hash mismatch.
Model load_checkpoint(const std::filesystem::path& path);

/// FNV-1a 64-bit.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace fdn
