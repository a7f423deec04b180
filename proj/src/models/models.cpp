#include "fdn/models.hpp"

#include <cmath>
#include <stdexcept>

#include "fdn/errors.hpp"

namespace fdn {

using nlohmann::json;

std::string_view to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::SingleTask: return "single";
        case ModelKind::MMoE: return "mmoe";
        case ModelKind::CGC: return "cgc";
        case ModelKind::PLE: return "ple";
        case ModelKind::FDN: return "fdn";
    }
    throw std::invalid_argument("unknown model kind");
}

ModelKind parse_model_kind(std::string_view text) {
    if (text == "single") return ModelKind::SingleTask;
    if (text == "mmoe") return ModelKind::MMoE;
    if (text == "cgc") return ModelKind::CGC;
    if (text == "ple") return ModelKind::PLE;
    if (text == "fdn") return ModelKind::FDN;
    throw std::invalid_argument("unknown model kind '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// Spec

std::size_t ModelSpec::fusion_width() const {
    const std::size_t w = expert_output_width();
    const std::size_t shared = fusion == FusionScope::AllShared ? task_count() * dcp : dcp;
    return dcp * w + shared * w;
}

void ModelSpec::validate() const {
    auto fail = [](const std::string& msg) { throw std::invalid_argument("invalid model spec: " + msg); };
    if (tasks.empty()) fail("at least one task is required");
    if (input_width() == 0) fail("input width is zero");
    if (expert_widths.empty()) fail("expert_widths is empty");
    for (std::size_t w : expert_widths) {
        if (w == 0) fail("expert widths must be positive");
    }
    if (!vocabulary_sizes.empty() && embedding_dim == 0) fail("embedding_dim must be positive");
    for (std::size_t v : vocabulary_sizes) {
        if (v == 0) fail("vocabulary sizes must be positive");
    }
    switch (kind) {
        case ModelKind::SingleTask: break;
        case ModelKind::MMoE:
            if (num_experts < 1) fail("mmoe needs at least one expert");
            if (tower_width < 1) fail("tower_width must be positive");
            break;
        case ModelKind::PLE:
            if (levels < 1) fail("ple needs at least one level");
            [[fallthrough]];
        case ModelKind::CGC:
            if (num_experts + num_specific < 1) fail("each task gate needs at least one expert");
            if (tower_width < 1) fail("tower_width must be positive");
            break;
        case ModelKind::FDN:
            if (dcp < 1) fail("fdn needs at least one pair per task");
            break;
    }
}

json ModelSpec::to_json() const {
    json t = json::array();
    for (const auto& task : tasks) t.push_back({{"name", task.name}, {"kind", std::string(to_string(task.kind))}});
    return json{{"kind", std::string(to_string(kind))},
                {"tasks", t},
                {"dense_width", dense_width},
                {"vocabulary_sizes", vocabulary_sizes},
                {"embedding_dim", embedding_dim},
                {"expert_widths", expert_widths},
                {"tower_width", tower_width},
                {"num_experts", num_experts},
                {"num_specific", num_specific},
                {"dcp", dcp},
                {"levels", levels},
                {"fusion", fusion == FusionScope::AllShared ? "all_shared" : "own_shared"}};
}

ModelSpec ModelSpec::from_json(const json& j) {
    ModelSpec s;
    try {
        s.kind = parse_model_kind(j.at("kind").get<std::string>());
        for (const auto& t : j.at("tasks")) {
            s.tasks.push_back({t.at("name").get<std::string>(), parse_task_kind(t.at("kind").get<std::string>())});
        }
        s.dense_width = j.at("dense_width").get<std::size_t>();
        s.vocabulary_sizes = j.at("vocabulary_sizes").get<std::vector<std::size_t>>();
        s.embedding_dim = j.at("embedding_dim").get<std::size_t>();
        s.expert_widths = j.at("expert_widths").get<std::vector<std::size_t>>();
        s.tower_width = j.at("tower_width").get<std::size_t>();
        s.num_experts = j.at("num_experts").get<std::size_t>();
        s.num_specific = j.at("num_specific").get<std::size_t>();
        s.dcp = j.at("dcp").get<std::size_t>();
        s.levels = j.at("levels").get<std::size_t>();
        const auto fusion = j.at("fusion").get<std::string>();
        if (fusion == "all_shared") {
            s.fusion = FusionScope::AllShared;
        } else if (fusion == "own_shared") {
            s.fusion = FusionScope::OwnShared;
        } else {
            throw std::invalid_argument("unknown fusion scope '" + fusion + "'");
        }
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("malformed model spec: ") + e.what());
    }
    s.validate();
    return s;
}

ModelSpec spec_for_schema(ModelKind kind, const Schema& schema) {
    ModelSpec s;
    s.kind = kind;
    s.tasks = schema.tasks;
    s.dense_width = schema.dense_fields.size();
    s.vocabulary_sizes = schema.vocabulary_sizes();
    s.embedding_dim = schema.embedding_dim;
    return s;
}

std::size_t affine_param_count(std::size_t in, std::size_t out) { return in * out + out; }

std::size_t expert_param_count(std::size_t in, const std::vector<std::size_t>& widths) {
    std::size_t n = 0;
    for (std::size_t w : widths) {
        n += affine_param_count(in, w);
        in = w;
    }
    return n;
}

namespace {

std::size_t tower_count(std::size_t in, std::size_t hidden) {
    return affine_param_count(in, hidden) + affine_param_count(hidden, 1);
}

std::size_t ple_levels(const ModelSpec& s) { return s.kind == ModelKind::CGC ? 1 : s.levels; }

}  // namespace

std::size_t param_count(const ModelSpec& spec) {
    spec.validate();
    const std::size_t n = spec.input_width();
    const std::size_t h = spec.expert_output_width();
    const std::size_t k = spec.task_count();
    std::size_t total = 0;
    for (std::size_t v : spec.vocabulary_sizes) total += v * spec.embedding_dim;

    switch (spec.kind) {
        case ModelKind::SingleTask:
            total += k * (expert_param_count(n, spec.expert_widths) + affine_param_count(h, 1));
            break;
        case ModelKind::MMoE:
            total += spec.num_experts * expert_param_count(n, spec.expert_widths);
            total += k * (affine_param_count(n, spec.num_experts) + tower_count(h, spec.tower_width));
            break;
        case ModelKind::CGC:
        case ModelKind::PLE: {
            const std::size_t shared = spec.num_experts, specific = spec.num_specific;
            const std::size_t levels = ple_levels(spec);
            for (std::size_t l = 0; l < levels; ++l) {
                const std::size_t in = l == 0 ? n : h;
                total += (shared + k * specific) * expert_param_count(in, spec.expert_widths);
                total += k * affine_param_count(in, shared + specific);
                if (l + 1 < levels) total += affine_param_count(in, shared + k * specific);
            }
            total += k * tower_count(h, spec.tower_width);
            break;
        }
        case ModelKind::FDN:
            total += k * spec.dcp * (2 * expert_param_count(n, spec.expert_widths) + affine_param_count(h, 1));
            total += k * affine_param_count(spec.fusion_width(), 1);
            break;
    }
    return total;
}

// ---------------------------------------------------------------------------
// Layers

Var Affine::apply(Tape& tape, Var x) const {
    return add_bias(matmul(x, tape.parameter(*weight)), tape.parameter(*bias));
}

Var ExpertNet::apply(Tape& tape, Var x) const {
    for (const auto& layer : layers) x = relu(layer.apply(tape, x));
    return x;
}

Var Tower::apply(Tape& tape, Var x) const { return out.apply(tape, relu(hidden.apply(tape, x))); }

Var output_activation(Var logits, TaskKind kind) {
    return kind == TaskKind::Binary ? sigmoid(logits) : logits;
}

Var embed(Tape& tape, const Matrix& dense, const IndexGrid& categorical, std::span<Parameter* const> tables) {
    if (categorical.cols != tables.size()) {
        throw ShapeError("embed: " + std::to_string(categorical.cols) + " categorical columns for " +
                         std::to_string(tables.size()) + " tables");
    }
    if (tables.empty()) {
        if (dense.empty()) throw ShapeError("embed: no input fields");
        return tape.constant(dense);
    }
    std::vector<Var> parts;
    if (!dense.empty()) {
        if (dense.rows() != categorical.rows) throw ShapeError("embed: dense and categorical row counts differ");
        parts.push_back(tape.constant(dense));
    }
    std::vector<std::uint32_t> ids(categorical.rows);
    for (std::size_t c = 0; c < tables.size(); ++c) {
        const std::size_t vocab = tables[c]->value.rows();
        for (std::size_t r = 0; r < categorical.rows; ++r) {
            ids[r] = categorical(r, c);
            if (ids[r] >= vocab) {
                throw DataError("categorical index " + std::to_string(ids[r]) + " out of range for table '" +
                                tables[c]->name + "'");
            }
        }
        parts.push_back(gather_rows(tape.parameter(*tables[c]), ids));
    }
    return parts.size() == 1 ? parts.front() : concat_cols(parts);
}

namespace {

/// Convex combination of `experts` with weights from the columns of `gate`.
Var mix(const std::vector<Var>& experts, Var gate) {
    Var acc = scale_rows(experts[0], slice_cols(gate, 0, 1));
    for (std::size_t e = 1; e < experts.size(); ++e) acc = add(acc, scale_rows(experts[e], slice_cols(gate, e, 1)));
    return acc;
}

}  // namespace

// ---------------------------------------------------------------------------
// Model

Model::Model(ModelSpec spec, std::uint64_t init_seed) : spec_(std::move(spec)) {
    spec_.validate();
    if (spec_.kind == ModelKind::CGC) spec_.levels = 1;
    Rng rng(init_seed);
    build(rng);
}

Parameter* Model::add(Rng& rng, std::string name, std::size_t rows, std::size_t cols, bool is_bias) {
    Matrix value(rows, cols);
    if (!is_bias) {
        const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
        for (double& v : value.values()) v = rng.uniform(-limit, limit);
    }
    return &params_.emplace_back(std::move(name), std::move(value));
}

Affine Model::make_affine(Rng& rng, const std::string& name, std::size_t in, std::size_t out) {
    Affine a;
    a.weight = add(rng, name + ".w", in, out, false);
    a.bias = add(rng, name + ".b", 1, out, true);
    return a;
}

ExpertNet Model::make_expert(Rng& rng, const std::string& name, std::size_t in) {
    ExpertNet e;
    for (std::size_t i = 0; i < spec_.expert_widths.size(); ++i) {
        e.layers.push_back(make_affine(rng, name + ".l" + std::to_string(i), in, spec_.expert_widths[i]));
        in = spec_.expert_widths[i];
    }
    return e;
}

Tower Model::make_tower(Rng& rng, const std::string& name, std::size_t in) {
    Tower t;
    t.hidden = make_affine(rng, name + ".hidden", in, spec_.tower_width);
    t.out = make_affine(rng, name + ".out", spec_.tower_width, 1);
    return t;
}

void Model::build(Rng& rng) {
    const std::size_t n = spec_.input_width();
    const std::size_t h = spec_.expert_output_width();
    const std::size_t k = spec_.task_count();

    for (std::size_t f = 0; f < spec_.vocabulary_sizes.size(); ++f) {
        embeddings_.push_back(
            add(rng, "embedding." + std::to_string(f), spec_.vocabulary_sizes[f], spec_.embedding_dim, false));
    }

    switch (spec_.kind) {
        case ModelKind::SingleTask:
            for (std::size_t t = 0; t < k; ++t) {
                const std::string p = "task" + std::to_string(t);
                task_experts_.push_back(make_expert(rng, p + ".expert", n));
                heads_.push_back(make_affine(rng, p + ".head", h, 1));
            }
            break;
        case ModelKind::MMoE:
            for (std::size_t e = 0; e < spec_.num_experts; ++e) {
                pool_.push_back(make_expert(rng, "expert" + std::to_string(e), n));
            }
            for (std::size_t t = 0; t < k; ++t) {
                const std::string p = "task" + std::to_string(t);
                task_gates_.push_back(make_affine(rng, p + ".gate", n, spec_.num_experts));
                towers_.push_back(make_tower(rng, p + ".tower", h));
            }
            break;
        case ModelKind::CGC:
        case ModelKind::PLE:
            for (std::size_t l = 0; l < spec_.levels; ++l) {
                const std::size_t in = l == 0 ? n : h;
                const std::string p = "level" + std::to_string(l);
                Level level;
                for (std::size_t e = 0; e < spec_.num_experts; ++e) {
                    level.shared.push_back(make_expert(rng, p + ".shared" + std::to_string(e), in));
                }
                level.specific.resize(k);
                for (std::size_t t = 0; t < k; ++t) {
                    for (std::size_t e = 0; e < spec_.num_specific; ++e) {
                        level.specific[t].push_back(make_expert(
                            rng, p + ".task" + std::to_string(t) + ".specific" + std::to_string(e), in));
                    }
                }
                for (std::size_t t = 0; t < k; ++t) {
                    level.task_gates.push_back(make_affine(rng, p + ".task" + std::to_string(t) + ".gate", in,
                                                           spec_.num_experts + spec_.num_specific));
                }
                if (l + 1 < spec_.levels) {
                    level.shared_gate =
                        make_affine(rng, p + ".shared_gate", in, spec_.num_experts + k * spec_.num_specific);
                    level.has_shared_gate = true;
                }
                levels_.push_back(std::move(level));
            }
            for (std::size_t t = 0; t < k; ++t) towers_.push_back(make_tower(rng, "task" + std::to_string(t) + ".tower", h));
            break;
        case ModelKind::FDN:
            dcps_.resize(k);
            for (std::size_t t = 0; t < k; ++t) {
                for (std::size_t m = 0; m < spec_.dcp; ++m) {
                    const std::string p = "task" + std::to_string(t) + ".dcp" + std::to_string(m);
                    DcpBlock b;
                    b.shared_expert = make_expert(rng, p + ".shared", n);
                    b.specific_expert = make_expert(rng, p + ".specific", n);
                    b.aux_head = make_affine(rng, p + ".aux", h, 1);
                    dcps_[t].push_back(std::move(b));
                }
            }
            for (std::size_t t = 0; t < k; ++t) {
                fusion_heads_.push_back(make_affine(rng, "task" + std::to_string(t) + ".fusion", spec_.fusion_width(), 1));
            }
            break;
    }
}

std::vector<Parameter*> Model::parameters() {
    std::vector<Parameter*> out;
    for (auto& p : params_) out.push_back(&p);
    return out;
}

std::vector<const Parameter*> Model::parameters() const {
    std::vector<const Parameter*> out;
    for (const auto& p : params_) out.push_back(&p);
    return out;
}

std::size_t Model::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.values().size();
    return n;
}

void Model::zero_grad() {
    for (auto& p : params_) p.grad.fill(0.0);
}

std::vector<Parameter*> Model::parameters_with_prefix(std::string_view prefix) {
    std::vector<Parameter*> out;
    for (auto& p : params_) {
        if (std::string_view(p.name).starts_with(prefix)) out.push_back(&p);
    }
    return out;
}

ForwardOutput Model::forward(Tape& tape, const Matrix& dense, const IndexGrid& categorical) const {
    if (dense.cols() != spec_.dense_width && !(dense.empty() && spec_.dense_width == 0)) {
        throw ShapeError("model expects " + std::to_string(spec_.dense_width) + " dense columns, got " +
                         std::to_string(dense.cols()));
    }
    const Var x = embed(tape, dense, categorical, embeddings_);
    switch (spec_.kind) {
        case ModelKind::SingleTask: return forward_single(tape, x);
        case ModelKind::MMoE: return forward_mmoe(tape, x);
        case ModelKind::CGC:
        case ModelKind::PLE: return forward_ple(tape, x);
        case ModelKind::FDN: return forward_fdn(tape, x);
    }
    throw std::logic_error("unreachable model kind");
}

void Model::finish_heads(Tape& tape, ForwardOutput& out, const std::vector<Var>& task_inputs) const {
    for (std::size_t t = 0; t < spec_.task_count(); ++t) {
        const Var logit = towers_[t].apply(tape, task_inputs[t]);
        out.logits.push_back(logit);
        out.predictions.push_back(output_activation(logit, spec_.tasks[t].kind));
    }
}

ForwardOutput Model::forward_single(Tape& tape, Var x) const {
    ForwardOutput out;
    for (std::size_t t = 0; t < spec_.task_count(); ++t) {
        const Var feat = task_experts_[t].apply(tape, x);
        out.expert_features.push_back({spec_.tasks[t].name, 0, "expert", feat});
        const Var logit = heads_[t].apply(tape, feat);
        out.logits.push_back(logit);
        out.predictions.push_back(output_activation(logit, spec_.tasks[t].kind));
    }
    return out;
}

ForwardOutput Model::forward_mmoe(Tape& tape, Var x) const {
    ForwardOutput out;
    std::vector<Var> experts;
    for (std::size_t e = 0; e < pool_.size(); ++e) {
        experts.push_back(pool_[e].apply(tape, x));
        out.expert_features.push_back({"shared", e, "expert", experts.back()});
    }
    std::vector<Var> mixed;
    for (std::size_t t = 0; t < spec_.task_count(); ++t) {
        const Var gate = softmax_rows(task_gates_[t].apply(tape, x));
        out.gates.push_back(gate);
        mixed.push_back(mix(experts, gate));
    }
    finish_heads(tape, out, mixed);
    return out;
}

ForwardOutput Model::forward_ple(Tape& tape, Var x) const {
    ForwardOutput out;
    const std::size_t k = spec_.task_count();
    std::vector<Var> task_in(k, x);
    Var shared_in = x;
    for (std::size_t l = 0; l < levels_.size(); ++l) {
        const Level& level = levels_[l];
        const bool last = l + 1 == levels_.size();
        std::vector<Var> shared;
        for (const auto& e : level.shared) shared.push_back(e.apply(tape, shared_in));
        std::vector<std::vector<Var>> specific(k);
        for (std::size_t t = 0; t < k; ++t) {
            for (const auto& e : level.specific[t]) specific[t].push_back(e.apply(tape, task_in[t]));
        }
        if (last) {
            for (std::size_t e = 0; e < shared.size(); ++e) out.expert_features.push_back({"shared", e, "shared", shared[e]});
            for (std::size_t t = 0; t < k; ++t) {
                for (std::size_t e = 0; e < specific[t].size(); ++e) {
                    out.expert_features.push_back({spec_.tasks[t].name, e, "specific", specific[t][e]});
                }
            }
        }
        std::vector<Var> next_task(k);
        for (std::size_t t = 0; t < k; ++t) {
            std::vector<Var> pool = specific[t];
            pool.insert(pool.end(), shared.begin(), shared.end());
            const Var gate = softmax_rows(level.task_gates[t].apply(tape, task_in[t]));
            out.gates.push_back(gate);
            next_task[t] = mix(pool, gate);
        }
        if (level.has_shared_gate) {
            std::vector<Var> pool = shared;
            for (const auto& s : specific) pool.insert(pool.end(), s.begin(), s.end());
            const Var gate = softmax_rows(level.shared_gate.apply(tape, shared_in));
            out.gates.push_back(gate);
            shared_in = mix(pool, gate);
        }
        task_in = std::move(next_task);
    }
    finish_heads(tape, out, task_in);
    return out;
}

ForwardOutput Model::forward_fdn(Tape& tape, Var x) const {
    ForwardOutput out;
    const std::size_t k = spec_.task_count();
    const std::size_t m = spec_.dcp;
    out.shared_features.resize(k);
    out.specific_features.resize(k);
    out.aux_logits.resize(k);
    out.aux_predictions.resize(k);
    for (std::size_t t = 0; t < k; ++t) {
        for (std::size_t i = 0; i < m; ++i) {
            const DcpBlock& b = dcps_[t][i];
            const Var s = b.shared_expert.apply(tape, x);
            const Var p = b.specific_expert.apply(tape, x);
            const Var aux = b.aux_head.apply(tape, p);
            out.shared_features[t].push_back(s);
            out.specific_features[t].push_back(p);
            out.aux_logits[t].push_back(aux);
            out.aux_predictions[t].push_back(output_activation(aux, spec_.tasks[t].kind));
            out.expert_features.push_back({spec_.tasks[t].name, i, "shared", s});
            out.expert_features.push_back({spec_.tasks[t].name, i, "specific", p});
        }
    }
    for (std::size_t t = 0; t < k; ++t) {
        std::vector<Var> parts = out.specific_features[t];
        if (spec_.fusion == FusionScope::AllShared) {
            for (const auto& row : out.shared_features) parts.insert(parts.end(), row.begin(), row.end());
        } else {
            parts.insert(parts.end(), out.shared_features[t].begin(), out.shared_features[t].end());
        }
        const Var logit = fusion_heads_[t].apply(tape, concat_cols(parts));
        out.logits.push_back(logit);
        out.predictions.push_back(output_activation(logit, spec_.tasks[t].kind));
    }
    return out;
}

}  // namespace fdn
