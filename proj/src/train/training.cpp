#include "fdn/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "fdn/dataio.hpp"
#include "fdn/errors.hpp"
#include "fdn/rng.hpp"

namespace fdn {

using nlohmann::json;

std::string_view to_string(OptimizerKind kind) { return kind == OptimizerKind::SGD ? "sgd" : "adam"; }

OptimizerKind parse_optimizer_kind(std::string_view text) {
    if (text == "sgd") return OptimizerKind::SGD;
    if (text == "adam") return OptimizerKind::Adam;
    throw std::invalid_argument("unknown optimizer '" + std::string(text) + "'");
}

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("epochs must be at least 1");
    if (batch_size < 1) throw std::invalid_argument("batch size must be at least 1");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw std::invalid_argument("learning rate must be a non-negative finite number");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(epsilon > 0.0)) {
        throw std::invalid_argument("invalid adam moment settings");
    }
    weights.validate();
}

LossWeights TrainConfig::effective_weights() const {
    LossWeights w = weights;
    if (no_orth) w.orth = 0.0;
    if (no_aux) w.aux = 0.0;
    return w;
}

ModelSpec TrainConfig::effective_spec(const ModelSpec& spec) const {
    ModelSpec s = spec;
    if (no_shared_fusion) {
        if (s.kind != ModelKind::FDN) throw std::invalid_argument("no_shared_fusion applies to fdn only");
        s.fusion = FusionScope::OwnShared;
    }
    return s;
}

json TrainConfig::to_json() const {
    const LossWeights w = effective_weights();
    json ablate = json::array();
    if (no_orth) ablate.push_back("orth");
    if (no_aux) ablate.push_back("aux");
    if (no_shared_fusion) ablate.push_back("shared");
    return json{{"epochs", epochs},
                {"batch_size", batch_size},
                {"optimizer", std::string(to_string(optimizer))},
                {"learning_rate", learning_rate},
                {"beta1", beta1},
                {"beta2", beta2},
                {"epsilon", epsilon},
                {"seed", seed},
                {"w_task", w.task},
                {"w_orth", w.orth},
                {"w_aux", w.aux},
                {"orth_mode", orth_mode == OrthMode::BatchGram ? "batch_gram" : "per_sample"},
                {"ablate", ablate}};
}

// ---------------------------------------------------------------------------
// Optimizers

void Sgd::step(const std::vector<Parameter*>& params) {
    for (Parameter* p : params) axpy(-lr_, p->grad, p->value);
}

void Adam::step(const std::vector<Parameter*>& params) {
    if (m_.empty()) {
        for (const Parameter* p : params) {
            m_.emplace_back(p->value.rows(), p->value.cols());
            v_.emplace_back(p->value.rows(), p->value.cols());
        }
    }
    if (m_.size() != params.size()) throw std::logic_error("adam: parameter set changed between steps");
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto w = params[i]->value.values();
        auto g = params[i]->grad.values();
        auto m = m_[i].values();
        auto v = v_[i].values();
        for (std::size_t j = 0; j < w.size(); ++j) {
            m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
            v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
            w[j] -= lr_ * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
        }
    }
}

std::unique_ptr<Optimizer> make_optimizer(const TrainConfig& config) {
    if (config.optimizer == OptimizerKind::SGD) return std::make_unique<Sgd>(config.learning_rate);
    return std::make_unique<Adam>(config.learning_rate, config.beta1, config.beta2, config.epsilon);
}

// ---------------------------------------------------------------------------
// Reports

namespace {

const char* metric_name(MetricKind kind) { return kind == MetricKind::MSE ? "mse" : "auc"; }

}  // namespace

json RunReport::to_json(bool include_timing) const {
    json e = json::array();
    for (const auto& ep : epochs) {
        e.push_back({{"epoch", ep.epoch}, {"task", ep.task}, {"orth", ep.orth}, {"aux", ep.aux}, {"total", ep.total}});
    }
    json m = json::array();
    for (const auto& t : metrics) {
        json row{{"task", t.task}, {"metric", metric_name(t.kind)}, {"value", t.value}};
        if (t.gap) row["gap_percent"] = *t.gap;
        m.push_back(row);
    }
    json j{{"model", model},
           {"seed", seed},
           {"param_count", param_count},
           {"config", config},
           {"spec", spec},
           {"initial_task_loss", initial_task_loss},
           {"final_task_loss", final_task_loss},
           {"epochs", e},
           {"metrics", m}};
    if (include_timing) j["wall_seconds"] = wall_seconds;
    return j;
}

// ---------------------------------------------------------------------------
// Training

void check_compatible(const ModelSpec& spec, const Dataset& ds) {
    ds.validate();
    if (ds.dense_width() != spec.dense_width) {
        throw DataError("dataset has " + std::to_string(ds.dense_width()) + " dense fields, model expects " +
                        std::to_string(spec.dense_width));
    }
    if (ds.categorical.cols != spec.vocabulary_sizes.size()) {
        throw DataError("dataset has " + std::to_string(ds.categorical.cols) + " categorical fields, model expects " +
                        std::to_string(spec.vocabulary_sizes.size()));
    }
    for (std::size_t c = 0; c < ds.categorical.cols; ++c) {
        for (std::size_t r = 0; r < ds.categorical.rows; ++r) {
            if (ds.categorical(r, c) >= spec.vocabulary_sizes[c]) {
                throw DataError("categorical id out of vocabulary in field '" + ds.categorical_names[c] + "'");
            }
        }
    }
    if (ds.tasks != spec.tasks) throw DataError("dataset tasks do not match the model's tasks");
}

namespace {

std::vector<std::size_t> leading_rows(const Dataset& ds, std::size_t rows) {
    std::vector<std::size_t> idx(std::min(rows, ds.size()));
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return idx;
}

}  // namespace

double task_loss_on(const Model& model, const Dataset& ds, std::size_t rows) {
    const auto idx = leading_rows(ds, rows);
    const Batch b = make_batch(ds, idx);
    Tape tape;
    const ForwardOutput out = model.forward(tape, b.dense, b.categorical);
    return task_loss(out.logits, b.labels, model.spec().tasks).value()(0, 0);
}

TrainResult train(const ModelSpec& spec_in, const Dataset& train_set, const TrainConfig& config,
                  const Dataset* eval) {
    const auto start = std::chrono::steady_clock::now();
    config.validate();
    const ModelSpec spec = config.effective_spec(spec_in);
    spec.validate();
    check_compatible(spec, train_set);
    if (eval) check_compatible(spec, *eval);
    const LossWeights weights = config.effective_weights();

    Model model(spec, derive_seed(config.seed, 1));
    auto optimizer = make_optimizer(config);
    const std::vector<Parameter*> params = model.parameters();

    RunReport report;
    report.model = std::string(to_string(spec.kind));
    report.seed = config.seed;
    report.param_count = model.parameter_count();
    report.config = config.to_json();
    report.spec = spec.to_json();
    report.initial_task_loss = task_loss_on(model, train_set, config.monitor_rows);

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        BatchStream stream(train_set, config.batch_size, derive_seed(config.seed, 100 + epoch));
        EpochLosses sums;
        sums.epoch = epoch + 1;
        std::size_t batch_index = 0;
        while (auto batch = stream.next()) {
            ++batch_index;
            auto where = [&] {
                return "epoch " + std::to_string(epoch + 1) + ", batch " + std::to_string(batch_index);
            };
            Tape tape;
            LossParts parts;
            try {
                const ForwardOutput out = model.forward(tape, batch->dense, batch->categorical);
                parts = compute_losses(tape, out, batch->labels, spec.tasks, weights, config.orth_mode);
                tape.backward(parts.total);
            } catch (const NumericError& e) {
                throw DivergenceError("training diverged at " + where() + ": " + e.what());
            }
            const double total = parts.total.value()(0, 0);
            if (!std::isfinite(total)) throw DivergenceError("non-finite loss at " + where());
            optimizer->step(params);
            model.zero_grad();
            sums.task += parts.task.value()(0, 0);
            sums.orth += parts.orth.value()(0, 0);
            sums.aux += parts.aux.value()(0, 0);
            sums.total += total;
        }
        const double n = static_cast<double>(batch_index);
        sums.task /= n;
        sums.orth /= n;
        sums.aux /= n;
        sums.total /= n;
        report.epochs.push_back(sums);
    }

    report.final_task_loss = task_loss_on(model, train_set, config.monitor_rows);
    report.metrics = evaluate(model, eval ? *eval : train_set);
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {std::move(model), std::move(report)};
}

// ---------------------------------------------------------------------------
// Evaluation

std::vector<std::vector<double>> predict(const Model& model, const Dataset& ds, std::size_t chunk) {
    if (chunk == 0) throw std::invalid_argument("predict chunk must be positive");
    const std::size_t k = model.spec().task_count();
    std::vector<std::vector<double>> out(k);
    for (auto& col : out) col.reserve(ds.size());
    std::vector<std::size_t> idx;
    for (std::size_t begin = 0; begin < ds.size(); begin += chunk) {
        const std::size_t end = std::min(ds.size(), begin + chunk);
        idx.resize(end - begin);
        std::iota(idx.begin(), idx.end(), begin);
        const Batch b = make_batch(ds, idx);
        Tape tape;
        const ForwardOutput f = model.forward(tape, b.dense, b.categorical);
        for (std::size_t t = 0; t < k; ++t) {
            const auto values = f.predictions[t].value().values();
            out[t].insert(out[t].end(), values.begin(), values.end());
        }
    }
    return out;
}

std::vector<TaskMetric> evaluate(const Model& model, const Dataset& ds) {
    check_compatible(model.spec(), ds);
    const auto preds = predict(model, ds);
    std::vector<TaskMetric> out;
    for (std::size_t t = 0; t < ds.tasks.size(); ++t) {
        TaskMetric m;
        m.task = ds.tasks[t].name;
        if (ds.tasks[t].kind == TaskKind::Binary) {
            m.kind = MetricKind::AUC;
            m.value = auc(preds[t], ds.labels[t]);
        } else {
            m.kind = MetricKind::MSE;
            m.value = mse(preds[t], ds.labels[t]);
        }
        out.push_back(m);
    }
    return out;
}

PairCosine mean_abs_cosine(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw ShapeError("mean_abs_cosine: " + shape_string(a) + " vs " + shape_string(b));
    PairCosine pc;
    double acc = 0.0;
    for (std::size_t r = 0; r < a.rows(); ++r) {
        double dot = 0.0, na = 0.0, nb = 0.0;
        auto x = a.row(r);
        auto y = b.row(r);
        for (std::size_t c = 0; c < x.size(); ++c) {
            dot += x[c] * y[c];
            na += x[c] * x[c];
            nb += y[c] * y[c];
        }
        if (na == 0.0 || nb == 0.0) {
            ++pc.excluded;
            continue;
        }
        acc += std::abs(dot) / (std::sqrt(na) * std::sqrt(nb));
        ++pc.used;
    }
    pc.mean_abs_cosine = pc.used > 0 ? acc / static_cast<double>(pc.used) : 0.0;
    return pc;
}

OrthogonalityReport orthogonality_diagnostic(const Model& model, const Dataset& ds, std::size_t rows) {
    if (model.spec().kind != ModelKind::FDN) throw std::invalid_argument("orthogonality diagnostic needs an fdn model");
    const auto idx = leading_rows(ds, rows);
    if (idx.empty()) throw DataError("orthogonality diagnostic needs at least one row");
    const Batch b = make_batch(ds, idx);
    Tape tape;
    const ForwardOutput out = model.forward(tape, b.dense, b.categorical);
    OrthogonalityReport report;
    for (std::size_t t = 0; t < out.shared_features.size(); ++t) {
        for (std::size_t m = 0; m < out.shared_features[t].size(); ++m) {
            PairCosine pc = mean_abs_cosine(out.shared_features[t][m].value(), out.specific_features[t][m].value());
            pc.task = model.spec().tasks[t].name;
            pc.dcp = m;
            report.mean += pc.mean_abs_cosine;
            report.pairs.push_back(pc);
        }
    }
    report.mean /= static_cast<double>(report.pairs.size());
    return report;
}

void export_features(const Model& model, const Dataset& ds, const std::filesystem::path& path, std::size_t max_rows) {
    check_compatible(model.spec(), ds);
    const auto idx = leading_rows(ds, max_rows == 0 ? ds.size() : max_rows);
    const Batch b = make_batch(ds, idx);
    Tape tape;
    const ForwardOutput out = model.forward(tape, b.dense, b.categorical);

    std::ofstream file(path, std::ios::binary);
    if (!file) throw DataError("cannot write " + path.string());
    const std::size_t width = model.spec().expert_output_width();
    file << "task,index,role";
    for (std::size_t c = 0; c < width; ++c) file << ",v" << c;
    file << '\n';
    for (const auto& feature : out.expert_features) {
        const Matrix& m = feature.value.value();
        for (std::size_t r = 0; r < m.rows(); ++r) {
            file << feature.task << ',' << feature.index << ',' << feature.role;
            for (double v : m.row(r)) file << ',' << format_double(v);
            file << '\n';
        }
    }
    if (!file) throw DataError("write failed for " + path.string());
}

}  // namespace fdn
