#include "fdn/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>

#include "fdn/benchmark.hpp"
#include "fdn/datagen.hpp"
#include "fdn/dataio.hpp"
#include "fdn/errors.hpp"
#include "fdn/models.hpp"
#include "fdn/training.hpp"

namespace fdn {

namespace {

/// Bad flag values or combinations detected after parsing.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GenDataArgs {
    std::string kind;
    std::size_t n = 1000;
    std::size_t d = 16;
    std::size_t m = 4;
    std::uint64_t seed = 1;
    std::string out;
    double c1 = 1.0, c2 = 1.0, cs = 1.0;
};

struct ArchArgs {
    std::string model;
    std::size_t dcp = 2;
    std::size_t experts = 8;
    std::size_t specific = 0;
    std::size_t levels = 2;
    std::vector<std::size_t> widths{128, 64};
    std::size_t tower = 32;
    CLI::Option* dcp_opt = nullptr;
    CLI::Option* experts_opt = nullptr;
    CLI::Option* specific_opt = nullptr;
    CLI::Option* levels_opt = nullptr;
    CLI::Option* tower_opt = nullptr;
};

struct TrainArgs {
    ArchArgs arch;
    std::string data, schema, eval_data, ckpt, report;
    std::size_t epochs = 5;
    std::size_t batch = 1024;
    double lr = 1e-3;
    std::string optimizer = "adam";
    std::uint64_t seed = 1;
    std::vector<std::string> ablate;
    CLI::Option* ablate_opt = nullptr;
};

struct BenchArgs {
    std::size_t seeds = 5;
    std::string out;
    std::uint64_t first_seed = 1;
    std::size_t n_train = 50000, n_test = 10000;
    std::size_t d = 16, m = 4;
    double c1 = 1.0, c2 = 1.0, cs = 1.0;
    std::size_t epochs = 5, batch = 1024;
    double lr = 1e-3;
    bool no_ablations = false;
};

struct EvalArgs {
    std::string ckpt, data, schema, out;
    std::size_t rows = 0;
};

struct CountArgs {
    ArchArgs arch;
    std::string ckpt, schema;
    std::size_t dense = 16;
    std::size_t tasks = 2;
    CLI::Option* schema_opt = nullptr;
    CLI::Option* dense_opt = nullptr;
    CLI::Option* tasks_opt = nullptr;
};

void add_arch_options(CLI::App* cmd, ArchArgs& a) {
    cmd->add_option("--model", a.model, "single, mmoe, cgc, ple or fdn")
        ->required()
        ->check(CLI::IsMember({"single", "mmoe", "cgc", "ple", "fdn"}));
    a.dcp_opt = cmd->add_option("--dcp", a.dcp, "fdn: decomposition pairs per task")->capture_default_str();
    a.experts_opt =
        cmd->add_option("--experts", a.experts, "mmoe: expert pool size; cgc/ple: shared experts per level")
            ->capture_default_str();
    a.specific_opt = cmd->add_option("--specific", a.specific,
                                     "cgc/ple: task-specific experts per task per level (default: --experts)");
    a.levels_opt = cmd->add_option("--levels", a.levels, "ple: extraction levels")->capture_default_str();
    cmd->add_option("--widths", a.widths, "expert layer widths")->delimiter(',')->capture_default_str();
    a.tower_opt = cmd->add_option("--tower-width", a.tower, "baseline tower hidden width")->capture_default_str();
}

ModelSpec build_spec(const ArchArgs& a, const Schema& schema) {
    const ModelKind kind = parse_model_kind(a.model);
    auto reject = [&](CLI::Option* opt, bool allowed) {
        if (opt->count() > 0 && !allowed) {
            throw UsageError(opt->get_name() + " does not apply to --model " + a.model);
        }
    };
    reject(a.dcp_opt, kind == ModelKind::FDN);
    reject(a.experts_opt, kind == ModelKind::MMoE || kind == ModelKind::CGC || kind == ModelKind::PLE);
    reject(a.specific_opt, kind == ModelKind::CGC || kind == ModelKind::PLE);
    reject(a.levels_opt, kind == ModelKind::PLE);
    reject(a.tower_opt, kind == ModelKind::MMoE || kind == ModelKind::CGC || kind == ModelKind::PLE);

    ModelSpec spec = spec_for_schema(kind, schema);
    spec.expert_widths = a.widths;
    spec.tower_width = a.tower;
    spec.num_experts = a.experts;
    spec.num_specific = a.specific_opt->count() > 0 ? a.specific : a.experts;
    spec.dcp = a.dcp;
    spec.levels = kind == ModelKind::CGC ? 1 : a.levels;
    try {
        spec.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    return spec;
}

void write_json(const nlohmann::json& j, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    out << j.dump(2) << '\n';
    if (!out) throw DataError("write failed for " + path);
}

Dataset load_data(const std::string& data, const Schema& schema, std::ostream& err) {
    LoadResult r = load_csv(data, schema);
    if (r.skipped_rows > 0) err << "warning: skipped " << r.skipped_rows << " malformed rows in " << data << '\n';
    return std::move(r.dataset);
}

nlohmann::json metrics_json(const std::vector<TaskMetric>& metrics) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& m : metrics) {
        j.push_back({{"task", m.task}, {"metric", m.kind == MetricKind::MSE ? "mse" : "auc"}, {"value", m.value}});
    }
    return j;
}

/// Loads a checkpoint and checks it against the schema's layout.
Model load_for_schema(const std::string& ckpt, const Schema& schema) {
    Model model = load_checkpoint(ckpt);
    const ModelSpec& s = model.spec();
    if (s.tasks != schema.tasks || s.dense_width != schema.dense_fields.size() ||
        s.vocabulary_sizes != schema.vocabulary_sizes() ||
        (!s.vocabulary_sizes.empty() && s.embedding_dim != schema.embedding_dim)) {
        throw CheckpointError("checkpoint spec does not match schema " + schema.to_json().dump());
    }
    return model;
}

int gen_data(const GenDataArgs& a, std::ostream& out) {
    SynthConfig c;
    c.d = a.d;
    c.m = a.m;
    c.n_samples = a.n;
    c.seed = a.seed;
    c.c1 = a.c1;
    c.c2 = a.c2;
    c.cs = a.cs;
    try {
        c.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    std::filesystem::path csv(a.out);
    std::filesystem::path meta = csv;
    meta.replace_extension(".json");
    if (meta == csv) throw UsageError("--out must not end in .json (the sidecar uses that name)");
    if (csv.has_parent_path()) std::filesystem::create_directories(csv.parent_path());
    const SyntheticData data = generate(c, parse_synth_kind(a.kind));
    write_synthetic(data, csv, meta);
    out << csv.string() << '\n' << meta.string() << '\n';
    return kExitOk;
}

int train_cmd(const TrainArgs& a, std::ostream& out, std::ostream& err) {
    const Schema schema = Schema::load(a.schema);
    const ModelSpec spec = build_spec(a.arch, schema);
    TrainConfig tc;
    tc.epochs = a.epochs;
    tc.batch_size = a.batch;
    tc.learning_rate = a.lr;
    tc.optimizer = parse_optimizer_kind(a.optimizer);
    tc.seed = a.seed;
    for (const auto& x : a.ablate) {
        if (spec.kind != ModelKind::FDN) throw UsageError("--ablate applies to --model fdn only");
        if (x == "orth") tc.no_orth = true;
        if (x == "aux") tc.no_aux = true;
        if (x == "shared") tc.no_shared_fusion = true;
    }
    try {
        tc.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    const Dataset train_set = load_data(a.data, schema, err);
    std::optional<Dataset> eval;
    if (!a.eval_data.empty()) eval = load_data(a.eval_data, schema, err);
    TrainResult r = train(spec, train_set, tc, eval ? &*eval : nullptr);
    if (!a.ckpt.empty()) save_checkpoint(r.model, a.ckpt);
    const nlohmann::json report = r.report.to_json();
    if (!a.report.empty()) write_json(report, a.report);
    out << report.dump(2) << '\n';
    return kExitOk;
}

int benchmark_cmd(const BenchArgs& a, std::ostream& out, std::ostream& err) {
    BenchmarkConfig c;
    c.seeds = a.seeds;
    c.first_seed = a.first_seed;
    c.n_train = a.n_train;
    c.n_test = a.n_test;
    c.synth.d = a.d;
    c.synth.m = a.m;
    c.synth.c1 = a.c1;
    c.synth.c2 = a.c2;
    c.synth.cs = a.cs;
    c.train.epochs = a.epochs;
    c.train.batch_size = a.batch;
    c.train.learning_rate = a.lr;
    c.ablations = !a.no_ablations;
    try {
        c.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    const auto start = std::chrono::steady_clock::now();
    const BenchmarkResult result = run_synthetic_benchmark(c, [&](const BenchmarkRun& r) {
        err << "seed " << r.seed << ' ' << r.label << " done in " << r.wall_seconds << " s\n";
    });
    write_benchmark_tables(result, a.out);
    write_json(c.to_json(), (std::filesystem::path(a.out) / "config.json").string());
    err << "benchmark finished in "
        << std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() << " s\n";
    std::ifstream table(std::filesystem::path(a.out) / "table1_gap.csv");
    out << table.rdbuf();
    return kExitOk;
}

int evaluate_cmd(const EvalArgs& a, std::ostream& out, std::ostream& err) {
    const Schema schema = Schema::load(a.schema);
    const Model model = load_for_schema(a.ckpt, schema);
    const Dataset ds = load_data(a.data, schema, err);
    nlohmann::json j{{"model", std::string(to_string(model.spec().kind))},
                     {"rows", ds.size()},
                     {"metrics", metrics_json(evaluate(model, ds))}};
    out << j.dump(2) << '\n';
    return kExitOk;
}

int param_count_cmd(const CountArgs& a, std::ostream& out) {
    if (!a.ckpt.empty()) {
        if (a.schema_opt->count() || a.dense_opt->count() || a.tasks_opt->count()) {
            throw UsageError("--ckpt cannot be combined with --schema, --dense or --tasks");
        }
        out << param_count(load_checkpoint(a.ckpt).spec()) << '\n';
        return kExitOk;
    }
    if (a.arch.model.empty()) throw UsageError("param-count needs --model or --ckpt");
    Schema schema;
    if (!a.schema.empty()) {
        if (a.dense_opt->count() || a.tasks_opt->count()) {
            throw UsageError("--schema cannot be combined with --dense or --tasks");
        }
        schema = Schema::load(a.schema);
    } else {
        for (std::size_t k = 0; k < a.tasks; ++k) schema.tasks.push_back({"task" + std::to_string(k), TaskKind::Regression});
        for (std::size_t i = 0; i < a.dense; ++i) schema.dense_fields.push_back("f" + std::to_string(i));
    }
    out << param_count(build_spec(a.arch, schema)) << '\n';
    return kExitOk;
}

int export_cmd(const EvalArgs& a, std::ostream& out, std::ostream& err) {
    const Schema schema = Schema::load(a.schema);
    const Model model = load_for_schema(a.ckpt, schema);
    const Dataset ds = load_data(a.data, schema, err);
    export_features(model, ds, a.out, a.rows);
    out << a.out << '\n';
    return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Multi-task learning toolkit: feature decomposition networks and mixture-of-experts baselines", "fdn"};
    app.require_subcommand(1);

    GenDataArgs gen;
    auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic dataset and its metadata sidecar");
    gen_cmd->add_option("--kind", gen.kind, "A, B or I")->required()->check(CLI::IsMember({"A", "B", "I"}));
    gen_cmd->add_option("--n", gen.n, "rows")->capture_default_str();
    gen_cmd->add_option("--d", gen.d, "latent and feature dimension")->capture_default_str();
    gen_cmd->add_option("--m", gen.m, "sine terms in the labels")->capture_default_str();
    gen_cmd->add_option("--seed", gen.seed)->capture_default_str();
    gen_cmd->add_option("--out", gen.out, "CSV path; the sidecar is written next to it as .json")->required();
    gen_cmd->add_option("--c1", gen.c1)->capture_default_str();
    gen_cmd->add_option("--c2", gen.c2)->capture_default_str();
    gen_cmd->add_option("--cs", gen.cs)->capture_default_str();

    TrainArgs tr;
    auto* train_sub = app.add_subcommand("train", "Train one model and write a checkpoint and run report");
    add_arch_options(train_sub, tr.arch);
    train_sub->add_option("--data", tr.data, "training CSV")->required();
    train_sub->add_option("--schema", tr.schema, "schema JSON (or a gen-data sidecar)")->required();
    train_sub->add_option("--eval-data", tr.eval_data, "CSV the report's metrics are computed on");
    train_sub->add_option("--epochs", tr.epochs)->capture_default_str();
    train_sub->add_option("--batch", tr.batch)->capture_default_str();
    train_sub->add_option("--lr", tr.lr)->capture_default_str();
    train_sub->add_option("--optimizer", tr.optimizer)->check(CLI::IsMember({"adam", "sgd"}))->capture_default_str();
    train_sub->add_option("--seed", tr.seed)->capture_default_str();
    tr.ablate_opt = train_sub->add_option("--ablate", tr.ablate, "fdn ablation: orth, aux or shared (repeatable)")
                        ->check(CLI::IsMember({"orth", "aux", "shared"}))
                        ->expected(1)
                        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    train_sub->add_option("--ckpt", tr.ckpt, "checkpoint output path");
    train_sub->add_option("--report", tr.report, "run report JSON output path");

    BenchArgs bench;
    auto* bench_cmd = app.add_subcommand("benchmark-synthetic", "Oracle gap benchmark on synthetic data");
    bench_cmd->add_option("--seeds", bench.seeds, "number of seeds")->capture_default_str();
    bench_cmd->add_option("--out", bench.out, "output directory")->required();
    bench_cmd->add_option("--first-seed", bench.first_seed)->capture_default_str();
    bench_cmd->add_option("--n-train", bench.n_train)->capture_default_str();
    bench_cmd->add_option("--n-test", bench.n_test)->capture_default_str();
    bench_cmd->add_option("--d", bench.d)->capture_default_str();
    bench_cmd->add_option("--m", bench.m)->capture_default_str();
    bench_cmd->add_option("--c1", bench.c1)->capture_default_str();
    bench_cmd->add_option("--c2", bench.c2)->capture_default_str();
    bench_cmd->add_option("--cs", bench.cs)->capture_default_str();
    bench_cmd->add_option("--epochs", bench.epochs)->capture_default_str();
    bench_cmd->add_option("--batch", bench.batch)->capture_default_str();
    bench_cmd->add_option("--lr", bench.lr)->capture_default_str();
    bench_cmd->add_flag("--no-ablations", bench.no_ablations, "skip the fdn ablation runs");

    EvalArgs ev;
    auto* eval_cmd = app.add_subcommand("evaluate", "Print per-task metrics of a checkpoint as JSON");
    eval_cmd->add_option("--ckpt", ev.ckpt)->required();
    eval_cmd->add_option("--data", ev.data)->required();
    eval_cmd->add_option("--schema", ev.schema)->required();

    CountArgs cnt;
    auto* count_cmd = app.add_subcommand("param-count", "Print the exact parameter count of a model spec");
    add_arch_options(count_cmd, cnt.arch);
    count_cmd->get_option("--model")->required(false);
    count_cmd->add_option("--ckpt", cnt.ckpt, "read the spec from a checkpoint");
    cnt.schema_opt = count_cmd->add_option("--schema", cnt.schema, "input layout and tasks");
    cnt.dense_opt = count_cmd->add_option("--dense", cnt.dense, "dense input width without a schema")->capture_default_str();
    cnt.tasks_opt = count_cmd->add_option("--tasks", cnt.tasks, "task count without a schema")->capture_default_str();

    EvalArgs ex;
    auto* export_sub = app.add_subcommand("export-features", "Write per-sample expert outputs as CSV");
    export_sub->add_option("--ckpt", ex.ckpt)->required();
    export_sub->add_option("--data", ex.data)->required();
    export_sub->add_option("--schema", ex.schema)->required();
    export_sub->add_option("--out", ex.out)->required();
    export_sub->add_option("--rows", ex.rows, "leading rows to export (0 = all)")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        const auto subs = app.get_subcommands();
        out << (subs.empty() ? app.help() : subs.front()->help());
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        const auto subs = app.get_subcommands();
        err << "error: " << e.what() << "\n\n" << (subs.empty() ? app.help() : subs.front()->help());
        return kExitUsage;
    }

    try {
        if (gen_cmd->parsed()) return gen_data(gen, out);
        if (train_sub->parsed()) return train_cmd(tr, out, err);
        if (bench_cmd->parsed()) return benchmark_cmd(bench, out, err);
        if (eval_cmd->parsed()) return evaluate_cmd(ev, out, err);
        if (count_cmd->parsed()) return param_count_cmd(cnt, out);
        if (export_sub->parsed()) return export_cmd(ex, out, err);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitUsage;
}

}  // namespace fdn
