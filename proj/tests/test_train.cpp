#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "fdn/benchmark.hpp"
#include "fdn/datagen.hpp"
#include "fdn/errors.hpp"
#include "fdn/metrics.hpp"
#include "fdn/training.hpp"
#include "temp_dir.hpp"

using namespace fdn;

namespace {

double pairwise_auc(const std::vector<double>& s, const std::vector<double>& y) {
    double wins = 0.0, pairs = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (y[i] != 1.0) continue;
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (y[j] != 0.0) continue;
            pairs += 1.0;
            if (s[i] > s[j]) wins += 1.0;
            if (s[i] == s[j]) wins += 0.5;
        }
    }
    return wins / pairs;
}

/// Regression target y = w.x over Gaussian inputs plus a coin-flip binary task.
Dataset linear_dataset(std::size_t n, std::uint64_t seed, bool with_binary) {
    Rng rng(seed);
    Dataset ds;
    ds.dense_names = {"x0", "x1", "x2", "x3"};
    ds.features = sample_gaussian(rng, n, 4, 0.0, 1.0);
    ds.categorical = IndexGrid(n, 0);
    ds.tasks = {{"y", TaskKind::Regression}};
    ds.labels.resize(1);
    const double w[] = {0.5, -0.25, 0.75, 0.1};
    for (std::size_t r = 0; r < n; ++r) {
        double y = 0.0;
        for (std::size_t c = 0; c < 4; ++c) y += w[c] * ds.features(r, c);
        ds.labels[0].push_back(y);
    }
    if (with_binary) {
        ds.tasks.push_back({"click", TaskKind::Binary});
        ds.labels.emplace_back();
        for (std::size_t r = 0; r < n; ++r) ds.labels[1].push_back(ds.features(r, 0) + 0.3 * rng.normal() > 0 ? 1.0 : 0.0);
    }
    return ds;
}

ModelSpec small_spec(ModelKind kind, const Dataset& ds) {
    ModelSpec s;
    s.kind = kind;
    s.tasks = ds.tasks;
    s.dense_width = ds.dense_width();
    s.expert_widths = {8};
    s.tower_width = 4;
    s.num_experts = 2;
    s.num_specific = 1;
    s.dcp = 1;
    return s;
}

TrainConfig quick_config() {
    TrainConfig c;
    c.epochs = 2;
    c.batch_size = 32;
    c.learning_rate = 1e-2;
    return c;
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

BenchmarkConfig tiny_benchmark() {
    BenchmarkConfig c;
    c.synth.d = 6;
    c.synth.m = 2;
    c.n_train = 256;
    c.n_test = 128;
    c.seeds = 2;
    c.train.epochs = 2;
    c.train.batch_size = 64;
    c.train.learning_rate = 1e-2;
    c.expert_widths = {8};
    c.tower_width = 4;
    c.mmoe_experts = 2;
    c.cgc_shared = 1;
    c.cgc_specific = 1;
    c.ple_levels = 2;
    c.fdn_dcp = 1;
    c.diagnostic_rows = 64;
    c.threads = 2;
    return c;
}

}  // namespace

TEST_CASE("mse") {
    const double p[] = {1, 2, 3}, y[] = {1, 2, 3};
    CHECK(mse(p, y) == 0.0);
    const double q[] = {0, 0}, z[] = {1, -1};
    CHECK(mse(q, z) == 1.0);
    CHECK_THROWS(mse(q, y));
}

TEST_CASE("auc") {
    SUBCASE("examples") {
        const double y[] = {0, 0, 1, 1};
        const double perfect[] = {0.1, 0.2, 0.8, 0.9};
        const double reversed[] = {0.9, 0.8, 0.2, 0.1};
        const double flat[] = {0.5, 0.5, 0.5, 0.5};
        CHECK(auc(perfect, y) == 1.0);
        CHECK(auc(reversed, y) == 0.0);
        CHECK(auc(flat, y) == 0.5);
        const double mixed[] = {0.1, 0.4, 0.35, 0.8};
        CHECK(auc(mixed, y) == 0.75);
    }
    SUBCASE("pairwise oracle on random instances with ties") {
        Rng rng(5);
        for (int instance = 0; instance < 100; ++instance) {
            const std::size_t n = 2 + rng.uniform_index(60);
            std::vector<double> s(n), y(n);
            for (std::size_t i = 0; i < n; ++i) {
                s[i] = static_cast<double>(rng.uniform_index(10)) / 10.0;
                y[i] = static_cast<double>(rng.uniform_index(2));
            }
            y[0] = 0.0;
            y[1] = 1.0;
            CHECK(auc(s, y) == pairwise_auc(s, y));
        }
    }
    SUBCASE("strictly increasing transforms") {
        Rng rng(6);
        std::vector<double> s(200), y(200), t1(200), t2(200);
        for (std::size_t i = 0; i < s.size(); ++i) {
            s[i] = rng.normal();
            y[i] = s[i] + rng.normal() > 0 ? 1.0 : 0.0;
            t1[i] = std::exp(s[i]);
            t2[i] = 3.0 * s[i] + 7.0;
        }
        CHECK(auc(t1, y) == auc(s, y));
        CHECK(auc(t2, y) == auc(s, y));
    }
    SUBCASE("undefined") {
        const double s[] = {0.1, 0.2}, ones[] = {1, 1}, bad[] = {0, 2};
        CHECK_THROWS_AS(auc(s, ones), UndefinedMetricError);
        CHECK_THROWS_AS(auc(s, bad), DataError);
    }
}

TEST_CASE("gap vs oracle") {
    CHECK(gap_vs_oracle(0.8, 0.8, MetricKind::AUC) == 0.0);
    CHECK(gap_vs_oracle(0.5, 0.5, MetricKind::MSE) == 0.0);
    CHECK(gap_vs_oracle(0.88, 0.8, MetricKind::AUC) == doctest::Approx(10.0));
    CHECK(gap_vs_oracle(1.2, 1.0, MetricKind::MSE) == doctest::Approx(-20.0));
    CHECK(gap_vs_oracle(0.9, 1.0, MetricKind::MSE) == doctest::Approx(10.0));
    CHECK_THROWS_AS(gap_vs_oracle(1.0, 0.0, MetricKind::MSE), std::invalid_argument);
}

TEST_CASE("median and iqr") {
    CHECK(median({3, 1, 2}) == 2.0);
    CHECK(median({4, 1, 2, 3}) == 2.5);
    CHECK(std::isnan(median({})));
    CHECK(iqr({1, 2, 3, 4, 5}) == 2.0);
    CHECK(iqr({7}) == 0.0);
}

TEST_CASE("training config") {
    TrainConfig c;
    CHECK(c.epochs == 5);
    CHECK(c.batch_size == 1024);
    c.no_orth = true;
    c.no_aux = true;
    CHECK(c.effective_weights().orth == 0.0);
    CHECK(c.effective_weights().aux == 0.0);
    CHECK(c.effective_weights().task == 1.0);
    const auto j = c.to_json();
    CHECK(j.at("w_orth") == 0.0);
    CHECK(j.at("w_aux") == 0.0);
    CHECK(j.at("ablate").size() == 2);
    c.batch_size = 0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    CHECK(parse_optimizer_kind("sgd") == OptimizerKind::SGD);
    CHECK_THROWS(parse_optimizer_kind("rmsprop"));
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
    const Dataset ds = linear_dataset(100, 1, true);
    const ModelSpec spec = small_spec(ModelKind::FDN, ds);
    for (OptimizerKind opt : {OptimizerKind::SGD, OptimizerKind::Adam}) {
        TrainConfig c = quick_config();
        c.optimizer = opt;
        c.learning_rate = 0.0;
        c.seed = 3;
        const TrainResult r = train(spec, ds, c);
        const Model fresh(spec, derive_seed(3, 1));
        const auto a = r.model.parameters();
        const auto b = fresh.parameters();
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i]->value == b[i]->value);
    }
}

TEST_CASE("training is deterministic") {
    const Dataset ds = linear_dataset(200, 2, true);
    for (ModelKind kind : {ModelKind::MMoE, ModelKind::FDN}) {
        const ModelSpec spec = small_spec(kind, ds);
        const auto a = train(spec, ds, quick_config());
        const auto b = train(spec, ds, quick_config());
        CHECK(a.report.to_json(false).dump() == b.report.to_json(false).dump());
        TrainConfig other = quick_config();
        other.seed = 2;
        CHECK(train(spec, ds, other).report.to_json(false).dump() != a.report.to_json(false).dump());
    }
}

TEST_CASE("single-task model fits a linear target") {
    const Dataset train_set = linear_dataset(2000, 3, false);
    const Dataset test_set = linear_dataset(500, 4, false);
    ModelSpec spec = small_spec(ModelKind::SingleTask, train_set);
    spec.expert_widths = {16};
    TrainConfig c;
    c.epochs = 40;
    c.batch_size = 32;
    c.learning_rate = 3e-3;
    const auto r = train(spec, train_set, c, &test_set);
    REQUIRE(r.report.metrics.size() == 1);
    CHECK(r.report.metrics[0].kind == MetricKind::MSE);
    CHECK(r.report.metrics[0].value < 1e-3);
    CHECK(r.report.final_task_loss < r.report.initial_task_loss);
}

TEST_CASE("report contents") {
    const Dataset ds = linear_dataset(200, 5, true);
    TrainConfig c = quick_config();
    c.no_orth = true;
    const auto r = train(small_spec(ModelKind::FDN, ds), ds, c);
    CHECK(r.report.metrics.size() == ds.tasks.size());
    CHECK(r.report.metrics[0].kind == MetricKind::MSE);
    CHECK(r.report.metrics[1].kind == MetricKind::AUC);
    CHECK(r.report.epochs.size() == 2);
    CHECK(r.report.param_count == r.model.parameter_count());
    CHECK(r.report.config.at("w_orth") == 0.0);
    // the penalty is still monitored but carries no weight
    for (const auto& e : r.report.epochs) CHECK(e.total == doctest::Approx(e.task + e.aux));
    const auto j = r.report.to_json();
    CHECK(j.contains("wall_seconds"));
    CHECK_FALSE(r.report.to_json(false).contains("wall_seconds"));
}

TEST_CASE("divergence is reported with its epoch") {
    Dataset ds = linear_dataset(200, 6, false);
    for (double& y : ds.labels[0]) y *= 1e100;
    TrainConfig c = quick_config();
    c.optimizer = OptimizerKind::SGD;
    c.learning_rate = 1e10;
    try {
        train(small_spec(ModelKind::SingleTask, ds), ds, c);
        FAIL("expected divergence");
    } catch (const DivergenceError& e) {
        CHECK(std::string(e.what()).find("epoch") != std::string::npos);
    }
}

TEST_CASE("incompatible data") {
    const Dataset ds = linear_dataset(50, 7, true);
    ModelSpec spec = small_spec(ModelKind::FDN, ds);
    spec.dense_width = 5;
    CHECK_THROWS_AS(check_compatible(spec, ds), DataError);
    spec = small_spec(ModelKind::FDN, ds);
    spec.tasks[1].kind = TaskKind::Regression;
    CHECK_THROWS_AS(check_compatible(spec, ds), DataError);
    spec = small_spec(ModelKind::FDN, ds);
    spec.vocabulary_sizes = {4};
    CHECK_THROWS_AS(check_compatible(spec, ds), DataError);
}

TEST_CASE("cosine diagnostic") {
    const Matrix a = Matrix::from_rows({{1, 0}, {1, 1}, {0, 0}});
    const PairCosine same_rows = mean_abs_cosine(a, a);
    CHECK(same_rows.used == 2);
    CHECK(same_rows.excluded == 1);
    CHECK(same_rows.mean_abs_cosine == doctest::Approx(1.0));

    const Matrix b = Matrix::from_rows({{0, 3}, {-1, 1}, {2, 2}});
    const PairCosine orth = mean_abs_cosine(a, b);
    CHECK(orth.mean_abs_cosine == 0.0);
    CHECK(orth.excluded == 1);

    const Matrix c = Matrix::from_rows({{-2, 0}});
    const Matrix d = Matrix::from_rows({{1, 1}});
    CHECK(mean_abs_cosine(c, d).mean_abs_cosine == doctest::Approx(std::sqrt(0.5)));

    const Dataset ds = linear_dataset(100, 8, true);
    const Model fdn(small_spec(ModelKind::FDN, ds), 1);
    const auto report = orthogonality_diagnostic(fdn, ds, 50);
    CHECK(report.pairs.size() == 2);
    for (const auto& p : report.pairs) CHECK(p.used + p.excluded == 50);
    const Model mmoe(small_spec(ModelKind::MMoE, ds), 1);
    CHECK_THROWS(orthogonality_diagnostic(mmoe, ds, 50));
}

TEST_CASE("feature export") {
    fdn::testing::TempDir dir;
    const Dataset ds = linear_dataset(30, 9, true);
    ModelSpec spec = small_spec(ModelKind::FDN, ds);
    spec.dcp = 2;
    const Model model(spec, 4);
    export_features(model, ds, dir.path() / "a.csv", 10);
    export_features(model, ds, dir.path() / "b.csv", 10);
    const std::string text = read_file(dir.path() / "a.csv");
    CHECK(text == read_file(dir.path() / "b.csv"));

    std::istringstream lines(text);
    std::string header, line;
    std::getline(lines, header);
    CHECK(header == "task,index,role,v0,v1,v2,v3,v4,v5,v6,v7");
    std::size_t rows = 0;
    std::vector<double> first_values;
    while (std::getline(lines, line)) {
        if (rows == 0) {
            std::istringstream cells(line);
            std::string cell;
            for (int i = 0; i < 3; ++i) std::getline(cells, cell, ',');
            while (std::getline(cells, cell, ',')) first_values.push_back(std::stod(cell));
        }
        ++rows;
    }
    // tasks x pairs x (shared, specific) x rows
    CHECK(rows == 2 * 2 * 2 * 10);

    Tape tape;
    const Batch b = make_batch(ds, std::vector<std::size_t>{0});
    const auto out = model.forward(tape, b.dense, b.categorical);
    const auto expected = out.expert_features.front().value.value().row(0);
    REQUIRE(first_values.size() == expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) CHECK(first_values[i] == expected[i]);
}

TEST_CASE("tiny synthetic benchmark") {
    const BenchmarkConfig config = tiny_benchmark();
    const BenchmarkResult a = run_synthetic_benchmark(config);
    CHECK(a.runs.size() == 2 * 9);
    for (const auto* r : a.select("oracle_a")) CHECK(r->gap[0] == 0.0);
    for (const auto* r : a.select("oracle_b")) CHECK(r->gap[1] == 0.0);
    for (const auto& r : a.runs) {
        CAPTURE(r.label);
        CHECK(r.final_task_loss < r.initial_task_loss);
        CHECK(r.param_count > 0);
    }
    for (const auto* r : a.select("fdn")) CHECK(r->orth_cosine >= 0.0);
    CHECK(a.select("fdn").size() == 2);

    fdn::testing::TempDir dir;
    write_benchmark_tables(a, dir.path() / "a");
    BenchmarkConfig single_thread = config;
    single_thread.threads = 1;
    write_benchmark_tables(run_synthetic_benchmark(single_thread), dir.path() / "b");
    for (const char* name : {"table1_gap.csv", "table3_ablation.csv", "orthogonality.csv", "runs.csv", "summary.csv"}) {
        CAPTURE(name);
        const std::string text = read_file(dir.path() / "a" / name);
        CHECK(!text.empty());
        CHECK(text == read_file(dir.path() / "b" / name));
    }
    const std::string table1 = read_file(dir.path() / "a" / "table1_gap.csv");
    CHECK(table1.rfind("model,taskA_gap,taskB_gap\noracle,0,0\nmmoe,", 0) == 0);
}

TEST_CASE("benchmark specs") {
    BenchmarkConfig c;
    const std::vector<TaskInfo> tasks{{"a", TaskKind::Regression}, {"b", TaskKind::Regression}};
    CHECK(benchmark_spec(ModelKind::MMoE, c, tasks).num_experts == 8);
    const ModelSpec cgc = benchmark_spec(ModelKind::CGC, c, tasks);
    CHECK(cgc.levels == 1);
    CHECK(cgc.num_experts == 4);
    CHECK(cgc.num_specific == 4);
    CHECK(benchmark_spec(ModelKind::PLE, c, tasks).levels == 2);
    CHECK(benchmark_spec(ModelKind::FDN, c, tasks).dcp == 2);
    c.seeds = 0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}
