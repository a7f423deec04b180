#include "fdn/benchmark.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

#include "fdn/dataio.hpp"
#include "fdn/errors.hpp"

namespace fdn {

using nlohmann::json;

void BenchmarkConfig::validate() const {
    if (n_train < 1 || n_test < 1) throw std::invalid_argument("benchmark needs non-empty train and test splits");
    if (seeds < 1) throw std::invalid_argument("benchmark needs at least one seed");
    if (diagnostic_rows < 1) throw std::invalid_argument("diagnostic_rows must be positive");
    SynthConfig s = synth;
    s.n_samples = n_train + n_test;
    s.validate();
    train.validate();
}

json BenchmarkConfig::to_json() const {
    return json{{"synth", synth.to_json()},
                {"n_train", n_train},
                {"n_test", n_test},
                {"seeds", seeds},
                {"first_seed", first_seed},
                {"train", train.to_json()},
                {"expert_widths", expert_widths},
                {"tower_width", tower_width},
                {"mmoe_experts", mmoe_experts},
                {"cgc_shared", cgc_shared},
                {"cgc_specific", cgc_specific},
                {"ple_levels", ple_levels},
                {"fdn_dcp", fdn_dcp},
                {"ablations", ablations},
                {"diagnostic_rows", diagnostic_rows}};
}

std::vector<const BenchmarkRun*> BenchmarkResult::select(const std::string& label) const {
    std::vector<const BenchmarkRun*> out;
    for (const auto& r : runs) {
        if (r.label == label) out.push_back(&r);
    }
    return out;
}

ModelSpec benchmark_spec(ModelKind kind, const BenchmarkConfig& config, std::vector<TaskInfo> tasks) {
    ModelSpec s;
    s.kind = kind;
    s.tasks = std::move(tasks);
    s.dense_width = config.synth.d;
    s.expert_widths = config.expert_widths;
    s.tower_width = config.tower_width;
    switch (kind) {
        case ModelKind::MMoE: s.num_experts = config.mmoe_experts; break;
        case ModelKind::CGC:
        case ModelKind::PLE:
            s.num_experts = config.cgc_shared;
            s.num_specific = config.cgc_specific;
            s.levels = kind == ModelKind::PLE ? config.ple_levels : 1;
            break;
        case ModelKind::FDN: s.dcp = config.fdn_dcp; break;
        case ModelKind::SingleTask: break;
    }
    return s;
}

std::size_t default_thread_count() {
    if (const char* env = std::getenv("FDN_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
    }
    return std::max(1U, std::thread::hardware_concurrency());
}

double median(std::vector<double> values) {
    if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

namespace {

double quantile(const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

double iqr(std::vector<double> values) {
    if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(values.begin(), values.end());
    return quantile(values, 0.75) - quantile(values, 0.25);
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct SeedData {
    Dataset train_a, test_a, train_b, test_b, train_i, test_i;
};

struct Job {
    std::size_t seed_index = 0;
    std::string label;
    ModelKind kind = ModelKind::FDN;
    char dataset = 'I';
    bool no_orth = false, no_aux = false, no_shared_fusion = false;
};

std::pair<Dataset, Dataset> split(const Dataset& ds, std::size_t n_train) {
    std::vector<std::size_t> a(n_train), b(ds.size() - n_train);
    std::iota(a.begin(), a.end(), std::size_t{0});
    std::iota(b.begin(), b.end(), n_train);
    return {ds.select_rows(a), ds.select_rows(b)};
}

SeedData make_seed_data(const BenchmarkConfig& config, std::uint64_t seed) {
    SynthConfig s = config.synth;
    s.n_samples = config.n_train + config.n_test;
    s.seed = seed;
    SeedData d;
    std::tie(d.train_a, d.test_a) = split(generate(s, SynthKind::A).dataset, config.n_train);
    std::tie(d.train_b, d.test_b) = split(generate(s, SynthKind::B).dataset, config.n_train);
    std::tie(d.train_i, d.test_i) = split(generate(s, SynthKind::I).dataset, config.n_train);
    return d;
}

std::vector<Job> make_jobs(const BenchmarkConfig& config) {
    std::vector<Job> jobs;
    for (std::size_t s = 0; s < config.seeds; ++s) {
        jobs.push_back({s, "oracle_a", ModelKind::SingleTask, 'A'});
        jobs.push_back({s, "oracle_b", ModelKind::SingleTask, 'B'});
        jobs.push_back({s, "mmoe", ModelKind::MMoE, 'I'});
        jobs.push_back({s, "cgc", ModelKind::CGC, 'I'});
        jobs.push_back({s, "ple", ModelKind::PLE, 'I'});
        jobs.push_back({s, "fdn", ModelKind::FDN, 'I'});
        if (config.ablations) {
            jobs.push_back({s, "fdn_no_orth", ModelKind::FDN, 'I', true, false, false});
            jobs.push_back({s, "fdn_no_aux", ModelKind::FDN, 'I', false, true, false});
            jobs.push_back({s, "fdn_no_shared_fusion", ModelKind::FDN, 'I', false, false, true});
        }
    }
    return jobs;
}

BenchmarkRun run_job(const BenchmarkConfig& config, const Job& job, const SeedData& data, std::uint64_t seed) {
    const Dataset* train_set = &data.train_i;
    const Dataset* test_set = &data.test_i;
    if (job.dataset == 'A') {
        train_set = &data.train_a;
        test_set = &data.test_a;
    } else if (job.dataset == 'B') {
        train_set = &data.train_b;
        test_set = &data.test_b;
    }
    TrainConfig tc = config.train;
    tc.seed = seed;
    tc.no_orth = job.no_orth;
    tc.no_aux = job.no_aux;
    tc.no_shared_fusion = job.no_shared_fusion;

    const ModelSpec spec = benchmark_spec(job.kind, config, train_set->tasks);
    TrainResult result = train(spec, *train_set, tc, test_set);

    BenchmarkRun run;
    run.seed = seed;
    run.label = job.label;
    run.dataset = std::string(1, job.dataset);
    run.mse.assign(2, kNaN);
    run.gap.assign(2, kNaN);
    for (const auto& m : result.report.metrics) {
        if (m.task == kTaskAName) run.mse[0] = m.value;
        if (m.task == kTaskBName) run.mse[1] = m.value;
    }
    run.param_count = result.report.param_count;
    run.initial_task_loss = result.report.initial_task_loss;
    run.final_task_loss = result.report.final_task_loss;
    if (job.kind == ModelKind::FDN) {
        run.orth_cosine = orthogonality_diagnostic(result.model, *test_set, config.diagnostic_rows).mean;
        run.final_orth_loss = result.report.epochs.back().orth;
    }
    run.wall_seconds = result.report.wall_seconds;
    return run;
}

}  // namespace

BenchmarkResult run_synthetic_benchmark(const BenchmarkConfig& config,
                                        const std::function<void(const BenchmarkRun&)>& progress) {
    config.validate();
    std::vector<std::uint64_t> seeds(config.seeds);
    for (std::size_t s = 0; s < config.seeds; ++s) seeds[s] = config.first_seed + s;

    std::vector<SeedData> data;
    for (std::uint64_t seed : seeds) data.push_back(make_seed_data(config, seed));

    const std::vector<Job> jobs = make_jobs(config);
    std::vector<BenchmarkRun> runs(jobs.size());
    std::vector<std::exception_ptr> errors(jobs.size());
    std::atomic<std::size_t> next{0};
    std::mutex progress_mutex;

    auto worker = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= jobs.size()) return;
            const Job& job = jobs[i];
            try {
                runs[i] = run_job(config, job, data[job.seed_index], seeds[job.seed_index]);
                if (progress) {
                    std::lock_guard lock(progress_mutex);
                    progress(runs[i]);
                }
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t threads = std::min(jobs.size(), config.threads > 0 ? config.threads : default_thread_count());
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        if (!errors[i]) continue;
        const std::string id = "run '" + jobs[i].label + "' (seed " + std::to_string(seeds[jobs[i].seed_index]) + ")";
        try {
            std::rethrow_exception(errors[i]);
        } catch (const std::exception& e) {
            throw std::runtime_error(id + " failed: " + e.what());
        }
    }

    // Gaps against the same-seed oracles.
    for (std::size_t s = 0; s < seeds.size(); ++s) {
        double oracle[2] = {kNaN, kNaN};
        for (const auto& r : runs) {
            if (r.seed != seeds[s]) continue;
            if (r.label == "oracle_a") oracle[0] = r.mse[0];
            if (r.label == "oracle_b") oracle[1] = r.mse[1];
        }
        for (auto& r : runs) {
            if (r.seed != seeds[s]) continue;
            for (int t = 0; t < 2; ++t) {
                if (std::isnan(r.mse[t])) continue;
                r.gap[t] = gap_vs_oracle(r.mse[t], oracle[t], MetricKind::MSE);
            }
        }
    }

    BenchmarkResult result;
    result.config = config;
    result.runs = std::move(runs);
    return result;
}

// ---------------------------------------------------------------------------
// Tables

namespace {

std::string num(double v) { return std::isnan(v) ? std::string() : format_double(v); }

std::vector<double> column(const std::vector<const BenchmarkRun*>& runs, bool gap, int task, bool absolute = false) {
    std::vector<double> out;
    for (const auto* r : runs) {
        const double v = gap ? r->gap[task] : r->mse[task];
        if (!std::isnan(v)) out.push_back(absolute ? std::abs(v) : v);
    }
    return out;
}

std::ofstream open_table(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    return out;
}

const char* const kMtlModels[] = {"mmoe", "cgc", "ple", "fdn"};
const char* const kAblations[] = {"fdn", "fdn_no_orth", "fdn_no_aux", "fdn_no_shared_fusion"};

}  // namespace

void write_benchmark_tables(const BenchmarkResult& result, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);

    {
        auto out = open_table(dir / "table1_gap.csv");
        out << "model,taskA_gap,taskB_gap\n";
        out << "oracle,0,0\n";
        for (const char* m : kMtlModels) {
            const auto runs = result.select(m);
            out << m << ',' << num(median(column(runs, true, 0))) << ',' << num(median(column(runs, true, 1))) << '\n';
        }
    }
    {
        auto out = open_table(dir / "summary.csv");
        out << "model,task,median_mse,iqr_mse,median_gap,iqr_gap,median_abs_gap\n";
        std::vector<std::string> labels{"oracle_a", "oracle_b", "mmoe", "cgc", "ple", "fdn"};
        if (result.config.ablations) labels.insert(labels.end(), {"fdn_no_orth", "fdn_no_aux", "fdn_no_shared_fusion"});
        for (const auto& label : labels) {
            const auto runs = result.select(label);
            for (int t = 0; t < 2; ++t) {
                const auto mses = column(runs, false, t);
                if (mses.empty()) continue;
                out << label << ',' << (t == 0 ? kTaskAName : kTaskBName) << ',' << num(median(mses)) << ','
                    << num(iqr(mses)) << ',' << num(median(column(runs, true, t))) << ','
                    << num(iqr(column(runs, true, t))) << ',' << num(median(column(runs, true, t, true))) << '\n';
            }
        }
    }
    {
        auto out = open_table(dir / "runs.csv");
        out << "seed,model,dataset,taskA_mse,taskB_mse,taskA_gap,taskB_gap,param_count,initial_task_loss,"
               "final_task_loss,orth_cosine,final_orth_loss\n";
        for (const auto& r : result.runs) {
            out << r.seed << ',' << r.label << ',' << r.dataset << ',' << num(r.mse[0]) << ',' << num(r.mse[1]) << ','
                << num(r.gap[0]) << ',' << num(r.gap[1]) << ',' << r.param_count << ',' << num(r.initial_task_loss)
                << ',' << num(r.final_task_loss) << ',' << (r.orth_cosine < 0 ? "" : num(r.orth_cosine)) << ','
                << (r.final_orth_loss < 0 ? "" : num(r.final_orth_loss)) << '\n';
        }
    }
    if (!result.config.ablations) return;
    {
        auto out = open_table(dir / "table3_ablation.csv");
        out << "model,taskA_mse,taskB_mse\n";
        for (const char* m : kAblations) {
            const auto runs = result.select(m);
            out << m << ',' << num(median(column(runs, false, 0))) << ',' << num(median(column(runs, false, 1)))
                << '\n';
        }
    }
    {
        auto out = open_table(dir / "orthogonality.csv");
        out << "seed,with_orth,without_orth,ratio\n";
        const auto with = result.select("fdn");
        const auto without = result.select("fdn_no_orth");
        std::vector<double> a, b, ratio;
        for (std::size_t i = 0; i < with.size() && i < without.size(); ++i) {
            a.push_back(with[i]->orth_cosine);
            b.push_back(without[i]->orth_cosine);
            ratio.push_back(b.back() > 0 ? a.back() / b.back() : kNaN);
            out << with[i]->seed << ',' << num(a.back()) << ',' << num(b.back()) << ',' << num(ratio.back()) << '\n';
        }
        out << "median," << num(median(a)) << ',' << num(median(b)) << ',' << num(median(ratio)) << '\n';
    }
}

}  // namespace fdn
