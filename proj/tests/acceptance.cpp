// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
// Usage: fdn_acceptance [output-dir]
// The full synthetic benchmark tables are written to output-dir
// (default: acceptance_benchmark in the working directory).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "fdn/benchmark.hpp"
#include "fdn/cli.hpp"
#include "fdn/datagen.hpp"
#include "fdn/dataio.hpp"
#include "fdn/losses.hpp"
#include "fdn/metrics.hpp"
#include "fdn/models.hpp"
#include "gradient_suite.hpp"
#include "temp_dir.hpp"

using namespace fdn;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v, int precision = 4) {
    std::ostringstream ss;
    ss.precision(precision);
    ss << v;
    return ss.str();
}

int failures = 0;

void report(int id, bool pass, const std::string& what, const std::string& detail) {
    if (!pass) ++failures;
    std::cout << (pass ? "PASS" : "FAIL") << " criterion " << id << ": " << what << " (" << detail << ")"
              << std::endl;
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void gradient_suite() {
    const auto start = Clock::now();
    auto checks = fdn::testing::op_gradient_checks();
    for (auto& c : fdn::testing::model_gradient_checks()) checks.push_back(c);
    double worst = 0.0;
    std::string worst_name;
    std::size_t scalars = 0;
    for (const auto& c : checks) {
        scalars += c.result.checked;
        if (c.result.max_rel_error >= worst) {
            worst = c.result.max_rel_error;
            worst_name = c.name;
        }
    }
    const double t = seconds_since(start);
    report(1, worst < 1e-4 && t < 60.0, "gradient suite",
           std::to_string(checks.size()) + " checks over " + std::to_string(scalars) + " scalars, max rel error " +
               fmt(worst, 3) + " in " + worst_name + ", " + fmt(t, 3) + " s");
}

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

void auc_oracle() {
    const auto start = Clock::now();
    Rng rng(2024);
    int mismatches = 0;
    for (int instance = 0; instance < 100; ++instance) {
        const std::size_t n = 2 + rng.uniform_index(999);
        // coarse scores on half the instances so ties are common
        const double levels = instance % 2 == 0 ? 20.0 : 1e6;
        std::vector<double> s(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = std::floor(rng.uniform() * levels) / levels;
            y[i] = static_cast<double>(rng.uniform_index(2));
        }
        y[0] = 0.0;
        y[1] = 1.0;
        if (auc(s, y) != pairwise_auc(s, y)) ++mismatches;
    }
    const double t = seconds_since(start);
    report(2, mismatches == 0 && t < 60.0, "AUC equals the pairwise oracle",
           std::to_string(100 - mismatches) + "/100 exact, " + fmt(t, 3) + " s");
}

double median_of(const BenchmarkResult& r, const std::string& label, int task, bool gap) {
    std::vector<double> v;
    for (const auto* run : r.select(label)) v.push_back(gap ? std::abs(run->gap[task]) : run->mse[task]);
    return median(v);
}

void benchmark_criteria(const std::filesystem::path& out_dir) {
    BenchmarkConfig config;
    std::cerr << "running the default synthetic benchmark (" << config.seeds << " seeds, "
              << default_thread_count() << " threads)" << std::endl;
    const auto start = Clock::now();
    const BenchmarkResult result = run_synthetic_benchmark(config, [](const BenchmarkRun& r) {
        std::cerr << "  seed " << r.seed << ' ' << r.label << ' ' << fmt(r.wall_seconds, 3) << " s" << std::endl;
    });
    const double t = seconds_since(start);
    write_benchmark_tables(result, out_dir);

    const char* models[] = {"mmoe", "cgc", "ple", "fdn"};
    bool fdn_beats_mmoe = true;
    bool fdn_smallest_somewhere = false;
    std::string detail;
    for (int task = 0; task < 2; ++task) {
        const double fdn = median_of(result, "fdn", task, true);
        fdn_beats_mmoe = fdn_beats_mmoe && fdn < median_of(result, "mmoe", task, true);
        bool smallest = true;
        detail += std::string(task == 0 ? "task A" : "; task B") + " median |gap| %";
        for (const char* m : models) {
            const double g = median_of(result, m, task, true);
            detail += std::string(" ") + m + "=" + fmt(g);
            if (std::string(m) != "fdn" && g <= fdn) smallest = false;
        }
        fdn_smallest_somewhere = fdn_smallest_somewhere || smallest;
    }
    report(3, fdn_beats_mmoe && fdn_smallest_somewhere && t < 900.0,
           "FDN has the smallest oracle gap and beats MMoE on both tasks",
           detail + "; " + fmt(t, 4) + " s for the whole benchmark");

    const double full = median_of(result, "fdn", 0, false);
    bool dominates = true;
    std::string ablation = "task A median MSE fdn=" + fmt(full, 5);
    for (const char* a : {"fdn_no_orth", "fdn_no_aux", "fdn_no_shared_fusion"}) {
        const double v = median_of(result, a, 0, false);
        dominates = dominates && full <= v;
        ablation += std::string(" ") + a + "=" + fmt(v, 5);
    }
    report(4, dominates, "full FDN is no worse than each ablation", ablation);

    std::vector<double> with, without;
    for (const auto* r : result.select("fdn")) with.push_back(r->orth_cosine);
    for (const auto* r : result.select("fdn_no_orth")) without.push_back(r->orth_cosine);
    const double mw = median(with), mo = median(without);
    report(5, mw <= 0.5 * mo, "orthogonality penalty halves the shared/specific cosine",
           "median mean |cos| with=" + fmt(mw) + " without=" + fmt(mo) + " ratio=" + fmt(mw / mo));
}

void parameter_ordering() {
    ModelSpec base;
    base.tasks = {{"ctr", TaskKind::Binary}, {"cvr", TaskKind::Binary}};
    base.dense_width = 16;
    base.vocabulary_sizes = {1000, 1000, 500, 100};
    base.embedding_dim = 8;
    ModelSpec fdn = base, mmoe = base, cgc = base, ple = base;
    fdn.kind = ModelKind::FDN;
    fdn.dcp = 2;
    mmoe.kind = ModelKind::MMoE;
    mmoe.num_experts = 8;
    // each task gate sees 8 experts (CGC) or 16 per level (PLE), half shared
    cgc.kind = ModelKind::CGC;
    cgc.levels = 1;
    cgc.num_experts = 4;
    cgc.num_specific = 4;
    ple.kind = ModelKind::PLE;
    ple.levels = 2;
    ple.num_experts = 8;
    ple.num_specific = 8;
    const std::size_t f = param_count(fdn), m = param_count(mmoe), c = param_count(cgc), p = param_count(ple);
    report(6, f < m && m < c && c < p, "parameter ordering FDN < MMoE < CGC < PLE",
           "fdn=" + std::to_string(f) + " mmoe=" + std::to_string(m) + " cgc=" + std::to_string(c) +
               " ple=" + std::to_string(p));
}

int run_cli_quiet(std::vector<std::string> args) {
    args.insert(args.begin(), "fdn");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

void determinism() {
    fdn::testing::TempDir dir;
    bool ok = true;
    for (const char* name : {"a", "b"}) {
        ok = ok && run_cli_quiet({"benchmark-synthetic", "--seeds", "2", "--n-train", "2000", "--n-test", "500",
                                  "--epochs", "1", "--batch", "256", "--out", (dir.path() / name).string()}) == kExitOk;
    }
    std::size_t compared = 0;
    for (const char* file : {"table1_gap.csv", "table3_ablation.csv", "orthogonality.csv", "runs.csv", "summary.csv"}) {
        const std::string a = read_file(dir.path() / "a" / file);
        ok = ok && !a.empty() && a == read_file(dir.path() / "b" / file);
        ++compared;
    }
    report(7, ok, "benchmark-synthetic output is byte-identical across runs",
           std::to_string(compared) + " CSV files compared");
}

void property_suites() {
    std::vector<std::string> broken;
    Rng rng(77);

    // softmax rows are distributions
    {
        Tape tape;
        const Var s = softmax_rows(tape.constant(sample_gaussian(rng, 50, 7, 0.0, 10.0)));
        for (std::size_t r = 0; r < s.rows(); ++r) {
            double acc = 0.0;
            for (double v : s.value().row(r)) acc += v;
            if (std::abs(acc - 1.0) > 1e-12) broken.push_back("softmax row sum");
        }
    }
    // AUC is invariant under strictly increasing transforms
    for (int i = 0; i < 20; ++i) {
        std::vector<double> s(300), y(300), e(300), a(300);
        for (std::size_t j = 0; j < s.size(); ++j) {
            s[j] = rng.normal();
            y[j] = s[j] + rng.normal() > 0.0 ? 1.0 : 0.0;
            e[j] = std::exp(s[j]);
            a[j] = 2.5 * s[j] - 4.0;
        }
        if (auc(e, y) != auc(s, y) || auc(a, y) != auc(s, y)) broken.push_back("auc monotone invariance");
    }
    // orthogonality loss is invariant under rotations of either feature space
    for (int i = 0; i < 20; ++i) {
        const Matrix fs = sample_gaussian(rng, 8, 2, 0.0, 1.0), fp = sample_gaussian(rng, 8, 2, 0.0, 1.0);
        const double th = rng.uniform(0.0, 6.283185307179586), ph = rng.uniform(0.0, 6.283185307179586);
        const Matrix q1 = Matrix::from_rows({{std::cos(th), -std::sin(th)}, {std::sin(th), std::cos(th)}});
        const Matrix q2 = Matrix::from_rows({{std::cos(ph), std::sin(ph)}, {std::sin(ph), -std::cos(ph)}});
        Tape tape;
        const double base = orth_loss(tape, {{tape.constant(fs)}}, {{tape.constant(fp)}}).value()(0, 0);
        const double rotated =
            orth_loss(tape, {{tape.constant(matmul(fs, q1))}}, {{tape.constant(matmul(fp, q2))}}).value()(0, 0);
        if (std::abs(base - rotated) > 1e-9) broken.push_back("orth rotation invariance");
    }
    // batches partition the dataset
    SynthConfig sc;
    sc.n_samples = 1037;
    sc.d = 5;
    const Dataset ds = generate(sc, SynthKind::I).dataset;
    for (std::size_t batch : {1u, 64u, 1024u, 5000u}) {
        BatchStream stream(ds, batch, 9);
        std::vector<int> seen(ds.size(), 0);
        while (auto b = stream.next()) {
            for (std::size_t r : b->rows) ++seen[r];
        }
        if (std::any_of(seen.begin(), seen.end(), [](int c) { return c != 1; })) broken.push_back("batch partition");
    }
    // CSV round trip is exact
    {
        fdn::testing::TempDir dir;
        write_csv(ds, dir.path() / "i.csv");
        const Dataset back = load_csv(dir.path() / "i.csv", schema_of(ds)).dataset;
        if (!(back.features == ds.features) || back.labels != ds.labels || !(back.categorical == ds.categorical)) {
            broken.push_back("csv round trip");
        }
    }
    report(8, broken.empty(), "property suites",
           broken.empty() ? "softmax rows, auc monotone invariance, orth rotation invariance, batch partition, csv "
                            "round trip"
                          : "broken: " + broken.front());
}

}  // namespace

int main(int argc, char** argv) {
    const std::filesystem::path out_dir = argc > 1 ? argv[1] : "acceptance_benchmark";
    gradient_suite();
    auc_oracle();
    benchmark_criteria(out_dir);
    parameter_ordering();
    determinism();
    property_suites();
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
    return failures == 0 ? 0 : 1;
}
