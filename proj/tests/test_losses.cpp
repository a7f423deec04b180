#include <doctest.h>

#include <cmath>

#include "fdn/errors.hpp"
#include "fdn/losses.hpp"
#include "gradcheck.hpp"

using namespace fdn;

namespace {

double bce_oracle(const Matrix& z, const Matrix& y) {
    double acc = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double p = 1.0 / (1.0 + std::exp(-z.values()[i]));
        acc -= y.values()[i] * std::log(p) + (1.0 - y.values()[i]) * std::log(1.0 - p);
    }
    return acc / static_cast<double>(z.size());
}

double mse_oracle(const Matrix& p, const Matrix& y) {
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) acc += (p.values()[i] - y.values()[i]) * (p.values()[i] - y.values()[i]);
    return acc / static_cast<double>(p.size());
}

double gram_oracle(const Matrix& s, const Matrix& p) {
    double acc = 0.0;
    for (std::size_t i = 0; i < s.cols(); ++i) {
        for (std::size_t j = 0; j < p.cols(); ++j) {
            double g = 0.0;
            for (std::size_t r = 0; r < s.rows(); ++r) g += s(r, i) * p(r, j);
            acc += g * g;
        }
    }
    const double b = static_cast<double>(s.rows());
    return acc / (b * b);
}

double scalar(Var v) { return v.value()(0, 0); }

double orth_of(const Matrix& s, const Matrix& p, OrthMode mode = OrthMode::BatchGram) {
    Tape tape;
    return scalar(orth_loss(tape, {{tape.constant(s)}}, {{tape.constant(p)}}, mode));
}

Matrix random_matrix(std::uint64_t seed, std::size_t rows, std::size_t cols) {
    Rng rng(seed);
    return sample_gaussian(rng, rows, cols, 0.0, 1.0);
}

Matrix binary_column(std::uint64_t seed, std::size_t rows) {
    Rng rng(seed);
    Matrix y(rows, 1);
    for (double& v : y.values()) v = static_cast<double>(rng.uniform_index(2));
    return y;
}

const std::vector<TaskInfo> kTasks{{"reg", TaskKind::Regression}, {"bin", TaskKind::Binary}};

}  // namespace

TEST_CASE("task loss") {
    Tape tape;
    SUBCASE("perfect regression") {
        const Matrix y = Matrix::from_rows({{0.5}, {-1.0}});
        Var logits[] = {tape.constant(y)};
        Matrix labels[] = {y};
        TaskInfo tasks[] = {{"r", TaskKind::Regression}};
        CHECK(scalar(task_loss(logits, labels, tasks)) == 0.0);
    }
    SUBCASE("coin flip is ln 2") {
        Var logits[] = {tape.constant(Matrix(3, 1, 0.0))};
        Matrix labels[] = {Matrix::from_rows({{1}, {0}, {1}})};
        TaskInfo tasks[] = {{"b", TaskKind::Binary}};
        CHECK(scalar(task_loss(logits, labels, tasks)) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
    }
    SUBCASE("loop oracle, sum over tasks") {
        for (std::uint64_t seed = 1; seed <= 20; ++seed) {
            const Matrix za = random_matrix(seed, 7, 1), zb = random_matrix(seed + 100, 7, 1);
            const Matrix ya = random_matrix(seed + 200, 7, 1), yb = binary_column(seed, 7);
            Var logits[] = {tape.constant(za), tape.constant(zb)};
            Matrix labels[] = {ya, yb};
            const double expected = mse_oracle(za, ya) + bce_oracle(zb, yb);
            CHECK(scalar(task_loss(logits, labels, kTasks)) == doctest::Approx(expected).epsilon(1e-12));
        }
    }
    SUBCASE("binary label outside {0,1}") {
        Var logits[] = {tape.constant(Matrix(2, 1))};
        Matrix labels[] = {Matrix::from_rows({{1}, {0.5}})};
        TaskInfo tasks[] = {{"b", TaskKind::Binary}};
        CHECK_THROWS_AS(task_loss(logits, labels, tasks), DataError);
    }
    SUBCASE("count mismatch") {
        Var logits[] = {tape.constant(Matrix(2, 1))};
        Matrix labels[] = {Matrix(2, 1), Matrix(2, 1)};
        CHECK_THROWS_AS(task_loss(logits, labels, kTasks), ShapeError);
    }
}

TEST_CASE("orthogonality loss") {
    // orthogonal feature columns over a batch of two
    CHECK(orth_of(Matrix::from_rows({{1}, {0}}), Matrix::from_rows({{0}, {1}})) == 0.0);
    // a single row: the cross-gram is the outer product, only the per-sample dot vanishes
    CHECK(orth_of(Matrix::from_rows({{1, 0}}), Matrix::from_rows({{0, 1}})) == 1.0);
    CHECK(orth_of(Matrix::from_rows({{1, 0}}), Matrix::from_rows({{0, 1}}), OrthMode::PerSample) == 0.0);
    CHECK(orth_of(Matrix::from_rows({{1, 0}}), Matrix::from_rows({{1, 0}})) == 1.0);

    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const Matrix s = random_matrix(seed, 3, 2), p = random_matrix(seed + 50, 3, 2);
        CHECK(orth_of(s, p) == doctest::Approx(gram_oracle(s, p)).epsilon(1e-12));
    }

    SUBCASE("per-sample mode") {
        const Matrix s = Matrix::from_rows({{1, 2}, {0, 1}});
        const Matrix p = Matrix::from_rows({{3, 0}, {1, 0}});
        // row dots 3 and 0
        CHECK(orth_of(s, p, OrthMode::PerSample) == doctest::Approx(4.5));
    }

    SUBCASE("no pairs") {
        Tape tape;
        CHECK(scalar(orth_loss(tape, {}, {})) == 0.0);
        CHECK(scalar(orth_loss(tape, {{}, {}}, {{}, {}})) == 0.0);
    }

    SUBCASE("sums over tasks and pairs") {
        Tape tape;
        std::vector<std::vector<Var>> shared(2), specific(2);
        double expected = 0.0;
        for (std::size_t k = 0; k < 2; ++k) {
            for (std::size_t m = 0; m < 2; ++m) {
                const Matrix s = random_matrix(10 * k + m, 5, 3), p = random_matrix(10 * k + m + 5, 5, 3);
                shared[k].push_back(tape.constant(s));
                specific[k].push_back(tape.constant(p));
                expected += gram_oracle(s, p);
            }
        }
        CHECK(scalar(orth_loss(tape, shared, specific)) == doctest::Approx(expected).epsilon(1e-12));
    }

    SUBCASE("rotation of the feature space") {
        const Matrix s = random_matrix(3, 6, 2), p = random_matrix(4, 6, 2);
        const double c = std::cos(0.7), sn = std::sin(0.7);
        const Matrix rot = Matrix::from_rows({{c, -sn}, {sn, c}});
        CHECK(std::abs(orth_of(matmul(s, rot), p) - orth_of(s, p)) <= 1e-9);
        CHECK(std::abs(orth_of(s, matmul(p, rot)) - orth_of(s, p)) <= 1e-9);
    }

    SUBCASE("duplicating the batch") {
        const Matrix s = random_matrix(5, 4, 3), p = random_matrix(6, 4, 3);
        Matrix s2(8, 3), p2(8, 3);
        for (std::size_t r = 0; r < 8; ++r) {
            for (std::size_t c = 0; c < 3; ++c) {
                s2(r, c) = s(r % 4, c);
                p2(r, c) = p(r % 4, c);
            }
        }
        for (OrthMode mode : {OrthMode::BatchGram, OrthMode::PerSample}) {
            CHECK(std::abs(orth_of(s2, p2, mode) - orth_of(s, p, mode)) <= 1e-9);
        }
    }
}

TEST_CASE("auxiliary loss") {
    Tape tape;
    SUBCASE("one head per task equals the task loss") {
        const Matrix za = random_matrix(1, 6, 1), zb = random_matrix(2, 6, 1);
        const Matrix labels[] = {random_matrix(3, 6, 1), binary_column(4, 6)};
        Var logits[] = {tape.constant(za), tape.constant(zb)};
        const double aux = scalar(aux_loss(tape, {{logits[0]}, {logits[1]}}, labels, kTasks));
        CHECK(aux == scalar(task_loss(logits, labels, kTasks)));
    }
    SUBCASE("two tasks, two heads each") {
        const Matrix labels[] = {random_matrix(3, 6, 1), binary_column(4, 6)};
        std::vector<std::vector<Var>> heads(2);
        double expected = 0.0;
        for (std::size_t m = 0; m < 2; ++m) {
            const Matrix za = random_matrix(10 + m, 6, 1), zb = random_matrix(20 + m, 6, 1);
            heads[0].push_back(tape.constant(za));
            heads[1].push_back(tape.constant(zb));
            expected += mse_oracle(za, labels[0]) + bce_oracle(zb, labels[1]);
        }
        CHECK(scalar(aux_loss(tape, heads, labels, kTasks)) == doctest::Approx(expected).epsilon(1e-12));
    }
    SUBCASE("no heads") {
        const Matrix labels[] = {Matrix(2, 1), Matrix(2, 1)};
        CHECK(scalar(aux_loss(tape, {}, labels, kTasks)) == 0.0);
    }
}

TEST_CASE("weighted total") {
    Tape tape;
    const Var t = tape.constant(Matrix(1, 1, 1.0));
    const Var o = tape.constant(Matrix(1, 1, 1.0));
    const Var a = tape.constant(Matrix(1, 1, 1.0));
    CHECK(scalar(total_loss(t, o, a, {1, 1, 1})) == 3.0);
    CHECK(scalar(total_loss(tape.constant(Matrix(1, 1, 0.25)), tape.constant(Matrix(1, 1, 9.0)),
                            tape.constant(Matrix(1, 1, 7.0)), {1, 0, 0})) == 0.25);
    CHECK(scalar(total_loss(tape.constant(Matrix(1, 1, 2.0)), tape.constant(Matrix(1, 1, 3.0)),
                            tape.constant(Matrix(1, 1, 5.0)), {0.5, 2, 0.1})) == doctest::Approx(7.5));
    CHECK_THROWS_AS(total_loss(t, o, a, {1, -1, 1}), std::invalid_argument);
}

TEST_CASE("loss gradients") {
    Parameter s("s", random_matrix(7, 5, 3)), p("p", random_matrix(8, 5, 3));
    Parameter za("za", random_matrix(9, 5, 1)), zb("zb", random_matrix(10, 5, 1));
    Parameter ha("ha", random_matrix(11, 5, 1)), hb("hb", random_matrix(12, 5, 1));
    const Matrix labels[] = {random_matrix(13, 5, 1), binary_column(14, 5)};
    const LossWeights w{0.7, 1.3, 0.4};
    for (OrthMode mode : {OrthMode::BatchGram, OrthMode::PerSample}) {
        auto build = [&](Tape& tape) {
            Var logits[] = {tape.parameter(za), tape.parameter(zb)};
            const Var task = task_loss(logits, labels, kTasks);
            const Var orth = orth_loss(tape, {{tape.parameter(s)}, {}}, {{tape.parameter(p)}, {}}, mode);
            const Var aux = aux_loss(tape, {{tape.parameter(ha)}, {tape.parameter(hb)}}, labels, kTasks);
            return total_loss(task, orth, aux, w);
        };
        const auto r = fdn::testing::check_gradients({&s, &p, &za, &zb, &ha, &hb}, build);
        CHECK(r.checked == 50);
        CHECK(r.max_rel_error < 1e-6);
    }
}

TEST_CASE("orthogonality and auxiliary terms vanish for baselines") {
    ModelSpec spec;
    spec.tasks = kTasks;
    spec.dense_width = 3;
    spec.expert_widths = {4};
    spec.tower_width = 2;
    spec.num_experts = 2;
    spec.num_specific = 1;
    const Matrix dense = random_matrix(1, 4, 3);
    const Matrix labels[] = {random_matrix(2, 4, 1), binary_column(3, 4)};
    for (ModelKind kind : {ModelKind::SingleTask, ModelKind::MMoE, ModelKind::CGC, ModelKind::PLE}) {
        spec.kind = kind;
        Model model(spec, 1);
        Tape tape;
        const auto parts = compute_losses(tape, model.forward(tape, dense, IndexGrid()), labels, kTasks, {});
        CHECK(scalar(parts.orth) == 0.0);
        CHECK(scalar(parts.aux) == 0.0);
        CHECK(scalar(parts.total) == scalar(parts.task));
    }
}
