#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <limits>
#include <set>

#include "fdn/dataio.hpp"
#include "fdn/errors.hpp"
#include "temp_dir.hpp"

using namespace fdn;

namespace {

void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

Schema small_schema() {
    Schema s;
    s.tasks = {{"ctr", TaskKind::Binary}, {"watch", TaskKind::Regression}};
    s.dense_fields = {"x0", "x1"};
    s.categorical_fields = {{"user", 5}};
    return s;
}

Dataset ten_rows() {
    Dataset ds;
    ds.dense_names = {"x"};
    ds.features = Matrix(10, 1);
    ds.tasks = {{"y", TaskKind::Regression}};
    ds.labels = {std::vector<double>(10)};
    for (std::size_t i = 0; i < 10; ++i) {
        ds.features(i, 0) = static_cast<double>(i);
        ds.labels[0][i] = static_cast<double>(i) * 10.0;
    }
    return ds;
}

}  // namespace

TEST_CASE("load_csv reads a well-formed file") {
    fdn::testing::TempDir dir;
    write_text(dir.path() / "d.csv",
               "x0,user,x1,ctr,watch\n"
               "0.5,1,2,1,3.5\n"
               "-1,4,0.25,0,0\n"
               "1e-3,2,7,1,-2\n");
    auto r = load_csv(dir.path() / "d.csv", small_schema());
    CHECK(r.skipped_rows == 0);
    REQUIRE(r.dataset.size() == 3);
    CHECK(r.dataset.features(0, 0) == 0.5);
    CHECK(r.dataset.features(0, 1) == 2.0);
    CHECK(r.dataset.features(2, 0) == 1e-3);
    CHECK(r.dataset.categorical(1, 0) == 4);
    CHECK(r.dataset.labels[0] == std::vector<double>{1, 0, 1});
    CHECK(r.dataset.labels[1] == std::vector<double>{3.5, 0, -2});
}

TEST_CASE("load_csv skips malformed rows and maps unknown ids") {
    fdn::testing::TempDir dir;
    write_text(dir.path() / "d.csv",
               "x0,x1,user,ctr,watch\n"
               "1,2,3,1,0\n"
               "1,oops,3,1,0\n"
               "1,2,99,0,1\n"
               "1,2,-4,0,1\n");
    auto r = load_csv(dir.path() / "d.csv", small_schema());
    CHECK(r.skipped_rows == 1);
    REQUIRE(r.dataset.size() == 3);
    CHECK(r.dataset.categorical(0, 0) == 3);
    CHECK(r.dataset.categorical(1, 0) == 0);
    CHECK(r.dataset.categorical(2, 0) == 0);

    write_text(dir.path() / "e.csv",
               "x0,x1,user,ctr,watch\n"
               "1,2,3,0.5,0\n"
               "1,2,3\n"
               "1,2,3,1,nan\n"
               "1,2,3,1,0\n");
    CHECK(load_csv(dir.path() / "e.csv", small_schema()).skipped_rows == 3);
}

TEST_CASE("load_csv errors") {
    fdn::testing::TempDir dir;
    CHECK_THROWS_AS(load_csv(dir.path() / "missing.csv", small_schema()), DataError);

    write_text(dir.path() / "h.csv", "x0,user,ctr,watch\n1,1,1,1\n");
    try {
        load_csv(dir.path() / "h.csv", small_schema());
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("header/schema mismatch") != std::string::npos);
    }

    write_text(dir.path() / "bad.csv", "x0,x1,user,ctr,watch\n1,2,3,7,0\nx,2,3,1,0\n");
    CHECK_THROWS_AS(load_csv(dir.path() / "bad.csv", small_schema()), DataError);

    write_text(dir.path() / "empty.csv", "");
    CHECK_THROWS_AS(load_csv(dir.path() / "empty.csv", small_schema()), DataError);
}

TEST_CASE("schema JSON round trip and validation") {
    Schema s = small_schema();
    CHECK(Schema::from_json(s.to_json()) == s);
    nlohmann::json wrapped{{"schema", s.to_json()}, {"other", 1}};
    CHECK(Schema::from_json(wrapped) == s);
    CHECK(s.vocabulary_sizes() == std::vector<std::size_t>{5});

    Schema none = s;
    none.tasks.clear();
    CHECK_THROWS_AS(none.validate(), DataError);
    CHECK_THROWS_AS(Schema::from_json(nlohmann::json{{"tasks", 3}}), DataError);

    fdn::testing::TempDir dir;
    write_text(dir.path() / "s.json", "{not json");
    CHECK_THROWS_AS(Schema::load(dir.path() / "s.json"), DataError);
}

TEST_CASE("sample_without_replacement") {
    Dataset ds = ten_rows();
    SUBCASE("full size is a permutation") {
        auto s = sample_without_replacement(ds, 10, 3);
        std::vector<double> v(s.labels[0]);
        std::sort(v.begin(), v.end());
        CHECK(v == ds.labels[0]);
    }
    SUBCASE("rows stay aligned and distinct") {
        auto s = sample_without_replacement(ds, 4, 8);
        std::set<double> seen;
        for (std::size_t i = 0; i < 4; ++i) {
            CHECK(s.labels[0][i] == s.features(i, 0) * 10.0);
            seen.insert(s.features(i, 0));
        }
        CHECK(seen.size() == 4);
        CHECK(sample_without_replacement(ds, 4, 8) == s);
    }
    SUBCASE("invalid sizes") {
        CHECK_THROWS_AS(sample_without_replacement(ds, 0, 1), DataError);
        CHECK_THROWS_AS(sample_without_replacement(ds, 11, 1), DataError);
    }
    SUBCASE("each row equally likely") {
        Dataset four = ds.select_rows(std::vector<std::size_t>{0, 1, 2, 3});
        std::array<int, 4> count{};
        for (std::uint64_t seed = 0; seed < 1000; ++seed) {
            auto s = sample_without_replacement(four, 1, seed);
            ++count[static_cast<std::size_t>(s.features(0, 0))];
        }
        for (int c : count) CHECK(std::abs(c - 250) <= 50);
    }
}

TEST_CASE("BatchStream") {
    Dataset ds = ten_rows();
    BatchStream stream(ds, 4, 9);
    CHECK(stream.batch_count() == 3);
    std::vector<std::size_t> sizes;
    std::vector<double> xs;
    while (auto b = stream.next()) {
        sizes.push_back(b->size());
        for (std::size_t i = 0; i < b->size(); ++i) {
            CHECK(b->labels[0](i, 0) == b->dense(i, 0) * 10.0);
            xs.push_back(b->dense(i, 0));
        }
    }
    CHECK(sizes == std::vector<std::size_t>{4, 4, 2});
    std::vector<double> sorted = xs;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < 10; ++i) CHECK(sorted[i] == static_cast<double>(i));

    BatchStream again(ds, 4, 9);
    std::vector<double> ys;
    while (auto b = again.next())
        for (std::size_t i = 0; i < b->size(); ++i) ys.push_back(b->dense(i, 0));
    CHECK(ys == xs);
    CHECK(shuffled_order(10, 9) != shuffled_order(10, 10));
    CHECK_THROWS(BatchStream(ds, 0, 1));
}

TEST_CASE("write_csv round trip is exact") {
    fdn::testing::TempDir dir;
    Dataset ds;
    ds.dense_names = {"a", "b"};
    ds.features = Matrix::from_rows({{0.1, -1.0 / 3.0},
                                     {std::numeric_limits<double>::min(), 1e300},
                                     {123456789.123456789, -0.0}});
    ds.categorical_names = {"c"};
    ds.categorical = IndexGrid(3, 1);
    ds.categorical.values = {1, 2, 3};
    ds.tasks = {{"y", TaskKind::Binary}, {"z", TaskKind::Regression}};
    ds.labels = {{0, 1, 1}, {2.0 / 3.0, 5e-324, -7.25}};
    write_csv(ds, dir.path() / "r.csv");
    auto back = load_csv(dir.path() / "r.csv", schema_of(ds));
    CHECK(back.skipped_rows == 0);
    CHECK(back.dataset == ds);
    CHECK(format_double(0.1) == "0.1");
}
