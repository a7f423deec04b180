#include "fdn/dataio.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include "fdn/errors.hpp"
#include "fdn/rng.hpp"

namespace fdn {

using nlohmann::json;

void Schema::validate() const {
    if (tasks.empty()) throw DataError("schema declares no tasks");
    if (dense_fields.empty() && categorical_fields.empty()) throw DataError("schema declares no feature fields");
    for (const auto& f : categorical_fields) {
        if (f.vocabulary_size < 1) throw DataError("categorical field '" + f.name + "' has an empty vocabulary");
    }
    if (!categorical_fields.empty() && embedding_dim == 0) throw DataError("embedding_dim must be positive");
}

json Schema::to_json() const {
    json j;
    j["tasks"] = json::array();
    for (const auto& t : tasks) j["tasks"].push_back({{"name", t.name}, {"kind", std::string(to_string(t.kind))}});
    j["dense_fields"] = dense_fields;
    j["categorical_fields"] = json::array();
    for (const auto& f : categorical_fields) {
        j["categorical_fields"].push_back({{"name", f.name}, {"vocabulary_size", f.vocabulary_size}});
    }
    j["embedding_dim"] = embedding_dim;
    return j;
}

Schema Schema::from_json(const json& doc) {
    const json& j = doc.contains("schema") ? doc.at("schema") : doc;
    Schema s;
    try {
        for (const auto& t : j.at("tasks")) {
            s.tasks.push_back({t.at("name").get<std::string>(), parse_task_kind(t.at("kind").get<std::string>())});
        }
        if (j.contains("dense_fields")) s.dense_fields = j.at("dense_fields").get<std::vector<std::string>>();
        if (j.contains("categorical_fields")) {
            for (const auto& f : j.at("categorical_fields")) {
                s.categorical_fields.push_back(
                    {f.at("name").get<std::string>(), f.at("vocabulary_size").get<std::size_t>()});
            }
        }
        if (j.contains("embedding_dim")) s.embedding_dim = j.at("embedding_dim").get<std::size_t>();
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed schema: ") + e.what());
    }
    s.validate();
    return s;
}

Schema Schema::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open schema file " + path.string());
    try {
        return from_json(json::parse(in));
    } catch (const json::parse_error& e) {
        throw DataError("schema file " + path.string() + " is not valid JSON: " + e.what());
    }
}

std::vector<std::size_t> Schema::vocabulary_sizes() const {
    std::vector<std::size_t> out;
    for (const auto& f : categorical_fields) out.push_back(f.vocabulary_size);
    return out;
}

Schema schema_of(const Dataset& ds, std::size_t embedding_dim) {
    Schema s;
    s.tasks = ds.tasks;
    s.dense_fields = ds.dense_names;
    for (std::size_t c = 0; c < ds.categorical_names.size(); ++c) {
        std::uint32_t mx = 0;
        for (std::size_t r = 0; r < ds.categorical.rows; ++r) mx = std::max(mx, ds.categorical(r, c));
        s.categorical_fields.push_back({ds.categorical_names[c], static_cast<std::size_t>(mx) + 1});
    }
    s.embedding_dim = embedding_dim;
    return s;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::optional<double> parse_double(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    if (s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

std::optional<std::int64_t> parse_int(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    if (s.front() == '+') s.remove_prefix(1);
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

}  // namespace

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw std::runtime_error("format_double failed");
    return std::string(buf, ptr);
}

LoadResult load_csv(const std::filesystem::path& path, const Schema& schema) {
    schema.validate();
    std::ifstream in(path);
    if (!in) throw DataError("cannot open data file " + path.string());

    std::string header;
    if (!std::getline(in, header)) throw DataError("data file " + path.string() + " is empty");
    const auto names = split_fields(header);
    std::unordered_map<std::string, std::size_t> column;
    for (std::size_t i = 0; i < names.size(); ++i) column.emplace(std::string(trim(names[i])), i);

    auto locate = [&](const std::string& name) {
        auto it = column.find(name);
        if (it == column.end()) {
            throw DataError("header/schema mismatch: column '" + name + "' missing from " + path.string());
        }
        return it->second;
    };
    std::vector<std::size_t> dense_cols, cat_cols, task_cols;
    for (const auto& f : schema.dense_fields) dense_cols.push_back(locate(f));
    for (const auto& f : schema.categorical_fields) cat_cols.push_back(locate(f.name));
    for (const auto& t : schema.tasks) task_cols.push_back(locate(t.name));

    std::vector<double> dense;
    std::vector<std::uint32_t> cats;
    std::vector<std::vector<double>> labels(schema.tasks.size());
    std::size_t skipped = 0;
    std::size_t n = 0;

    std::string line;
    std::vector<double> row_dense(dense_cols.size());
    std::vector<std::uint32_t> row_cat(cat_cols.size());
    std::vector<double> row_labels(task_cols.size());
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        const auto fields = split_fields(line);
        if (fields.size() != names.size()) {
            ++skipped;
            continue;
        }
        bool ok = true;
        for (std::size_t i = 0; i < dense_cols.size() && ok; ++i) {
            auto v = parse_double(fields[dense_cols[i]]);
            ok = v.has_value();
            if (ok) row_dense[i] = *v;
        }
        for (std::size_t i = 0; i < task_cols.size() && ok; ++i) {
            auto v = parse_double(fields[task_cols[i]]);
            ok = v.has_value() && (schema.tasks[i].kind != TaskKind::Binary || *v == 0.0 || *v == 1.0);
            if (ok) row_labels[i] = *v;
        }
        if (!ok) {
            ++skipped;
            continue;
        }
        for (std::size_t i = 0; i < cat_cols.size(); ++i) {
            auto id = parse_int(fields[cat_cols[i]]);
            const auto vocab = static_cast<std::int64_t>(schema.categorical_fields[i].vocabulary_size);
            row_cat[i] = (id && *id >= 1 && *id < vocab) ? static_cast<std::uint32_t>(*id) : 0U;
        }
        dense.insert(dense.end(), row_dense.begin(), row_dense.end());
        cats.insert(cats.end(), row_cat.begin(), row_cat.end());
        for (std::size_t i = 0; i < task_cols.size(); ++i) labels[i].push_back(row_labels[i]);
        ++n;
    }
    if (n == 0) {
        throw DataError("no usable rows in " + path.string() + " (" + std::to_string(skipped) + " skipped)");
    }

    LoadResult result;
    result.skipped_rows = skipped;
    Dataset& ds = result.dataset;
    ds.dense_names = schema.dense_fields;
    if (!dense_cols.empty()) ds.features = Matrix(n, dense_cols.size(), std::move(dense));
    for (const auto& f : schema.categorical_fields) ds.categorical_names.push_back(f.name);
    ds.categorical = IndexGrid(cat_cols.empty() ? 0 : n, cat_cols.size());
    ds.categorical.values = std::move(cats);
    ds.tasks = schema.tasks;
    ds.labels = std::move(labels);
    ds.validate();
    return result;
}

void write_csv(const Dataset& ds, const std::filesystem::path& path) {
    ds.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    bool first = true;
    auto sep = [&] {
        if (!first) out << ',';
        first = false;
    };
    for (const auto& n : ds.dense_names) sep(), out << n;
    for (const auto& n : ds.categorical_names) sep(), out << n;
    for (const auto& t : ds.tasks) sep(), out << t.name;
    out << '\n';
    for (std::size_t r = 0; r < ds.size(); ++r) {
        first = true;
        for (std::size_t c = 0; c < ds.dense_width(); ++c) sep(), out << format_double(ds.features(r, c));
        for (std::size_t c = 0; c < ds.categorical.cols; ++c) sep(), out << ds.categorical(r, c);
        for (const auto& col : ds.labels) sep(), out << format_double(col[r]);
        out << '\n';
    }
    if (!out) throw DataError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Sampling and batching

std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.uniform_index(i));
        std::swap(order[i - 1], order[j]);
    }
    return order;
}

Dataset sample_without_replacement(const Dataset& ds, std::size_t n, std::uint64_t seed) {
    const std::size_t size = ds.size();
    if (n == 0) throw DataError("cannot sample an empty subset");
    if (n > size) {
        throw DataError("sample size " + std::to_string(n) + " exceeds dataset size " + std::to_string(size));
    }
    std::vector<std::size_t> idx(size);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.uniform_index(size - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(n);
    return ds.select_rows(idx);
}

Batch make_batch(const Dataset& ds, std::span<const std::size_t> rows) {
    Batch b;
    b.rows.assign(rows.begin(), rows.end());
    const std::size_t n = rows.size();
    if (!ds.features.empty()) {
        b.dense = Matrix(n, ds.features.cols());
        for (std::size_t i = 0; i < n; ++i) {
            auto src = ds.features.row(rows[i]);
            std::copy(src.begin(), src.end(), b.dense.row(i).begin());
        }
    }
    b.categorical = IndexGrid(ds.categorical.cols > 0 ? n : 0, ds.categorical.cols);
    for (std::size_t i = 0; i < n && ds.categorical.cols > 0; ++i) {
        for (std::size_t c = 0; c < ds.categorical.cols; ++c) b.categorical(i, c) = ds.categorical(rows[i], c);
    }
    for (const auto& col : ds.labels) {
        Matrix m(n, 1);
        for (std::size_t i = 0; i < n; ++i) m(i, 0) = col[rows[i]];
        b.labels.push_back(std::move(m));
    }
    return b;
}

BatchStream::BatchStream(const Dataset& ds, std::size_t batch_size, std::uint64_t shuffle_seed)
    : ds_(&ds), batch_size_(batch_size), order_(shuffled_order(ds.size(), shuffle_seed)) {
    if (batch_size == 0) throw std::invalid_argument("batch_size must be at least 1");
}

std::optional<Batch> BatchStream::next() {
    if (cursor_ >= order_.size()) return std::nullopt;
    const std::size_t end = std::min(order_.size(), cursor_ + batch_size_);
    Batch b = make_batch(*ds_, std::span<const std::size_t>(order_).subspan(cursor_, end - cursor_));
    cursor_ = end;
    return b;
}

std::size_t BatchStream::batch_count() const { return (order_.size() + batch_size_ - 1) / batch_size_; }

}  // namespace fdn
