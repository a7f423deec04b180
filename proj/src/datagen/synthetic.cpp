#include "fdn/datagen.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include "fdn/dataio.hpp"
#include "fdn/errors.hpp"

namespace fdn {

using nlohmann::json;

std::string_view to_string(SynthKind kind) {
    switch (kind) {
        case SynthKind::A: return "A";
        case SynthKind::B: return "B";
        case SynthKind::I: return "I";
    }
    throw std::invalid_argument("unknown synthetic kind");
}

SynthKind parse_synth_kind(std::string_view text) {
    if (text == "A") return SynthKind::A;
    if (text == "B") return SynthKind::B;
    if (text == "I") return SynthKind::I;
    throw std::invalid_argument("unknown synthetic kind '" + std::string(text) + "'");
}

void SynthConfig::validate() const {
    if (d < 1) throw std::invalid_argument("synthetic d must be at least 1");
    if (n_samples < 1) throw std::invalid_argument("synthetic n_samples must be at least 1");
    auto check_len = [](const std::vector<double>& v, std::size_t want, const char* name) {
        if (!v.empty() && v.size() != want) {
            throw std::invalid_argument(std::string("synthetic ") + name + " must have length " +
                                        std::to_string(want));
        }
    };
    check_len(alpha, m, "alpha");
    check_len(beta, m, "beta");
    check_len(delta, d, "delta");
    check_len(gamma, d, "gamma");
    if (task_latent_std < 0 || label_noise_std < 0 || feature_noise_std < 0) {
        throw std::invalid_argument("synthetic noise levels must be non-negative");
    }
}

bool SynthConfig::coefficients_resolved() const {
    return alpha.size() == m && beta.size() == m && delta.size() == d && gamma.size() == d;
}

json SynthConfig::to_json() const {
    return json{{"d", d},
                {"m", m},
                {"c1", c1},
                {"c2", c2},
                {"cs", cs},
                {"alpha", alpha},
                {"beta", beta},
                {"delta", delta},
                {"gamma", gamma},
                {"n_samples", n_samples},
                {"seed", seed},
                {"task_latent_std", task_latent_std},
                {"label_noise_std", label_noise_std},
                {"feature_noise_std", feature_noise_std},
                {"per_component_feature_noise", per_component_feature_noise}};
}

SynthConfig SynthConfig::from_json(const json& j) {
    SynthConfig c;
    c.d = j.at("d").get<std::size_t>();
    c.m = j.at("m").get<std::size_t>();
    c.c1 = j.at("c1").get<double>();
    c.c2 = j.at("c2").get<double>();
    c.cs = j.at("cs").get<double>();
    c.alpha = j.at("alpha").get<std::vector<double>>();
    c.beta = j.at("beta").get<std::vector<double>>();
    c.delta = j.at("delta").get<std::vector<double>>();
    c.gamma = j.at("gamma").get<std::vector<double>>();
    c.n_samples = j.at("n_samples").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.task_latent_std = j.at("task_latent_std").get<double>();
    c.label_noise_std = j.at("label_noise_std").get<double>();
    c.feature_noise_std = j.at("feature_noise_std").get<double>();
    c.per_component_feature_noise = j.at("per_component_feature_noise").get<bool>();
    c.validate();
    return c;
}

json SynthBasis::to_json() const {
    return json{{"u1", u1}, {"u2", u2}, {"us", us}, {"w1", w1}, {"w2", w2}, {"ws", ws}};
}

std::vector<double> random_unit_vector(Rng& rng, std::size_t d) {
    if (d < 1) throw std::invalid_argument("random_unit_vector needs d >= 1");
    std::vector<double> u(d);
    while (true) {
        double norm2 = 0.0;
        for (double& v : u) {
            v = rng.normal();
            norm2 += v * v;
        }
        if (norm2 > 0.0) {
            const double norm = std::sqrt(norm2);
            for (double& v : u) v /= norm;
            return u;
        }
    }
}

namespace {

std::vector<double> scaled(const std::vector<double>& u, double c) {
    std::vector<double> w(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) w[i] = c * u[i];
    return w;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double sine_terms(double z, const SynthConfig& c) {
    double acc = 0.0;
    for (std::size_t i = 0; i < c.m; ++i) acc += std::sin(c.alpha[i] * z + c.beta[i]);
    return acc;
}

}  // namespace

SynthBasis make_basis(Rng& rng, const SynthConfig& config) {
    SynthBasis b;
    b.u1 = random_unit_vector(rng, config.d);
    b.u2 = random_unit_vector(rng, config.d);
    b.us = random_unit_vector(rng, config.d);
    b.w1 = scaled(b.u1, config.c1);
    b.w2 = scaled(b.u2, config.c2);
    b.ws = scaled(b.us, config.cs);
    return b;
}

void resolve_coefficients(Rng& rng, SynthConfig& config) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    auto fill = [&](std::vector<double>& v, std::size_t n, double lo, double hi) {
        if (!v.empty()) return;
        v.resize(n);
        for (double& x : v) x = rng.uniform(lo, hi);
    };
    fill(config.alpha, config.m, 0.5, 1.5);
    fill(config.beta, config.m, 0.0, two_pi);
    fill(config.delta, config.d, 0.5, 1.5);
    fill(config.gamma, config.d, 0.0, two_pi);
}

SynthLatent draw_latent(Rng& rng, const SynthConfig& config) {
    SynthLatent x;
    x.x1.resize(config.d);
    x.x2.resize(config.d);
    x.xs.resize(config.d);
    for (double& v : x.x1) v = -1.0 + config.task_latent_std * rng.normal();
    for (double& v : x.x2) v = 1.0 + config.task_latent_std * rng.normal();
    for (double& v : x.xs) v = rng.normal();
    return x;
}

std::pair<double, double> make_labels(const SynthBasis& basis, const SynthLatent& x, const SynthConfig& config,
                                      Rng& rng) {
    const double zs = dot(basis.ws, x.xs);
    const double z1 = dot(basis.w1, x.x1);
    const double z2 = dot(basis.w2, x.x2);
    const double s = zs + sine_terms(zs, config);
    const double e1 = config.label_noise_std * rng.normal();
    const double e2 = config.label_noise_std * rng.normal();
    const double y1 = s + z1 + sine_terms(z1, config) + e1;
    const double y2 = s + z2 + sine_terms(z2, config) + e2;
    return {y1, y2};
}

std::vector<double> make_features(const SynthBasis& basis, const SynthLatent& x, const SynthConfig& config,
                                  Rng& rng, SynthKind kind) {
    const std::size_t d = config.d;
    std::vector<double> noise(config.per_component_feature_noise ? d : 1);
    for (double& e : noise) e = config.feature_noise_std * rng.normal();

    std::vector<double> out(d);
    for (std::size_t i = 0; i < d; ++i) {
        double z = basis.us[i] * x.xs[i];
        switch (kind) {
            case SynthKind::A: z += basis.u1[i] * x.x1[i]; break;
            case SynthKind::B: z += basis.u2[i] * x.x2[i]; break;
            case SynthKind::I: z += basis.u1[i] * x.x1[i] + basis.u2[i] * x.x2[i]; break;
            default: throw std::invalid_argument("unknown synthetic kind");
        }
        const double phase = config.delta[i] * z + config.gamma[i];
        out[i] = std::sin(phase) + std::cos(phase) + noise[config.per_component_feature_noise ? i : 0];
    }
    return out;
}

SyntheticData generate(const SynthConfig& config, SynthKind kind) {
    config.validate();
    SyntheticData out;
    out.kind = kind;
    out.config = config;
    Rng rng(config.seed);
    out.basis = make_basis(rng, out.config);
    resolve_coefficients(rng, out.config);
    const SynthConfig& c = out.config;

    Dataset& ds = out.dataset;
    ds.name = kind == SynthKind::A ? DatasetName::A : kind == SynthKind::B ? DatasetName::B : DatasetName::I;
    for (std::size_t i = 0; i < c.d; ++i) ds.dense_names.push_back("f" + std::to_string(i));
    if (kind != SynthKind::B) ds.tasks.push_back({std::string(kTaskAName), TaskKind::Regression});
    if (kind != SynthKind::A) ds.tasks.push_back({std::string(kTaskBName), TaskKind::Regression});
    ds.labels.assign(ds.tasks.size(), std::vector<double>(c.n_samples));
    ds.features = Matrix(c.n_samples, c.d);

    for (std::size_t r = 0; r < c.n_samples; ++r) {
        const SynthLatent x = draw_latent(rng, c);
        const auto [y1, y2] = make_labels(out.basis, x, c, rng);
        const auto f = make_features(out.basis, x, c, rng, kind);
        std::copy(f.begin(), f.end(), ds.features.row(r).begin());
        switch (kind) {
            case SynthKind::A: ds.labels[0][r] = y1; break;
            case SynthKind::B: ds.labels[0][r] = y2; break;
            case SynthKind::I:
                ds.labels[0][r] = y1;
                ds.labels[1][r] = y2;
                break;
        }
    }
    return out;
}

json metadata_json(const SyntheticData& data) {
    return json{{"kind", std::string(to_string(data.kind))},
                {"n_samples", data.dataset.size()},
                {"schema", schema_of(data.dataset).to_json()},
                {"config", data.config.to_json()},
                {"basis", data.basis.to_json()}};
}

void write_synthetic(const SyntheticData& data, const std::filesystem::path& csv_path,
                     const std::filesystem::path& meta_path) {
    write_csv(data.dataset, csv_path);
    std::ofstream meta(meta_path, std::ios::binary);
    if (!meta) throw DataError("cannot write " + meta_path.string());
    meta << metadata_json(data).dump(2) << '\n';
    if (!meta) throw DataError("write failed for " + meta_path.string());
}

}  // namespace fdn
