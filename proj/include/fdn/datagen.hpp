#pragma once

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fdn/dataset.hpp"
#include "fdn/rng.hpp"

namespace fdn {

/// Which feature equation a synthetic dataset uses.
///   A: shared + task-A latents, label y_taskA
///   B: shared + task-B latents, label y_taskB
///   I: shared + both task latents, both labels
enum class SynthKind { A, B, I };

std::string_view to_string(SynthKind kind);
SynthKind parse_synth_kind(std::string_view text);

/// Generator constants. Empty alpha/beta/delta/gamma are drawn on generation
/// (alpha, delta ~ U[0.5, 1.5]; beta, gamma ~ U[0, 2 pi]).
struct SynthConfig {
    std::size_t d = 16;
    std::size_t m = 4;
    double c1 = 1.0;
    double c2 = 1.0;
    double cs = 1.0;
    std::vector<double> alpha;
    std::vector<double> beta;
    std::vector<double> delta;
    std::vector<double> gamma;
    std::size_t n_samples = 1000;
    std::uint64_t seed = 1;

    /// Latent task inputs are N(-1, var) and N(1, var); shared input is N(0, 1).
    double task_latent_std = 0.31622776601683794;  // sqrt(0.1)
    double label_noise_std = 0.1;
    double feature_noise_std = 0.1;
    /// One noise draw per feature component instead of one per sample.
    bool per_component_feature_noise = false;

    void validate() const;
    bool coefficients_resolved() const;

    nlohmann::json to_json() const;
    static SynthConfig from_json(const nlohmann::json& j);
};

struct SynthBasis {
    std::vector<double> u1, u2, us;
    std::vector<double> w1, w2, ws;

    nlohmann::json to_json() const;
    friend bool operator==(const SynthBasis&, const SynthBasis&) = default;
};

/// Per-sample latent inputs x1, x2, xs.
struct SynthLatent {
    std::vector<double> x1, x2, xs;
};

std::vector<double> random_unit_vector(Rng& rng, std::size_t d);

/// Draws u1, u2, us and scales them into w1, w2, ws.
SynthBasis make_basis(Rng& rng, const SynthConfig& config);

/// Fills any empty coefficient sequence of `config` from `rng`.
void resolve_coefficients(Rng& rng, SynthConfig& config);

SynthLatent draw_latent(Rng& rng, const SynthConfig& config);

/// Two regression labels sharing the term s. Always consumes two normal draws.
std::pair<double, double> make_labels(const SynthBasis& basis, const SynthLatent& x, const SynthConfig& config,
                                      Rng& rng);

/// Feature vector of length d for the given kind. Always consumes the same
/// number of draws regardless of kind.
std::vector<double> make_features(const SynthBasis& basis, const SynthLatent& x, const SynthConfig& config,
                                  Rng& rng, SynthKind kind);

struct SyntheticData {
    Dataset dataset;
    SynthBasis basis;
    SynthConfig config;  // with coefficients resolved
    SynthKind kind = SynthKind::I;
};

inline constexpr std::string_view kTaskAName = "y_taskA";
inline constexpr std::string_view kTaskBName = "y_taskB";

/// Basis and coefficients are drawn once, then samples one by one. Calls with
/// the same config but different kinds see identical latents and labels.
SyntheticData generate(const SynthConfig& config, SynthKind kind);

/// Sidecar document: schema, resolved config, basis vectors.
nlohmann::json metadata_json(const SyntheticData& data);

/// Writes the CSV and its JSON sidecar.
void write_synthetic(const SyntheticData& data, const std::filesystem::path& csv_path,
                     const std::filesystem::path& meta_path);

}  // namespace fdn
