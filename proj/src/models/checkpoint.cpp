#include <array>
#include <bit>
#include <fstream>

#include "fdn/errors.hpp"
#include "fdn/models.hpp"

namespace fdn {

namespace {

constexpr std::array<char, 8> kMagic{'F', 'D', 'N', 'C', 'K', 'P', 'T', '1'};

void put_u64(std::ostream& out, std::uint64_t v) {
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xffU);
    out.write(buf, 8);
}

std::uint64_t get_u64(std::istream& in, const std::filesystem::path& path) {
    unsigned char buf[8];
    if (!in.read(reinterpret_cast<char*>(buf), 8)) throw CheckpointError("truncated checkpoint " + path.string());
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | buf[i];
    return v;
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
    const std::string spec = model.spec().to_json().dump();
    out.write(kMagic.data(), kMagic.size());
    put_u64(out, spec.size());
    out.write(spec.data(), static_cast<std::streamsize>(spec.size()));
    put_u64(out, fnv1a64(spec));
    put_u64(out, model.parameter_count());
    for (const Parameter* p : model.parameters()) {
        for (double v : p->value.values()) put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
    if (!out) throw CheckpointError("write failed for " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
    std::array<char, 8> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
        throw CheckpointError(path.string() + " is not a checkpoint file");
    }
    const std::uint64_t len = get_u64(in, path);
    if (len > (1U << 24)) throw CheckpointError("implausible spec length in " + path.string());
    std::string spec_text(len, '\0');
    if (!in.read(spec_text.data(), static_cast<std::streamsize>(len))) {
        throw CheckpointError("truncated checkpoint " + path.string());
    }
    if (get_u64(in, path) != fnv1a64(spec_text)) throw CheckpointError("spec hash mismatch in " + path.string());

    ModelSpec spec;
    try {
        spec = ModelSpec::from_json(nlohmann::json::parse(spec_text));
    } catch (const std::exception& e) {
        throw CheckpointError("bad spec in " + path.string() + ": " + e.what());
    }
    Model model(spec, 0);
    const std::uint64_t count = get_u64(in, path);
    if (count != model.parameter_count()) {
        throw CheckpointError("parameter count mismatch in " + path.string() + ": file has " + std::to_string(count) +
                              ", spec needs " + std::to_string(model.parameter_count()));
    }
    for (Parameter* p : model.parameters()) {
        for (double& v : p->value.values()) v = std::bit_cast<double>(get_u64(in, path));
    }
    if (in.peek() != std::char_traits<char>::eof()) throw CheckpointError("trailing bytes in " + path.string());
    return model;
}

}  // namespace fdn
