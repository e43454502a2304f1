#include "mvr/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "mvr/errors.hpp"

namespace mvr {

namespace {

constexpr char kMagic[8] = {'M', 'V', 'R', 'C', 'K', 'P', 'T', '\0'};
constexpr uint32_t kVersion = 1;

void write_bytes(std::ostream& out, const void* p, size_t n, const std::string& path) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!out) throw IoError("checkpoint: write failed: " + path);
}

template <typename T>
void write_pod(std::ostream& out, T v, const std::string& path) {
    write_bytes(out, &v, sizeof(T), path);
}

void read_bytes(std::istream& in, void* p, size_t n, const std::string& path) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (in.gcount() != static_cast<std::streamsize>(n))
        throw IoError("checkpoint: truncated file: " + path);
}

template <typename T>
T read_pod(std::istream& in, const std::string& path) {
    T v;
    read_bytes(in, &v, sizeof(T), path);
    return v;
}

}  // namespace

const Tensor<float>* TensorArchive::find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return &t;
    return nullptr;
}

void TensorArchive::add(const std::string& name, Tensor<float> t) {
    tensors.emplace_back(name, std::move(t));
}

void save_archive(const std::filesystem::path& path, const TensorArchive& archive) {
    const std::string p = path.string();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("checkpoint: cannot open for writing: " + p);

    write_bytes(out, kMagic, sizeof(kMagic), p);
    write_pod<uint32_t>(out, kVersion, p);
    write_pod<uint64_t>(out, archive.meta_json.size(), p);
    write_bytes(out, archive.meta_json.data(), archive.meta_json.size(), p);
    write_pod<uint64_t>(out, archive.tensors.size(), p);
    for (const auto& [name, t] : archive.tensors) {
        write_pod<uint64_t>(out, name.size(), p);
        write_bytes(out, name.data(), name.size(), p);
        write_pod<uint32_t>(out, static_cast<uint32_t>(t.ndim()), p);
        for (int d = 0; d < t.ndim(); ++d) write_pod<uint32_t>(out, static_cast<uint32_t>(t.dim(d)), p);
        write_bytes(out, t.data(), static_cast<size_t>(t.numel()) * sizeof(float), p);
    }
    out.flush();
    if (!out) throw IoError("checkpoint: write failed: " + p);
}

TensorArchive load_archive(const std::filesystem::path& path) {
    const std::string p = path.string();
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("checkpoint: cannot open: " + p);

    char magic[8];
    read_bytes(in, magic, sizeof(magic), p);
    if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw IoError("checkpoint: bad magic (not a checkpoint file): " + p);
    const auto version = read_pod<uint32_t>(in, p);
    if (version != kVersion)
        throw IoError("checkpoint: unsupported version " + std::to_string(version) + ": " + p);

    TensorArchive archive;
    const auto meta_len = read_pod<uint64_t>(in, p);
    if (meta_len > (1ull << 30)) throw IoError("checkpoint: implausible metadata size: " + p);
    archive.meta_json.resize(meta_len);
    read_bytes(in, archive.meta_json.data(), meta_len, p);

    const auto n_tensors = read_pod<uint64_t>(in, p);
    if (n_tensors > (1ull << 24)) throw IoError("checkpoint: implausible tensor count: " + p);
    archive.tensors.reserve(n_tensors);
    for (uint64_t i = 0; i < n_tensors; ++i) {
        const auto name_len = read_pod<uint64_t>(in, p);
        if (name_len > (1ull << 16)) throw IoError("checkpoint: implausible name length: " + p);
        std::string name(name_len, '\0');
        read_bytes(in, name.data(), name_len, p);
        const auto ndim = read_pod<uint32_t>(in, p);
        if (ndim < 1 || ndim > 8) throw IoError("checkpoint: implausible rank: " + p);
        std::vector<int> shape(ndim);
        for (auto& d : shape) {
            const auto dim = read_pod<uint32_t>(in, p);
            if (dim < 1 || dim > (1u << 28)) throw IoError("checkpoint: implausible dim: " + p);
            d = static_cast<int>(dim);
        }
        Tensor<float> t(shape);
        read_bytes(in, t.data(), static_cast<size_t>(t.numel()) * sizeof(float), p);
        archive.tensors.emplace_back(std::move(name), std::move(t));
    }
    return archive;
}

template <typename S>
void store_params(MVUNet<S>& model, TensorArchive& archive, const std::string& prefix) {
    model.visit_params([&](Param<S>& param) {
        archive.add(prefix + param.name, param.value.template cast<float>());
    });
}

template <typename S>
void load_params(MVUNet<S>& model, const TensorArchive& archive, const std::string& prefix) {
    model.visit_params([&](Param<S>& param) {
        const std::string key = prefix + param.name;
        const Tensor<float>* stored = archive.find(key);
        if (stored == nullptr) throw IoError("checkpoint: missing tensor: " + key);
        if (!(stored->shape() == param.value.shape()))
            throw IoError("checkpoint: shape mismatch for tensor: " + key);
        param.value = stored->template cast<S>();
    });
}

template void store_params<float>(MVUNet<float>&, TensorArchive&, const std::string&);
template void store_params<double>(MVUNet<double>&, TensorArchive&, const std::string&);
template void load_params<float>(MVUNet<float>&, const TensorArchive&, const std::string&);
template void load_params<double>(MVUNet<double>&, const TensorArchive&, const std::string&);

std::string config_to_json(const MVUNetConfig& config) {
    nlohmann::json j;
    j["in_channels"] = config.in_channels;
    j["cond_channels"] = config.cond_channels;
    j["base_width"] = config.base_width;
    j["level_widths"] = config.level_widths;
    j["attention_levels"] = config.attention_levels;
    j["blend_alpha"] = config.blend_alpha;
    j["heads"] = config.heads;
    j["timestep_embed_dim"] = config.timestep_embed_dim;
    j["norm_groups"] = config.norm_groups;
    return j.dump();
}

MVUNetConfig config_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("model config: invalid JSON: ") + e.what());
    }
    MVUNetConfig config;
    try {
        j.at("in_channels").get_to(config.in_channels);
        j.at("cond_channels").get_to(config.cond_channels);
        j.at("base_width").get_to(config.base_width);
        j.at("level_widths").get_to(config.level_widths);
        j.at("attention_levels").get_to(config.attention_levels);
        j.at("blend_alpha").get_to(config.blend_alpha);
        j.at("heads").get_to(config.heads);
        j.at("timestep_embed_dim").get_to(config.timestep_embed_dim);
        j.at("norm_groups").get_to(config.norm_groups);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("model config: missing or mistyped field: ") + e.what());
    }
    config.validate();
    return config;
}

}  // namespace mvr
