#include "cxrgen/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace cxr {

namespace {

constexpr const char* kFormat = "cxrgen-checkpoint";
constexpr int kVersion = 1;

static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559, "float32 storage required");

void append_le(std::vector<unsigned char>& out, float value) {
    auto bits = std::bit_cast<std::uint32_t>(value);
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<unsigned char>(bits & 0xFFu));
        bits >>= 8;
    }
}

float read_le(const unsigned char* p) {
    std::uint32_t bits = 0;
    for (int i = 3; i >= 0; --i) bits = (bits << 8) | p[i];
    return std::bit_cast<float>(bits);
}

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IntegrityError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t manifest_crc(nlohmann::json manifest) {
    manifest.erase("manifest_crc32");
    const auto text = manifest.dump();
    return crc32_bytes({reinterpret_cast<const unsigned char*>(text.data()), text.size()});
}

}  // namespace

std::uint32_t crc32_bytes(std::span<const unsigned char> bytes, std::uint32_t seed) {
    uLong crc = seed;
    std::size_t offset = 0;
    while (offset < bytes.size()) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - offset, 1u << 30));
        crc = ::crc32(crc, bytes.data() + offset, chunk);
        offset += chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

std::uint32_t crc32_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::uint32_t crc = 0;
    std::vector<char> buffer(1 << 16);
    while (in) {
        in.read(buffer.data(), static_cast<std::streamsize>(buffer.size()));
        const auto n = static_cast<std::size_t>(in.gcount());
        crc = crc32_bytes({reinterpret_cast<const unsigned char*>(buffer.data()), n}, crc);
    }
    return crc;
}

std::uint32_t parameter_checksum(const ModelParameters& params) {
    std::uint32_t crc = 0;
    std::vector<unsigned char> bytes;
    for (const auto& t : params.tensors()) {
        bytes.clear();
        for (auto v : t.values()) append_le(bytes, static_cast<float>(v));
        crc = crc32_bytes(bytes, crc);
    }
    return crc;
}

std::string hex32(std::uint32_t value) {
    std::ostringstream out;
    out << std::hex << std::setw(8) << std::setfill('0') << value;
    return out.str();
}

void save_checkpoint(const Model& model, const std::filesystem::path& dir) {
    const auto& params = model.parameters();
    std::vector<unsigned char> blob;
    blob.reserve(params.scalar_count() * 4);
    nlohmann::json tensors = nlohmann::json::array();
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& name = params.names()[i];
        const auto& t = params.tensors()[i];
        if (!all_finite(t)) throw NumericError("refusing to checkpoint non-finite values in " + name);
        const auto offset = blob.size();
        for (auto v : t.values()) append_le(blob, v);
        const auto crc = crc32_bytes(std::span(blob).subspan(offset));
        tensors.push_back({{"name", name},
                           {"shape", t.shape()},
                           {"offset", offset},
                           {"count", t.size()},
                           {"crc32", hex32(crc)}});
    }
    nlohmann::json manifest = {{"format", kFormat},
                               {"version", kVersion},
                               {"config", model.config()},
                               {"blob", "params.bin"},
                               {"blob_bytes", blob.size()},
                               {"blob_crc32", hex32(crc32_bytes(blob))},
                               {"tensors", tensors}};
    manifest["manifest_crc32"] = hex32(manifest_crc(manifest));

    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "params.bin", std::ios::binary | std::ios::trunc);
        out.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
        if (!out) throw IntegrityError("failed writing " + (dir / "params.bin").string());
    }
    {
        std::ofstream out(dir / "manifest.json", std::ios::trunc);
        out << manifest.dump(2) << '\n';
        if (!out) throw IntegrityError("failed writing " + (dir / "manifest.json").string());
    }
}

Model load_checkpoint(const std::filesystem::path& dir) {
    nlohmann::json manifest;
    {
        std::ifstream in(dir / "manifest.json");
        if (!in) throw IntegrityError("cannot open " + (dir / "manifest.json").string());
        try {
            in >> manifest;
        } catch (const nlohmann::json::exception& e) {
            throw IntegrityError("checkpoint manifest is not valid JSON: " + std::string(e.what()));
        }
    }
    ModelConfig config;
    std::vector<unsigned char> blob;
    ModelParameters params;
    try {
        if (manifest.at("format") != kFormat || manifest.at("version") != kVersion) {
            throw IntegrityError("unsupported checkpoint format");
        }
        if (manifest.at("manifest_crc32").get<std::string>() != hex32(manifest_crc(manifest))) {
            throw IntegrityError("checkpoint manifest checksum mismatch");
        }
        config = manifest.at("config").get<ModelConfig>();
        config.validate();
        blob = read_file(dir / manifest.at("blob").get<std::string>());
        if (blob.size() != manifest.at("blob_bytes").get<std::size_t>()) {
            throw IntegrityError("checkpoint blob is " + std::to_string(blob.size()) + " bytes, manifest says " +
                                 manifest.at("blob_bytes").dump());
        }
        for (const auto& entry : manifest.at("tensors")) {
            const auto name = entry.at("name").get<std::string>();
            const auto shape = entry.at("shape").get<Shape>();
            const auto offset = entry.at("offset").get<std::size_t>();
            const auto count = entry.at("count").get<std::size_t>();
            if (shape.empty() || shape_size(shape) != count || offset + count * 4 > blob.size()) {
                throw IntegrityError("checkpoint tensor " + name + " has an inconsistent shape or extent");
            }
            const auto bytes = std::span(blob).subspan(offset, count * 4);
            if (hex32(crc32_bytes(bytes)) != entry.at("crc32").get<std::string>()) {
                throw IntegrityError("checkpoint tensor " + name + " failed its checksum");
            }
            std::vector<Scalar> values(count);
            for (std::size_t i = 0; i < count; ++i) values[i] = read_le(bytes.data() + 4 * i);
            params.add(name, Tensor(shape, std::move(values), true));
        }
        if (hex32(crc32_bytes(blob)) != manifest.at("blob_crc32").get<std::string>()) {
            throw IntegrityError("checkpoint blob failed its checksum");
        }
    } catch (const nlohmann::json::exception& e) {
        throw IntegrityError("checkpoint manifest is malformed: " + std::string(e.what()));
    } catch (const ConfigError& e) {
        throw IntegrityError(std::string("checkpoint config is invalid: ") + e.what());
    }
    try {
        return Model(std::move(config), std::move(params));
    } catch (const Error& e) {
        throw IntegrityError(std::string("checkpoint does not match its config: ") + e.what());
    }
}

Model load_checkpoint(const std::filesystem::path& dir, const ModelConfig& expected) {
    auto model = load_checkpoint(dir);
    if (!(model.config() == expected)) {
        throw ConfigError("checkpoint config in " + dir.string() + " differs from the requested model config");
    }
    return model;
}

}  // namespace cxr
