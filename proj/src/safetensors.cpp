#include "assimlab/safetensors.hpp"

#include "assimlab/error.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace assimlab {

namespace {

static_assert(std::endian::native == std::endian::little, "safetensors I/O assumes a little-endian host");

float half_to_float(std::uint16_t h) {
    const std::uint32_t sign = std::uint32_t(h & 0x8000u) << 16;
    std::uint32_t exp = (h >> 10) & 0x1fu;
    std::uint32_t mant = h & 0x3ffu;
    std::uint32_t bits;
    if (exp == 0) {
        if (mant == 0) {
            bits = sign;
        } else {
            exp = 127 - 15 + 1;
            while ((mant & 0x400u) == 0) {
                mant <<= 1;
                --exp;
            }
            mant &= 0x3ffu;
            bits = sign | (exp << 23) | (mant << 13);
        }
    } else if (exp == 0x1f) {
        bits = sign | 0x7f800000u | (mant << 13);
    } else {
        bits = sign | ((exp + 127 - 15) << 23) | (mant << 13);
    }
    return std::bit_cast<float>(bits);
}

}  // namespace

TensorMap read_safetensors(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open tensor container " + path.string());
    in.seekg(0, std::ios::end);
    const auto file_size = static_cast<std::uint64_t>(in.tellg());
    in.seekg(0);

    std::uint64_t header_len = 0;
    if (file_size < 8 || !in.read(reinterpret_cast<char*>(&header_len), 8)) {
        throw LoadError(path.string() + ": truncated safetensors header");
    }
    if (header_len > file_size - 8) throw LoadError(path.string() + ": header length exceeds file size");
    std::string header(header_len, '\0');
    in.read(header.data(), std::streamsize(header_len));

    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(header);
    } catch (const nlohmann::json::exception& e) {
        throw LoadError(path.string() + ": malformed safetensors header: " + e.what());
    }

    const std::uint64_t buffer_start = 8 + header_len;
    const std::uint64_t buffer_len = file_size - buffer_start;
    std::vector<char> buffer(buffer_len);
    in.read(buffer.data(), std::streamsize(buffer_len));
    if (!in) throw LoadError(path.string() + ": truncated tensor buffer");

    TensorMap out;
    for (const auto& [name, entry] : meta.items()) {
        if (name == "__metadata__") continue;
        const auto dtype = entry.at("dtype").get<std::string>();
        const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
        const auto offsets = entry.at("data_offsets").get<std::vector<std::uint64_t>>();
        if (offsets.size() != 2 || offsets[0] > offsets[1] || offsets[1] > buffer_len) {
            throw LoadError(path.string() + ": tensor '" + name + "' has invalid data offsets");
        }
        std::size_t count = 1;
        for (auto d : shape) count *= d;
        const char* src = buffer.data() + offsets[0];
        const std::uint64_t nbytes = offsets[1] - offsets[0];
        std::vector<float> values(count);
        if (dtype == "F32") {
            if (nbytes != count * 4) throw LoadError("tensor '" + name + "' byte size does not match its shape");
            std::memcpy(values.data(), src, nbytes);
        } else if (dtype == "F16" || dtype == "BF16") {
            if (nbytes != count * 2) throw LoadError("tensor '" + name + "' byte size does not match its shape");
            for (std::size_t i = 0; i < count; ++i) {
                std::uint16_t h;
                std::memcpy(&h, src + 2 * i, 2);
                values[i] = dtype == "F16" ? half_to_float(h) : std::bit_cast<float>(std::uint32_t(h) << 16);
            }
        } else {
            throw LoadError("tensor '" + name + "' has unsupported dtype " + dtype);
        }
        out.emplace(name, Tensor(shape, std::move(values)));
    }
    return out;
}

void write_safetensors(const std::filesystem::path& path, const TensorMap& tensors,
                       const std::map<std::string, std::string>& metadata) {
    nlohmann::ordered_json header;
    if (!metadata.empty()) header["__metadata__"] = metadata;
    std::uint64_t offset = 0;
    for (const auto& [name, t] : tensors) {
        const std::uint64_t bytes = t.size() * 4;
        header[name] = {{"dtype", "F32"}, {"shape", t.shape()}, {"data_offsets", {offset, offset + bytes}}};
        offset += bytes;
    }
    std::string text = header.dump();
    while ((text.size() + 8) % 8 != 0) text.push_back(' ');

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw LoadError("cannot write " + path.string());
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), 8);
    out.write(text.data(), std::streamsize(text.size()));
    for (const auto& [name, t] : tensors) {
        out.write(reinterpret_cast<const char*>(t.data()), std::streamsize(t.size() * 4));
    }
    if (!out) throw LoadError("failed writing " + path.string());
}

}  // namespace assimlab
