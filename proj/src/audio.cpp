#include "assimlab/audio.hpp"

#include "assimlab/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

namespace assimlab::audio {

namespace {

std::vector<char> slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open audio file " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t le32(const char* p) {
    const auto* u = reinterpret_cast<const std::uint8_t*>(p);
    return std::uint32_t(u[0]) | (std::uint32_t(u[1]) << 8) | (std::uint32_t(u[2]) << 16) | (std::uint32_t(u[3]) << 24);
}

std::uint16_t le16(const char* p) {
    return std::uint16_t(std::uint8_t(p[0]) | (std::uint16_t(std::uint8_t(p[1])) << 8));
}

float decode_sample(const char* p, std::size_t bits, bool is_float) {
    if (is_float) {
        float f;
        std::uint32_t u = le32(p);
        std::memcpy(&f, &u, 4);
        return f;
    }
    switch (bits) {
        case 8: return (float(std::uint8_t(p[0])) - 128.0f) / 128.0f;
        case 16: return float(std::int16_t(le16(p))) / 32768.0f;
        case 24: {
            std::int32_t v = std::int32_t(std::uint8_t(p[0])) | (std::int32_t(std::uint8_t(p[1])) << 8) |
                             (std::int32_t(std::int8_t(p[2])) << 16);
            return float(double(v) / 8388608.0);
        }
        case 32: return float(double(std::int32_t(le32(p))) / 2147483648.0);
    }
    return 0.0f;
}

}  // namespace

AudioBuffer parse_wav(const std::vector<char>& bytes, WavInfo* info) {
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
        throw ParseError("not a RIFF/WAVE file");
    }
    WavInfo wi;
    std::size_t rate = 0;
    bool have_fmt = false;
    const char* data = nullptr;
    std::size_t data_len = 0;

    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const char* id = bytes.data() + pos;
        const std::size_t len = le32(id + 4);
        const std::size_t body = pos + 8;
        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (len < 16 || body + 16 > bytes.size()) throw ParseError("truncated fmt chunk");
            const char* f = bytes.data() + body;
            std::uint16_t format = le16(f);
            wi.channels = le16(f + 2);
            rate = le32(f + 4);
            wi.bits_per_sample = le16(f + 14);
            if (format == 0xFFFE) {
                if (len < 40 || body + 40 > bytes.size()) throw ParseError("truncated extensible fmt chunk");
                format = le16(f + 24);  // first two bytes of the subformat GUID
            }
            if (format == 3) {
                wi.is_float = true;
                if (wi.bits_per_sample != 32) throw ParseError("only 32-bit float WAV is supported");
            } else if (format == 1) {
                const auto b = wi.bits_per_sample;
                if (b != 8 && b != 16 && b != 24 && b != 32) {
                    throw ParseError("unsupported PCM bit depth " + std::to_string(b));
                }
            } else {
                throw ParseError("unsupported WAV codec (format tag " + std::to_string(format) + ")");
            }
            if (wi.channels == 0 || rate == 0) throw ParseError("WAV declares zero channels or zero sample rate");
            have_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            data = bytes.data() + body;
            data_len = std::min(len, bytes.size() - std::min(body, bytes.size()));
            if (len > data_len) throw ParseError("truncated data chunk");
        }
        pos = body + len + (len & 1);
    }
    if (!have_fmt) throw ParseError("WAV has no fmt chunk");
    if (!data) throw ParseError("WAV has no data chunk");

    const std::size_t width = wi.bits_per_sample / 8;
    const std::size_t frame_bytes = width * wi.channels;
    const std::size_t n = data_len / frame_bytes;
    AudioBuffer out;
    out.sample_rate = rate;
    out.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t c = 0; c < wi.channels; ++c) {
            acc += decode_sample(data + i * frame_bytes + c * width, wi.bits_per_sample, wi.is_float);
        }
        out.samples[i] = float(acc / double(wi.channels));
    }
    for (float s : out.samples) {
        if (!std::isfinite(s)) throw DataError("WAV contains non-finite samples");
    }
    wi.downmixed = wi.channels > 1;
    if (info) *info = wi;
    return out;
}

AudioBuffer read_wav(const std::filesystem::path& path, WavInfo* info) {
    try {
        return parse_wav(slurp(path), info);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

AudioBuffer read_sphere(const std::filesystem::path& path) {
    const auto bytes = slurp(path);
    if (bytes.size() < 16 || std::memcmp(bytes.data(), "NIST_1A", 7) != 0) {
        throw ParseError(path.string() + ": not a NIST SPHERE file");
    }
    std::istringstream head(std::string(bytes.data(), std::min<std::size_t>(bytes.size(), 1024 * 64)));
    std::string magic, size_line;
    std::getline(head, magic);
    std::getline(head, size_line);
    const std::size_t header_bytes = std::stoul(size_line);
    std::map<std::string, std::string> fields;
    for (std::string line; std::getline(head, line);) {
        if (line.rfind("end_head", 0) == 0) break;
        std::istringstream ls(line);
        std::string key, type, value;
        ls >> key >> type;
        std::getline(ls >> std::ws, value);
        fields[key] = value;
    }
    auto field = [&](const std::string& k, const std::string& def) {
        auto it = fields.find(k);
        return it == fields.end() ? def : it->second;
    };
    if (field("channel_count", "1") != "1") throw ParseError(path.string() + ": only mono SPHERE is supported");
    if (field("sample_n_bytes", "2") != "2") throw ParseError(path.string() + ": only 16-bit SPHERE is supported");
    const std::string coding = field("sample_coding", "pcm");
    if (coding.rfind("pcm", 0) != 0 || coding.find("shorten") != std::string::npos) {
        throw ParseError(path.string() + ": unsupported SPHERE sample coding '" + coding + "'");
    }
    const bool big = field("sample_byte_format", "01") == "10";
    AudioBuffer out;
    out.sample_rate = std::stoul(field("sample_rate", "16000"));
    if (header_bytes > bytes.size()) throw ParseError(path.string() + ": truncated SPHERE header");
    const std::size_t n = (bytes.size() - header_bytes) / 2;
    out.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto* p = reinterpret_cast<const std::uint8_t*>(bytes.data() + header_bytes + 2 * i);
        const auto u = big ? std::uint16_t((p[0] << 8) | p[1]) : std::uint16_t(p[0] | (p[1] << 8));
        out.samples[i] = float(std::int16_t(u)) / 32768.0f;
    }
    return out;
}

AudioBuffer read_audio(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open audio file " + path.string());
    char magic[7] = {};
    in.read(magic, 7);
    if (std::memcmp(magic, "NIST_1A", 7) == 0) return read_sphere(path);
    return read_wav(path);
}

std::vector<char> encode_wav(const AudioBuffer& audio) {
    const std::size_t n = audio.samples.size();
    const std::uint32_t data_len = std::uint32_t(n * 2);
    std::vector<char> out;
    out.reserve(44 + data_len);
    auto put32 = [&](std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xFF));
    };
    auto put16 = [&](std::uint16_t v) {
        out.push_back(char(v & 0xFF));
        out.push_back(char(v >> 8));
    };
    auto tag = [&](const char* t) { out.insert(out.end(), t, t + 4); };
    tag("RIFF");
    put32(36 + data_len);
    tag("WAVE");
    tag("fmt ");
    put32(16);
    put16(1);
    put16(1);
    put32(std::uint32_t(audio.sample_rate));
    put32(std::uint32_t(audio.sample_rate * 2));
    put16(2);
    put16(16);
    tag("data");
    put32(data_len);
    for (float s : audio.samples) {
        const double scaled = std::round(double(std::clamp(s, -1.0f, 1.0f)) * 32768.0);
        put16(std::uint16_t(std::int16_t(std::clamp(scaled, -32768.0, 32767.0))));
    }
    return out;
}

void write_wav(const std::filesystem::path& path, const AudioBuffer& audio) {
    const auto bytes = encode_wav(audio);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot write " + path.string());
    out.write(bytes.data(), std::streamsize(bytes.size()));
}

}  // namespace assimlab::audio
