#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace assimlab::audio {

struct AudioBuffer {
    std::vector<float> samples;  // mono, nominally in [-1, 1]
    std::size_t sample_rate = 16000;

    std::size_t size() const noexcept { return samples.size(); }
    double duration_seconds() const noexcept { return sample_rate ? double(samples.size()) / double(sample_rate) : 0.0; }
};

struct WavInfo {
    std::size_t channels = 1;
    std::size_t bits_per_sample = 16;
    bool is_float = false;
    bool downmixed = false;
};

// RIFF/WAVE with 16/24/32-bit integer PCM or 32-bit float. Multi-channel
// input is averaged to mono (info->downmixed reports it).
AudioBuffer read_wav(const std::filesystem::path& path, WavInfo* info = nullptr);
AudioBuffer parse_wav(const std::vector<char>& bytes, WavInfo* info = nullptr);

// NIST SPHERE (as distributed with TIMIT), 16-bit PCM.
AudioBuffer read_sphere(const std::filesystem::path& path);

// Dispatches on the file's magic bytes.
AudioBuffer read_audio(const std::filesystem::path& path);

// 16-bit PCM mono.
void write_wav(const std::filesystem::path& path, const AudioBuffer& audio);
std::vector<char> encode_wav(const AudioBuffer& audio);

}  // namespace assimlab::audio
