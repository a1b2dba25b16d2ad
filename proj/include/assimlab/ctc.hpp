#pragma once

#include "assimlab/checkpoint.hpp"
#include "assimlab/tensor.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace assimlab::ctc {

struct FrameSpan {
    std::size_t first = 0;
    std::size_t last = 0;  // inclusive

    std::size_t length() const noexcept { return last - first + 1; }
    bool contains(std::size_t f) const noexcept { return f >= first && f <= last; }
    friend bool operator==(const FrameSpan&, const FrameSpan&) = default;
};

// One character that survived the CTC collapse, with the contiguous run of
// frames whose argmax produced it.
struct Emission {
    char symbol = 0;  // ' ' for the word delimiter
    int token = -1;
    std::size_t first_frame = 0;
    std::size_t last_frame = 0;
};

struct WordSpan {
    std::string word;
    std::size_t first_emission = 0;  // index into CharAlignment::emissions
    std::size_t first_frame = 0;
    std::size_t last_frame = 0;
};

struct CharAlignment {
    std::vector<int> frame_tokens;
    std::string transcript;
    std::vector<Emission> emissions;
    std::vector<WordSpan> words;
    std::size_t hop = 320;
    std::size_t receptive_field = 400;

    std::size_t frames() const noexcept { return frame_tokens.size(); }
};

enum class Granularity { frame, phone, word };
Granularity granularity_from_string(const std::string& s);
const char* to_string(Granularity g);

// Argmax per frame (ties to the lowest id), collapse repeats, drop blanks.
// Delimiters separate words; leading, trailing and doubled delimiters emit
// nothing, so the transcript has single spaces between words.
CharAlignment greedy_decode(const Tensor& logits, const w2v2::Vocab& vocab);

// First frame of the char_index-th character of word word_index.
std::size_t locate_char_frame(const CharAlignment& align, std::size_t word_index, std::size_t char_index);

// frame: the critical frame; phone: critical frame ±3 clipped to the run;
// word: first to last frame of the word's character emissions.
FrameSpan span_from_granularity(const CharAlignment& align, std::size_t word_index, std::size_t char_index,
                                Granularity g);

inline constexpr std::size_t kPhoneHalfWidth = 3;

nlohmann::ordered_json alignment_to_json(const CharAlignment& align);

}  // namespace assimlab::ctc
