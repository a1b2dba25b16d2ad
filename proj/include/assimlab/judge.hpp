#pragma once

#include "assimlab/stimulus.hpp"

#include <optional>
#include <string>
#include <vector>

namespace assimlab::behavioral {

enum class Verdict { compensated, surface, other, unjudgeable };
const char* to_string(Verdict v);
Verdict verdict_from_string(const std::string& s);

struct Judgement {
    Verdict verdict = Verdict::unjudgeable;
    std::string token;          // transcribed target-slot token (empty when unjudgeable)
    std::optional<std::size_t> token_index;  // index of that token in the transcript's words
    std::string reason;         // how the slot was found, or why it was not
};

std::size_t edit_distance(const std::string& a, const std::string& b);

// Position in `token` aligned to position `index` of `reference` by a
// minimum-edit alignment, or nothing when that character was deleted.
std::optional<std::size_t> aligned_position(const std::string& reference, std::size_t index, const std::string& token);

// Verdict for one transcribed target token.
Verdict judge_token(const std::string& token, const StimulusRecord& record);

// Locates the target slot in a transcript (the token preceding the context
// word) and judges it.
Judgement judge_compensation(const std::string& transcript, const StimulusRecord& record);

}  // namespace assimlab::behavioral
