#include "assimlab/ctc.hpp"

#include "assimlab/error.hpp"

#include <algorithm>

namespace assimlab::ctc {

Granularity granularity_from_string(const std::string& s) {
    if (s == "frame") return Granularity::frame;
    if (s == "phone") return Granularity::phone;
    if (s == "word") return Granularity::word;
    throw ConfigError("unknown granularity '" + s + "'");
}

const char* to_string(Granularity g) {
    switch (g) {
        case Granularity::frame: return "frame";
        case Granularity::phone: return "phone";
        case Granularity::word: return "word";
    }
    return "?";
}

CharAlignment greedy_decode(const Tensor& logits, const w2v2::Vocab& vocab) {
    CharAlignment out;
    if (logits.empty()) return out;
    if (logits.rank() != 2 || logits.cols() != vocab.size()) {
        throw DimensionError("logits " + logits.shape_string() + " do not match vocab of " +
                             std::to_string(vocab.size()));
    }
    const std::size_t frames = logits.rows();
    out.frame_tokens.resize(frames);
    for (std::size_t f = 0; f < frames; ++f) {
        auto row = logits.row(f);
        out.frame_tokens[f] = int(std::max_element(row.begin(), row.end()) - row.begin());
    }

    // runs of identical argmax collapse to one candidate
    std::size_t f = 0;
    while (f < frames) {
        const int tok = out.frame_tokens[f];
        std::size_t end = f;
        while (end + 1 < frames && out.frame_tokens[end + 1] == tok) ++end;
        if (tok == vocab.delimiter()) {
            if (!out.emissions.empty() && out.emissions.back().symbol != ' ') {
                out.emissions.push_back({' ', tok, f, end});
            }
        } else if (vocab.emits(tok)) {
            out.emissions.push_back({vocab.token(tok)[0], tok, f, end});
        }
        f = end + 1;
    }
    if (!out.emissions.empty() && out.emissions.back().symbol == ' ') out.emissions.pop_back();

    for (std::size_t i = 0; i < out.emissions.size(); ++i) {
        const auto& e = out.emissions[i];
        out.transcript.push_back(e.symbol);
        if (e.symbol == ' ') continue;
        if (i == 0 || out.emissions[i - 1].symbol == ' ') {
            out.words.push_back({"", i, e.first_frame, e.last_frame});
        }
        out.words.back().word.push_back(e.symbol);
        out.words.back().last_frame = e.last_frame;
    }
    return out;
}

namespace {

const Emission& emission_at(const CharAlignment& align, std::size_t word_index, std::size_t char_index) {
    if (word_index >= align.words.size()) {
        throw RangeError("word index " + std::to_string(word_index) + " out of range (" +
                         std::to_string(align.words.size()) + " words)");
    }
    const auto& w = align.words[word_index];
    if (char_index >= w.word.size()) {
        throw RangeError("character index " + std::to_string(char_index) + " out of range for word '" + w.word + "'");
    }
    return align.emissions[w.first_emission + char_index];
}

}  // namespace

std::size_t locate_char_frame(const CharAlignment& align, std::size_t word_index, std::size_t char_index) {
    return emission_at(align, word_index, char_index).first_frame;
}

FrameSpan span_from_granularity(const CharAlignment& align, std::size_t word_index, std::size_t char_index,
                                Granularity g) {
    const std::size_t critical = locate_char_frame(align, word_index, char_index);
    switch (g) {
        case Granularity::frame: return {critical, critical};
        case Granularity::phone: {
            const std::size_t lo = critical >= kPhoneHalfWidth ? critical - kPhoneHalfWidth : 0;
            const std::size_t hi = std::min(critical + kPhoneHalfWidth, align.frames() - 1);
            return {lo, hi};
        }
        case Granularity::word: {
            const auto& w = align.words[word_index];
            return {w.first_frame, w.last_frame};
        }
    }
    return {critical, critical};
}

nlohmann::ordered_json alignment_to_json(const CharAlignment& align) {
    nlohmann::ordered_json j;
    j["transcript"] = align.transcript;
    j["frames"] = align.frames();
    j["frame_hop_samples"] = align.hop;
    j["frame_window_samples"] = align.receptive_field;
    j["frame_time_rule"] = "frame i covers samples [hop*i, hop*i + window)";
    auto& em = j["emissions"] = nlohmann::ordered_json::array();
    for (const auto& e : align.emissions) {
        em.push_back({{"char", std::string(1, e.symbol)}, {"first_frame", e.first_frame}, {"last_frame", e.last_frame}});
    }
    auto& ws = j["words"] = nlohmann::ordered_json::array();
    for (const auto& w : align.words) {
        ws.push_back({{"word", w.word}, {"first_frame", w.first_frame}, {"last_frame", w.last_frame}});
    }
    return j;
}

}  // namespace assimlab::ctc
