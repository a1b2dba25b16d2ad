#include "assimlab/judge.hpp"

#include "assimlab/error.hpp"

#include <algorithm>
#include <sstream>

namespace assimlab::behavioral {

const char* to_string(Verdict v) {
    switch (v) {
        case Verdict::compensated: return "compensated";
        case Verdict::surface: return "surface";
        case Verdict::other: return "other";
        case Verdict::unjudgeable: return "unjudgeable";
    }
    return "?";
}

Verdict verdict_from_string(const std::string& s) {
    if (s == "compensated") return Verdict::compensated;
    if (s == "surface") return Verdict::surface;
    if (s == "other") return Verdict::other;
    if (s == "unjudgeable") return Verdict::unjudgeable;
    throw ConfigError("unknown verdict '" + s + "'");
}

namespace {

std::vector<std::vector<std::size_t>> edit_table(const std::string& a, const std::string& b) {
    std::vector<std::vector<std::size_t>> d(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
    for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
    for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i)
        for (std::size_t j = 1; j <= b.size(); ++j)
            d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0u : 1u)});
    return d;
}

bool is_consonant(char c) {
    return c >= 'A' && c <= 'Z' && std::string_view("AEIOUY").find(c) == std::string_view::npos;
}

const char* const kSuffixes[] = {"'S", "'", "S", "ED", "D"};

std::vector<std::string> tokenize(const std::string& transcript) {
    std::vector<std::string> out;
    std::istringstream in(transcript);
    for (std::string w; in >> w;) {
        auto n = normalize_word(w);
        if (!n.empty()) out.push_back(n);
    }
    return out;
}

}  // namespace

std::size_t edit_distance(const std::string& a, const std::string& b) { return edit_table(a, b)[a.size()][b.size()]; }

std::optional<std::size_t> aligned_position(const std::string& reference, std::size_t index, const std::string& token) {
    const auto d = edit_table(reference, token);
    std::size_t i = reference.size(), j = token.size();
    // backtrace preferring match/substitution, then deletion, then insertion
    while (i > 0 || j > 0) {
        if (i > 0 && j > 0 && d[i][j] == d[i - 1][j - 1] + (reference[i - 1] == token[j - 1] ? 0u : 1u)) {
            if (i - 1 == index) return j - 1;
            --i;
            --j;
        } else if (i > 0 && d[i][j] == d[i - 1][j] + 1) {
            if (i - 1 == index) return std::nullopt;
            --i;
        } else {
            --j;
        }
    }
    return std::nullopt;
}

Verdict judge_token(const std::string& raw, const StimulusRecord& r) {
    const std::string token = normalize_word(raw);
    if (token == r.target_word) return Verdict::compensated;
    if (token == r.surface_word) return Verdict::surface;
    for (const char* suffix : kSuffixes) {
        const std::string sfx(suffix);
        if (token.size() > sfx.size() && token.compare(token.size() - sfx.size(), sfx.size(), sfx) == 0) {
            const std::string stem = token.substr(0, token.size() - sfx.size());
            if (stem == r.target_word) return Verdict::compensated;
            if (stem == r.surface_word) return Verdict::surface;
        }
    }
    const auto pos = aligned_position(r.target_word, r.critical_index(), token);
    if (!pos) return Verdict::other;
    std::size_t lo = *pos, hi = *pos + 1;
    if (!is_consonant(token[lo])) return Verdict::other;
    while (lo > 0 && is_consonant(token[lo - 1])) --lo;
    while (hi < token.size() && is_consonant(token[hi])) ++hi;
    const std::string cluster = token.substr(lo, hi - lo);
    const bool has_u = cluster.find(r.underlying_char) != std::string::npos;
    const bool has_s = cluster.find(r.surface_char) != std::string::npos;
    if (has_u && !has_s) return Verdict::compensated;
    if (has_s && !has_u) return Verdict::surface;
    return Verdict::other;
}

Judgement judge_compensation(const std::string& transcript, const StimulusRecord& r) {
    const auto tokens = tokenize(transcript);
    const std::string& ctx = r.context_word;
    Judgement j;
    auto finish = [&](const std::string& token, std::optional<std::size_t> index, std::string reason) {
        j.token = token;
        j.token_index = index;
        j.reason = std::move(reason);
        j.verdict = judge_token(token, r);
        return j;
    };

    if (!ctx.empty()) {
        // context word as a token: exact, then within one edit
        for (std::size_t tolerance : {0u, 1u}) {
            for (std::size_t i = 1; i < tokens.size(); ++i) {
                if (edit_distance(tokens[i], ctx) <= tolerance) {
                    return finish(tokens[i - 1], i - 1, tolerance ? "context word within one edit" : "context word");
                }
            }
        }
        // context word split over two or three tokens
        for (std::size_t tolerance : {0u, 1u}) {
            for (std::size_t span = 2; span <= 3; ++span) {
                for (std::size_t i = 1; i + span <= tokens.size(); ++i) {
                    std::string joined;
                    for (std::size_t k = 0; k < span; ++k) joined += tokens[i + k];
                    if (edit_distance(joined, ctx) <= tolerance) {
                        return finish(tokens[i - 1], i - 1, "context word split across tokens");
                    }
                }
            }
        }
        // target merged with the start of the context word
        for (int pass = 0; pass < 3; ++pass) {
            for (std::size_t i = 0; i < tokens.size(); ++i) {
                const auto& t = tokens[i];
                for (std::size_t k = 1; k < t.size(); ++k) {
                    const std::string right = t.substr(k);
                    const bool hit = pass == 0   ? right == ctx
                                     : pass == 1 ? right.size() >= 3 && ctx.compare(0, right.size(), right) == 0
                                                 : edit_distance(right, ctx) <= 1;
                    if (hit) return finish(t.substr(0, k), i, "target merged with context word");
                }
            }
        }
    }
    // no anchor: a token spelled as the target or surface form
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const auto v = judge_token(tokens[i], r);
        if ((v == Verdict::compensated || v == Verdict::surface) &&
            std::min(edit_distance(tokens[i], r.target_word), edit_distance(tokens[i], r.surface_word)) <= 2) {
            return finish(tokens[i], i, "context word not found; matched target spelling");
        }
    }
    j.verdict = Verdict::unjudgeable;
    j.reason = "context word '" + ctx + "' not found in transcript";
    return j;
}

}  // namespace assimlab::behavioral
