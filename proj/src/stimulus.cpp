#include "assimlab/stimulus.hpp"

#include "assimlab/csv.hpp"
#include "assimlab/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>

namespace assimlab::behavioral {

const char* to_string(Condition c) {
    switch (c) {
        case Condition::viable: return "viable";
        case Condition::unviable: return "unviable";
        case Condition::control: return "control";
    }
    return "?";
}

const char* to_string(ContextType c) {
    switch (c) {
        case ContextType::neutral: return "neutral";
        case ContextType::biasing: return "biasing";
        case ContextType::random: return "random";
        case ContextType::none: return "n/a";
    }
    return "?";
}

Condition condition_from_string(const std::string& s) {
    if (s == "viable") return Condition::viable;
    if (s == "unviable") return Condition::unviable;
    if (s == "control") return Condition::control;
    throw ConfigError("unknown condition '" + s + "'");
}

ContextType context_type_from_string(const std::string& s) {
    if (s == "neutral") return ContextType::neutral;
    if (s == "biasing") return ContextType::biasing;
    if (s == "random") return ContextType::random;
    if (s == "n/a" || s.empty()) return ContextType::none;
    throw ConfigError("unknown context type '" + s + "'");
}

std::string normalize_word(const std::string& w) {
    std::string out;
    for (char c : w) {
        if (std::isalpha(static_cast<unsigned char>(c))) out.push_back(char(std::toupper(static_cast<unsigned char>(c))));
        else if (c == '\'') out.push_back(c);
    }
    return out;
}

std::string first_word(const std::string& text) {
    auto begin = std::find_if(text.begin(), text.end(), [](char c) { return !std::isspace(static_cast<unsigned char>(c)); });
    auto end = std::find_if(begin, text.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
    return normalize_word(std::string(begin, end));
}

std::size_t StimulusRecord::critical_index() const {
    for (std::size_t i = target_word.size(); i-- > 0;) {
        if (target_word[i] == underlying_char) return i;
    }
    throw ConfigError("record " + id + ": target word " + target_word + " lacks '" + std::string(1, underlying_char) + "'");
}

void validate(const StimulusRecord& r) {
    auto fail = [&](const std::string& why) { throw ConfigError("stimulus " + r.id + ": " + why); };
    if (r.id.empty()) throw ConfigError("stimulus without id");
    if (r.target_word.empty() || r.surface_word.empty()) fail("target and surface words are required");
    if (r.underlying_char == 0 || r.surface_char == 0) fail("underlying and surface characters are required");
    if (r.underlying_char == r.surface_char) fail("underlying and surface characters coincide");
    if (r.target_word == r.surface_word) fail("target and surface words coincide");
    if (r.experiment < 1 || r.experiment > 3) fail("experiment must be 1, 2 or 3");
    r.critical_index();
}

namespace {

char single_char(const std::string& s, const std::string& id, const char* what) {
    const std::string n = normalize_word(s);
    if (n.size() != 1) throw ConfigError("stimulus " + id + ": " + what + " must be a single letter, got '" + s + "'");
    return n[0];
}

std::string resolve(const std::string& p, const std::filesystem::path& base) {
    if (p.empty()) return p;
    std::filesystem::path path(p);
    return (path.is_absolute() ? path : base / path).lexically_normal().string();
}

}  // namespace

std::vector<StimulusRecord> parse_manifest_csv(const std::string& text, const std::filesystem::path& base_dir,
                                               const std::string& source) {
    const auto t = csv::parse(text, source);
    std::vector<StimulusRecord> out;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        auto get = [&](const char* k) { return t.has_column(k) ? t.at(i, k) : std::string(); };
        StimulusRecord r;
        r.id = get("id");
        r.audio_path = resolve(get("audio_path"), base_dir);
        r.experiment = get("experiment").empty() ? 1 : std::stoi(get("experiment"));
        r.condition = condition_from_string(get("condition"));
        r.context_type = context_type_from_string(get("context_type"));
        r.target_word = normalize_word(get("target_word"));
        r.surface_word = normalize_word(get("surface_word"));
        r.underlying_char = single_char(get("underlying_char"), r.id, "underlying_char");
        r.surface_char = single_char(get("surface_char"), r.id, "surface_char");
        r.context_word = normalize_word(get("context_word"));
        r.carrier_id = get("carrier_id");
        validate(r);
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<StimulusRecord> load_manifest(const std::filesystem::path& path) {
    const std::string text = csv::read_text(path);
    const auto base = path.parent_path();
    if (path.extension() != ".json") return parse_manifest_csv(text, base, path.string());

    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    std::vector<StimulusRecord> out;
    for (const auto& e : j) {
        auto str = [&](const char* k) { return e.contains(k) && !e[k].is_null() ? e[k].get<std::string>() : std::string(); };
        StimulusRecord r;
        r.id = str("id");
        r.audio_path = resolve(str("audio_path"), base);
        r.experiment = e.value("experiment", 1);
        r.condition = condition_from_string(str("condition"));
        r.context_type = context_type_from_string(str("context_type"));
        r.target_word = normalize_word(str("target_word"));
        r.surface_word = normalize_word(str("surface_word"));
        r.underlying_char = single_char(str("underlying_char"), r.id, "underlying_char");
        r.surface_char = single_char(str("surface_char"), r.id, "surface_char");
        r.context_word = normalize_word(str("context_word"));
        r.carrier_id = str("carrier_id");
        validate(r);
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<SentenceItem> load_sentence_items(const std::filesystem::path& path) {
    const auto t = csv::read(path);
    std::vector<SentenceItem> out;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        SentenceItem it;
        it.item = std::stoi(t.at(i, "item"));
        it.target_word = normalize_word(t.at(i, "target_word"));
        it.surface_word = normalize_word(t.at(i, "surface_word"));
        it.underlying_char = single_char(t.at(i, "underlying_char"), t.at(i, "item"), "underlying_char");
        it.surface_char = single_char(t.at(i, "surface_char"), t.at(i, "item"), "surface_char");
        it.context_sentence = t.at(i, "context_sentence");
        it.target_sentence_prefix = t.at(i, "target_sentence_prefix");
        it.viable_continuation = t.at(i, "viable_continuation");
        it.unviable_continuation = t.at(i, "unviable_continuation");
        out.push_back(std::move(it));
    }
    return out;
}

std::vector<StimulusRecord> expand_sentence_items(const std::vector<SentenceItem>& items, int experiment) {
    if (experiment != 2 && experiment != 3) throw ConfigError("sentence items expand to experiment 2 or 3");
    std::vector<ContextType> contexts{ContextType::neutral};
    if (experiment == 3) contexts = {ContextType::neutral, ContextType::biasing, ContextType::random};
    std::vector<StimulusRecord> out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& it = items[i];
        for (auto cond : {Condition::viable, Condition::unviable}) {
            for (auto ctx : contexts) {
                StimulusRecord r;
                r.id = "e" + std::to_string(experiment) + "_" + std::to_string(it.item) + "_" + to_string(cond) +
                       (experiment == 3 ? std::string("_") + to_string(ctx) : std::string());
                r.experiment = experiment;
                r.condition = cond;
                r.context_type = ctx;
                r.target_word = it.target_word;
                r.surface_word = it.surface_word;
                r.underlying_char = it.underlying_char;
                r.surface_char = it.surface_char;
                r.context_word = first_word(cond == Condition::viable ? it.viable_continuation : it.unviable_continuation);
                if (ctx == ContextType::random) {
                    r.carrier_id = std::to_string(items[(i + 1) % items.size()].item);
                } else {
                    r.carrier_id = std::to_string(it.item);
                }
                validate(r);
                out.push_back(std::move(r));
            }
        }
    }
    return out;
}

}  // namespace assimlab::behavioral
