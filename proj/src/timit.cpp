#include "assimlab/timit.hpp"

#include "assimlab/csv.hpp"
#include "assimlab/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <sstream>

namespace assimlab::probing {

std::string PhoneFold::apply(const std::string& code) const {
    auto it = fold.find(code);
    return it == fold.end() ? code : it->second;
}

PhoneFold PhoneFold::load(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(csv::read_text(path));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    PhoneFold f;
    for (auto& [k, v] : j.at("fold").items()) f.fold[k] = v.get<std::string>();
    if (j.contains("contrasts")) {
        for (const auto& c : j.at("contrasts")) f.contrasts.emplace_back(c.at(0).get<std::string>(), c.at(1).get<std::string>());
    }
    return f;
}

std::vector<PhoneInterval> parse_phone_file(const std::string& text, const std::string& source) {
    std::vector<PhoneInterval> out;
    std::istringstream in(text);
    std::size_t line_no = 0;
    for (std::string line; std::getline(in, line);) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream ls(line);
        long long start = -1, end = -1;
        std::string label, extra;
        if (!(ls >> start >> end >> label) || (ls >> extra) || start < 0 || end <= start) {
            throw ParseError(source + ":" + std::to_string(line_no) + ": malformed phone line '" + line + "'");
        }
        if (!out.empty() && std::size_t(start) < out.back().end) {
            throw ParseError(source + ":" + std::to_string(line_no) + ": interval overlaps its predecessor");
        }
        out.push_back({label, std::size_t(start), std::size_t(end)});
    }
    return out;
}

namespace {

std::string lower(std::string s) {
    for (auto& c : s) c = char(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::filesystem::path audio_for(const std::filesystem::path& phn) {
    for (const char* ext : {".WAV", ".wav", ".sph", ".SPH"}) {
        auto p = phn;
        p.replace_extension(ext);
        if (std::filesystem::exists(p)) return p;
    }
    return {};
}

std::filesystem::path child_ci(const std::filesystem::path& dir, const std::string& name) {
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (e.is_directory() && lower(e.path().filename().string()) == lower(name)) return e.path();
    }
    throw LoadError("no " + name + " directory under " + dir.string());
}

}  // namespace

std::vector<std::filesystem::path> list_phone_files(const std::filesystem::path& split_dir) {
    std::vector<std::filesystem::path> out;
    for (const auto& e : std::filesystem::recursive_directory_iterator(split_dir)) {
        if (e.is_regular_file() && lower(e.path().extension().string()) == ".phn" && !audio_for(e.path()).empty()) {
            out.push_back(e.path());
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

IngestResult ingest_split(const std::filesystem::path& split_dir, std::size_t n, std::size_t min_samples) {
    IngestResult r;
    for (const auto& phn : list_phone_files(split_dir)) {
        if (r.utterances.size() >= n) break;
        Utterance u;
        u.id = std::filesystem::relative(phn, split_dir).replace_extension().generic_string();
        u.audio_path = audio_for(phn);
        u.audio = audio::read_audio(u.audio_path);
        if (u.audio.size() < min_samples) {
            r.warnings.push_back(u.id + ": " + std::to_string(u.audio.size()) + " samples, shorter than one frame; skipped");
            continue;
        }
        u.phones = parse_phone_file(csv::read_text(phn), phn.string());
        r.utterances.push_back(std::move(u));
    }
    if (r.utterances.size() < n) {
        r.warnings.push_back("only " + std::to_string(r.utterances.size()) + " usable utterances under " +
                             split_dir.string() + " (" + std::to_string(n) + " requested)");
    }
    return r;
}

TimitCorpus ingest_timit(const std::filesystem::path& corpus_dir, std::size_t n_train, std::size_t n_test) {
    return {ingest_split(child_ci(corpus_dir, "train"), n_train), ingest_split(child_ci(corpus_dir, "test"), n_test)};
}

std::vector<std::set<std::string>> frame_labels(const std::vector<PhoneInterval>& phones, std::size_t frames,
                                                std::size_t hop, std::size_t window, const PhoneFold& fold) {
    std::vector<std::set<std::string>> out(frames);
    for (const auto& p : phones) {
        // frames i with hop*i < p.end and hop*i + window > p.start
        const std::size_t first = p.start + 1 > window ? (p.start + 1 - window + hop - 1) / hop : 0;
        const std::size_t label_end = (p.end + hop - 1) / hop;  // first i with hop*i >= end
        const std::string label = fold.apply(p.label);
        for (std::size_t i = first; i < std::min(label_end, frames); ++i) out[i].insert(label);
    }
    return out;
}

}  // namespace assimlab::probing
