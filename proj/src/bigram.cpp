#include "assimlab/bigram.hpp"

#include "assimlab/csv.hpp"
#include "assimlab/error.hpp"
#include "assimlab/stimulus.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

namespace assimlab::behavioral {

namespace {

bool is_utterance_id(const std::string& tok) {
    int groups = 1;
    bool digit = false;
    for (char c : tok) {
        if (std::isdigit(static_cast<unsigned char>(c))) digit = true;
        else if (c == '-' && digit) {
            ++groups;
            digit = false;
        } else {
            return false;
        }
    }
    return digit && groups == 3;
}

}  // namespace

BigramCorpus BigramCorpus::from_text(const std::string& text) {
    BigramCorpus c;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) {
        std::istringstream ls(line);
        std::vector<std::string> toks;
        bool first = true;
        for (std::string raw; ls >> raw; first = false) {
            if (first && is_utterance_id(raw)) continue;
            // hyphens and other punctuation split words
            std::string cur;
            for (char ch : raw) {
                if (std::isalnum(static_cast<unsigned char>(ch)) || ch == '\'') {
                    cur.push_back(char(std::toupper(static_cast<unsigned char>(ch))));
                } else if (!cur.empty()) {
                    toks.push_back(std::move(cur));
                    cur.clear();
                }
            }
            if (!cur.empty()) toks.push_back(std::move(cur));
        }
        if (!toks.empty()) c.lines_.push_back(std::move(toks));
    }
    return c;
}

BigramCorpus BigramCorpus::from_file(const std::filesystem::path& path) {
    if (!std::filesystem::is_directory(path)) return from_text(csv::read_text(path));
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::recursive_directory_iterator(path)) {
        const auto name = e.path().filename().string();
        if (e.is_regular_file() && name.size() > 10 && name.ends_with(".trans.txt")) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw LoadError("no *.trans.txt files under " + path.string());
    std::string all;
    for (const auto& f : files) {
        all += csv::read_text(f);
        all.push_back('\n');
    }
    return from_text(all);
}

long BigramCorpus::count(const std::string& w1_raw, const std::string& w2_raw, MatchMode mode) const {
    const std::string w1 = normalize_word(w1_raw), w2 = normalize_word(w2_raw);
    if (w1.empty() || w2.empty()) throw ConfigError("bigram words must be non-empty");
    const std::string v1 = w1 + "'S", v2 = w1 + "S", v3 = w1 + "'";
    long n = 0;
    for (const auto& toks : lines_) {
        for (std::size_t i = 0; i + 1 < toks.size(); ++i) {
            const auto& a = toks[i];
            const auto& b = toks[i + 1];
            if (mode == MatchMode::strict) {
                n += a == w1 && b == w2;
            } else {
                n += (a == w1 || a == v1 || a == v2 || a == v3) && b.compare(0, w2.size(), w2) == 0;
            }
        }
    }
    return n;
}

std::pair<std::string, std::string> bigram_patterns(const std::string& w1, const std::string& w2) {
    const std::string a = normalize_word(w1), b = normalize_word(w2);
    return {"\\b" + a + " " + b + "\\b", "\\b" + a + "('S|S|')? " + b + "[A-Z']*"};
}

}  // namespace assimlab::behavioral
