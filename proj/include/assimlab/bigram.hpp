#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace assimlab::behavioral {

enum class MatchMode { strict, loose };

// Upper-cased transcripts, one per line, punctuation other than the
// apostrophe removed. A leading LibriSpeech utterance id (digits-digits-
// digits) is dropped.
class BigramCorpus {
public:
    static BigramCorpus from_text(const std::string& text);
    static BigramCorpus from_file(const std::filesystem::path& path);  // a file or a directory of *.trans.txt

    // strict: W1 W2 as adjacent whole tokens.
    // loose: W1, W1'S, W1S or W1' followed by a token starting with W2.
    long count(const std::string& w1, const std::string& w2, MatchMode mode) const;

    std::size_t lines() const { return lines_.size(); }

private:
    std::vector<std::vector<std::string>> lines_;
};

// The regular expressions the two modes implement, for reports.
std::pair<std::string, std::string> bigram_patterns(const std::string& w1, const std::string& w2);

}  // namespace assimlab::behavioral
