#pragma once

#include "assimlab/audio.hpp"

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace assimlab::probing {

struct PhoneInterval {
    std::string label;
    std::size_t start = 0;  // first sample
    std::size_t end = 0;    // one past the last sample
};

struct Utterance {
    std::string id;
    std::filesystem::path audio_path;
    audio::AudioBuffer audio;
    std::vector<PhoneInterval> phones;
};

// Maps corpus phone codes onto probe phonemes; unlisted codes pass through.
struct PhoneFold {
    std::map<std::string, std::string> fold;
    std::vector<std::pair<std::string, std::string>> contrasts;

    std::string apply(const std::string& code) const;
    static PhoneFold load(const std::filesystem::path& path);
};

// "<start> <end> <label>" per line; throws ParseError with file and line.
std::vector<PhoneInterval> parse_phone_file(const std::string& text, const std::string& source);

// Utterances of one split directory in sorted path order (phone files with
// a sibling audio file of the same stem).
std::vector<std::filesystem::path> list_phone_files(const std::filesystem::path& split_dir);

struct IngestResult {
    std::vector<Utterance> utterances;
    std::vector<std::string> warnings;
};

// The first n utterances of a split; utterances shorter than min_samples are
// skipped with a warning (and do not count toward n).
IngestResult ingest_split(const std::filesystem::path& split_dir, std::size_t n, std::size_t min_samples = 400);

struct TimitCorpus {
    IngestResult train, test;
};

// corpus_dir holds TRAIN and TEST (either case).
TimitCorpus ingest_timit(const std::filesystem::path& corpus_dir, std::size_t n_train, std::size_t n_test);

// Folded labels of every phone interval overlapping frame i, which covers
// samples [hop*i, hop*i + window).
std::vector<std::set<std::string>> frame_labels(const std::vector<PhoneInterval>& phones, std::size_t frames,
                                                std::size_t hop, std::size_t window, const PhoneFold& fold);

}  // namespace assimlab::probing
