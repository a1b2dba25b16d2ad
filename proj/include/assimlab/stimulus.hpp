#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace assimlab::behavioral {

enum class Condition { viable, unviable, control };
enum class ContextType { neutral, biasing, random, none };

const char* to_string(Condition c);
const char* to_string(ContextType c);
Condition condition_from_string(const std::string& s);
ContextType context_type_from_string(const std::string& s);

struct StimulusRecord {
    std::string id;
    std::string audio_path;
    int experiment = 1;
    Condition condition = Condition::viable;
    ContextType context_type = ContextType::none;
    std::string target_word;   // intended orthography, upper case
    std::string surface_word;  // assimilated spelling, upper case
    char underlying_char = 0;
    char surface_char = 0;
    std::string context_word;
    std::string carrier_id;

    // Index of the critical consonant within target_word (its final
    // consonant; for /n/ -> [ng] the <n>).
    std::size_t critical_index() const;
};

// Checks the record invariants; throws ConfigError naming the row.
void validate(const StimulusRecord& r);

// CSV with the column names of StimulusRecord, or a JSON list of objects
// with the same keys. Relative audio paths resolve against the manifest's
// directory.
std::vector<StimulusRecord> load_manifest(const std::filesystem::path& path);
std::vector<StimulusRecord> parse_manifest_csv(const std::string& text, const std::filesystem::path& base_dir,
                                               const std::string& source = "<manifest>");

// One row of the lexically ambiguous item list (two-sentence stimuli).
struct SentenceItem {
    int item = 0;
    std::string target_word, surface_word;
    char underlying_char = 0, surface_char = 0;
    std::string context_sentence;
    std::string target_sentence_prefix;
    std::string viable_continuation, unviable_continuation;
};

std::vector<SentenceItem> load_sentence_items(const std::filesystem::path& path);

// Experiment 2: viable and unviable rows in neutral context. Experiment 3:
// the same under neutral, biasing and random context, where the random
// context of item i is the context sentence of item i+1 (cyclically), so
// every context sentence is used once.
std::vector<StimulusRecord> expand_sentence_items(const std::vector<SentenceItem>& items, int experiment);

std::string first_word(const std::string& text);
std::string normalize_word(const std::string& w);  // upper case, letters and apostrophes only

}  // namespace assimlab::behavioral
