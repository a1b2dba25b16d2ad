#pragma once

#include "assimlab/bigram.hpp"
#include "assimlab/ctc.hpp"
#include "assimlab/engine.hpp"
#include "assimlab/judge.hpp"
#include "assimlab/stats.hpp"
#include "assimlab/stimulus.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <map>
#include <optional>

namespace assimlab::behavioral {

struct ItemResult {
    StimulusRecord record;
    std::string transcript;
    Judgement judgement;
    std::optional<double> underlying_prob;
    std::optional<std::size_t> critical_frame;
    std::string error;  // set when the item could not be processed
};

struct ConditionSummary {
    int experiment = 1;
    Condition condition = Condition::viable;
    ContextType context_type = ContextType::none;
    long n = 0;  // judged items
    long k = 0;  // compensated
    long excluded = 0;
    double rate = 0.0;
    stats::Interval wilson;
    stats::Summary underlying_prob;
};

struct BigramCounts {
    long strict = 0;
    long loose = 0;
};

struct SpearmanReport {
    std::string counts;  // "loose" or "strict"
    std::size_t n = 0;
    double rho = 0.0;
    long df = 0;
    double p_value = 1.0;
    std::size_t permutations = 0;
    std::uint64_t seed = 0;
};

struct CompensationReport {
    std::vector<ItemResult> items;
    std::vector<ConditionSummary> conditions;  // sorted by experiment, condition, context type
    std::vector<SpearmanReport> spearman;      // loose first, then strict
    std::map<std::string, BigramCounts> bigrams;
};

// Softmax probability of the record's underlying character at the first
// frame of the emission aligned to its critical consonant.
std::optional<double> underlying_prob(const Tensor& logits, const ctc::CharAlignment& align,
                                      const w2v2::Vocab& vocab, const StimulusRecord& record,
                                      const Judgement& judgement, std::size_t* critical_frame = nullptr);

using BigramLookup = std::function<std::optional<BigramCounts>(const StimulusRecord&)>;

struct ExperimentOptions {
    std::size_t jobs = 1;
    std::uint64_t seed = 0;
    std::size_t permutations = 10000;
    BigramLookup bigrams;  // enables the Spearman analysis for experiment 1
};

// Per-condition aggregation with Wilson intervals; for experiment 1 the
// Spearman analysis of underlying probability against bigram counts over
// viable and unviable items, leaving out /n/ -> [ng] items.
CompensationReport aggregate(std::vector<ItemResult> items, const ExperimentOptions& options);

// Judges supplied transcripts (no audio involved).
CompensationReport evaluate_transcripts(const std::vector<StimulusRecord>& records,
                                        const std::map<std::string, std::string>& transcripts,
                                        const ExperimentOptions& options);

// Transcribes every stimulus (resampling to the model rate when needed),
// judges it and aggregates. Per-item failures are recorded, never thrown.
CompensationReport run_experiment(const w2v2::Checkpoint& ckpt, const std::vector<StimulusRecord>& records,
                                  const ExperimentOptions& options);

nlohmann::ordered_json report_to_json(const CompensationReport& report);
std::string items_csv(const CompensationReport& report);
std::string conditions_csv(const CompensationReport& report);

}  // namespace assimlab::behavioral
