#include "assimlab/experiment.hpp"

#include "assimlab/csv.hpp"
#include "assimlab/error.hpp"
#include "assimlab/resample.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <thread>
#include <tuple>

namespace assimlab::behavioral {

std::optional<double> underlying_prob(const Tensor& logits, const ctc::CharAlignment& align,
                                      const w2v2::Vocab& vocab, const StimulusRecord& r, const Judgement& j,
                                      std::size_t* critical_frame) {
    if (!j.token_index || *j.token_index >= align.words.size()) return std::nullopt;
    const auto& word = align.words[*j.token_index];
    // the judged token may be a prefix of a merged word
    const std::string token = j.token.empty() ? word.word : j.token;
    const auto pos = aligned_position(r.target_word, r.critical_index(), token);
    if (!pos || *pos >= word.word.size()) return std::nullopt;
    const std::size_t frame = ctc::locate_char_frame(align, *j.token_index, *pos);
    if (critical_frame) *critical_frame = frame;
    const auto row = logits.row(frame);
    const double m = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (float v : row) z += std::exp(double(v) - m);
    return std::exp(double(row[std::size_t(vocab.id_of(r.underlying_char))]) - m) / z;
}

CompensationReport aggregate(std::vector<ItemResult> items, const ExperimentOptions& options) {
    CompensationReport rep;
    using Key = std::tuple<int, Condition, ContextType>;
    std::map<Key, ConditionSummary> groups;
    std::map<Key, std::vector<double>> probs;
    for (const auto& it : items) {
        const Key key{it.record.experiment, it.record.condition, it.record.context_type};
        auto& g = groups[key];
        std::tie(g.experiment, g.condition, g.context_type) = key;
        if (!it.error.empty() || it.judgement.verdict == Verdict::unjudgeable) {
            ++g.excluded;
            continue;
        }
        ++g.n;
        g.k += it.judgement.verdict == Verdict::compensated;
        if (it.underlying_prob) probs[key].push_back(*it.underlying_prob);
    }
    for (auto& [key, g] : groups) {
        if (g.n > 0) {
            g.rate = double(g.k) / double(g.n);
            g.wilson = stats::wilson_interval(g.k, g.n);
        }
        g.underlying_prob = stats::summarize(probs[key]);
        rep.conditions.push_back(g);
    }

    if (options.bigrams) {
        std::vector<double> p, loose, strict;
        for (const auto& it : items) {
            const auto& r = it.record;
            if (r.experiment != 1 || r.condition == Condition::control) continue;
            if (r.underlying_char == 'N' && r.surface_char == 'G') continue;
            auto counts = options.bigrams(r);
            if (counts) rep.bigrams[r.id] = *counts;
            if (!counts || !it.underlying_prob || !it.error.empty()) continue;
            p.push_back(*it.underlying_prob);
            loose.push_back(double(counts->loose));
            strict.push_back(double(counts->strict));
        }
        if (p.size() >= 3) {
            for (auto [name, counts] : {std::pair{"loose", &loose}, std::pair{"strict", &strict}}) {
                SpearmanReport s;
                s.counts = name;
                s.n = p.size();
                s.permutations = options.permutations;
                s.seed = options.seed;
                try {
                    const auto sr = stats::spearman_rho(p, *counts);
                    s.rho = sr.rho;
                    s.df = sr.df;
                    s.p_value = stats::spearman_permutation_p(p, *counts, options.permutations, options.seed);
                } catch (const DataError&) {
                    s.rho = std::nan("");
                    s.df = long(p.size()) - 2;
                    s.p_value = std::nan("");
                }
                rep.spearman.push_back(s);
            }
        }
    }
    rep.items = std::move(items);
    return rep;
}

CompensationReport evaluate_transcripts(const std::vector<StimulusRecord>& records,
                                        const std::map<std::string, std::string>& transcripts,
                                        const ExperimentOptions& options) {
    std::vector<ItemResult> items;
    for (const auto& r : records) {
        ItemResult it;
        it.record = r;
        auto t = transcripts.find(r.id);
        if (t == transcripts.end()) {
            it.error = "no transcript supplied";
        } else {
            it.transcript = t->second;
            it.judgement = judge_compensation(it.transcript, r);
        }
        items.push_back(std::move(it));
    }
    return aggregate(std::move(items), options);
}

CompensationReport run_experiment(const w2v2::Checkpoint& ckpt, const std::vector<StimulusRecord>& records,
                                  const ExperimentOptions& options) {
    std::vector<ItemResult> items(records.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < records.size(); i = next++) {
            auto& it = items[i];
            it.record = records[i];
            try {
                if (it.record.audio_path.empty()) throw ConfigError("stimulus has no audio path");
                auto audio = audio::read_audio(it.record.audio_path);
                if (audio.sample_rate != ckpt.config.sample_rate) audio = audio::resample(audio, ckpt.config.sample_rate);
                const auto store = w2v2::forward(ckpt, audio);
                auto align = ctc::greedy_decode(store.logits, ckpt.vocab);
                it.transcript = align.transcript;
                it.judgement = judge_compensation(it.transcript, it.record);
                std::size_t frame = 0;
                it.underlying_prob = underlying_prob(store.logits, align, ckpt.vocab, it.record, it.judgement, &frame);
                if (it.underlying_prob) it.critical_frame = frame;
            } catch (const std::exception& e) {
                it.error = e.what();
            }
        }
    };
    const std::size_t n = std::max<std::size_t>(1, std::min(options.jobs, records.size()));
    if (n == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    return aggregate(std::move(items), options);
}

nlohmann::ordered_json report_to_json(const CompensationReport& rep) {
    using oj = nlohmann::ordered_json;
    oj j;
    auto& conds = j["conditions"] = oj::array();
    for (const auto& c : rep.conditions) {
        oj e;
        e["experiment"] = c.experiment;
        e["condition"] = to_string(c.condition);
        e["context_type"] = to_string(c.context_type);
        e["n"] = c.n;
        e["k"] = c.k;
        e["excluded"] = c.excluded;
        e["rate"] = c.rate;
        e["wilson_low"] = c.wilson.low;
        e["wilson_high"] = c.wilson.high;
        if (c.underlying_prob.n > 0) {
            e["underlying_prob"] = {{"mean", c.underlying_prob.mean}, {"sd", c.underlying_prob.sd}, {"n", c.underlying_prob.n}};
        }
        conds.push_back(std::move(e));
    }
    auto& sp = j["spearman"] = oj::array();
    for (const auto& s : rep.spearman) {
        sp.push_back({{"counts", s.counts}, {"n", s.n}, {"rho", s.rho}, {"df", s.df}, {"p_value", s.p_value},
                      {"p_value_method", "permutation"}, {"permutations", s.permutations}, {"seed", s.seed},
                      {"excludes", "underlying n realized as ng"}});
    }
    auto& items = j["items"] = oj::array();
    for (const auto& it : rep.items) {
        oj e;
        e["id"] = it.record.id;
        e["experiment"] = it.record.experiment;
        e["condition"] = to_string(it.record.condition);
        e["context_type"] = to_string(it.record.context_type);
        e["transcript"] = it.transcript;
        e["token"] = it.judgement.token;
        e["verdict"] = it.error.empty() ? to_string(it.judgement.verdict) : "error";
        e["reason"] = it.error.empty() ? it.judgement.reason : it.error;
        e["underlying_prob"] = it.underlying_prob ? oj(*it.underlying_prob) : oj(nullptr);
        e["critical_frame"] = it.critical_frame ? oj(*it.critical_frame) : oj(nullptr);
        if (auto b = rep.bigrams.find(it.record.id); b != rep.bigrams.end()) {
            e["bigram_strict"] = b->second.strict;
            e["bigram_loose"] = b->second.loose;
        }
        items.push_back(std::move(e));
    }
    return j;
}

std::string items_csv(const CompensationReport& rep) {
    csv::Table t;
    t.header = {"id", "experiment", "condition", "context_type", "target_word", "transcript", "token", "verdict",
                "underlying_prob", "critical_frame", "bigram_strict", "bigram_loose", "reason"};
    for (const auto& it : rep.items) {
        auto b = rep.bigrams.find(it.record.id);
        t.rows.push_back({it.record.id, std::to_string(it.record.experiment), to_string(it.record.condition),
                          to_string(it.record.context_type), it.record.target_word, it.transcript, it.judgement.token,
                          it.error.empty() ? to_string(it.judgement.verdict) : "error",
                          it.underlying_prob ? csv::number(*it.underlying_prob) : "",
                          it.critical_frame ? std::to_string(*it.critical_frame) : "",
                          b != rep.bigrams.end() ? std::to_string(b->second.strict) : "",
                          b != rep.bigrams.end() ? std::to_string(b->second.loose) : "",
                          it.error.empty() ? it.judgement.reason : it.error});
    }
    return csv::format(t);
}

std::string conditions_csv(const CompensationReport& rep) {
    csv::Table t;
    t.header = {"experiment", "condition", "context_type", "n", "k", "excluded", "rate", "wilson_low", "wilson_high",
                "mean_underlying_prob", "sd_underlying_prob"};
    for (const auto& c : rep.conditions) {
        const bool hp = c.underlying_prob.n > 0;
        t.rows.push_back({std::to_string(c.experiment), to_string(c.condition), to_string(c.context_type),
                          std::to_string(c.n), std::to_string(c.k), std::to_string(c.excluded), csv::number(c.rate),
                          csv::number(c.wilson.low), csv::number(c.wilson.high),
                          hp ? csv::number(c.underlying_prob.mean) : "", hp ? csv::number(c.underlying_prob.sd) : ""});
    }
    return csv::format(t);
}

}  // namespace assimlab::behavioral
