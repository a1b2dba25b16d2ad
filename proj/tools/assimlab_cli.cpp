#include "assimlab/assemble.hpp"
#include "assimlab/audio.hpp"
#include "assimlab/bigram.hpp"
#include "assimlab/checkpoint.hpp"
#include "assimlab/csv.hpp"
#include "assimlab/ctc.hpp"
#include "assimlab/engine.hpp"
#include "assimlab/error.hpp"
#include "assimlab/experiment.hpp"
#include "assimlab/intervention.hpp"
#include "assimlab/judge.hpp"
#include "assimlab/probe.hpp"
#include "assimlab/report.hpp"
#include "assimlab/resample.hpp"
#include "assimlab/timit.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace assimlab;
using ojson = nlohmann::ordered_json;

#ifndef ASSIMLAB_DATA_DIR
#define ASSIMLAB_DATA_DIR "data"
#endif

namespace {

struct Common {
    std::string model;
    std::size_t jobs = 1;
    std::uint64_t seed = 0;
    bool svg = false;
};

std::string model_dir(const Common& c) {
    if (!c.model.empty()) return c.model;
    if (const char* env = std::getenv("ASSIMLAB_MODEL"); env && *env) return env;
    throw ConfigError("no model directory: pass --model or set ASSIMLAB_MODEL");
}

fs::path output_dir(const fs::path& out) {
    const auto parent = out.parent_path();
    return parent.empty() ? fs::path(".") : parent;
}

audio::AudioBuffer load_audio_for(const w2v2::Checkpoint& ck, const fs::path& path) {
    auto a = audio::read_audio(path);
    if (a.sample_rate != ck.config.sample_rate) a = audio::resample(a, ck.config.sample_rate);
    return a;
}

// Word index within an alignment: the token closest to `word` by edit
// distance (first on ties), or an explicit index.
std::size_t find_word(const ctc::CharAlignment& align, const std::string& word, std::optional<std::size_t> index,
                      const std::string& which) {
    if (align.words.empty()) throw DataError(which + " transcript is empty; nothing to align");
    if (index) {
        if (*index >= align.words.size()) {
            throw RangeError(which + " word index " + std::to_string(*index) + " out of range (transcript has " +
                             std::to_string(align.words.size()) + " words)");
        }
        return *index;
    }
    if (word.empty()) return 0;
    std::size_t best = 0, best_d = SIZE_MAX;
    for (std::size_t i = 0; i < align.words.size(); ++i) {
        const auto d = behavioral::edit_distance(align.words[i].word, word);
        if (d < best_d) best = i, best_d = d;
    }
    return best;
}

// Character of the assimilated consonant inside the transcribed token.
std::size_t find_char(const std::string& token, const std::string& word, char underlying, char surface) {
    if (!word.empty()) {
        const auto crit = word.find_last_of(underlying);
        if (crit != std::string::npos) {
            if (auto p = behavioral::aligned_position(word, crit, token)) return *p;
        }
    }
    const auto p = token.find_last_of(std::string{underlying, surface});
    if (p != std::string::npos) return p;
    return token.empty() ? 0 : token.size() - 1;
}

char parse_char(const std::string& s, const char* flag) {
    if (s.size() != 1) throw ConfigError(std::string(flag) + " expects a single character, got '" + s + "'");
    return char(std::toupper(static_cast<unsigned char>(s[0])));
}

std::vector<int> parse_layers(const std::string& spec, int max_layer) {
    std::vector<int> out;
    std::string item;
    std::stringstream ss(spec);
    while (std::getline(ss, item, ',')) {
        const auto dash = item.find('-');
        int lo, hi;
        try {
            lo = std::stoi(item.substr(0, dash));
            hi = dash == std::string::npos ? lo : std::stoi(item.substr(dash + 1));
        } catch (const std::exception&) {
            throw ConfigError("bad layer list '" + spec + "'");
        }
        if (lo < 0 || hi > max_layer || lo > hi) throw RangeError("layer range '" + item + "' outside 0.." + std::to_string(max_layer));
        for (int l = lo; l <= hi; ++l) out.push_back(l);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

probing::Contrast parse_contrast(const std::string& s) {
    const auto c = s.find(',');
    if (c == std::string::npos || c == 0 || c + 1 == s.size()) {
        throw ConfigError("contrast must be 'underlying,surface', got '" + s + "'");
    }
    return {s.substr(0, c), s.substr(c + 1)};
}

std::string probe_file_name(const probing::Contrast& c, int layer) {
    return "probe_" + c.first + "-" + c.second + "_L" + std::to_string(layer) + ".json";
}

void write_json(const fs::path& path, const ojson& j) { csv::write_text(path, j.dump(2) + "\n"); }

void finish(report::RunManifest& m, const fs::path& dir) {
    m.finished_utc = report::utc_now();
    m.write(dir);
}

// ---------------------------------------------------------------------------

int cmd_transcribe(const Common& c, const std::string& audio_path, const std::string& alignment_out,
                   report::RunManifest& m) {
    const auto dir = model_dir(c);
    m.config["model"] = dir;
    m.config["audio"] = audio_path;
    m.config["alignment"] = alignment_out;
    m.add_input(dir);
    m.add_input(audio_path);
    const auto ck = w2v2::load_checkpoint(dir);
    const auto store = w2v2::forward(ck, load_audio_for(ck, audio_path));
    auto align = ctc::greedy_decode(store.logits, ck.vocab);
    align.hop = ck.config.hop();
    align.receptive_field = ck.config.receptive_field();
    std::cout << align.transcript << "\n";
    if (!alignment_out.empty()) {
        write_json(alignment_out, ctc::alignment_to_json(align));
        m.outputs.push_back(alignment_out);
        finish(m, output_dir(alignment_out));
    }
    return 0;
}

struct IntervenePaths {
    std::string source, target, underlying, surface, out, word, specs;
    std::optional<std::size_t> target_word_index, source_word_index;
    bool head_values = false;
};

int cmd_intervene(const Common& c, const IntervenePaths& p, report::RunManifest& m) {
    const auto dir = model_dir(c);
    const char u = parse_char(p.underlying, "--underlying"), s = parse_char(p.surface, "--surface");
    m.config = {{"model", dir},         {"source", p.source},         {"target", p.target},
                {"underlying", p.underlying}, {"surface", p.surface}, {"word", p.word},
                {"head_values", p.head_values}, {"jobs", c.jobs},      {"seed", c.seed},
                {"svg", c.svg},          {"specs", p.specs}};
    m.config["target_word_index"] = p.target_word_index ? ojson(*p.target_word_index) : ojson(nullptr);
    m.config["source_word_index"] = p.source_word_index ? ojson(*p.source_word_index) : ojson(nullptr);
    m.add_input(dir);
    m.add_input(p.source);
    m.add_input(p.target);
    const auto ck = w2v2::load_checkpoint(dir);
    const auto tgt_audio = load_audio_for(ck, p.target), src_audio = load_audio_for(ck, p.source);
    const fs::path out(p.out);
    const auto odir = output_dir(out);

    if (!p.specs.empty()) {
        // explicit interventions instead of the grid
        m.add_input(p.specs);
        const auto specs = intervention::load_specs(p.specs);
        const auto src = w2v2::forward(ck, src_audio, intervention::capture_for(specs));
        const auto base = w2v2::forward(ck, tgt_audio);
        const auto patched = intervention::run_with_interventions(ck, tgt_audio, src, specs);
        auto align = ctc::greedy_decode(base.logits, ck.vocab);
        const auto wi = find_word(align, p.word, p.target_word_index, "target");
        const auto ci = find_char(align.words[wi].word, p.word, u, s);
        const auto frame = ctc::locate_char_frame(align, wi, ci);
        ojson j;
        j["interventions"] = intervention::specs_to_json(specs);
        j["critical_frame"] = frame;
        j["baseline_transcript"] = align.transcript;
        j["patched_transcript"] = ctc::greedy_decode(patched.logits, ck.vocab).transcript;
        j["baseline_delta_p"] = intervention::delta_p(base, ck.vocab, frame, u, s);
        j["patched_delta_p"] = intervention::delta_p(patched, ck.vocab, frame, u, s);
        write_json(out, j);
        m.outputs.push_back(out.string());
        finish(m, odir);
        return 0;
    }

    // Locate the assimilated word in each run from a first decode.
    const auto tgt_align = ctc::greedy_decode(w2v2::forward(ck, tgt_audio).logits, ck.vocab);
    const auto src_align = ctc::greedy_decode(w2v2::forward(ck, src_audio).logits, ck.vocab);
    const auto tw = find_word(tgt_align, p.word, p.target_word_index, "target");
    const auto sw = find_word(src_align, p.word, p.source_word_index, "source");
    const auto tc = find_char(tgt_align.words[tw].word, p.word, u, s);
    const auto sc = find_char(src_align.words[sw].word, p.word, u, s);
    if (tw + 1 >= tgt_align.words.size() || sw + 1 >= src_align.words.size()) {
        throw DataError("no context word follows the assimilated word (target '" + tgt_align.transcript +
                        "', source '" + src_align.transcript + "')");
    }

    const auto setup = intervention::prepare_sweep(ck, tgt_audio, src_audio, u, s, tw, tc);
    const auto positions = intervention::canonical_positions(tw, tc, sw, sc, tw + 1, sw + 1);
    intervention::SweepOptions opt;
    opt.head_values = p.head_values;
    opt.jobs = c.jobs;
    const auto results = intervention::sweep_components(ck, setup, positions, opt);

    const std::string all = intervention::sweep_csv(results);
    csv::write_text(out, all);
    m.outputs.push_back(out.string());
    const auto table = csv::parse(all, out.string());
    const auto stem = out.stem().string();
    for (const auto& r : results) {
        csv::Table t{table.header, {}};
        for (const auto& row : table.rows) {
            if (row[table.column("position")] == r.position.name) t.rows.push_back(row);
        }
        const auto path = odir / (stem + "_" + r.position.name + ".csv");
        csv::write_text(path, csv::format(t));
        m.outputs.push_back(path.string());
        if (c.svg) {
            const auto svg = odir / (stem + "_" + r.position.name + ".svg");
            csv::write_text(svg, report::sweep_heatmap_svg(t, r.position.name));
            m.outputs.push_back(svg.string());
        }
    }
    ojson meta;
    meta["target_transcript"] = setup.target_align.transcript;
    meta["source_transcript"] = setup.source_align.transcript;
    meta["critical_frame"] = setup.critical_frame;
    meta["baseline_delta_p"] = results.empty() ? 0.0 : results.front().baseline_dp;
    auto& pos = meta["positions"] = ojson::array();
    for (const auto& r : results) {
        pos.push_back({{"name", r.position.name},
                       {"target_frames", {r.spans.target.first, r.spans.target.last}},
                       {"source_frames", {r.spans.source.first, r.spans.source.last}},
                       {"truncated", r.spans.truncated}});
    }
    const auto meta_path = odir / (stem + "_positions.json");
    write_json(meta_path, meta);
    m.outputs.push_back(meta_path.string());
    finish(m, odir);
    return 0;
}

struct BehavioralArgs {
    std::string manifest, out, transcripts, bigrams;
    std::size_t permutations = 10000;
};

int cmd_behavioral(const Common& c, const BehavioralArgs& a, report::RunManifest& m) {
    m.config = {{"manifest", a.manifest}, {"transcripts", a.transcripts}, {"bigrams", a.bigrams},
                {"permutations", a.permutations}, {"seed", c.seed}, {"jobs", c.jobs}, {"svg", c.svg}};
    m.add_input(a.manifest);
    const auto records = behavioral::load_manifest(a.manifest);

    behavioral::ExperimentOptions opt;
    opt.jobs = c.jobs;
    opt.seed = c.seed;
    opt.permutations = a.permutations;
    std::optional<behavioral::BigramCorpus> corpus;
    if (!a.bigrams.empty()) {
        m.add_input(a.bigrams);
        corpus = behavioral::BigramCorpus::from_file(a.bigrams);
        opt.bigrams = [&corpus](const behavioral::StimulusRecord& r) -> std::optional<behavioral::BigramCounts> {
            if (r.context_word.empty()) return std::nullopt;
            return behavioral::BigramCounts{corpus->count(r.target_word, r.context_word, behavioral::MatchMode::strict),
                                            corpus->count(r.target_word, r.context_word, behavioral::MatchMode::loose)};
        };
    }

    behavioral::CompensationReport rep;
    if (!a.transcripts.empty()) {
        m.add_input(a.transcripts);
        const auto t = csv::read(a.transcripts);
        std::map<std::string, std::string> by_id;
        for (std::size_t i = 0; i < t.rows.size(); ++i) by_id[t.at(i, "id")] = t.at(i, "transcript");
        rep = behavioral::evaluate_transcripts(records, by_id, opt);
    } else {
        const auto dir = model_dir(c);
        m.config["model"] = dir;
        m.add_input(dir);
        const auto ck = w2v2::load_checkpoint(dir);
        rep = behavioral::run_experiment(ck, records, opt);
    }

    const fs::path out(a.out);
    const auto odir = output_dir(out);
    const auto stem = out.stem().string();
    write_json(out, behavioral::report_to_json(rep));
    const auto items = odir / (stem + "_items.csv"), conds = odir / (stem + "_conditions.csv");
    csv::write_text(items, behavioral::items_csv(rep));
    const auto cond_text = behavioral::conditions_csv(rep);
    csv::write_text(conds, cond_text);
    m.outputs = {out.string(), items.string(), conds.string()};
    if (c.svg) {
        const auto svg = odir / (stem + "_conditions.svg");
        csv::write_text(svg, report::rates_svg(csv::parse(cond_text)));
        m.outputs.push_back(svg.string());
    }
    for (const auto& cs : rep.conditions) {
        std::cout << "exp" << cs.experiment << " " << behavioral::to_string(cs.condition) << " "
                  << behavioral::to_string(cs.context_type) << ": " << cs.k << "/" << cs.n << "\n";
    }
    finish(m, odir);
    return 0;
}

struct ProbeArgs {
    std::string timit, fold, out, layers = "0-12";
    std::vector<std::string> contrasts;
    std::size_t n_train = 1000, n_test = 200;
    std::optional<double> l2;
    double tol = 1e-6;
};

int cmd_probe(const Common& c, const ProbeArgs& a, report::RunManifest& m) {
    const auto dir = model_dir(c);
    const auto fold_path = a.fold.empty() ? fs::path(ASSIMLAB_DATA_DIR) / "timit_phone_fold.json" : fs::path(a.fold);
    m.config = {{"model", dir},       {"timit", a.timit},     {"fold", fold_path.string()}, {"layers", a.layers},
                {"contrasts", a.contrasts}, {"n_train", a.n_train}, {"n_test", a.n_test},     {"tol", a.tol},
                {"seed", c.seed},     {"jobs", c.jobs}};
    m.config["l2_strength"] = a.l2 ? ojson(*a.l2) : ojson("1/n_train");
    m.add_input(dir);
    m.add_input(fold_path);
    const auto ck = w2v2::load_checkpoint(dir);
    const auto fold = probing::PhoneFold::load(fold_path);
    const auto layers = parse_layers(a.layers, int(ck.config.num_layers));
    std::vector<probing::Contrast> contrasts;
    for (const auto& s : a.contrasts) contrasts.push_back(parse_contrast(s));
    if (contrasts.empty()) contrasts = fold.contrasts;

    const auto corpus = probing::ingest_timit(a.timit, a.n_train, a.n_test);
    for (const auto& w : corpus.train.warnings) std::cerr << "warning: " << w << "\n";
    for (const auto& w : corpus.test.warnings) std::cerr << "warning: " << w << "\n";

    const fs::path odir(a.out);
    csv::Table acc;
    acc.header = {"underlying", "surface", "layer", "train_per_class", "test_per_class", "train_accuracy",
                  "test_accuracy", "iterations", "converged"};
    probing::TrainOptions topt;
    topt.l2_strength = a.l2;
    topt.tol = a.tol;
    for (const auto& con : contrasts) {
        const auto train = probing::build_frame_datasets(ck, corpus.train.utterances, con, layers, fold, "train",
                                                         c.seed, c.jobs);
        const auto test = probing::build_frame_datasets(ck, corpus.test.utterances, con, layers, fold, "test",
                                                        c.seed, c.jobs);
        for (int layer : layers) {
            const auto& tr = train.at(layer);
            const auto& te = test.at(layer);
            const auto model = probing::train_probe(tr, topt);
            const auto path = odir / probe_file_name(con, layer);
            write_json(path, probing::probe_to_json(model));
            m.outputs.push_back(path.string());
            acc.rows.push_back({con.first, con.second, std::to_string(layer), std::to_string(tr.count(0)),
                                std::to_string(te.count(0)), csv::number(probing::accuracy(model, tr)),
                                csv::number(probing::accuracy(model, te)), std::to_string(model.training.iterations),
                                model.training.converged ? "true" : "false"});
        }
    }
    const auto acc_path = odir / "probe_accuracy.csv";
    csv::write_text(acc_path, csv::format(acc));
    m.outputs.push_back(acc_path.string());
    finish(m, odir);
    return 0;
}

int cmd_probe_apply(const Common& c, const std::string& probes_dir, const std::string& manifest,
                    const std::string& out, report::RunManifest& m) {
    const auto dir = model_dir(c);
    m.config = {{"model", dir}, {"probes", probes_dir}, {"manifest", manifest}, {"jobs", c.jobs}, {"svg", c.svg}};
    m.add_input(dir);
    m.add_input(probes_dir);
    m.add_input(manifest);
    const auto ck = w2v2::load_checkpoint(dir);
    probing::ProbeSet probes;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(probes_dir)) {
        const auto name = e.path().filename().string();
        if (e.is_regular_file() && name.rfind("probe_", 0) == 0 && e.path().extension() == ".json") {
            files.push_back(e.path());
        }
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        auto pm = probing::probe_from_json(nlohmann::json::parse(csv::read_text(f)));
        probes[pm.contrast][pm.layer] = std::move(pm);
    }
    if (probes.empty()) throw LoadError("no probe_*.json files in " + probes_dir);
    const auto records = behavioral::load_manifest(manifest);
    const auto rep = probing::layerwise_curves(ck, probes, records, c.jobs);

    const fs::path outp(out);
    const auto odir = output_dir(outp);
    const auto text = probing::curves_csv(rep.rows);
    csv::write_text(outp, text);
    m.outputs.push_back(outp.string());

    csv::Table detail;
    detail.header = {"id", "group", "layer", "prob_underlying"};
    for (const auto& s : rep.stimuli) {
        for (const auto& [layer, p] : s.prob_underlying) {
            detail.rows.push_back({s.id, probing::to_string(s.group), std::to_string(layer), csv::number(p)});
        }
    }
    const auto stem = outp.stem().string();
    const auto dpath = odir / (stem + "_stimuli.csv");
    csv::write_text(dpath, csv::format(detail));
    m.outputs.push_back(dpath.string());
    if (!rep.excluded.empty()) {
        csv::Table ex;
        ex.header = {"id", "reason"};
        for (const auto& [id, why] : rep.excluded) ex.rows.push_back({id, why});
        const auto epath = odir / (stem + "_excluded.csv");
        csv::write_text(epath, csv::format(ex));
        m.outputs.push_back(epath.string());
    }
    if (c.svg) {
        const auto svg = odir / (stem + ".svg");
        csv::write_text(svg, report::curves_svg(csv::parse(text)));
        m.outputs.push_back(svg.string());
    }
    finish(m, odir);
    return 0;
}

int cmd_assemble(const std::string& plan_path, const std::string& out, report::RunManifest& m) {
    m.config = {{"plan", plan_path}, {"out", out}};
    m.add_input(plan_path);
    const auto j = nlohmann::json::parse(csv::read_text(plan_path));
    m.config["plan_contents"] = j;
    const auto plan = audio::load_plan(j, fs::path(plan_path).parent_path());
    const auto a = audio::assemble_stimulus(plan);
    const fs::path outp(out);
    const auto odir = output_dir(outp);
    fs::create_directories(odir);
    audio::write_wav(outp, a.audio);
    ojson pl;
    pl["samples"] = a.audio.samples.size();
    pl["sample_rate"] = a.audio.sample_rate;
    pl["fill_samples"] = a.fill_samples;
    auto& arr = pl["placements"] = ojson::array();
    for (const auto& p : a.placements) arr.push_back({{"offset", p.offset}, {"length", p.length}});
    const auto ppath = odir / (outp.stem().string() + "_placements.json");
    write_json(ppath, pl);
    m.outputs = {outp.string(), ppath.string()};
    finish(m, odir);
    return 0;
}

int cmd_bigrams(const std::string& corpus_path, const std::vector<std::string>& pairs, const std::string& manifest,
                const std::string& out, report::RunManifest& m) {
    m.config = {{"corpus", corpus_path}, {"pairs", pairs}, {"manifest", manifest}, {"out", out}};
    m.add_input(corpus_path);
    const auto corpus = behavioral::BigramCorpus::from_file(corpus_path);
    std::vector<std::pair<std::string, std::string>> wanted;
    for (const auto& p : pairs) {
        const auto c = parse_contrast(p);
        wanted.emplace_back(behavioral::normalize_word(c.first), behavioral::normalize_word(c.second));
    }
    if (!manifest.empty()) {
        m.add_input(manifest);
        for (const auto& r : behavioral::load_manifest(manifest)) {
            if (!r.context_word.empty()) wanted.emplace_back(r.target_word, r.context_word);
        }
    }
    std::sort(wanted.begin(), wanted.end());
    wanted.erase(std::unique(wanted.begin(), wanted.end()), wanted.end());
    csv::Table t;
    t.header = {"w1", "w2", "strict", "loose", "strict_pattern", "loose_pattern"};
    for (const auto& [w1, w2] : wanted) {
        const auto pat = behavioral::bigram_patterns(w1, w2);
        t.rows.push_back({w1, w2, std::to_string(corpus.count(w1, w2, behavioral::MatchMode::strict)),
                          std::to_string(corpus.count(w1, w2, behavioral::MatchMode::loose)), pat.first, pat.second});
    }
    const auto text = csv::format(t);
    if (out.empty()) {
        std::cout << text;
        return 0;
    }
    csv::write_text(out, text);
    m.outputs.push_back(out);
    finish(m, output_dir(out));
    return 0;
}

void print_error(const std::string& kind, const std::string& message) {
    std::cerr << ojson{{"kind", kind}, {"error", message}}.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Place-assimilation analysis toolkit for CTC speech recognizers"};
    app.require_subcommand(1);
    app.set_version_flag("--version", report::kVersion);

    Common common;
    auto add_common = [&](CLI::App* sub, bool model, bool svg) {
        if (model) sub->add_option("--model", common.model, "Checkpoint directory (default: $ASSIMLAB_MODEL)");
        sub->add_option("--jobs", common.jobs, "Parallel workers")->check(CLI::PositiveNumber);
        sub->add_option("--seed", common.seed, "Seed for all randomness");
        if (svg) sub->add_flag("--svg", common.svg, "Also render SVG figures from the written CSVs");
    };

    auto* transcribe = app.add_subcommand("transcribe", "Greedy CTC transcription of one file");
    std::string t_audio, t_alignment;
    add_common(transcribe, true, false);
    transcribe->add_option("--audio", t_audio, "WAV or SPHERE file")->required()->check(CLI::ExistingFile);
    transcribe->add_option("--alignment", t_alignment, "Write the character alignment JSON here");

    auto* intervene = app.add_subcommand("intervene", "Component-wise interchange sweep");
    IntervenePaths ip;
    add_common(intervene, true, true);
    intervene->add_option("--source", ip.source, "Run supplying activations")->required()->check(CLI::ExistingFile);
    intervene->add_option("--target", ip.target, "Run receiving patches")->required()->check(CLI::ExistingFile);
    intervene->add_option("--underlying", ip.underlying, "Underlying character, e.g. N")->required();
    intervene->add_option("--surface", ip.surface, "Surface character, e.g. M")->required();
    intervene->add_option("--out", ip.out, "Sweep CSV; per-position CSVs are written beside it")->required();
    intervene->add_option("--word", ip.word, "Intended spelling of the assimilated word");
    intervene->add_option("--target-word-index", ip.target_word_index, "Assimilated word index in the target");
    intervene->add_option("--source-word-index", ip.source_word_index, "Assimilated word index in the source");
    intervene->add_flag("--head-values", ip.head_values, "Also sweep per-head value vectors");
    intervene->add_option("--specs", ip.specs, "Run the interventions in this JSON file instead of the grid")
        ->check(CLI::ExistingFile);

    auto* behavioral_cmd = app.add_subcommand("behavioral", "Compensation rates per condition");
    BehavioralArgs ba;
    add_common(behavioral_cmd, true, true);
    behavioral_cmd->add_option("--manifest", ba.manifest, "Stimulus manifest (CSV or JSON)")
        ->required()
        ->check(CLI::ExistingFile);
    behavioral_cmd->add_option("--out", ba.out, "Report JSON")->required();
    behavioral_cmd->add_option("--transcripts", ba.transcripts, "CSV id,transcript to judge instead of running the model")
        ->check(CLI::ExistingFile);
    behavioral_cmd->add_option("--bigrams", ba.bigrams, "Transcript corpus for the frequency analysis")
        ->check(CLI::ExistingPath);
    behavioral_cmd->add_option("--permutations", ba.permutations, "Permutations for the Spearman p-value");

    auto* probe = app.add_subcommand("probe", "Train per-layer phoneme probes on TIMIT");
    ProbeArgs pa;
    add_common(probe, true, false);
    probe->add_option("--timit", pa.timit, "Corpus directory with TRAIN and TEST")->required()->check(CLI::ExistingDirectory);
    probe->add_option("--fold", pa.fold, "Phone folding table (default: shipped table)")->check(CLI::ExistingFile);
    probe->add_option("--contrast", pa.contrasts, "underlying,surface phoneme pair (repeatable; default: all)");
    probe->add_option("--layers", pa.layers, "Layers, e.g. 0-12 or 1,6,12");
    probe->add_option("--n-train", pa.n_train, "Training utterances");
    probe->add_option("--n-test", pa.n_test, "Test utterances");
    probe->add_option("--l2", pa.l2, "L2 strength on z-scored features (default 1/N_train)");
    probe->add_option("--tol", pa.tol, "Gradient max-norm tolerance");
    probe->add_option("--out", pa.out, "Output directory")->required();

    auto* probe_apply = app.add_subcommand("probe-apply", "Layerwise probe curves over stimuli");
    std::string pa_probes, pa_manifest, pa_out;
    add_common(probe_apply, true, true);
    probe_apply->add_option("--probes", pa_probes, "Directory of probe JSON files")->required()->check(CLI::ExistingDirectory);
    probe_apply->add_option("--manifest", pa_manifest, "Stimulus manifest")->required()->check(CLI::ExistingFile);
    probe_apply->add_option("--out", pa_out, "Curve CSV")->required();

    auto* assemble = app.add_subcommand("assemble", "Build a fixed-length stimulus");
    std::string as_plan, as_out;
    assemble->add_option("--plan", as_plan, "Assembly plan JSON")->required()->check(CLI::ExistingFile);
    assemble->add_option("--out", as_out, "Output WAV")->required();

    auto* bigrams = app.add_subcommand("bigrams", "Word-pair counts in a transcript corpus");
    std::string bg_corpus, bg_manifest, bg_out;
    std::vector<std::string> bg_pairs;
    bigrams->add_option("--corpus", bg_corpus, "Transcript file or directory")->required()->check(CLI::ExistingPath);
    bigrams->add_option("--pair", bg_pairs, "w1,w2 (repeatable)");
    bigrams->add_option("--manifest", bg_manifest, "Count target/context pairs of a manifest")->check(CLI::ExistingFile);
    bigrams->add_option("--out", bg_out, "Output CSV (default: standard output)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        print_error("usage_error", e.what());
        return 2;
    }

    report::RunManifest manifest;
    manifest.argv.assign(argv, argv + argc);
    manifest.started_utc = report::utc_now();
    try {
        if (*transcribe) {
            manifest.command = "transcribe";
            return cmd_transcribe(common, t_audio, t_alignment, manifest);
        }
        if (*intervene) {
            manifest.command = "intervene";
            return cmd_intervene(common, ip, manifest);
        }
        if (*behavioral_cmd) {
            manifest.command = "behavioral";
            return cmd_behavioral(common, ba, manifest);
        }
        if (*probe) {
            manifest.command = "probe";
            return cmd_probe(common, pa, manifest);
        }
        if (*probe_apply) {
            manifest.command = "probe-apply";
            return cmd_probe_apply(common, pa_probes, pa_manifest, pa_out, manifest);
        }
        if (*assemble) {
            manifest.command = "assemble";
            return cmd_assemble(as_plan, as_out, manifest);
        }
        if (*bigrams) {
            manifest.command = "bigrams";
            return cmd_bigrams(bg_corpus, bg_pairs, bg_manifest, bg_out, manifest);
        }
    } catch (const Error& e) {
        print_error(e.kind(), e.what());
        return 1;
    } catch (const nlohmann::json::exception& e) {
        print_error("parse_error", e.what());
        return 1;
    } catch (const std::exception& e) {
        print_error("runtime_error", e.what());
        return 1;
    }
    return 2;
}
