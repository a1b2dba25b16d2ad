#include "assimlab/intervention.hpp"

#include "assimlab/error.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <mutex>
#include <thread>

namespace assimlab::intervention {

namespace {

FrameSpan span_from_json(const nlohmann::json& j, const char* key) {
    if (!j.contains(key)) throw ParseError(std::string("intervention spec lacks '") + key + "'");
    const auto& a = j.at(key);
    if (!a.is_array() || a.size() != 2) throw ParseError(std::string("'") + key + "' must be [first, last]");
    const auto first = a[0].get<long long>(), last = a[1].get<long long>();
    if (first < 0 || last < first) throw RangeError(std::string("'") + key + "' is not a valid frame span");
    return {std::size_t(first), std::size_t(last)};
}

const Tensor& source_tensor(const ActivationStore& source, const InterventionSpec& s) {
    const w2v2::HeadKey key{s.layer, s.head};
    const Tensor* t = nullptr;
    switch (s.component) {
        case Component::head_output:
            if (auto it = source.head_out.find(key); it != source.head_out.end()) t = &it->second;
            break;
        case Component::head_value:
            if (auto it = source.value.find(key); it != source.value.end()) t = &it->second;
            break;
        case Component::mlp_output:
            if (auto it = source.mlp_out.find(s.layer); it != source.mlp_out.end()) t = &it->second;
            break;
    }
    if (!t) {
        throw DataError(std::string("source run lacks a capture of ") + w2v2::to_string(s.component) + " at layer " +
                        std::to_string(s.layer) + (s.component == Component::mlp_output
                                                       ? std::string()
                                                       : ", head " + std::to_string(s.head)));
    }
    return *t;
}

}  // namespace

void validate(const InterventionSpec& s) {
    if (s.layer < 1) throw RangeError("intervention layer must be >= 1");
    const bool headed = s.component != Component::mlp_output;
    if (headed && s.head < 0) throw ConfigError(std::string(w2v2::to_string(s.component)) + " requires a head");
    if (!headed && s.head >= 0) throw ConfigError("mlp_output takes no head");
    if (s.frames.last < s.frames.first || s.source_frames.last < s.source_frames.first) {
        throw RangeError("intervention frame span is empty");
    }
    if (s.frames.length() != s.source_frames.length()) {
        throw DimensionError("target span of " + std::to_string(s.frames.length()) + " frames vs source span of " +
                             std::to_string(s.source_frames.length()));
    }
}

std::vector<InterventionSpec> specs_from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw ParseError("intervention spec file must hold a JSON list");
    std::vector<InterventionSpec> out;
    for (const auto& e : j) {
        InterventionSpec s;
        s.layer = e.at("layer").get<int>();
        s.component = w2v2::component_from_string(e.at("component").get<std::string>());
        if (e.contains("head") && !e.at("head").is_null()) s.head = e.at("head").get<int>();
        s.frames = span_from_json(e, "frames");
        s.source_frames = e.contains("source_frames") ? span_from_json(e, "source_frames") : s.frames;
        validate(s);
        out.push_back(s);
    }
    return out;
}

nlohmann::ordered_json specs_to_json(const std::vector<InterventionSpec>& specs) {
    auto out = nlohmann::ordered_json::array();
    for (const auto& s : specs) {
        nlohmann::ordered_json e;
        e["layer"] = s.layer;
        e["component"] = w2v2::to_string(s.component);
        e["head"] = s.component == Component::mlp_output ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(s.head);
        e["frames"] = {s.frames.first, s.frames.last};
        e["source_frames"] = {s.source_frames.first, s.source_frames.last};
        out.push_back(std::move(e));
    }
    return out;
}

std::vector<InterventionSpec> load_specs(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open intervention spec file " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return specs_from_json(j);
}

w2v2::CaptureSelector capture_for(const std::vector<InterventionSpec>& specs) {
    w2v2::CaptureSelector c;
    for (const auto& s : specs) {
        c.layers.insert(s.layer);
        if (s.component == Component::head_output) c.head_out = true;
        if (s.component == Component::head_value) c.value = true;
        if (s.component == Component::mlp_output) c.mlp_out = true;
    }
    return c;
}

std::vector<w2v2::Patch> build_patches(const ActivationStore& source, const std::vector<InterventionSpec>& specs,
                                       std::size_t target_frames) {
    std::vector<w2v2::Patch> patches;
    patches.reserve(specs.size());
    for (const auto& s : specs) {
        validate(s);
        const Tensor& src = source_tensor(source, s);
        if (s.source_frames.last >= src.rows()) {
            throw RangeError("source span ends at frame " + std::to_string(s.source_frames.last) +
                             " but the source run has " + std::to_string(src.rows()) + " frames");
        }
        if (s.frames.last >= target_frames) {
            throw RangeError("target span ends at frame " + std::to_string(s.frames.last) +
                             " but the target run has " + std::to_string(target_frames) + " frames");
        }
        w2v2::Patch p;
        p.component = s.component;
        p.layer = s.layer;
        p.head = s.head;
        const std::size_t n = s.frames.length(), width = src.cols();
        p.rows = Tensor::matrix(n, width);
        for (std::size_t i = 0; i < n; ++i) {
            p.frames.push_back(s.frames.first + i);
            auto row = src.row(s.source_frames.first + i);
            std::copy(row.begin(), row.end(), p.rows.data() + i * width);
        }
        patches.push_back(std::move(p));
    }
    return patches;
}

ActivationStore run_with_interventions(const w2v2::Checkpoint& ckpt, const audio::AudioBuffer& target_audio,
                                       const ActivationStore& source, const std::vector<InterventionSpec>& specs,
                                       const w2v2::CaptureSelector& capture) {
    Tensor input = w2v2::encode_features(ckpt, target_audio);
    auto patches = build_patches(source, specs, input.rows());
    return w2v2::run_layers(ckpt, std::move(input), 1, capture, patches);
}

ActivationStore run_with_interventions(const w2v2::Checkpoint& ckpt, const ActivationStore& target_baseline,
                                       const ActivationStore& source, const std::vector<InterventionSpec>& specs,
                                       const w2v2::CaptureSelector& capture) {
    int first = int(ckpt.config.num_layers) + 1;
    for (const auto& s : specs) first = std::min(first, s.layer);
    if (specs.empty()) first = 1;
    auto it = target_baseline.hidden.find(first - 1);
    if (it == target_baseline.hidden.end()) {
        throw DataError("target baseline lacks the hidden state entering layer " + std::to_string(first));
    }
    auto patches = build_patches(source, specs, it->second.rows());
    return w2v2::run_layers(ckpt, it->second, first, capture, patches);
}

double delta_p(const Tensor& logits, std::size_t frame, int underlying_id, int surface_id) {
    if (logits.rank() != 2 || frame >= logits.rows()) {
        throw RangeError("frame " + std::to_string(frame) + " outside logits " + logits.shape_string());
    }
    const auto row = logits.row(frame);
    const auto n = int(row.size());
    if (underlying_id < 0 || underlying_id >= n || surface_id < 0 || surface_id >= n) {
        throw RangeError("vocabulary id outside logits width");
    }
    const double m = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (float v : row) z += std::exp(double(v) - m);
    return (std::exp(double(row[std::size_t(underlying_id)]) - m) - std::exp(double(row[std::size_t(surface_id)]) - m)) /
           z;
}

double delta_p(const ActivationStore& store, const w2v2::Vocab& vocab, std::size_t frame, char underlying,
               char surface) {
    return delta_p(store.logits, frame, vocab.id_of(underlying), vocab.id_of(surface));
}

AlignedSpans center_align(FrameSpan target, FrameSpan source) {
    AlignedSpans out{target, source, false};
    const std::size_t lt = target.length(), ls = source.length();
    if (lt == ls) return out;
    out.truncated = true;
    auto trim = [](FrameSpan s, std::size_t len) {
        const std::size_t drop = s.length() - len;
        const std::size_t first = s.first + drop / 2;
        return FrameSpan{first, first + len - 1};
    };
    if (lt > ls) out.target = trim(target, ls);
    else out.source = trim(source, lt);
    return out;
}

std::vector<SweepPosition> canonical_positions(std::size_t target_assim_word, std::size_t target_assim_char,
                                               std::size_t source_assim_word, std::size_t source_assim_char,
                                               std::size_t target_context_word, std::size_t source_context_word,
                                               std::size_t context_char) {
    std::vector<SweepPosition> out;
    for (auto g : {ctc::Granularity::frame, ctc::Granularity::phone, ctc::Granularity::word}) {
        out.push_back({std::string("assimilated_") + ctc::to_string(g), target_assim_word, target_assim_char,
                       source_assim_word, source_assim_char, g});
    }
    for (auto g : {ctc::Granularity::frame, ctc::Granularity::phone, ctc::Granularity::word}) {
        out.push_back({std::string("context_") + ctc::to_string(g), target_context_word, context_char,
                       source_context_word, context_char, g});
    }
    return out;
}

SweepSetup prepare_sweep(const w2v2::Checkpoint& ckpt, const audio::AudioBuffer& target_audio,
                         const audio::AudioBuffer& source_audio, char underlying, char surface,
                         std::size_t target_word, std::size_t target_char) {
    SweepSetup s;
    s.underlying_id = ckpt.vocab.id_of(underlying);
    s.surface_id = ckpt.vocab.id_of(surface);
    s.target = w2v2::forward(ckpt, target_audio, w2v2::CaptureSelector::hidden_only());
    w2v2::CaptureSelector src;
    src.head_out = src.value = src.mlp_out = true;
    s.source = w2v2::forward(ckpt, source_audio, src);
    s.target_align = ctc::greedy_decode(s.target.logits, ckpt.vocab);
    s.source_align = ctc::greedy_decode(s.source.logits, ckpt.vocab);
    s.target_align.hop = s.source_align.hop = ckpt.config.hop();
    s.target_align.receptive_field = s.source_align.receptive_field = ckpt.config.receptive_field();
    s.critical_frame = ctc::locate_char_frame(s.target_align, target_word, target_char);
    return s;
}

std::vector<SweepResult> sweep_components(const w2v2::Checkpoint& ckpt, const SweepSetup& setup,
                                          const std::vector<SweepPosition>& positions, const SweepOptions& options) {
    const int layers = int(ckpt.config.num_layers), heads = int(ckpt.config.num_heads);
    const double baseline = delta_p(setup.target.logits, setup.critical_frame, setup.underlying_id, setup.surface_id);

    std::vector<SweepResult> results;
    struct Job {
        std::size_t result;
        std::size_t cell;
        InterventionSpec spec;
    };
    std::vector<Job> jobs;
    for (const auto& pos : positions) {
        SweepResult r;
        r.position = pos;
        r.baseline_dp = baseline;
        const FrameSpan tgt = ctc::span_from_granularity(setup.target_align, pos.target_word, pos.target_char,
                                                         pos.granularity);
        const FrameSpan src = ctc::span_from_granularity(setup.source_align, pos.source_word, pos.source_char,
                                                         pos.granularity);
        r.spans = center_align(tgt, src);
        auto add = [&](int layer, Component c, int head) {
            r.cells.push_back({layer, c, head, 0.0, false});
            jobs.push_back({results.size(), r.cells.size() - 1, {layer, c, head, r.spans.target, r.spans.source}});
        };
        for (int l = 1; l <= layers; ++l) {
            if (options.head_outputs)
                for (int h = 0; h < heads; ++h) add(l, Component::head_output, h);
            if (options.mlp_outputs) add(l, Component::mlp_output, -1);
        }
        if (options.head_values) {
            for (int l = 1; l <= layers; ++l)
                for (int h = 0; h < heads; ++h) add(l, Component::head_value, h);
        }
        results.push_back(std::move(r));
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
            try {
                const auto& job = jobs[i];
                auto store = run_with_interventions(ckpt, setup.target, setup.source, {job.spec});
                auto& cell = results[job.result].cells[job.cell];
                cell.delta_p = delta_p(store.logits, setup.critical_frame, setup.underlying_id, setup.surface_id);
                cell.flipped = cell.delta_p > 0.0;
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = jobs.size();
            }
        }
    };
    const std::size_t n_threads = std::max<std::size_t>(1, std::min(options.jobs, jobs.size()));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);
    return results;
}

std::string sweep_csv(const std::vector<SweepResult>& results) {
    std::ostringstream out;
    out << "position,layer,component,head,delta_p,flipped\n";
    out << std::setprecision(9);
    for (const auto& r : results) {
        for (const auto& c : r.cells) {
            out << r.position.name << ',' << c.layer << ',' << w2v2::to_string(c.component) << ',';
            if (c.component != Component::mlp_output) out << c.head;
            out << ',' << c.delta_p << ',' << (c.flipped ? "true" : "false") << '\n';
        }
    }
    return out.str();
}

}  // namespace assimlab::intervention
