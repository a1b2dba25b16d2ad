#pragma once

#include "assimlab/ctc.hpp"
#include "assimlab/engine.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace assimlab::intervention {

using ctc::FrameSpan;
using w2v2::ActivationStore;
using w2v2::Component;

// One replacement: rows `source_frames` of the source run's component are
// written over rows `frames` of the target run. Spans have equal length.
struct InterventionSpec {
    int layer = 1;
    Component component = Component::mlp_output;
    int head = -1;  // required unless component == mlp_output
    FrameSpan frames;
    FrameSpan source_frames;
};

void validate(const InterventionSpec& spec);
std::vector<InterventionSpec> specs_from_json(const nlohmann::json& j);
nlohmann::ordered_json specs_to_json(const std::vector<InterventionSpec>& specs);
std::vector<InterventionSpec> load_specs(const std::filesystem::path& path);

// Source-store captures required to serve the given specs.
w2v2::CaptureSelector capture_for(const std::vector<InterventionSpec>& specs);

std::vector<w2v2::Patch> build_patches(const ActivationStore& source, const std::vector<InterventionSpec>& specs,
                                       std::size_t target_frames);

ActivationStore run_with_interventions(const w2v2::Checkpoint& ckpt, const audio::AudioBuffer& target_audio,
                                       const ActivationStore& source, const std::vector<InterventionSpec>& specs,
                                       const w2v2::CaptureSelector& capture = w2v2::CaptureSelector::none());

// Same result, resuming from the target baseline's captured residual stream
// just before the earliest patched layer instead of recomputing from audio.
ActivationStore run_with_interventions(const w2v2::Checkpoint& ckpt, const ActivationStore& target_baseline,
                                       const ActivationStore& source, const std::vector<InterventionSpec>& specs,
                                       const w2v2::CaptureSelector& capture = w2v2::CaptureSelector::none());

// softmax(logits[frame])[underlying] − softmax(logits[frame])[surface]
double delta_p(const Tensor& logits, std::size_t frame, int underlying_id, int surface_id);
double delta_p(const ActivationStore& store, const w2v2::Vocab& vocab, std::size_t frame, char underlying,
               char surface);

// Equal-length spans: the longer span is trimmed symmetrically around its
// centre to the shorter one's length.
struct AlignedSpans {
    FrameSpan target;
    FrameSpan source;
    bool truncated = false;
};
AlignedSpans center_align(FrameSpan target, FrameSpan source);

// Where to patch: a character of a word, located independently in each run.
struct SweepPosition {
    std::string name;
    std::size_t target_word = 0, target_char = 0;
    std::size_t source_word = 0, source_char = 0;
    ctc::Granularity granularity = ctc::Granularity::frame;
};

// The six canonical positions: {assimilated word, context word} ×
// {frame, phone, word}.
std::vector<SweepPosition> canonical_positions(std::size_t target_assim_word, std::size_t target_assim_char,
                                               std::size_t source_assim_word, std::size_t source_assim_char,
                                               std::size_t target_context_word, std::size_t source_context_word,
                                               std::size_t context_char = 0);

struct SweepCell {
    int layer = 1;
    Component component = Component::mlp_output;
    int head = -1;
    double delta_p = 0.0;
    bool flipped = false;  // delta_p > 0
};

struct SweepResult {
    SweepPosition position;
    AlignedSpans spans;
    double baseline_dp = 0.0;
    std::vector<SweepCell> cells;
};

// Baseline runs of both stimuli plus the measurement anchor.
struct SweepSetup {
    ActivationStore target;  // hidden states captured for resuming
    ActivationStore source;  // head_out, value and mlp_out captured
    ctc::CharAlignment target_align;
    ctc::CharAlignment source_align;
    std::size_t critical_frame = 0;  // fixed from the unpatched target run
    int underlying_id = -1;
    int surface_id = -1;
};

SweepSetup prepare_sweep(const w2v2::Checkpoint& ckpt, const audio::AudioBuffer& target_audio,
                         const audio::AudioBuffer& source_audio, char underlying, char surface,
                         std::size_t target_word, std::size_t target_char);

struct SweepOptions {
    bool head_outputs = true;
    bool mlp_outputs = true;
    bool head_values = false;
    std::size_t jobs = 1;
};

// One single-component intervention per grid cell, in canonical order:
// layer-major, then heads ascending, then the MLP.
std::vector<SweepResult> sweep_components(const w2v2::Checkpoint& ckpt, const SweepSetup& setup,
                                          const std::vector<SweepPosition>& positions,
                                          const SweepOptions& options = {});

// CSV with columns position,layer,component,head,delta_p,flipped.
std::string sweep_csv(const std::vector<SweepResult>& results);

}  // namespace assimlab::intervention
