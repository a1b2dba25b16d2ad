#pragma once

#include "assimlab/audio.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <vector>

namespace assimlab::audio {

enum class Layout {
    single,  // [fill][sentence][edge]
    pair,    // [fill][edge][context][gap][target][edge]
};

struct AssemblyPlan {
    Layout layout = Layout::single;
    std::vector<AudioBuffer> segments;  // one for single, context then target for pair
    double gap_ms = 250.0;
    double edge_ms = 150.0;
    double total_ms = 8000.0;
    std::size_t sample_rate = 16000;
    std::optional<AudioBuffer> silence;  // looped to fill silent regions; digital zero when absent
};

struct Placement {
    std::size_t offset = 0;  // first sample of the segment in the assembly
    std::size_t length = 0;
};

struct Assembly {
    AudioBuffer audio;
    std::vector<Placement> placements;  // one per segment, in plan order
    std::size_t fill_samples = 0;
};

std::size_t ms_to_samples(double ms, std::size_t rate);

// Segments at another rate are resampled first. Throws RangeError stating
// the overflow when the content does not fit in total_ms.
Assembly assemble_stimulus(const AssemblyPlan& plan);

// {"layout": "single"|"pair", "segments": [paths], "gap_ms", "edge_ms",
//  "total_ms", "silence": "digital_zero" | path}; relative paths resolve
// against base_dir.
AssemblyPlan load_plan(const nlohmann::json& j, const std::filesystem::path& base_dir);

}  // namespace assimlab::audio
