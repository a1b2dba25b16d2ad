#include "assimlab/assemble.hpp"

#include "assimlab/error.hpp"
#include "assimlab/resample.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace assimlab::audio {

std::size_t ms_to_samples(double ms, std::size_t rate) {
    if (ms < 0.0) throw RangeError("negative duration");
    return std::size_t(std::llround(ms * double(rate) / 1000.0));
}

namespace {

void fill_silence(std::vector<float>& out, std::size_t from, std::size_t count, const std::optional<AudioBuffer>& silence,
                  std::size_t& cursor) {
    if (!silence || silence->samples.empty()) return;  // already zero
    const auto& s = silence->samples;
    for (std::size_t i = 0; i < count; ++i) {
        out[from + i] = s[cursor];
        cursor = (cursor + 1) % s.size();
    }
}

}  // namespace

Assembly assemble_stimulus(const AssemblyPlan& plan) {
    const std::size_t rate = plan.sample_rate;
    const std::size_t need_segments = plan.layout == Layout::single ? 1 : 2;
    if (plan.segments.size() != need_segments) {
        throw ConfigError(std::string(plan.layout == Layout::single ? "single" : "pair") + " layout requires " +
                          std::to_string(need_segments) + " segment(s), got " + std::to_string(plan.segments.size()));
    }
    std::vector<AudioBuffer> segs;
    for (const auto& s : plan.segments) {
        if (s.samples.empty()) throw ConfigError("assembly segment is empty");
        segs.push_back(s.sample_rate == rate ? s : resample(s, rate));
    }
    std::optional<AudioBuffer> silence;
    if (plan.silence) silence = plan.silence->sample_rate == rate ? *plan.silence : resample(*plan.silence, rate);

    const std::size_t total = ms_to_samples(plan.total_ms, rate);
    const std::size_t edge = ms_to_samples(plan.edge_ms, rate);
    const std::size_t gap = ms_to_samples(plan.gap_ms, rate);

    // Sequence of (silence length, segment index or none) blocks after the fill.
    std::vector<std::pair<std::size_t, int>> blocks;
    if (plan.layout == Layout::single) {
        blocks = {{0, 0}, {edge, -1}};
    } else {
        blocks = {{edge, -1}, {0, 0}, {gap, -1}, {0, 1}, {edge, -1}};
    }
    std::size_t used = 0;
    for (auto [len, seg] : blocks) used += seg < 0 ? len : segs[std::size_t(seg)].size();
    if (used > total) {
        std::ostringstream msg;
        msg << "segments and silences need " << used << " samples but the stimulus holds " << total << " (overflow "
            << (used - total) << " samples, " << double(used - total) * 1000.0 / double(rate) << " ms)";
        throw RangeError(msg.str());
    }

    Assembly out;
    out.audio.sample_rate = rate;
    out.audio.samples.assign(total, 0.0f);
    out.fill_samples = total - used;
    std::size_t cursor = 0, loop = 0;
    fill_silence(out.audio.samples, 0, out.fill_samples, silence, loop);
    cursor = out.fill_samples;
    out.placements.resize(segs.size());
    for (auto [len, seg] : blocks) {
        if (seg < 0) {
            fill_silence(out.audio.samples, cursor, len, silence, loop);
            cursor += len;
        } else {
            const auto& s = segs[std::size_t(seg)];
            std::copy(s.samples.begin(), s.samples.end(), out.audio.samples.begin() + std::ptrdiff_t(cursor));
            out.placements[std::size_t(seg)] = {cursor, s.size()};
            cursor += s.size();
        }
    }
    return out;
}

AssemblyPlan load_plan(const nlohmann::json& j, const std::filesystem::path& base_dir) {
    AssemblyPlan plan;
    const std::string layout = j.value("layout", "single");
    if (layout == "single") plan.layout = Layout::single;
    else if (layout == "pair") plan.layout = Layout::pair;
    else throw ConfigError("unknown assembly layout '" + layout + "'");
    auto resolve = [&](const std::string& p) {
        std::filesystem::path path(p);
        return path.is_absolute() ? path : base_dir / path;
    };
    for (const auto& s : j.at("segments")) plan.segments.push_back(read_audio(resolve(s.get<std::string>())));
    plan.gap_ms = j.value("gap_ms", plan.gap_ms);
    plan.edge_ms = j.value("edge_ms", plan.edge_ms);
    plan.total_ms = j.value("total_ms", plan.total_ms);
    const std::string silence = j.value("silence", "digital_zero");
    if (silence != "digital_zero") plan.silence = read_audio(resolve(silence));
    return plan;
}

}  // namespace assimlab::audio
