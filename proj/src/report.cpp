#include "assimlab/report.hpp"

#include "assimlab/error.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

namespace assimlab::report {

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
        throw Error("hash", "SHA-256 computation failed");
    }
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 15]);
    }
    return out;
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(csv::read_text(path)); }

std::string utc_now() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void RunManifest::add_input(const std::filesystem::path& path) {
    if (std::filesystem::is_regular_file(path)) {
        inputs.emplace_back(path.string(), sha256_file(path));
    } else if (std::filesystem::is_directory(path)) {
        std::vector<std::filesystem::path> files;
        for (const auto& e : std::filesystem::recursive_directory_iterator(path))
            if (e.is_regular_file()) files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) inputs.emplace_back(f.string(), sha256_file(f));
    }
}

nlohmann::ordered_json RunManifest::to_json() const {
    nlohmann::ordered_json j;
    j["command"] = command;
    j["argv"] = argv;
    j["config"] = config;
    auto& in = j["inputs"] = nlohmann::ordered_json::array();
    for (const auto& [p, h] : inputs) in.push_back({{"path", p}, {"sha256", h}});
    j["outputs"] = outputs;
    j["versions"] = {{"assimlab", kVersion}};
    j["started_utc"] = started_utc;
    j["finished_utc"] = finished_utc;
    return j;
}

void RunManifest::write(const std::filesystem::path& dir) const {
    csv::write_text(dir / "run_manifest.json", to_json().dump(2) + "\n");
}

namespace {

std::string color_diverging(double v, double max_abs) {
    const double t = max_abs > 0 ? std::clamp(v / max_abs, -1.0, 1.0) : 0.0;
    int r, g, b;
    if (t >= 0) {
        r = 255;
        g = int(std::lround(255 * (1 - t)));
        b = int(std::lround(255 * (1 - t)));
    } else {
        r = int(std::lround(255 * (1 + t)));
        g = int(std::lround(255 * (1 + t)));
        b = 255;
    }
    char buf[16];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
    return buf;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

}  // namespace

std::string sweep_heatmap_svg(const csv::Table& sweep, const std::string& position) {
    // rows: layers, columns: heads then MLP
    std::map<std::pair<int, int>, double> cells;
    int max_layer = 0, max_head = -1;
    double max_abs = 0.0;
    for (std::size_t i = 0; i < sweep.rows.size(); ++i) {
        if (sweep.at(i, "position") != position) continue;
        const auto comp = sweep.at(i, "component");
        if (comp == "head_value") continue;
        const int layer = std::stoi(sweep.at(i, "layer"));
        const int col = comp == "mlp_output" ? -1 : std::stoi(sweep.at(i, "head"));
        const double v = std::stod(sweep.at(i, "delta_p"));
        cells[{layer, col}] = v;
        max_layer = std::max(max_layer, layer);
        max_head = std::max(max_head, col);
        max_abs = std::max(max_abs, std::abs(v));
    }
    const int cols = max_head + 2, cell = 28, left = 60, top = 40;
    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << left + cols * cell + 20 << "\" height=\""
      << top + max_layer * cell + 40 << "\" font-family=\"sans-serif\" font-size=\"10\">\n";
    s << "<text x=\"" << left << "\" y=\"20\" font-size=\"13\">" << position << " (delta p, max |v| = " << fmt(max_abs)
      << ")</text>\n";
    for (const auto& [key, v] : cells) {
        const int row = key.first - 1, col = key.second < 0 ? cols - 1 : key.second;
        s << "<rect x=\"" << left + col * cell << "\" y=\"" << top + row * cell << "\" width=\"" << cell
          << "\" height=\"" << cell << "\" fill=\"" << color_diverging(v, max_abs) << "\" stroke=\"#999\"><title>"
          << fmt(v) << "</title></rect>\n";
    }
    for (int l = 1; l <= max_layer; ++l) {
        s << "<text x=\"" << left - 6 << "\" y=\"" << top + (l - 1) * cell + cell / 2 + 4
          << "\" text-anchor=\"end\">L" << l << "</text>\n";
    }
    for (int c = 0; c < cols; ++c) {
        s << "<text x=\"" << left + c * cell + cell / 2 << "\" y=\"" << top + max_layer * cell + 14
          << "\" text-anchor=\"middle\">" << (c == cols - 1 ? std::string("MLP") : std::to_string(c)) << "</text>\n";
    }
    s << "</svg>\n";
    return s.str();
}

std::string curves_svg(const csv::Table& curves) {
    std::map<std::string, std::vector<std::tuple<int, double, double>>> series;
    int max_layer = 0;
    for (std::size_t i = 0; i < curves.rows.size(); ++i) {
        const int l = std::stoi(curves.at(i, "layer"));
        series[curves.at(i, "group")].emplace_back(l, std::stod(curves.at(i, "mean_prob_underlying")),
                                                   std::stod(curves.at(i, "sem")));
        max_layer = std::max(max_layer, l);
    }
    const int w = 480, h = 300, left = 50, top = 20, pw = w - left - 120, ph = h - top - 40;
    auto x = [&](int l) { return left + (max_layer ? double(l) / max_layer : 0.0) * pw; };
    auto y = [&](double p) { return top + (1.0 - p) * ph; };
    const std::map<std::string, std::string> colors{
        {"compensation", "#1f77b4"}, {"no_compensation", "#ff7f0e"}, {"control", "#2ca02c"}};
    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\" font-family=\"sans-serif\" font-size=\"10\">\n";
    s << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"#333\"/>\n";
    for (double p : {0.0, 0.5, 1.0}) {
        s << "<text x=\"" << left - 4 << "\" y=\"" << y(p) + 3 << "\" text-anchor=\"end\">" << fmt(p) << "</text>\n";
    }
    for (int l = 0; l <= max_layer; ++l) {
        s << "<text x=\"" << x(l) << "\" y=\"" << top + ph + 14 << "\" text-anchor=\"middle\">" << l << "</text>\n";
    }
    int legend = 0;
    for (const auto& [group, pts] : series) {
        const auto it = colors.find(group);
        const std::string c = it == colors.end() ? "#555" : it->second;
        s << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"2\" points=\"";
        for (const auto& [l, m, e] : pts) s << fmt(x(l)) << "," << fmt(y(m)) << " ";
        s << "\"/>\n";
        for (const auto& [l, m, e] : pts) {
            s << "<line x1=\"" << fmt(x(l)) << "\" x2=\"" << fmt(x(l)) << "\" y1=\"" << fmt(y(m - e)) << "\" y2=\""
              << fmt(y(m + e)) << "\" stroke=\"" << c << "\"/>\n";
        }
        s << "<text x=\"" << left + pw + 10 << "\" y=\"" << top + 12 + 14 * legend++ << "\" fill=\"" << c << "\">"
          << group << "</text>\n";
    }
    s << "</svg>\n";
    return s.str();
}

std::string rates_svg(const csv::Table& conditions) {
    const int bar = 40, gap = 20, left = 50, top = 20, ph = 200;
    const std::size_t n = conditions.rows.size();
    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << left + int(n) * (bar + gap) + 20 << "\" height=\""
      << top + ph + 60 << "\" font-family=\"sans-serif\" font-size=\"10\">\n";
    for (std::size_t i = 0; i < n; ++i) {
        const double rate = std::stod(conditions.at(i, "rate"));
        const double lo = std::stod(conditions.at(i, "wilson_low")), hi = std::stod(conditions.at(i, "wilson_high"));
        const int x0 = left + int(i) * (bar + gap);
        s << "<rect x=\"" << x0 << "\" y=\"" << fmt(top + (1 - rate) * ph) << "\" width=\"" << bar << "\" height=\""
          << fmt(rate * ph) << "\" fill=\"#4c72b0\"/>\n";
        s << "<line x1=\"" << x0 + bar / 2 << "\" x2=\"" << x0 + bar / 2 << "\" y1=\"" << fmt(top + (1 - hi) * ph)
          << "\" y2=\"" << fmt(top + (1 - lo) * ph) << "\" stroke=\"#000\"/>\n";
        s << "<text x=\"" << x0 + bar / 2 << "\" y=\"" << top + ph + 14 << "\" text-anchor=\"middle\">"
          << conditions.at(i, "condition") << "</text>\n";
        s << "<text x=\"" << x0 + bar / 2 << "\" y=\"" << top + ph + 26 << "\" text-anchor=\"middle\">"
          << conditions.at(i, "context_type") << "</text>\n";
    }
    s << "<line x1=\"" << left << "\" x2=\"" << left << "\" y1=\"" << top << "\" y2=\"" << top + ph
      << "\" stroke=\"#333\"/>\n</svg>\n";
    return s.str();
}

}  // namespace assimlab::report
