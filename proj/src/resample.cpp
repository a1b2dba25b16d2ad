#include "assimlab/resample.hpp"

#include "assimlab/error.hpp"

#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>

namespace assimlab::audio {

namespace {

double bessel_i0(double x) {
    double sum = 1.0, term = 1.0;
    const double q = x * x / 4.0;
    for (int k = 1; k < 200; ++k) {
        term *= q / (double(k) * double(k));
        sum += term;
        if (term < sum * 1e-17) break;
    }
    return sum;
}

}  // namespace

AudioBuffer resample(const AudioBuffer& in, std::size_t target_rate, const ResampleOptions& opt) {
    if (in.sample_rate == 0 || target_rate == 0) throw ConfigError("sample rates must be positive");
    if (in.sample_rate == target_rate) return in;

    const std::size_t g = std::gcd(in.sample_rate, target_rate);
    const std::size_t up = target_rate / g, down = in.sample_rate / g;

    // Prototype filter at the upsampled rate, tabulated at integer offsets
    // m in [-half_len, half_len].
    const double fc = 0.5 * opt.rolloff / double(std::max(up, down));
    const auto half_len = std::size_t(std::ceil(double(opt.zero_crossings) / (2.0 * fc)));
    std::vector<double> proto(2 * half_len + 1);
    const double i0_beta = bessel_i0(opt.kaiser_beta);
    for (std::size_t j = 0; j < proto.size(); ++j) {
        const double m = double(j) - double(half_len);
        const double x = 2.0 * fc * m;
        const double sinc = m == 0.0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
        const double r = m / double(half_len);
        const double w = bessel_i0(opt.kaiser_beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0_beta;
        proto[j] = sinc * w;
    }

    const std::size_t n_in = in.samples.size();
    const auto n_out = std::size_t(std::llround(double(n_in) * double(target_rate) / double(in.sample_rate)));
    AudioBuffer out;
    out.sample_rate = target_rate;
    out.samples.resize(n_out);

    // Output n sits at n*down = i0*up + p on the upsampled grid; input i
    // contributes through prototype offset m = p - (i - i0)*up. Each phase's
    // taps are normalized to unit DC gain.
    using i64 = std::int64_t;
    const auto h = i64(half_len), u = i64(up);
    std::vector<std::vector<double>> taps(up);
    std::vector<i64> first(up);
    for (std::size_t p = 0; p < up; ++p) {
        const auto ip = i64(p);
        const i64 lo = -((h - ip) / u), hi = (h + ip) / u;
        first[p] = lo;
        double sum = 0.0;
        for (i64 d = lo; d <= hi; ++d) {
            const i64 m = ip - d * u;
            const double v = (m < -h || m > h) ? 0.0 : proto[std::size_t(m + h)];
            taps[p].push_back(v);
            sum += v;
        }
        for (double& v : taps[p]) v /= sum;
    }

    for (std::size_t n = 0; n < n_out; ++n) {
        const std::size_t pos = n * down;
        const auto i0 = i64(pos / up);
        const std::size_t p = pos % up;
        const auto& t = taps[p];
        double acc = 0.0;
        for (std::size_t k = 0; k < t.size(); ++k) {
            const i64 i = i0 + first[p] + i64(k);
            if (i >= 0 && i < i64(n_in)) acc += t[k] * double(in.samples[std::size_t(i)]);
        }
        out.samples[n] = float(acc);
    }
    return out;
}

}  // namespace assimlab::audio
