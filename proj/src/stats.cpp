#include "assimlab/stats.hpp"

#include "assimlab/error.hpp"
#include "assimlab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace assimlab::stats {

Interval wilson_interval(long k, long n, double z) {
    if (n <= 0) throw RangeError("Wilson interval needs n > 0");
    if (k < 0 || k > n) throw RangeError("Wilson interval needs 0 <= k <= n");
    const double nn = double(n), p = double(k) / nn, z2 = z * z;
    const double denom = 1.0 + z2 / nn;
    const double center = (p + z2 / (2.0 * nn)) / denom;
    const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
    Interval out{std::max(0.0, center - half), std::min(1.0, center + half)};
    if (k == 0) out.low = 0.0;
    if (k == n) out.high = 1.0;
    return out;
}

std::vector<double> average_ranks(const std::vector<double>& x) {
    std::vector<std::size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(x.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
        const double r = (double(i) + double(j)) / 2.0 + 1.0;
        for (std::size_t m = i; m <= j; ++m) ranks[idx[m]] = r;
        i = j + 1;
    }
    return ranks;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = double(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) throw DataError("correlation undefined: zero variance");
    return sxy / std::sqrt(sxx * syy);
}

Spearman spearman_rho(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw DimensionError("Spearman inputs differ in length");
    if (x.size() < 3) throw RangeError("Spearman needs at least 3 pairs");
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw DataError("Spearman input is not finite");
    }
    return {pearson(average_ranks(x), average_ranks(y)), long(x.size()) - 2};
}

double spearman_permutation_p(const std::vector<double>& x, const std::vector<double>& y, std::size_t permutations,
                              std::uint64_t seed) {
    const auto rx = average_ranks(x);
    auto ry = average_ranks(y);
    const double observed = std::abs(pearson(rx, ry));
    Rng rng(seed);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < permutations; ++i) {
        rng.shuffle(ry);
        if (std::abs(pearson(rx, ry)) >= observed - 1e-12) ++hits;
    }
    return double(hits + 1) / double(permutations + 1);
}

Summary summarize(const std::vector<double>& v) {
    Summary s;
    s.n = v.size();
    if (v.empty()) return s;
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - s.mean) * (x - s.mean);
        s.sd = std::sqrt(ss / double(v.size() - 1));
        s.sem = s.sd / std::sqrt(double(v.size()));
    }
    return s;
}

}  // namespace assimlab::stats
