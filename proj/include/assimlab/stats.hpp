#pragma once

#include <cstdint>
#include <vector>

namespace assimlab::stats {

struct Interval {
    double low = 0.0;
    double high = 0.0;
};

// Wilson score interval for k successes out of n.
Interval wilson_interval(long k, long n, double z = 1.96);

// Ranks starting at 1; tied values share the mean of their positions.
std::vector<double> average_ranks(const std::vector<double>& x);

double pearson(const std::vector<double>& x, const std::vector<double>& y);

struct Spearman {
    double rho = 0.0;
    long df = 0;
};

// Pearson correlation of average ranks; df = n - 2.
Spearman spearman_rho(const std::vector<double>& x, const std::vector<double>& y);

// Two-sided permutation p-value for rho: the share of permutations of y
// (plus the observed one) whose |rho| reaches the observed |rho|.
double spearman_permutation_p(const std::vector<double>& x, const std::vector<double>& y, std::size_t permutations,
                              std::uint64_t seed);

struct Summary {
    double mean = 0.0;
    double sd = 0.0;   // sample standard deviation
    double sem = 0.0;  // sd / sqrt(n)
    std::size_t n = 0;
};
Summary summarize(const std::vector<double>& v);

}  // namespace assimlab::stats
