#pragma once

#include "assimlab/checkpoint.hpp"
#include "assimlab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>

namespace assimlab::testing {

inline std::filesystem::path fixtures_dir() { return ASSIMLAB_FIXTURES; }
inline std::filesystem::path golden_dir() { return fixtures_dir() / "golden"; }
inline std::filesystem::path model_dir() { return fixtures_dir() / "tiny_w2v2"; }
inline std::filesystem::path data_dir() { return ASSIMLAB_DATA_DIR; }

inline const w2v2::Checkpoint& tiny_model() {
    static const w2v2::Checkpoint ck = w2v2::load_checkpoint(model_dir());
    return ck;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return INFINITY;
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
    return m;
}

}  // namespace assimlab::testing
