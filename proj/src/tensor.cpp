#include "assimlab/tensor.hpp"

#include "assimlab/error.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>

namespace assimlab {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

// Scheduling is done by the callers (--jobs); one BLAS thread keeps results
// independent of the machine's core count.
void ensure_blas_single_threaded() {
    static std::once_flag once;
    std::call_once(once, [] { openblas_set_num_threads(1); });
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
    if (t.rank() != rank) {
        throw DimensionError(std::string(what) + ": expected rank " + std::to_string(rank) +
                             ", got shape " + t.shape_string());
    }
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)), data_(product(shape_), 0.0f) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (product(shape_) != data_.size()) {
        throw DimensionError("tensor shape " + shape_string() + " does not match " +
                             std::to_string(data_.size()) + " values");
    }
}

Tensor Tensor::from_rows(const std::vector<std::vector<float>>& rows) {
    const std::size_t cols = rows.empty() ? 0 : rows.front().size();
    std::vector<float> data;
    data.reserve(rows.size() * cols);
    for (const auto& r : rows) {
        if (r.size() != cols) throw DimensionError("ragged rows");
        data.insert(data.end(), r.begin(), r.end());
    }
    return Tensor({rows.size(), cols}, std::move(data));
}

std::size_t Tensor::dim(std::size_t i) const {
    if (i >= shape_.size()) throw DimensionError("axis " + std::to_string(i) + " out of range for " + shape_string());
    return shape_[i];
}

std::span<float> Tensor::row(std::size_t r) {
    const std::size_t c = shape_.at(1);
    return std::span<float>(data_).subspan(r * c, c);
}

std::span<const float> Tensor::row(std::size_t r) const {
    const std::size_t c = shape_.at(1);
    return std::span<const float>(data_).subspan(r * c, c);
}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const { return Tensor(std::move(shape), data_); }

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

std::string Tensor::shape_string() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
    os << ']';
    return os.str();
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul lhs");
    require_rank(b, 2, "matmul rhs");
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: inner dimensions differ " + a.shape_string() + " x " + b.shape_string());
    }
    ensure_blas_single_threaded();
    const auto m = a.rows(), k = a.cols(), n = b.cols();
    Tensor out = Tensor::matrix(m, n);
    if (m == 0 || n == 0 || k == 0) return out;
    cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, int(m), int(n), int(k), 1.0f, a.data(), int(k),
                b.data(), int(n), 0.0f, out.data(), int(n));
    return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor* bias) {
    require_rank(x, 2, "linear input");
    require_rank(w, 2, "linear weight");
    if (x.cols() != w.cols()) {
        throw DimensionError("linear: input " + x.shape_string() + " vs weight " + w.shape_string());
    }
    if (bias && bias->size() != w.rows()) throw DimensionError("linear: bias size mismatch");
    ensure_blas_single_threaded();
    const auto m = x.rows(), in = x.cols(), out_dim = w.rows();
    Tensor out = Tensor::matrix(m, out_dim);
    if (bias) {
        for (std::size_t r = 0; r < m; ++r) std::copy_n(bias->data(), out_dim, out.data() + r * out_dim);
    }
    if (m == 0 || in == 0) return out;
    cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, int(m), int(out_dim), int(in), 1.0f, x.data(), int(in),
                w.data(), int(in), bias ? 1.0f : 0.0f, out.data(), int(out_dim));
    return out;
}

void softmax_inplace(std::span<float> x) {
    if (x.empty()) throw DimensionError("softmax over an empty axis");
    const float mx = *std::max_element(x.begin(), x.end());
    double sum = 0.0;
    for (float& v : x) {
        v = std::exp(v - mx);
        sum += v;
    }
    const double inv = 1.0 / sum;
    for (float& v : x) v = static_cast<float>(v * inv);
}

Tensor softmax(const Tensor& x, int axis) {
    if (x.rank() == 1) {
        if (axis != -1 && axis != 0) throw DimensionError("softmax: axis out of range");
        Tensor out = x;
        softmax_inplace(out.values());
        return out;
    }
    require_rank(x, 2, "softmax");
    if (axis == -1) axis = 1;
    if (axis == 1) {
        Tensor out = x;
        if (out.cols() == 0) throw DimensionError("softmax over an empty axis");
        for (std::size_t r = 0; r < out.rows(); ++r) softmax_inplace(out.row(r));
        return out;
    }
    if (axis != 0) throw DimensionError("softmax: axis out of range");
    Tensor t = transpose(x);
    if (t.cols() == 0) throw DimensionError("softmax over an empty axis");
    for (std::size_t r = 0; r < t.rows(); ++r) softmax_inplace(t.row(r));
    return transpose(t);
}

namespace {

void normalize_span(std::span<float> v, std::span<const float> gamma, std::span<const float> beta, float eps) {
    double mean = 0.0;
    for (float f : v) mean += f;
    mean /= double(v.size());
    double var = 0.0;
    for (float f : v) var += (f - mean) * (f - mean);
    var /= double(v.size());
    const double inv = 1.0 / std::sqrt(var + double(eps));
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = static_cast<float>((v[i] - mean) * inv * gamma[i] + beta[i]);
    }
}

}  // namespace

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
    Tensor out = x;
    if (x.rank() == 1) {
        if (x.size() == 0) throw DimensionError("layer_norm of an empty vector");
        if (gamma.size() != x.size() || beta.size() != x.size()) throw DimensionError("layer_norm: affine size mismatch");
        normalize_span(out.values(), gamma.values(), beta.values(), eps);
        return out;
    }
    layer_norm_rows_inplace(out, gamma, beta, eps);
    return out;
}

void layer_norm_rows_inplace(Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
    require_rank(x, 2, "layer_norm");
    if (x.cols() == 0) throw DimensionError("layer_norm of an empty vector");
    if (gamma.size() != x.cols() || beta.size() != x.cols()) throw DimensionError("layer_norm: affine size mismatch");
    for (std::size_t r = 0; r < x.rows(); ++r) normalize_span(x.row(r), gamma.values(), beta.values(), eps);
}

void channel_norm_inplace(Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
    require_rank(x, 2, "channel_norm");
    if (gamma.size() != x.rows() || beta.size() != x.rows()) throw DimensionError("channel_norm: affine size mismatch");
    for (std::size_t c = 0; c < x.rows(); ++c) {
        auto v = x.row(c);
        double mean = 0.0;
        for (float f : v) mean += f;
        mean /= double(v.size());
        double var = 0.0;
        for (float f : v) var += (f - mean) * (f - mean);
        var /= double(v.size());
        const double inv = 1.0 / std::sqrt(var + double(eps));
        for (float& f : v) f = static_cast<float>((f - mean) * inv * gamma[c] + beta[c]);
    }
}

std::size_t conv1d_output_length(std::size_t length, std::size_t kernel, std::size_t stride) {
    if (kernel == 0 || stride == 0) throw DimensionError("conv1d: kernel and stride must be positive");
    if (length < kernel) {
        throw InputTooShortError("conv1d: input length " + std::to_string(length) + " shorter than kernel " +
                                 std::to_string(kernel));
    }
    return (length - kernel) / stride + 1;
}

Tensor conv1d(const Tensor& x, const Tensor& w, std::size_t stride, const Tensor* bias, std::size_t groups) {
    require_rank(x, 2, "conv1d input");
    require_rank(w, 3, "conv1d weight");
    const std::size_t c_in = x.rows(), t_in = x.cols();
    const std::size_t c_out = w.dim(0), c_in_g = w.dim(1), k = w.dim(2);
    if (groups == 0 || c_in % groups != 0 || c_out % groups != 0 || c_in / groups != c_in_g) {
        throw DimensionError("conv1d: channel/group mismatch, input " + x.shape_string() + " weight " +
                             w.shape_string() + " groups " + std::to_string(groups));
    }
    if (bias && bias->size() != c_out) throw DimensionError("conv1d: bias size mismatch");
    const std::size_t t_out = conv1d_output_length(t_in, k, stride);
    ensure_blas_single_threaded();

    Tensor out = Tensor::matrix(c_out, t_out);
    const std::size_t c_out_g = c_out / groups;
    const std::size_t patch = c_in_g * k;
    std::vector<float> cols(patch * t_out);
    for (std::size_t g = 0; g < groups; ++g) {
        // im2col: row (ci,kk) holds x[ci, t*stride + kk] for every output t
        for (std::size_t ci = 0; ci < c_in_g; ++ci) {
            const float* src = x.data() + (g * c_in_g + ci) * t_in;
            for (std::size_t kk = 0; kk < k; ++kk) {
                float* dst = cols.data() + (ci * k + kk) * t_out;
                for (std::size_t t = 0; t < t_out; ++t) dst[t] = src[t * stride + kk];
            }
        }
        const float* wg = w.data() + g * c_out_g * patch;
        float* og = out.data() + g * c_out_g * t_out;
        if (bias) {
            for (std::size_t co = 0; co < c_out_g; ++co) std::fill_n(og + co * t_out, t_out, (*bias)[g * c_out_g + co]);
        }
        cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, int(c_out_g), int(t_out), int(patch), 1.0f, wg,
                    int(patch), cols.data(), int(t_out), bias ? 1.0f : 0.0f, og, int(t_out));
    }
    return out;
}

float gelu(float x) noexcept {
    return static_cast<float>(0.5 * double(x) * (1.0 + std::erf(double(x) / std::sqrt(2.0))));
}

void gelu_inplace(std::span<float> x) noexcept {
    for (float& v : x) v = gelu(v);
}

Tensor gelu(const Tensor& x) {
    Tensor out = x;
    gelu_inplace(out.values());
    return out;
}

Tensor transpose(const Tensor& x) {
    require_rank(x, 2, "transpose");
    Tensor out = Tensor::matrix(x.cols(), x.rows());
    for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c) out(c, r) = x(r, c);
    return out;
}

void add_inplace(Tensor& x, const Tensor& y) {
    if (x.shape() != y.shape()) throw DimensionError("add: shape " + x.shape_string() + " vs " + y.shape_string());
    float* a = x.data();
    const float* b = y.data();
    for (std::size_t i = 0; i < x.size(); ++i) a[i] += b[i];
}

}  // namespace assimlab
