#pragma once

#include <cstddef>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace assimlab {

// Dense row-major float32 array. product(shape) == data.size() always holds.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape);
    Tensor(std::vector<std::size_t> shape, std::vector<float> data);
    Tensor(std::initializer_list<std::size_t> shape) : Tensor(std::vector<std::size_t>(shape)) {}

    static Tensor matrix(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}); }
    static Tensor from_rows(const std::vector<std::vector<float>>& rows);

    const std::vector<std::size_t>& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t i) const;
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    float* data() noexcept { return data_.data(); }
    const float* data() const noexcept { return data_.data(); }
    std::span<float> values() noexcept { return data_; }
    std::span<const float> values() const noexcept { return data_; }

    // 2-D access
    std::size_t rows() const { return dim(0); }
    std::size_t cols() const { return dim(1); }
    float& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    float operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
    std::span<float> row(std::size_t r);
    std::span<const float> row(std::size_t r) const;

    float& operator[](std::size_t i) { return data_[i]; }
    float operator[](std::size_t i) const { return data_[i]; }

    Tensor reshaped(std::vector<std::size_t> shape) const;
    bool all_finite() const noexcept;
    std::string shape_string() const;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    std::vector<std::size_t> shape_;
    std::vector<float> data_;
};

// a[m×k] · b[k×n]
Tensor matmul(const Tensor& a, const Tensor& b);

// x[m×in] · wᵀ + bias, with w stored [out×in] as in the checkpoint.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor* bias = nullptr);

// Numerically stable softmax. axis is 0 for rank-1 input; for rank-2 input
// axis 1 normalizes each row and axis 0 each column.
Tensor softmax(const Tensor& x, int axis = -1);
void softmax_inplace(std::span<float> x);

// Layer normalization over the last axis (population variance).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps);
void layer_norm_rows_inplace(Tensor& x, const Tensor& gamma, const Tensor& beta, float eps);

// Per-channel normalization over time of a [C×T] array (GroupNorm with
// one group per channel).
void channel_norm_inplace(Tensor& x, const Tensor& gamma, const Tensor& beta, float eps);

// Valid grouped cross-correlation. x[C_in×T], w[C_out×(C_in/groups)×K].
Tensor conv1d(const Tensor& x, const Tensor& w, std::size_t stride, const Tensor* bias = nullptr,
              std::size_t groups = 1);
std::size_t conv1d_output_length(std::size_t length, std::size_t kernel, std::size_t stride);

// Exact erf-based GELU.
float gelu(float x) noexcept;
void gelu_inplace(std::span<float> x) noexcept;
Tensor gelu(const Tensor& x);

Tensor transpose(const Tensor& x);
void add_inplace(Tensor& x, const Tensor& y);

}  // namespace assimlab
