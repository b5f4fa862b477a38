#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "vitseg/error.hpp"

namespace vitseg {

// Dense n-dimensional f32 array, row-major. The single value type for
// weights, activations, volumes and logits throughout the toolkit.
// All operations on it are pure and deterministic: identical inputs give
// bit-identical outputs on one platform regardless of thread count.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<float> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape_);
    Tensor(std::vector<std::size_t> shape_, std::vector<float> data_);

    std::size_t rank() const { return shape.size(); }
    std::size_t size() const { return data.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }

    float& operator[](std::size_t flat) { return data[flat]; }
    float operator[](std::size_t flat) const { return data[flat]; }

    // Same data, new shape; element count must be preserved.
    Tensor reshaped(std::vector<std::size_t> new_shape) const;

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    bool bit_equal(const Tensor& other) const;

    static Tensor zeros(std::vector<std::size_t> shape_) { return Tensor(std::move(shape_)); }
    static Tensor full(std::vector<std::size_t> shape_, float value);
};

std::size_t shape_product(const std::vector<std::size_t>& shape);
std::string shape_str(const std::vector<std::size_t>& shape);

// a[M,K] x b[K,N] -> [M,N]. Parallel over rows; per-element accumulation
// order is fixed (ascending k), so results do not depend on thread count.
Tensor matmul(const Tensor& a, const Tensor& b);

// a[M,K] x b[N,K]^T -> [M,N]; the layout used by linear layers storing
// weights as [out, in].
Tensor matmul_nt(const Tensor& a, const Tensor& b);

// Softmax along the last dimension with max subtraction. Rejects
// non-finite input.
Tensor softmax_lastdim(const Tensor& t);

// Per-last-dim-vector normalization: (x - mean) / sqrt(var + eps) * gamma + beta.
// Variance is the biased (1/D) estimate.
Tensor layer_norm(const Tensor& t, const Tensor& gamma, const Tensor& beta, float eps);

// Exact-erf GELU, elementwise.
Tensor gelu(const Tensor& t);

Tensor add(const Tensor& a, const Tensor& b);

// Adds row [N] to every row of a [M,N] matrix.
Tensor add_row(const Tensor& m, const Tensor& row);

Tensor scale(const Tensor& t, float factor);

// [M,N] -> [N,M] explicit copy.
Tensor transpose2d(const Tensor& t);

} // namespace vitseg
