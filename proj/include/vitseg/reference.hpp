#pragma once

#include <cstdint>
#include <vector>

#include "vitseg/checkpoint.hpp"
#include "vitseg/tensor.hpp"
#include "vitseg/vit.hpp"

// Serial reference implementations, written independently of the parallel
// kernels in vitseg::. Tests use them as oracles and the benchmark compares
// against them; nothing in the main library calls into this namespace.
namespace vitseg::ref {

// Plain triple-loop matrix product, double accumulators.
Tensor matmul(const Tensor& a, const Tensor& b);

// Strided convolution by direct loops over tokens, channels and patch
// pixels. When `macs` is given it counts one multiply-accumulate per term.
Tensor conv_patch_embed_2d(const Tensor& image, const Tensor& kernel, const Tensor& bias,
                           std::uint64_t* macs = nullptr);
Tensor conv_patch_embed_3d(const Tensor& window, const Tensor& kernel3d, const Tensor& bias,
                           std::uint64_t* macs = nullptr);

// Straight-line double-precision encoder: positional add, pre-norm blocks,
// final layer norm, all written as explicit per-token loops.
Tensor encoder_forward(const Tensor& tokens, const Checkpoint& weights, const ViTConfig& cfg);

// Per-patch decoder loop.
Tensor decode(const Tensor& tokens, const ViTConfig& cfg, const Checkpoint& weights);

// Window index arithmetic with explicit clamping branches.
std::vector<std::size_t> window_indices(std::size_t d, std::size_t depth, std::size_t k, std::size_t s);

// Voxel-set metrics built on std::set operations.
double dice(const SegmentationMask& pred, const SegmentationMask& label, std::uint16_t cls);
double slice_variation(const SegmentationMask& label, std::uint16_t cls, bool include_empty_pairs);
std::pair<std::uint64_t, std::uint64_t> class_stats(const SegmentationMask& label, std::uint16_t cls);

} // namespace vitseg::ref
