#pragma once

#include <cstdint>
#include <vector>

#include "vitseg/checkpoint.hpp"
#include "vitseg/tensor.hpp"
#include "vitseg/vit.hpp"

namespace vitseg {

enum class PredictionTarget { center_only, all_slices };

// Windowing of a volume along depth: one window per slice, K slices each,
// sampled at spacing `dilation` around the center and clamped to the volume
// (replicate-edge padding).
struct WindowSpec {
    std::size_t size = 5;     // K
    std::size_t dilation = 1; // s
    PredictionTarget target = PredictionTarget::center_only;

    void validate() const;
};

// Intensity normalization to [-1, 1]. CT volumes clamp to a fixed range;
// MRI volumes use [0, max(volume)].
struct PreprocessSpec {
    enum class Mode { fixed_range, per_volume_max };
    Mode mode = Mode::fixed_range;
    float clip_lo = -175.0f;
    float clip_hi = 250.0f;

    static PreprocessSpec fixed(float lo, float hi) { return {Mode::fixed_range, lo, hi}; }
    static PreprocessSpec per_volume_max() { return {Mode::per_volume_max, 0.0f, 0.0f}; }

    void validate() const;
};

// clamp to [lo,hi] then affine map lo -> -1, hi -> +1. Rejects non-finite
// voxels and degenerate ranges (all-zero MRI).
Volume preprocess(const Volume& v, const PreprocessSpec& spec);

// Clamped slice indices of the window centered at slice d: one entry per
// window position i, d + (i - center) * dilation.
std::vector<std::size_t> window_slice_indices(std::size_t d, std::size_t depth, const WindowSpec& w);

struct ExtractedWindow {
    std::size_t center_slice;
    Tensor voxels; // [C,K,H,W]
};

// One window per depth slice; exactly v.depth() windows.
std::vector<ExtractedWindow> extract_windows(const Volume& v, const WindowSpec& w);

// Per-token linear head: tokens [T,Dh] -> logits [H,W,num_classes]. Each
// token's output vector is laid out (py, px, class) and scattered into the
// token's P x P pixel block.
Tensor decode(const Tensor& tokens, const ViTConfig& cfg, const Checkpoint& weights);

// Aggregation of per-window logits planes into a mask. `coverage[d]` lists
// the distinct slices window d covers (ascending). center_only takes window
// d's plane as slice d; all_slices averages the planes of every window
// covering a slice (fixed ascending window order, so the result does not
// depend on scheduling).
SegmentationMask aggregate_window_logits(const std::vector<Tensor>& planes,
                                         const std::vector<std::vector<std::size_t>>& coverage,
                                         PredictionTarget target, std::size_t depth,
                                         std::uint32_t num_classes);

// Full 3D inference: preprocess, window, embed, encode, decode, aggregate.
// Windows run in parallel (`threads` = 0 picks the available parallelism);
// the output is identical for any thread count.
SegmentationMask predict_volume(const Volume& v, const Checkpoint& ckpt, const ViTConfig& cfg,
                                const WindowSpec& w, const PreprocessSpec& p, std::size_t threads = 0);

// Slice-by-slice 2D inference with the un-inflated model; the reference
// the inflated pipeline is measured against.
SegmentationMask predict_volume_2d(const Volume& v, const Checkpoint& ckpt, const ViTConfig& cfg,
                                   const PreprocessSpec& p, std::size_t threads = 0);

} // namespace vitseg
