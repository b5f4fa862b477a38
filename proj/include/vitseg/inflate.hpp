#pragma once

#include <cstdint>
#include <string>

#include "vitseg/checkpoint.hpp"
#include "vitseg/tensor.hpp"
#include "vitseg/vit.hpp"

namespace vitseg {

enum class InflationStrategy { average, centering, random };

// KeepChannels leaves the input-channel axis alone. CollapseTo1 sums an
// RGB kernel over the channel axis. AverageToC divides a single-channel
// kernel across c channels; applied to an RGB kernel it collapses first,
// which is the route multi-channel MRI checkpoints take.
enum class ChannelMode { keep, collapse_to_1, average_to_c };

struct InflationSpec {
    InflationStrategy strategy = InflationStrategy::centering;
    std::size_t depth = 1; // K, slices per window
    ChannelMode channel_mode = ChannelMode::keep;
    std::size_t target_channels = 1; // used by average_to_c
    std::uint64_t seed = 0;          // used by random

    void validate() const;
    std::string to_json() const; // recorded in checkpoint metadata
    static InflationSpec from_json(const std::string& text);
};

struct CenterIndex {
    std::size_t index;
    bool approximate; // true when K is even and floor(K/2) is not an exact center
};

// floor(K/2); flags even K (no exact center slice). Throws on K = 0.
CenterIndex center_index(std::size_t k);

// [Dout,Cin,P,P] -> [Dout,Cin,K,P,P] with the depth axis inserted before
// the two patch axes.
//   average:   every depth slice equals kernel2d / K
//   centering: slice center_index(K) equals kernel2d, all others exactly 0
//   random:    i.i.d. truncated normal (mean 0, std 0.02, cut at 2 std)
Tensor inflate_kernel(const Tensor& kernel2d, const InflationSpec& spec);

// [Dout,3,...] -> [Dout,1,...], summing over the input channel axis.
Tensor collapse_channels(const Tensor& kernel);

// [Dout,1,...] -> [Dout,c,...], each channel = kernel / c.
Tensor expand_channels_average(const Tensor& kernel1, std::size_t c);

// Applies channel_mode then inflate_kernel to "embed.kernel", passes the
// bias and positional embeddings through unchanged, copies every other
// tensor bit-exactly, and records the spec in metadata["inflation_spec"].
Checkpoint inflate_checkpoint(const Checkpoint& ckpt2d, const ViTConfig& cfg2d, const InflationSpec& spec);

// Config of the model produced by inflate_checkpoint (window_k and
// in_channels updated, everything else untouched).
ViTConfig inflated_config(const ViTConfig& cfg2d, const InflationSpec& spec);

} // namespace vitseg
