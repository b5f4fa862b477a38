#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vitseg/checkpoint.hpp"
#include "vitseg/tensor.hpp"

namespace vitseg {

// Architecture hyperparameters of the plain pre-norm ViT encoder. window_k
// is the number of slices a 3D input window spans (1 for a pure 2D model).
struct ViTConfig {
    std::size_t image_h = 512;
    std::size_t image_w = 512;
    std::size_t patch_p = 16;
    std::size_t window_k = 1;
    std::size_t in_channels = 3;
    std::size_t hidden_d = 768;
    std::size_t layers_l = 12;
    std::size_t heads = 12;
    std::size_t mlp_ratio = 4;
    std::size_t num_classes = 2;
    float layernorm_eps = 1e-6f;

    std::size_t tokens() const { return (image_h / patch_p) * (image_w / patch_p); }
    std::size_t grid_h() const { return image_h / patch_p; }
    std::size_t grid_w() const { return image_w / patch_p; }

    void validate() const; // throws errc::bad_argument on inconsistency
};

// Canonical tensor names of a checkpoint for this config. The embedding
// kernel is "embed.kernel" ([Dh,C,P,P] for 2D, [Dh,C,K,P,P] for 3D),
// "embed.bias" [Dh], "embed.pos" [T,Dh]; per layer i:
//   layer{i}.ln1.gamma/.beta            [Dh]
//   layer{i}.attn.qkv.weight/.bias      [3Dh,Dh] / [3Dh]
//   layer{i}.attn.proj.weight/.bias     [Dh,Dh]  / [Dh]
//   layer{i}.ln2.gamma/.beta            [Dh]
//   layer{i}.mlp.fc1.weight/.bias       [R*Dh,Dh] / [R*Dh]
//   layer{i}.mlp.fc2.weight/.bias       [Dh,R*Dh] / [Dh]
// then "ln_f.gamma"/"ln_f.beta" [Dh] and the decoder head
// "head.weight" [P*P*num_classes,Dh], "head.bias" [P*P*num_classes].
std::vector<std::string> canonical_tensor_names(const ViTConfig& cfg);

// Expected shape for one canonical name; used by shape validation.
std::vector<std::size_t> canonical_tensor_shape(const ViTConfig& cfg, const std::string& name);

// Throws errc::missing_tensor / errc::shape_mismatch if ckpt does not carry
// every canonical tensor at its config-implied shape.
void check_checkpoint(const Checkpoint& ckpt, const ViTConfig& cfg);

struct EncoderState {
    Tensor tokens; // [T, Dh]
};

// Strided-convolution patch embedding: image [C,H,W], kernel [Dh,C,P,P],
// bias [Dh] -> tokens [T,Dh], patches enumerated row-major over the grid.
Tensor patch_embed_2d(const Tensor& image, const Tensor& kernel, const Tensor& bias);

// 3D variant with stride (K,P,P): window [C,K,H,W], kernel [Dh,C,K,P,P].
// The window depth must equal the kernel depth, so the token grid is the
// same H/P x W/P grid as in 2D.
Tensor patch_embed_3d(const Tensor& window, const Tensor& kernel3d, const Tensor& bias);

// Adds positional embeddings, applies L pre-norm blocks
// (LN -> MHSA -> residual; LN -> MLP/GELU -> residual), then the final LN.
EncoderState encoder_forward(const EncoderState& state, const Checkpoint& weights, const ViTConfig& cfg);

struct FlopBreakdown {
    std::uint64_t embedding = 0;
    std::uint64_t per_layer = 0;
    std::uint64_t encoder_total = 0; // embedding + L * per_layer
    std::uint64_t head = 0;
    std::uint64_t total = 0; // encoder_total + head
};

// Analytical FLOP count with multiply-accumulate counted as 2 FLOPs.
FlopBreakdown count_flops(const ViTConfig& cfg, bool include_head);

// JSON round trip of a config. Unknown keys are rejected; image_h, image_w,
// patch_p, hidden_d, layers_l, heads, in_channels and num_classes are
// required, the rest default.
std::string vitconfig_to_json(const ViTConfig& cfg);
ViTConfig vitconfig_from_json(const std::string& text);

// Reconstructs a config from canonical tensor shapes. Attention heads are
// not recoverable from shapes (assumed 1), and the token grid is assumed
// square when the count allows, [T,1] otherwise.
ViTConfig infer_config(const Checkpoint& ckpt);

// Seeded random checkpoint with the canonical tensors for cfg; weights are
// fan-in scaled so a forward pass stays well-conditioned.
Checkpoint make_random_checkpoint(const ViTConfig& cfg, std::uint64_t seed);

} // namespace vitseg
