#include "vitseg/vit.hpp"

#include <cmath>
#include <random>

#include <json.hpp>

namespace vitseg {

void ViTConfig::validate() const {
    if (patch_p == 0 || image_h == 0 || image_w == 0) throw Error(errc::bad_argument, "zero image/patch size");
    if (image_h % patch_p != 0 || image_w % patch_p != 0) {
        throw Error(errc::bad_argument, "image " + std::to_string(image_h) + "x" + std::to_string(image_w) +
                                            " is not divisible by patch size " + std::to_string(patch_p));
    }
    if (hidden_d == 0 || heads == 0 || hidden_d % heads != 0) {
        throw Error(errc::bad_argument, "hidden size " + std::to_string(hidden_d) +
                                            " is not divisible by heads " + std::to_string(heads));
    }
    if (window_k == 0) throw Error(errc::bad_argument, "window_k must be >= 1");
    if (in_channels == 0) throw Error(errc::bad_argument, "in_channels must be >= 1");
    if (mlp_ratio == 0) throw Error(errc::bad_argument, "mlp_ratio must be >= 1");
    if (num_classes == 0) throw Error(errc::bad_argument, "num_classes must be >= 1");
}

std::vector<std::string> canonical_tensor_names(const ViTConfig& cfg) {
    std::vector<std::string> names = {"embed.kernel", "embed.bias", "embed.pos"};
    for (std::size_t i = 0; i < cfg.layers_l; ++i) {
        const std::string p = "layer" + std::to_string(i) + ".";
        for (const char* s : {"ln1.gamma", "ln1.beta", "attn.qkv.weight", "attn.qkv.bias", "attn.proj.weight",
                              "attn.proj.bias", "ln2.gamma", "ln2.beta", "mlp.fc1.weight", "mlp.fc1.bias",
                              "mlp.fc2.weight", "mlp.fc2.bias"}) {
            names.push_back(p + s);
        }
    }
    names.push_back("ln_f.gamma");
    names.push_back("ln_f.beta");
    names.push_back("head.weight");
    names.push_back("head.bias");
    return names;
}

std::vector<std::size_t> canonical_tensor_shape(const ViTConfig& cfg, const std::string& name) {
    const std::size_t d = cfg.hidden_d;
    const std::size_t m = cfg.mlp_ratio * d;
    const std::size_t pp = cfg.patch_p * cfg.patch_p;
    if (name == "embed.kernel") {
        if (cfg.window_k == 1) return {d, cfg.in_channels, cfg.patch_p, cfg.patch_p};
        return {d, cfg.in_channels, cfg.window_k, cfg.patch_p, cfg.patch_p};
    }
    if (name == "embed.bias") return {d};
    if (name == "embed.pos") return {cfg.tokens(), d};
    if (name == "ln_f.gamma" || name == "ln_f.beta") return {d};
    if (name == "head.weight") return {pp * cfg.num_classes, d};
    if (name == "head.bias") return {pp * cfg.num_classes};
    const auto dot = name.find('.');
    const std::string suffix = dot == std::string::npos ? name : name.substr(dot + 1);
    if (suffix == "ln1.gamma" || suffix == "ln1.beta" || suffix == "ln2.gamma" || suffix == "ln2.beta" ||
        suffix == "attn.proj.bias" || suffix == "mlp.fc2.bias")
        return {d};
    if (suffix == "attn.qkv.weight") return {3 * d, d};
    if (suffix == "attn.qkv.bias") return {3 * d};
    if (suffix == "attn.proj.weight") return {d, d};
    if (suffix == "mlp.fc1.weight") return {m, d};
    if (suffix == "mlp.fc1.bias") return {m};
    if (suffix == "mlp.fc2.weight") return {d, m};
    throw Error(errc::bad_argument, "unknown canonical tensor name '" + name + "'");
}

void check_checkpoint(const Checkpoint& ckpt, const ViTConfig& cfg) {
    cfg.validate();
    for (const std::string& name : canonical_tensor_names(cfg)) {
        const Tensor& t = ckpt.tensor(name); // throws missing_tensor
        const auto want = canonical_tensor_shape(cfg, name);
        // A depth-1 kernel may be stored either as [Dh,C,P,P] or [Dh,C,1,P,P].
        if (name == "embed.kernel" && cfg.window_k == 1 && t.rank() == 5) {
            if (t.shape == std::vector<std::size_t>{cfg.hidden_d, cfg.in_channels, 1, cfg.patch_p, cfg.patch_p})
                continue;
        }
        if (t.shape != want) {
            throw Error(errc::shape_mismatch,
                        "tensor '" + name + "' has shape " + shape_str(t.shape) + ", config implies " +
                            shape_str(want));
        }
    }
}

namespace {

// Rows are patch pixel values flattened in (c, py, px) order, matching the
// row-major layout of a [Dh,C,P,P] kernel.
Tensor im2row_2d(const Tensor& image, std::size_t p) {
    const std::size_t c = image.shape[0], h = image.shape[1], w = image.shape[2];
    const std::size_t gh = h / p, gw = w / p;
    Tensor rows({gh * gw, c * p * p});
    std::size_t r = 0;
    for (std::size_t gy = 0; gy < gh; ++gy) {
        for (std::size_t gx = 0; gx < gw; ++gx, ++r) {
            float* out = rows.data.data() + r * rows.shape[1];
            for (std::size_t ci = 0; ci < c; ++ci) {
                const float* plane = image.data.data() + ci * h * w;
                for (std::size_t py = 0; py < p; ++py) {
                    const float* src = plane + (gy * p + py) * w + gx * p;
                    for (std::size_t px = 0; px < p; ++px) *out++ = src[px];
                }
            }
        }
    }
    return rows;
}

// Same enumeration with the depth axis between channel and the patch plane,
// matching a [Dh,C,K,P,P] kernel. With k == 1 the emitted rows are
// bit-identical to im2row_2d of the single slice.
Tensor im2row_3d(const Tensor& window, std::size_t p) {
    const std::size_t c = window.shape[0], k = window.shape[1], h = window.shape[2], w = window.shape[3];
    const std::size_t gh = h / p, gw = w / p;
    Tensor rows({gh * gw, c * k * p * p});
    std::size_t r = 0;
    for (std::size_t gy = 0; gy < gh; ++gy) {
        for (std::size_t gx = 0; gx < gw; ++gx, ++r) {
            float* out = rows.data.data() + r * rows.shape[1];
            for (std::size_t ci = 0; ci < c; ++ci) {
                for (std::size_t ki = 0; ki < k; ++ki) {
                    const float* plane = window.data.data() + (ci * k + ki) * h * w;
                    for (std::size_t py = 0; py < p; ++py) {
                        const float* src = plane + (gy * p + py) * w + gx * p;
                        for (std::size_t px = 0; px < p; ++px) *out++ = src[px];
                    }
                }
            }
        }
    }
    return rows;
}

} // namespace

Tensor patch_embed_2d(const Tensor& image, const Tensor& kernel, const Tensor& bias) {
    if (image.rank() != 3) throw Error(errc::shape_mismatch, "image must be [C,H,W], got " + shape_str(image.shape));
    if (kernel.rank() != 4) {
        throw Error(errc::shape_mismatch, "2D kernel must be [Dh,C,P,P], got " + shape_str(kernel.shape));
    }
    const std::size_t p = kernel.shape[2];
    if (kernel.shape[3] != p) throw Error(errc::shape_mismatch, "non-square patch in " + shape_str(kernel.shape));
    if (kernel.shape[1] != image.shape[0]) {
        throw Error(errc::shape_mismatch, "kernel channels " + shape_str(kernel.shape) + " vs image " +
                                              shape_str(image.shape));
    }
    if (image.shape[1] % p != 0 || image.shape[2] % p != 0) {
        throw Error(errc::shape_mismatch,
                    "image " + shape_str(image.shape) + " not divisible by patch " + std::to_string(p));
    }
    if (bias.size() != kernel.shape[0]) {
        throw Error(errc::shape_mismatch, "bias length " + std::to_string(bias.size()) + " vs kernel " +
                                              shape_str(kernel.shape));
    }
    Tensor rows = im2row_2d(image, p);
    Tensor flat = kernel.reshaped({kernel.shape[0], kernel.shape[1] * p * p});
    return add_row(matmul_nt(rows, flat), bias);
}

Tensor patch_embed_3d(const Tensor& window, const Tensor& kernel3d, const Tensor& bias) {
    if (window.rank() != 4) {
        throw Error(errc::shape_mismatch, "window must be [C,K,H,W], got " + shape_str(window.shape));
    }
    if (kernel3d.rank() != 5) {
        throw Error(errc::shape_mismatch, "3D kernel must be [Dh,C,K,P,P], got " + shape_str(kernel3d.shape));
    }
    const std::size_t p = kernel3d.shape[3];
    if (kernel3d.shape[4] != p) throw Error(errc::shape_mismatch, "non-square patch in " + shape_str(kernel3d.shape));
    if (kernel3d.shape[1] != window.shape[0]) {
        throw Error(errc::shape_mismatch, "kernel channels " + shape_str(kernel3d.shape) + " vs window " +
                                              shape_str(window.shape));
    }
    if (kernel3d.shape[2] != window.shape[1]) {
        throw Error(errc::shape_mismatch, "window depth " + std::to_string(window.shape[1]) +
                                              " does not equal kernel depth " + std::to_string(kernel3d.shape[2]));
    }
    if (window.shape[2] % p != 0 || window.shape[3] % p != 0) {
        throw Error(errc::shape_mismatch,
                    "window " + shape_str(window.shape) + " not divisible by patch " + std::to_string(p));
    }
    if (bias.size() != kernel3d.shape[0]) {
        throw Error(errc::shape_mismatch, "bias length " + std::to_string(bias.size()) + " vs kernel " +
                                              shape_str(kernel3d.shape));
    }
    Tensor rows = im2row_3d(window, p);
    Tensor flat = kernel3d.reshaped(
        {kernel3d.shape[0], kernel3d.shape[1] * kernel3d.shape[2] * p * p});
    return add_row(matmul_nt(rows, flat), bias);
}

namespace {

Tensor sub_columns(const Tensor& m, std::size_t begin, std::size_t count) {
    Tensor out({m.shape[0], count});
    for (std::size_t i = 0; i < m.shape[0]; ++i) {
        const float* src = m.data.data() + i * m.shape[1] + begin;
        float* dst = out.data.data() + i * count;
        for (std::size_t j = 0; j < count; ++j) dst[j] = src[j];
    }
    return out;
}

void put_columns(Tensor& m, const Tensor& block, std::size_t begin) {
    for (std::size_t i = 0; i < m.shape[0]; ++i) {
        const float* src = block.data.data() + i * block.shape[1];
        float* dst = m.data.data() + i * m.shape[1] + begin;
        for (std::size_t j = 0; j < block.shape[1]; ++j) dst[j] = src[j];
    }
}

Tensor attention(const Tensor& x, const Checkpoint& w, const ViTConfig& cfg, const std::string& prefix) {
    const std::size_t t = x.shape[0], d = cfg.hidden_d, heads = cfg.heads, hd = d / heads;
    Tensor qkv = add_row(matmul_nt(x, w.tensor(prefix + "qkv.weight")), w.tensor(prefix + "qkv.bias"));
    const float att_scale = 1.0f / std::sqrt(static_cast<float>(hd));
    Tensor ctx({t, d});
    for (std::size_t h = 0; h < heads; ++h) {
        Tensor q = sub_columns(qkv, h * hd, hd);
        Tensor k = sub_columns(qkv, d + h * hd, hd);
        Tensor v = sub_columns(qkv, 2 * d + h * hd, hd);
        Tensor att = softmax_lastdim(scale(matmul_nt(q, k), att_scale));
        put_columns(ctx, matmul(att, v), h * hd);
    }
    return add_row(matmul_nt(ctx, w.tensor(prefix + "proj.weight")), w.tensor(prefix + "proj.bias"));
}

} // namespace

EncoderState encoder_forward(const EncoderState& state, const Checkpoint& weights, const ViTConfig& cfg) {
    cfg.validate();
    const std::size_t t = cfg.tokens(), d = cfg.hidden_d;
    if (state.tokens.shape != std::vector<std::size_t>{t, d}) {
        throw Error(errc::shape_mismatch, "encoder state " + shape_str(state.tokens.shape) +
                                              ", config implies [" + std::to_string(t) + "," + std::to_string(d) +
                                              "]");
    }
    const auto want = [&](const std::string& name) -> const Tensor& {
        const Tensor& w = weights.tensor(name);
        const auto shape = canonical_tensor_shape(cfg, name);
        if (w.shape != shape) {
            throw Error(errc::shape_mismatch,
                        "tensor '" + name + "' has shape " + shape_str(w.shape) + ", want " + shape_str(shape));
        }
        return w;
    };

    Tensor h = add(state.tokens, want("embed.pos"));
    for (std::size_t i = 0; i < cfg.layers_l; ++i) {
        const std::string p = "layer" + std::to_string(i) + ".";
        for (const char* s : {"ln1.gamma", "ln1.beta", "attn.qkv.weight", "attn.qkv.bias", "attn.proj.weight",
                              "attn.proj.bias", "ln2.gamma", "ln2.beta", "mlp.fc1.weight", "mlp.fc1.bias",
                              "mlp.fc2.weight", "mlp.fc2.bias"}) {
            want(p + s); // shape-check the whole block up front
        }
        Tensor n1 = layer_norm(h, weights.tensor(p + "ln1.gamma"), weights.tensor(p + "ln1.beta"), cfg.layernorm_eps);
        h = add(h, attention(n1, weights, cfg, p + "attn."));
        Tensor n2 = layer_norm(h, weights.tensor(p + "ln2.gamma"), weights.tensor(p + "ln2.beta"), cfg.layernorm_eps);
        Tensor m = add_row(matmul_nt(n2, weights.tensor(p + "mlp.fc1.weight")), weights.tensor(p + "mlp.fc1.bias"));
        m = gelu(m);
        m = add_row(matmul_nt(m, weights.tensor(p + "mlp.fc2.weight")), weights.tensor(p + "mlp.fc2.bias"));
        h = add(h, m);
    }
    h = layer_norm(h, want("ln_f.gamma"), want("ln_f.beta"), cfg.layernorm_eps);
    return EncoderState{std::move(h)};
}

FlopBreakdown count_flops(const ViTConfig& cfg, bool include_head) {
    cfg.validate();
    const std::uint64_t t = cfg.tokens();
    const std::uint64_t d = cfg.hidden_d;
    const std::uint64_t c = cfg.in_channels;
    const std::uint64_t k = cfg.window_k;
    const std::uint64_t p = cfg.patch_p;

    FlopBreakdown f;
    f.embedding = 2 * t * d * (c * k * p * p);
    const std::uint64_t qkv = 2 * t * d * (3 * d);
    const std::uint64_t scores = 2 * t * t * d;
    const std::uint64_t weighted = 2 * t * t * d;
    const std::uint64_t proj = 2 * t * d * d;
    const std::uint64_t mlp = 2 * 2 * t * d * (cfg.mlp_ratio * d);
    f.per_layer = qkv + scores + weighted + proj + mlp;
    f.encoder_total = f.embedding + cfg.layers_l * f.per_layer;
    f.head = include_head ? 2 * t * d * (p * p * cfg.num_classes) : 0;
    f.total = f.encoder_total + f.head;
    return f;
}

std::string vitconfig_to_json(const ViTConfig& cfg) {
    nlohmann::json j;
    j["image_h"] = cfg.image_h;
    j["image_w"] = cfg.image_w;
    j["patch_p"] = cfg.patch_p;
    j["window_k"] = cfg.window_k;
    j["in_channels"] = cfg.in_channels;
    j["hidden_d"] = cfg.hidden_d;
    j["layers_l"] = cfg.layers_l;
    j["heads"] = cfg.heads;
    j["mlp_ratio"] = cfg.mlp_ratio;
    j["num_classes"] = cfg.num_classes;
    j["layernorm_eps"] = cfg.layernorm_eps;
    return j.dump();
}

ViTConfig vitconfig_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(errc::bad_json, std::string("model config: ") + e.what());
    }
    if (!j.is_object()) throw Error(errc::bad_json, "model config must be a JSON object");

    static const char* known[] = {"image_h",  "image_w",  "patch_p",   "window_k",      "in_channels", "hidden_d",
                                  "layers_l", "heads",    "mlp_ratio", "layernorm_eps", "num_classes"};
    for (const auto& [key, value] : j.items()) {
        (void)value;
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        if (!ok) throw Error(errc::validation, "unknown model config key '" + key + "'");
    }
    for (const char* required : {"image_h", "image_w", "patch_p", "hidden_d", "layers_l", "heads", "in_channels",
                                 "num_classes"}) {
        if (!j.contains(required)) {
            throw Error(errc::validation, std::string("model config lacks required key '") + required + "'");
        }
    }

    ViTConfig cfg;
    try {
        cfg.image_h = j.at("image_h").get<std::size_t>();
        cfg.image_w = j.at("image_w").get<std::size_t>();
        cfg.patch_p = j.at("patch_p").get<std::size_t>();
        cfg.window_k = j.value("window_k", std::size_t{1});
        cfg.in_channels = j.at("in_channels").get<std::size_t>();
        cfg.hidden_d = j.at("hidden_d").get<std::size_t>();
        cfg.layers_l = j.at("layers_l").get<std::size_t>();
        cfg.heads = j.at("heads").get<std::size_t>();
        cfg.mlp_ratio = j.value("mlp_ratio", std::size_t{4});
        cfg.num_classes = j.at("num_classes").get<std::size_t>();
        cfg.layernorm_eps = j.value("layernorm_eps", 1e-6f);
    } catch (const nlohmann::json::exception& e) {
        throw Error(errc::bad_json, std::string("model config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

ViTConfig infer_config(const Checkpoint& ckpt) {
    const Tensor& kernel = ckpt.tensor("embed.kernel");
    if (kernel.rank() != 4 && kernel.rank() != 5) {
        throw Error(errc::shape_mismatch, "embed.kernel must be rank 4 or 5, got " + shape_str(kernel.shape));
    }
    ViTConfig cfg;
    cfg.hidden_d = kernel.shape[0];
    cfg.in_channels = kernel.shape[1];
    cfg.window_k = kernel.rank() == 5 ? kernel.shape[2] : 1;
    cfg.patch_p = kernel.shape.back();

    const Tensor& pos = ckpt.tensor("embed.pos");
    if (pos.rank() != 2) throw Error(errc::shape_mismatch, "embed.pos must be [T,Dh]");
    const std::size_t t = pos.shape[0];
    const auto root = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(t))));
    const std::size_t gh = root * root == t ? root : t;
    const std::size_t gw = root * root == t ? root : 1;
    cfg.image_h = gh * cfg.patch_p;
    cfg.image_w = gw * cfg.patch_p;

    std::size_t layers = 0;
    while (ckpt.has("layer" + std::to_string(layers) + ".ln1.gamma")) ++layers;
    cfg.layers_l = layers;
    cfg.heads = 1;
    if (layers > 0) {
        const Tensor& fc1 = ckpt.tensor("layer0.mlp.fc1.weight");
        if (fc1.rank() != 2 || fc1.shape[0] % cfg.hidden_d != 0) {
            throw Error(errc::shape_mismatch, "layer0.mlp.fc1.weight " + shape_str(fc1.shape) +
                                                  " is not a multiple of the hidden size");
        }
        cfg.mlp_ratio = fc1.shape[0] / cfg.hidden_d;
    }
    const Tensor& head = ckpt.tensor("head.weight");
    const std::size_t pp = cfg.patch_p * cfg.patch_p;
    if (head.rank() != 2 || head.shape[0] % pp != 0) {
        throw Error(errc::shape_mismatch,
                    "head.weight " + shape_str(head.shape) + " is not a multiple of the patch area");
    }
    cfg.num_classes = head.shape[0] / pp;
    cfg.validate();
    check_checkpoint(ckpt, cfg);
    return cfg;
}

Checkpoint make_random_checkpoint(const ViTConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    Checkpoint ckpt;
    ckpt.metadata["format_version"] = "1";
    ckpt.metadata["source"] = "random seed " + std::to_string(seed);
    for (const std::string& name : canonical_tensor_names(cfg)) {
        const auto shape = canonical_tensor_shape(cfg, name);
        Tensor t(shape);
        if (name.ends_with("gamma")) {
            std::uniform_real_distribution<float> dist(0.9f, 1.1f);
            for (float& x : t.data) x = dist(rng);
        } else if (name.ends_with("weight") || name == "embed.kernel") {
            std::size_t fan_in = 1;
            for (std::size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
            std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
            const float s = 1.0f / std::sqrt(static_cast<float>(fan_in));
            for (float& x : t.data) x = dist(rng) * s;
        } else {
            std::uniform_real_distribution<float> dist(-0.1f, 0.1f);
            for (float& x : t.data) x = dist(rng);
        }
        ckpt.tensors.emplace(name, std::move(t));
    }
    return ckpt;
}

} // namespace vitseg
