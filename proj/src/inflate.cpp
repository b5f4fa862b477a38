#include "vitseg/inflate.hpp"

#include <random>

#include <json.hpp>

namespace vitseg {

using json = nlohmann::json;

void InflationSpec::validate() const {
    if (depth == 0) throw Error(errc::bad_argument, "inflation depth K must be >= 1");
    if (channel_mode == ChannelMode::average_to_c && target_channels == 0) {
        throw Error(errc::bad_argument, "average_to_c requires a target channel count >= 1");
    }
}

static const char* strategy_name(InflationStrategy s) {
    switch (s) {
        case InflationStrategy::average: return "average";
        case InflationStrategy::centering: return "centering";
        case InflationStrategy::random: return "random";
    }
    return "?";
}

static const char* channel_mode_name(ChannelMode m) {
    switch (m) {
        case ChannelMode::keep: return "keep";
        case ChannelMode::collapse_to_1: return "collapse";
        case ChannelMode::average_to_c: return "average";
    }
    return "?";
}

std::string InflationSpec::to_json() const {
    json j;
    j["strategy"] = strategy_name(strategy);
    j["depth"] = depth;
    j["channel_mode"] = channel_mode_name(channel_mode);
    if (channel_mode == ChannelMode::average_to_c) j["target_channels"] = target_channels;
    if (strategy == InflationStrategy::random) j["seed"] = seed;
    return j.dump();
}

InflationSpec InflationSpec::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(errc::bad_json, std::string("inflation spec: ") + e.what());
    }
    InflationSpec spec;
    const std::string s = j.value("strategy", "centering");
    if (s == "average") spec.strategy = InflationStrategy::average;
    else if (s == "centering") spec.strategy = InflationStrategy::centering;
    else if (s == "random") spec.strategy = InflationStrategy::random;
    else throw Error(errc::bad_argument, "unknown inflation strategy '" + s + "'");
    spec.depth = j.value("depth", std::size_t{1});
    const std::string m = j.value("channel_mode", "keep");
    if (m == "keep") spec.channel_mode = ChannelMode::keep;
    else if (m == "collapse") spec.channel_mode = ChannelMode::collapse_to_1;
    else if (m == "average") spec.channel_mode = ChannelMode::average_to_c;
    else throw Error(errc::bad_argument, "unknown channel mode '" + m + "'");
    spec.target_channels = j.value("target_channels", std::size_t{1});
    spec.seed = j.value("seed", std::uint64_t{0});
    spec.validate();
    return spec;
}

CenterIndex center_index(std::size_t k) {
    if (k == 0) throw Error(errc::bad_argument, "center_index of K = 0");
    return {k / 2, k % 2 == 0};
}

Tensor inflate_kernel(const Tensor& kernel2d, const InflationSpec& spec) {
    spec.validate();
    if (kernel2d.rank() != 4) {
        throw Error(errc::shape_mismatch, "inflate_kernel expects [Dout,Cin,P,P], got " + shape_str(kernel2d.shape));
    }
    const std::size_t dout = kernel2d.shape[0], cin = kernel2d.shape[1];
    const std::size_t ph = kernel2d.shape[2], pw = kernel2d.shape[3];
    const std::size_t k = spec.depth;
    const std::size_t plane = ph * pw;
    Tensor out({dout, cin, k, ph, pw});

    if (spec.strategy == InflationStrategy::random) {
        std::mt19937_64 rng(spec.seed);
        std::normal_distribution<float> dist(0.0f, 0.02f);
        for (float& x : out.data) {
            float v;
            do {
                v = dist(rng);
            } while (std::abs(v) > 2.0f * 0.02f);
            x = v;
        }
        return out;
    }

    const std::size_t center = center_index(k).index;
    const float inv_k = 1.0f / static_cast<float>(k);
    for (std::size_t d = 0; d < dout; ++d) {
        for (std::size_t c = 0; c < cin; ++c) {
            const float* src = kernel2d.data.data() + (d * cin + c) * plane;
            float* dst = out.data.data() + ((d * cin + c) * k) * plane;
            for (std::size_t ki = 0; ki < k; ++ki, dst += plane) {
                if (spec.strategy == InflationStrategy::average) {
                    for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] * inv_k;
                } else if (ki == center) {
                    for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i];
                }
                // centering leaves non-center slices at the zero fill
            }
        }
    }
    return out;
}

Tensor collapse_channels(const Tensor& kernel) {
    if (kernel.rank() < 2 || kernel.shape[1] != 3) {
        throw Error(errc::shape_mismatch,
                    "collapse_channels expects [Dout,3,...], got " + shape_str(kernel.shape));
    }
    const std::size_t dout = kernel.shape[0];
    std::size_t rest = 1;
    for (std::size_t i = 2; i < kernel.rank(); ++i) rest *= kernel.shape[i];

    std::vector<std::size_t> out_shape = kernel.shape;
    out_shape[1] = 1;
    Tensor out(out_shape);
    for (std::size_t d = 0; d < dout; ++d) {
        const float* c0 = kernel.data.data() + (d * 3 + 0) * rest;
        const float* c1 = kernel.data.data() + (d * 3 + 1) * rest;
        const float* c2 = kernel.data.data() + (d * 3 + 2) * rest;
        float* dst = out.data.data() + d * rest;
        for (std::size_t i = 0; i < rest; ++i) dst[i] = c0[i] + c1[i] + c2[i];
    }
    return out;
}

Tensor expand_channels_average(const Tensor& kernel1, std::size_t c) {
    if (c == 0) throw Error(errc::bad_argument, "cannot expand to 0 channels");
    if (kernel1.rank() < 2 || kernel1.shape[1] != 1) {
        throw Error(errc::shape_mismatch,
                    "expand_channels_average expects [Dout,1,...], got " + shape_str(kernel1.shape));
    }
    const std::size_t dout = kernel1.shape[0];
    std::size_t rest = 1;
    for (std::size_t i = 2; i < kernel1.rank(); ++i) rest *= kernel1.shape[i];

    std::vector<std::size_t> out_shape = kernel1.shape;
    out_shape[1] = c;
    Tensor out(out_shape);
    const float inv_c = 1.0f / static_cast<float>(c);
    for (std::size_t d = 0; d < dout; ++d) {
        const float* src = kernel1.data.data() + d * rest;
        for (std::size_t j = 0; j < c; ++j) {
            float* dst = out.data.data() + (d * c + j) * rest;
            for (std::size_t i = 0; i < rest; ++i) dst[i] = src[i] * inv_c;
        }
    }
    return out;
}

static Tensor apply_channel_mode(const Tensor& kernel2d, const InflationSpec& spec) {
    switch (spec.channel_mode) {
        case ChannelMode::keep: return kernel2d;
        case ChannelMode::collapse_to_1: return collapse_channels(kernel2d);
        case ChannelMode::average_to_c: {
            Tensor k = kernel2d.shape[1] == 3 ? collapse_channels(kernel2d) : kernel2d;
            return expand_channels_average(k, spec.target_channels);
        }
    }
    throw Error(errc::bad_argument, "unknown channel mode");
}

ViTConfig inflated_config(const ViTConfig& cfg2d, const InflationSpec& spec) {
    ViTConfig cfg = cfg2d;
    cfg.window_k = spec.depth;
    switch (spec.channel_mode) {
        case ChannelMode::keep: break;
        case ChannelMode::collapse_to_1: cfg.in_channels = 1; break;
        case ChannelMode::average_to_c: cfg.in_channels = spec.target_channels; break;
    }
    return cfg;
}

Checkpoint inflate_checkpoint(const Checkpoint& ckpt2d, const ViTConfig& cfg2d, const InflationSpec& spec) {
    spec.validate();
    if (cfg2d.window_k != 1) {
        throw Error(errc::bad_argument, "the source of an inflation must be a 2D model (window_k == 1)");
    }
    check_checkpoint(ckpt2d, cfg2d);

    Tensor kernel = ckpt2d.tensor("embed.kernel");
    if (kernel.rank() == 5) { // depth-1 stored form
        kernel = kernel.reshaped({kernel.shape[0], kernel.shape[1], kernel.shape[3], kernel.shape[4]});
    }

    Checkpoint out;
    out.metadata = ckpt2d.metadata;
    out.metadata["inflation_spec"] = spec.to_json();
    if (!out.metadata.count("format_version")) out.metadata["format_version"] = "1";

    for (const auto& [name, t] : ckpt2d.tensors) {
        if (name == "embed.kernel") continue;
        out.tensors.emplace(name, t); // bit-exact copy, embed.bias and embed.pos included
    }
    out.tensors.emplace("embed.kernel", inflate_kernel(apply_channel_mode(kernel, spec), spec));
    return out;
}

} // namespace vitseg
