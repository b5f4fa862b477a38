#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vitseg/checkpoint.hpp"
#include "vitseg/inflate.hpp"
#include "vitseg/metrics.hpp"
#include "vitseg/pipeline.hpp"
#include "vitseg/vit.hpp"

using namespace vitseg;
using nlohmann::json;

namespace {

std::string json_scalar(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();
}

// Fills a subcommand's options from a JSON file whose keys mirror the long
// flag names. Flags given on the command line win; unknown keys are
// rejected.
void apply_args_file(CLI::App* sub, const std::string& path) {
    if (path.empty()) return;
    std::ifstream in(path);
    if (!in) throw CLI::FileError("cannot open args file '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw CLI::FileError(std::string("args file: ") + e.what());
    }
    if (!j.is_object()) throw CLI::FileError("args file must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (key == "args" || key == "help") throw CLI::ConfigError::Extras(key);
        CLI::Option* opt = nullptr;
        try {
            opt = sub->get_option("--" + key);
        } catch (const CLI::OptionNotFound&) {
            throw CLI::ConfigError::Extras(key);
        }
        if (opt->count() > 0) continue;
        if (value.is_array()) {
            for (const auto& e : value) opt->add_result(json_scalar(e));
        } else {
            opt->add_result(json_scalar(value));
        }
        opt->run_callback();
    }
}

ViTConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open model config '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return vitconfig_from_json(buf.str());
}

InflationStrategy parse_strategy(const std::string& s) {
    if (s == "average") return InflationStrategy::average;
    if (s == "centering") return InflationStrategy::centering;
    if (s == "random") return InflationStrategy::random;
    throw CLI::ValidationError("--strategy", "must be one of average|centering|random");
}

// "keep", "collapse" or "average:C"
std::pair<ChannelMode, std::size_t> parse_channels(const std::string& s) {
    if (s == "keep") return {ChannelMode::keep, 0};
    if (s == "collapse") return {ChannelMode::collapse_to_1, 0};
    if (s.rfind("average:", 0) == 0) {
        const std::string n = s.substr(8);
        char* end = nullptr;
        const unsigned long c = std::strtoul(n.c_str(), &end, 10);
        if (end == n.c_str() || *end != '\0' || c == 0) {
            throw CLI::ValidationError("--channels", "average:C needs a positive channel count");
        }
        return {ChannelMode::average_to_c, static_cast<std::size_t>(c)};
    }
    throw CLI::ValidationError("--channels", "must be keep|collapse|average:C");
}

PreprocessSpec resolve_clip(const std::string& clip_flag, const Volume& v) {
    if (clip_flag == "max") return PreprocessSpec::per_volume_max();
    if (!clip_flag.empty()) {
        float lo = 0, hi = 0;
        if (std::sscanf(clip_flag.c_str(), "%f:%f", &lo, &hi) != 2) {
            throw CLI::ValidationError("--clip", "expects lo:hi or max");
        }
        return PreprocessSpec::fixed(lo, hi);
    }
    if (v.clip_range) return PreprocessSpec::fixed(v.clip_range->first, v.clip_range->second);
    if (v.modality == "CT") return PreprocessSpec::fixed(-175.0f, 250.0f);
    if (v.modality == "MRI") return PreprocessSpec::per_volume_max();
    throw Error(errc::bad_argument,
                "volume carries no clip range and modality '" + v.modality + "' has no default; pass --clip");
}

struct InflateArgs {
    std::string input, output, strategy = "centering", channels = "keep", config_path, rename_path, args_path;
    std::size_t depth = 5;
    std::uint64_t seed = 0;
};

int run_inflate(const InflateArgs& a) {
    Checkpoint ckpt = load_checkpoint(a.input);

    if (!a.rename_path.empty()) {
        std::ifstream in(a.rename_path);
        if (!in) throw IoError("cannot open rename table '" + a.rename_path + "'");
        json table;
        try {
            in >> table;
        } catch (const json::exception& e) {
            throw Error(errc::bad_json, std::string("rename table: ") + e.what());
        }
        for (const auto& [from, to] : table.items()) {
            auto node = ckpt.tensors.extract(from);
            if (node.empty()) {
                std::cerr << "warning: rename source '" << from << "' not present\n";
                continue;
            }
            node.key() = to.get<std::string>();
            ckpt.tensors.insert(std::move(node));
        }
    }

    const ViTConfig cfg2d = a.config_path.empty() ? infer_config(ckpt) : load_config_file(a.config_path);

    InflationSpec spec;
    spec.strategy = parse_strategy(a.strategy);
    spec.depth = a.depth;
    const auto [mode, c] = parse_channels(a.channels);
    spec.channel_mode = mode;
    spec.target_channels = c;
    spec.seed = a.seed;
    spec.validate();
    if (center_index(spec.depth).approximate) {
        std::cerr << "warning: even depth " << spec.depth << " has no exact center slice; using index "
                  << center_index(spec.depth).index << "\n";
    }

    const Tensor& before = ckpt.tensor("embed.kernel");
    const std::string shape_before = shape_str(before.shape);
    Checkpoint out = inflate_checkpoint(ckpt, cfg2d, spec);
    if (!a.config_path.empty()) {
        out.metadata["config"] = vitconfig_to_json(inflated_config(cfg2d, spec));
    }
    save_checkpoint(a.output, out);

    std::cerr << "inflated " << a.input << " -> " << a.output << "\n"
              << "  tensors: " << out.tensors.size() << "\n"
              << "  embed.kernel: " << shape_before << " -> " << shape_str(out.tensor("embed.kernel").shape) << "\n"
              << "  spec: " << spec.to_json() << "\n";
    return 0;
}

struct PredictArgs {
    std::string model, volume, output, config_path, target = "center", clip, args_path;
    std::size_t window = 0, stride = 1, threads = 0;
};

int run_predict(const PredictArgs& a) {
    Checkpoint ckpt = load_checkpoint(a.model);
    Volume vol = load_volume(a.volume);

    ViTConfig cfg;
    if (!a.config_path.empty()) {
        cfg = load_config_file(a.config_path);
    } else if (auto it = ckpt.metadata.find("config"); it != ckpt.metadata.end()) {
        cfg = vitconfig_from_json(it->second);
    } else {
        throw Error(errc::bad_argument, "no --config given and the checkpoint carries no config metadata");
    }

    WindowSpec w;
    w.size = a.window == 0 ? cfg.window_k : a.window;
    w.dilation = a.stride;
    if (a.target == "center") w.target = PredictionTarget::center_only;
    else if (a.target == "all") w.target = PredictionTarget::all_slices;
    else throw CLI::ValidationError("--target", "must be center|all");

    const PreprocessSpec pp = resolve_clip(a.clip, vol);
    SegmentationMask mask = predict_volume(vol, ckpt, cfg, w, pp, a.threads);
    save_mask(a.output, mask);
    std::cerr << "predicted " << a.volume << " -> " << a.output << " (" << shape_str(mask.shape) << ", "
              << cfg.num_classes << " classes)\n";
    return 0;
}

struct EvaluateArgs {
    std::string pred, label, out_path, args_path;
    std::vector<std::uint16_t> classes;
};

int run_evaluate(const EvaluateArgs& a) {
    SegmentationMask pred = load_mask(a.pred);
    SegmentationMask label = load_mask(a.label);
    const std::string report = dice_report(pred, label, a.classes);
    if (a.out_path.empty()) {
        std::cout << report << "\n";
    } else {
        std::ofstream out(a.out_path);
        if (!out) throw IoError("cannot open report '" + a.out_path + "' for writing");
        out << report << "\n";
    }
    return 0;
}

struct VerifyArgs {
    std::string checkpoint_path, config_path, args_path;
    std::size_t depth = 5;
    std::uint64_t seed = 7;
};

// Structural verification of an already-inflated checkpoint: the recorded
// (or detected) strategy must hold exactly, and the embedding must still
// reproduce the 2D model recovered from the kernel.
int run_verify_inflated(const Checkpoint& ckpt, const ViTConfig& cfg, std::uint64_t seed) {
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
    std::uniform_real_distribution<float> dist(-2.0f, 2.0f);

    const Tensor& k3 = ckpt.tensor("embed.kernel");
    const Tensor& bias = ckpt.tensor("embed.bias");
    const std::size_t c = cfg.in_channels, k = cfg.window_k, p = cfg.patch_p;
    const std::size_t plane = p * p;
    const std::size_t mid = center_index(k).index;

    InflationStrategy strategy = InflationStrategy::centering;
    if (auto it = ckpt.metadata.find("inflation_spec"); it != ckpt.metadata.end()) {
        strategy = InflationSpec::from_json(it->second).strategy;
    } else {
        // no record: decide by whether the non-center slices are all zero
        bool zeros = true;
        for (std::size_t dc = 0; dc < cfg.hidden_d * c && zeros; ++dc) {
            for (std::size_t ki = 0; ki < k && zeros; ++ki) {
                if (ki == mid) continue;
                for (std::size_t i = 0; i < plane; ++i) zeros = zeros && k3.data[(dc * k + ki) * plane + i] == 0.0f;
            }
        }
        strategy = zeros ? InflationStrategy::centering : InflationStrategy::average;
        std::cerr << "note: no inflation_spec metadata; checking the "
                  << (strategy == InflationStrategy::centering ? "centering" : "average") << " structure\n";
    }
    if (strategy == InflationStrategy::random) {
        throw Error(errc::bad_argument, "a randomly initialized kernel has no structure to verify");
    }

    bool all_pass = true;
    auto report = [&all_pass](const std::string& name, bool pass, double worst, double tol) {
        all_pass = all_pass && pass;
        std::cout << (pass ? "PASS" : "FAIL") << " " << name << " (max deviation " << worst << ", tolerance " << tol
                  << ")\n";
    };

    Tensor kernel2d({cfg.hidden_d, c, p, p});
    if (strategy == InflationStrategy::centering) {
        double worst = 0.0;
        for (std::size_t dc = 0; dc < cfg.hidden_d * c; ++dc) {
            for (std::size_t ki = 0; ki < k; ++ki) {
                for (std::size_t i = 0; i < plane; ++i) {
                    const float v = k3.data[(dc * k + ki) * plane + i];
                    if (ki == mid) kernel2d.data[dc * plane + i] = v;
                    else worst = std::max(worst, std::abs(static_cast<double>(v)));
                }
            }
        }
        report("centering structure: non-center slices are exactly zero", worst == 0.0, worst, 0.0);
    } else {
        // every slice must equal the depth-sum divided by K
        double worst = 0.0;
        for (std::size_t dc = 0; dc < cfg.hidden_d * c; ++dc) {
            for (std::size_t i = 0; i < plane; ++i) {
                double sum = 0.0;
                for (std::size_t ki = 0; ki < k; ++ki) sum += k3.data[(dc * k + ki) * plane + i];
                kernel2d.data[dc * plane + i] = static_cast<float>(sum);
                for (std::size_t ki = 0; ki < k; ++ki) {
                    worst = std::max(worst, std::abs(static_cast<double>(k3.data[(dc * k + ki) * plane + i]) -
                                                     sum / static_cast<double>(k)));
                }
            }
        }
        report("average structure: every depth slice is the kernel divided by K", worst <= 1e-7, worst, 1e-7);
    }

    {
        Tensor window({c, k, cfg.image_h, cfg.image_w});
        for (float& x : window.data) x = dist(rng);
        Tensor probe({c, cfg.image_h, cfg.image_w});
        const std::size_t hw = cfg.image_h * cfg.image_w;
        if (strategy == InflationStrategy::centering) {
            for (std::size_t ci = 0; ci < c; ++ci) {
                std::copy_n(window.data.begin() + (ci * k + mid) * hw, hw, probe.data.begin() + ci * hw);
            }
        } else {
            for (float& x : probe.data) x = dist(rng);
            for (std::size_t ci = 0; ci < c; ++ci) {
                for (std::size_t ki = 0; ki < k; ++ki) {
                    std::copy_n(probe.data.begin() + ci * hw, hw, window.data.begin() + (ci * k + ki) * hw);
                }
            }
        }
        const Tensor e3 = patch_embed_3d(window, k3, bias);
        const Tensor e2 = patch_embed_2d(probe, kernel2d, bias);
        double worst = 0.0;
        for (std::size_t i = 0; i < e3.size(); ++i) {
            const double diff = std::abs(static_cast<double>(e3.data[i]) - static_cast<double>(e2.data[i]));
            worst = std::max(worst, diff / (1.0 + std::abs(static_cast<double>(e2.data[i]))));
        }
        const char* name = strategy == InflationStrategy::centering
                               ? "embedding of any window equals the 2D embedding of its center slice"
                               : "embedding of a constant-depth window equals the 2D embedding";
        report(name, worst <= 1e-5, worst, 1e-5);
    }

    {
        const Checkpoint back = read_archive(write_archive(ckpt));
        bool same = back.metadata == ckpt.metadata && back.tensors.size() == ckpt.tensors.size();
        for (const auto& [name, t] : ckpt.tensors) same = same && back.has(name) && back.tensor(name).bit_equal(t);
        report("round-trip serialization is bit-exact", same, same ? 0.0 : 1.0, 0.0);
    }

    return all_pass ? 0 : 4;
}

// The equivalence suite behind `verify`: embedding-level checks of the
// inflation claims plus a serialization round trip, printed one line per
// property.
int run_verify(const VerifyArgs& a) {
    Checkpoint ckpt;
    ViTConfig cfg;
    if (!a.checkpoint_path.empty()) {
        ckpt = load_checkpoint(a.checkpoint_path);
        cfg = a.config_path.empty() ? infer_config(ckpt) : load_config_file(a.config_path);
        check_checkpoint(ckpt, cfg);
    } else {
        if (a.config_path.empty()) {
            throw Error(errc::bad_argument, "verify needs a checkpoint, a --config to generate one, or both");
        }
        cfg = load_config_file(a.config_path);
        ckpt = make_random_checkpoint(cfg, a.seed);
    }
    if (cfg.window_k > 1) return run_verify_inflated(ckpt, cfg, a.seed);

    std::mt19937_64 rng(a.seed ^ 0x9e3779b97f4a7c15ull);
    auto uniform = [&rng](float lo, float hi) {
        std::uniform_real_distribution<float> dist(lo, hi);
        return dist(rng);
    };

    Tensor kernel2d = ckpt.tensor("embed.kernel");
    if (kernel2d.rank() == 5) {
        kernel2d = kernel2d.reshaped({kernel2d.shape[0], kernel2d.shape[1], kernel2d.shape[3], kernel2d.shape[4]});
    }
    const Tensor& bias = ckpt.tensor("embed.bias");
    const std::size_t c = cfg.in_channels, h = cfg.image_h, w = cfg.image_w, k = a.depth;

    bool all_pass = true;
    auto report = [&all_pass](const char* name, bool pass, double worst, double tol) {
        all_pass = all_pass && pass;
        std::cout << (pass ? "PASS" : "FAIL") << " " << name << " (max deviation " << worst << ", tolerance " << tol
                  << ")\n";
    };

    {
        const auto bytes = write_archive(ckpt);
        const Checkpoint back = read_archive(bytes);
        bool same = back.metadata == ckpt.metadata && back.tensors.size() == ckpt.tensors.size();
        for (const auto& [name, t] : ckpt.tensors) same = same && back.has(name) && back.tensor(name).bit_equal(t);
        report("round-trip serialization is bit-exact", same, same ? 0.0 : 1.0, 0.0);
    }

    {
        InflationSpec spec;
        spec.strategy = InflationStrategy::centering;
        spec.depth = k;
        const Tensor k3 = inflate_kernel(kernel2d, spec);
        Tensor window({c, k, h, w});
        for (float& x : window.data) x = uniform(-2.0f, 2.0f);
        Tensor center({c, h, w});
        const std::size_t mid = center_index(k).index;
        for (std::size_t ci = 0; ci < c; ++ci) {
            std::copy_n(window.data.begin() + (ci * k + mid) * h * w, h * w, center.data.begin() + ci * h * w);
        }
        double worst = 0.0;
        const Tensor e3 = patch_embed_3d(window, k3, bias);
        const Tensor e2 = patch_embed_2d(center, kernel2d, bias);
        for (std::size_t i = 0; i < e3.size(); ++i) {
            worst = std::max(worst, std::abs(static_cast<double>(e3.data[i]) - static_cast<double>(e2.data[i])));
        }
        report("centering inflation reproduces the 2D embedding of the center slice", worst <= 1e-6, worst, 1e-6);
    }

    {
        InflationSpec spec;
        spec.strategy = InflationStrategy::average;
        spec.depth = k;
        const Tensor k3 = inflate_kernel(kernel2d, spec);
        Tensor slice({c, h, w});
        for (float& x : slice.data) x = uniform(-2.0f, 2.0f);
        Tensor window({c, k, h, w});
        for (std::size_t ci = 0; ci < c; ++ci) {
            for (std::size_t ki = 0; ki < k; ++ki) {
                std::copy_n(slice.data.begin() + ci * h * w, h * w,
                            window.data.begin() + (ci * k + ki) * h * w);
            }
        }
        const Tensor e3 = patch_embed_3d(window, k3, bias);
        const Tensor e2 = patch_embed_2d(slice, kernel2d, bias);
        double worst = 0.0;
        for (std::size_t i = 0; i < e3.size(); ++i) {
            const double diff = std::abs(static_cast<double>(e3.data[i]) - static_cast<double>(e2.data[i]));
            worst = std::max(worst, diff / (1.0 + std::abs(static_cast<double>(e2.data[i]))));
        }
        report("average inflation replicates the 2D embedding on constant-depth windows", worst <= 1e-5, worst,
               1e-5);
    }

    if (c == 3) {
        Tensor gray({1, h, w});
        for (float& x : gray.data) x = uniform(-1.0f, 1.0f);
        Tensor rgb({3, h, w});
        for (std::size_t ci = 0; ci < 3; ++ci) {
            std::copy(gray.data.begin(), gray.data.end(), rgb.data.begin() + ci * h * w);
        }
        const Tensor lhs = patch_embed_2d(gray, collapse_channels(kernel2d), bias);
        const Tensor rhs = patch_embed_2d(rgb, kernel2d, bias);
        double worst = 0.0;
        for (std::size_t i = 0; i < lhs.size(); ++i) {
            worst = std::max(worst, std::abs(static_cast<double>(lhs.data[i]) - static_cast<double>(rhs.data[i])));
        }
        report("channel collapse preserves the embedding of gray inputs", worst <= 1e-6, worst, 1e-6);
    } else {
        std::cout << "SKIP channel collapse (checkpoint has " << c << " input channels, needs 3)\n";
    }

    {
        const Tensor base = c == 3 ? collapse_channels(kernel2d) : kernel2d;
        if (base.shape[1] == 1) {
            const std::size_t cc = 2;
            Tensor x({1, h, w});
            for (float& v : x.data) v = uniform(-1.0f, 1.0f);
            Tensor rep({cc, h, w});
            for (std::size_t ci = 0; ci < cc; ++ci) {
                std::copy(x.data.begin(), x.data.end(), rep.data.begin() + ci * h * w);
            }
            const Tensor lhs = patch_embed_2d(rep, expand_channels_average(base, cc), bias);
            const Tensor rhs = patch_embed_2d(x, base, bias);
            double worst = 0.0;
            for (std::size_t i = 0; i < lhs.size(); ++i) {
                worst =
                    std::max(worst, std::abs(static_cast<double>(lhs.data[i]) - static_cast<double>(rhs.data[i])));
            }
            report("channel expansion preserves the embedding of equal-channel inputs", worst <= 1e-6, worst, 1e-6);
        } else {
            std::cout << "SKIP channel expansion (kernel has " << base.shape[1] << " channels, needs 1 or 3)\n";
        }
    }

    {
        InflationSpec spec;
        spec.strategy = InflationStrategy::average;
        spec.depth = k;
        const Tensor k3 = inflate_kernel(kernel2d, spec);
        const std::size_t plane = cfg.patch_p * cfg.patch_p;
        double worst = 0.0;
        for (std::size_t dc = 0; dc < cfg.hidden_d * c; ++dc) {
            for (std::size_t i = 0; i < plane; ++i) {
                double sum = 0.0;
                for (std::size_t ki = 0; ki < k; ++ki) sum += k3.data[(dc * k + ki) * plane + i];
                worst = std::max(worst, std::abs(sum - kernel2d.data[dc * plane + i]));
            }
        }
        report("average-inflated kernel sums to the original over depth", worst <= 1e-6, worst, 1e-6);
    }

    return all_pass ? 0 : 4;
}

struct FlopsArgs {
    std::string config_path, compare_path, args_path;
};

json flops_json(const ViTConfig& cfg) {
    const FlopBreakdown f = count_flops(cfg, true);
    return {{"embedding", f.embedding}, {"per_layer", f.per_layer}, {"encoder_total", f.encoder_total},
            {"head", f.head},           {"total", f.total},         {"tokens", cfg.tokens()}};
}

int run_flops(const FlopsArgs& a) {
    const ViTConfig cfg = load_config_file(a.config_path);
    json out;
    out["config"] = flops_json(cfg);
    if (!a.compare_path.empty()) {
        const ViTConfig other = load_config_file(a.compare_path);
        out["compare"] = flops_json(other);
        out["ratio_encoder"] = static_cast<double>(count_flops(other, false).encoder_total) /
                               static_cast<double>(count_flops(cfg, false).encoder_total);
        out["ratio_total"] = static_cast<double>(count_flops(other, true).total) /
                             static_cast<double>(count_flops(cfg, true).total);
    }
    std::cout << out.dump(2) << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"2D-to-3D vision-Transformer weight inflation and windowed center-slice segmentation"};
    app.require_subcommand(1);

    InflateArgs infl;
    CLI::App* inflate = app.add_subcommand("inflate", "Inflate a 2D checkpoint to 3D input geometry");
    inflate->add_option("input", infl.input, "source .tns archive")->required();
    inflate->add_option("output", infl.output, "destination .tns archive")->required();
    inflate->add_option("--strategy", infl.strategy, "average|centering|random")->capture_default_str();
    inflate->add_option("--depth", infl.depth, "window depth K")->capture_default_str();
    inflate->add_option("--channels", infl.channels, "keep|collapse|average:C")->capture_default_str();
    inflate->add_option("--seed", infl.seed, "seed for the random strategy")->capture_default_str();
    inflate->add_option("--config", infl.config_path, "2D model config JSON (inferred from shapes when absent)");
    inflate->add_option("--rename", infl.rename_path, "JSON map of foreign tensor names to canonical names");
    inflate->add_option("--args", infl.args_path, "JSON file whose keys mirror this subcommand's flags");

    PredictArgs pred;
    CLI::App* predict = app.add_subcommand("predict", "Segment a volume with windowed center-slice inference");
    predict->add_option("model", pred.model, "model .tns archive")->required();
    predict->add_option("volume", pred.volume, "input .vol volume")->required();
    predict->add_option("output", pred.output, "output .msk mask")->required();
    predict->add_option("--config", pred.config_path, "model config JSON (falls back to checkpoint metadata)");
    predict->add_option("--window", pred.window, "window size K (default: model's kernel depth)");
    predict->add_option("--stride", pred.stride, "slice spacing within a window")->capture_default_str();
    predict->add_option("--target", pred.target, "center|all")->capture_default_str();
    predict->add_option("--clip", pred.clip, "intensity clip 'lo:hi' or 'max' (default from volume metadata)");
    predict->add_option("--threads", pred.threads, "worker threads over windows (0 = auto)")->capture_default_str();
    predict->add_option("--args", pred.args_path, "JSON file whose keys mirror this subcommand's flags");

    EvaluateArgs eval;
    CLI::App* evaluate = app.add_subcommand("evaluate", "Dice report of a predicted mask against a label");
    evaluate->add_option("pred", eval.pred, "predicted .msk")->required();
    evaluate->add_option("label", eval.label, "ground-truth .msk")->required();
    evaluate->add_option("--classes", eval.classes, "class ids to evaluate")->required()->delimiter(',');
    evaluate->add_option("--out", eval.out_path, "write the JSON report here instead of stdout");
    evaluate->add_option("--args", eval.args_path, "JSON file whose keys mirror this subcommand's flags");

    VerifyArgs verif;
    CLI::App* verify = app.add_subcommand("verify", "Run the inflation equivalence suite");
    verify->add_option("checkpoint", verif.checkpoint_path, "2D .tns archive (omit to generate one)");
    verify->add_option("--config", verif.config_path, "model config JSON");
    verify->add_option("--depth", verif.depth, "window depth K exercised by the checks")->capture_default_str();
    verify->add_option("--seed", verif.seed, "seed for generated weights and probe inputs")->capture_default_str();
    verify->add_option("--args", verif.args_path, "JSON file whose keys mirror this subcommand's flags");

    FlopsArgs flops;
    CLI::App* flops_cmd = app.add_subcommand("flops", "Analytical FLOPs of a config");
    flops_cmd->add_option("--config", flops.config_path, "model config JSON")->required();
    flops_cmd->add_option("--compare", flops.compare_path, "second config; also prints ratios");
    flops_cmd->add_option("--args", flops.args_path, "JSON file whose keys mirror this subcommand's flags");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }

    try {
        if (inflate->parsed()) apply_args_file(inflate, infl.args_path);
        if (predict->parsed()) apply_args_file(predict, pred.args_path);
        if (evaluate->parsed()) apply_args_file(evaluate, eval.args_path);
        if (verify->parsed()) apply_args_file(verify, verif.args_path);
        if (flops_cmd->parsed()) apply_args_file(flops_cmd, flops.args_path);

        if (inflate->parsed()) return run_inflate(infl);
        if (predict->parsed()) return run_predict(pred);
        if (evaluate->parsed()) return run_evaluate(eval);
        if (verify->parsed()) return run_verify(verif);
        if (flops_cmd->parsed()) return run_flops(flops);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 1;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
