// Acceptance suite: one check per release criterion, each printed as a
// PASS/FAIL line. Exits nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <vector>

#include <json.hpp>

#include "vitseg/checkpoint.hpp"
#include "vitseg/inflate.hpp"
#include "vitseg/metrics.hpp"
#include "vitseg/pipeline.hpp"
#include "vitseg/reference.hpp"
#include "vitseg/vit.hpp"
#include "test_util.hpp"

using namespace vitseg;
using Clock = std::chrono::steady_clock;

namespace {

struct Criterion {
    std::string name;
    bool pass = true;
    std::string detail;
    double seconds = 0.0;
};

double rel_diff(const Tensor& a, const Tensor& b) { return testutil::max_rel_diff(a, b); }

ViTConfig pick_tiny_config(std::mt19937& rng, std::size_t window_k) {
    std::uniform_int_distribution<int> coin(0, 1);
    ViTConfig cfg;
    cfg.hidden_d = coin(rng) ? 8 : 16;
    cfg.layers_l = 1 + coin(rng);
    cfg.heads = 2;
    const std::size_t grid = 2 + static_cast<std::size_t>(rng() % 3); // T in {4, 9, 16}
    cfg.patch_p = 1 + static_cast<std::size_t>(rng() % 2);
    cfg.image_h = cfg.image_w = grid * cfg.patch_p;
    cfg.in_channels = coin(rng) ? 1 : 3;
    cfg.window_k = window_k;
    cfg.mlp_ratio = 2;
    cfg.num_classes = 2 + static_cast<std::size_t>(rng() % 3);
    return cfg;
}

Volume random_ct_volume(std::mt19937& rng, const ViTConfig& cfg, std::size_t depth) {
    std::vector<std::size_t> shape = cfg.in_channels == 1
                                         ? std::vector<std::size_t>{cfg.image_h, cfg.image_w, depth}
                                         : std::vector<std::size_t>{cfg.in_channels, cfg.image_h, cfg.image_w, depth};
    Volume v = testutil::random_volume(rng, shape, -300.0f, 400.0f, "CT");
    v.clip_range = {{-175.0f, 250.0f}};
    return v;
}

Tensor slice_of(const Volume& v, std::size_t d) {
    const std::size_t c = v.channels(), h = v.height(), w = v.width();
    Tensor out({c, h, w});
    for (std::size_t ci = 0; ci < c; ++ci) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) out.data[(ci * h + y) * w + x] = v.at(ci, y, x, d);
        }
    }
    return out;
}

Tensor kernel2d_of(const Checkpoint& ckpt) {
    Tensor k = ckpt.tensor("embed.kernel");
    if (k.rank() == 5) k = k.reshaped({k.shape[0], k.shape[1], k.shape[3], k.shape[4]});
    return k;
}

// ---- criterion 1: centering equivalence over the full pipeline -------------

Criterion centering_equivalence() {
    Criterion c{"centering equivalence (20 tiny configs, logits 1e-5 rel, masks bit-equal)"};
    const auto t0 = Clock::now();
    double worst = 0.0;
    const auto pp = PreprocessSpec::fixed(-175.0f, 250.0f);
    for (std::uint32_t run = 0; run < 20 && c.pass; ++run) {
        std::mt19937 rng(1000 + run);
        const std::size_t k = run % 2 ? 3 : 5;
        ViTConfig cfg2d = pick_tiny_config(rng, 1);
        Checkpoint ckpt2d = make_random_checkpoint(cfg2d, run);
        InflationSpec spec;
        spec.strategy = InflationStrategy::centering;
        spec.depth = k;
        Checkpoint ckpt3d = inflate_checkpoint(ckpt2d, cfg2d, spec);
        ViTConfig cfg3d = inflated_config(cfg2d, spec);

        const std::size_t depth = 2 + run % 4;
        Volume vol = random_ct_volume(rng, cfg2d, depth);
        const Volume prepped = preprocess(vol, pp);

        WindowSpec w;
        w.size = k;
        const Tensor k3 = ckpt3d.tensor("embed.kernel");
        const Tensor k2 = kernel2d_of(ckpt2d);
        const Tensor& bias = ckpt2d.tensor("embed.bias");
        for (const ExtractedWindow& win : extract_windows(prepped, w)) {
            Tensor logits3 =
                decode(encoder_forward(EncoderState{patch_embed_3d(win.voxels, k3, bias)}, ckpt3d, cfg3d).tokens,
                       cfg3d, ckpt3d);
            Tensor logits2 = decode(
                encoder_forward(EncoderState{patch_embed_2d(slice_of(prepped, win.center_slice), k2, bias)}, ckpt2d,
                                cfg2d)
                    .tokens,
                cfg2d, ckpt2d);
            worst = std::max(worst, rel_diff(logits3, logits2));
        }

        const SegmentationMask m3 = predict_volume(vol, ckpt3d, cfg3d, w, pp);
        const SegmentationMask m2 = predict_volume_2d(vol, ckpt2d, cfg2d, pp);
        if (m3.data != m2.data) {
            c.pass = false;
            c.detail = "argmax masks differ on run " + std::to_string(run);
        }
    }
    c.pass = c.pass && worst <= 1e-5;
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    c.pass = c.pass && secs < 30.0;
    c.seconds = secs;
    if (c.detail.empty()) c.detail = "worst logits rel diff " + std::to_string(worst);
    return c;
}

// ---- criterion 2: average replication on constant-depth volumes ------------

Criterion average_replication() {
    Criterion c{"average replication (identical-slice windows, logits 1e-5 rel)"};
    const auto t0 = Clock::now();
    double worst = 0.0;
    const auto pp = PreprocessSpec::fixed(-175.0f, 250.0f);
    for (std::uint32_t run = 0; run < 20; ++run) {
        std::mt19937 rng(2000 + run);
        const std::size_t k = run % 2 ? 3 : 5;
        ViTConfig cfg2d = pick_tiny_config(rng, 1);
        Checkpoint ckpt2d = make_random_checkpoint(cfg2d, run);
        InflationSpec spec;
        spec.strategy = InflationStrategy::average;
        spec.depth = k;
        Checkpoint ckpt3d = inflate_checkpoint(ckpt2d, cfg2d, spec);
        ViTConfig cfg3d = inflated_config(cfg2d, spec);

        const std::size_t depth = 3 + run % 3;
        Volume vol = random_ct_volume(rng, cfg2d, depth);
        // replicate slice 0 along depth so every window sees identical slices
        for (std::size_t ci = 0; ci < vol.channels(); ++ci) {
            for (std::size_t y = 0; y < vol.height(); ++y) {
                for (std::size_t x = 0; x < vol.width(); ++x) {
                    const float v0 = vol.at(ci, y, x, 0);
                    for (std::size_t d = 1; d < depth; ++d) {
                        vol.data[(ci * vol.height() + y) * vol.width() * depth + x * depth + d] = v0;
                    }
                }
            }
        }
        const Volume prepped = preprocess(vol, pp);

        WindowSpec w;
        w.size = k;
        const Tensor k3 = ckpt3d.tensor("embed.kernel");
        const Tensor k2 = kernel2d_of(ckpt2d);
        const Tensor& bias = ckpt2d.tensor("embed.bias");
        for (const ExtractedWindow& win : extract_windows(prepped, w)) {
            Tensor logits3 =
                decode(encoder_forward(EncoderState{patch_embed_3d(win.voxels, k3, bias)}, ckpt3d, cfg3d).tokens,
                       cfg3d, ckpt3d);
            Tensor logits2 = decode(
                encoder_forward(EncoderState{patch_embed_2d(slice_of(prepped, win.center_slice), k2, bias)}, ckpt2d,
                                cfg2d)
                    .tokens,
                cfg2d, ckpt2d);
            worst = std::max(worst, rel_diff(logits3, logits2));
        }
    }
    c.pass = worst <= 1e-5;
    c.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    c.detail = "worst logits rel diff " + std::to_string(worst);
    return c;
}

// ---- criterion 3: channel equivalences against the conv oracle -------------

Criterion channel_equivalence() {
    Criterion c{"channel collapse/expand equivalence (50 kernels, 1e-6 abs, conv oracle)"};
    const auto t0 = Clock::now();
    double worst = 0.0;
    std::mt19937 rng(3000);
    for (int run = 0; run < 50; ++run) {
        const std::size_t p = 1 + rng() % 4;
        const std::size_t g = 1 + rng() % 3;
        const std::size_t dh = 2 + rng() % 6;
        Tensor kernel = testutil::random_tensor(rng, {dh, 3, p, p});
        Tensor bias = testutil::random_tensor(rng, {dh});

        Tensor gray = testutil::random_tensor(rng, {1, g * p, g * p});
        Tensor rgb({3, g * p, g * p});
        for (std::size_t ci = 0; ci < 3; ++ci) {
            std::copy(gray.data.begin(), gray.data.end(), rgb.data.begin() + ci * gray.size());
        }
        const Tensor collapsed = collapse_channels(kernel);
        worst = std::max(worst, testutil::max_abs_diff(ref::conv_patch_embed_2d(gray, collapsed, bias),
                                                       ref::conv_patch_embed_2d(rgb, kernel, bias)));
        worst = std::max(worst, testutil::max_abs_diff(patch_embed_2d(gray, collapsed, bias),
                                                       ref::conv_patch_embed_2d(rgb, kernel, bias)));

        const std::size_t cc = 2 + rng() % 3;
        const Tensor expanded = expand_channels_average(collapsed, cc);
        Tensor rep({cc, g * p, g * p});
        for (std::size_t ci = 0; ci < cc; ++ci) {
            std::copy(gray.data.begin(), gray.data.end(), rep.data.begin() + ci * gray.size());
        }
        worst = std::max(worst, testutil::max_abs_diff(ref::conv_patch_embed_2d(rep, expanded, bias),
                                                       ref::conv_patch_embed_2d(gray, collapsed, bias)));
        worst = std::max(worst, testutil::max_abs_diff(patch_embed_2d(rep, expanded, bias),
                                                       ref::conv_patch_embed_2d(gray, collapsed, bias)));
    }
    c.pass = worst <= 1e-6;
    c.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    c.detail = "worst abs diff " + std::to_string(worst);
    return c;
}

// ---- criterion 4: inflation compute-cost claim ------------------------------

Criterion flops_claim() {
    Criterion c{"FLOPs ratio of base config (C=3,K=1) vs (C=1,K=5) in [1.001, 1.015]"};
    const auto t0 = Clock::now();
    ViTConfig before;
    before.num_classes = 14;
    ViTConfig after = before;
    after.in_channels = 1;
    after.window_k = 5;
    const double ratio = static_cast<double>(count_flops(after, false).encoder_total) /
                         static_cast<double>(count_flops(before, false).encoder_total);
    const double reported_lo = 1.001, reported_hi = 1.015;
    const double paper_point = 215.0 / 213.3;
    c.pass = ratio >= reported_lo && ratio <= reported_hi && paper_point >= reported_lo && paper_point <= reported_hi;
    c.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    char buf[128];
    std::snprintf(buf, sizeof(buf), "ratio %.6f, paper point %.6f, band [%.3f, %.3f]", ratio, paper_point,
                  reported_lo, reported_hi);
    c.detail = buf;
    return c;
}

// ---- criterion 5: serialization round trips and corruption taxonomy --------

errc thrown_kind(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    throw std::runtime_error("expected a format error");
}

std::vector<std::uint8_t> craft(const nlohmann::json& header, std::size_t payload_bytes) {
    const std::string h = header.dump();
    std::vector<std::uint8_t> bytes;
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>((h.size() >> (8 * i)) & 0xff));
    bytes.insert(bytes.end(), h.begin(), h.end());
    bytes.insert(bytes.end(), payload_bytes, 0);
    return bytes;
}

nlohmann::json meta_only_with(const std::string& name, nlohmann::json entry) {
    nlohmann::json h = {{"__metadata__", nlohmann::json::object()}};
    h[name] = std::move(entry);
    return h;
}

nlohmann::json meta_only_with2(const std::string& a, nlohmann::json ea, const std::string& b, nlohmann::json eb) {
    nlohmann::json h = meta_only_with(a, std::move(ea));
    h[b] = std::move(eb);
    return h;
}

Criterion serialization() {
    Criterion c{"serialization: 200 bit-exact round trips, 20 corrupted buffers typed"};
    const auto t0 = Clock::now();
    std::mt19937 rng(4000);
    std::uniform_int_distribution<int> dim(1, 6);

    int round_trips = 0;
    for (int run = 0; run < 100; ++run) {
        Checkpoint ckpt;
        ckpt.metadata["format_version"] = "1";
        if (run % 3 == 0) ckpt.metadata["source"] = "acceptance " + std::to_string(run);
        const int n = run % 7;
        for (int i = 0; i < n; ++i) {
            std::vector<std::size_t> shape;
            for (int r = 0; r < dim(rng) % 4 + 1; ++r) shape.push_back(static_cast<std::size_t>(dim(rng)));
            ckpt.tensors.emplace("tensor" + std::to_string(i), testutil::random_tensor(rng, shape, -50.0f, 50.0f));
        }
        const auto bytes = write_archive(ckpt);
        const Checkpoint back = read_archive(bytes);
        bool same = back.metadata == ckpt.metadata && back.tensors.size() == ckpt.tensors.size();
        for (const auto& [name, t] : ckpt.tensors) same = same && back.has(name) && back.tensor(name).bit_equal(t);
        same = same && write_archive(back) == bytes;
        if (!same) {
            c.pass = false;
            c.detail = "checkpoint round trip " + std::to_string(run) + " not bit-exact";
            break;
        }
        ++round_trips;
    }
    for (int run = 0; run < 50 && c.pass; ++run) {
        Volume v = testutil::random_volume(rng, {static_cast<std::size_t>(dim(rng)), static_cast<std::size_t>(dim(rng)),
                                                 static_cast<std::size_t>(dim(rng))},
                                           -1000.0f, 1000.0f, run % 2 ? "CT" : "MRI");
        if (run % 3 == 0) v.clip_range = {{-175.0f, 250.0f}};
        const Volume back = read_volume(write_volume(v));
        if (std::memcmp(back.data.data(), v.data.data(), v.data.size() * sizeof(float)) != 0 ||
            back.shape != v.shape || back.modality != v.modality || back.clip_range != v.clip_range) {
            c.pass = false;
            c.detail = "volume round trip " + std::to_string(run) + " not bit-exact";
        }
        ++round_trips;
    }
    for (int run = 0; run < 50 && c.pass; ++run) {
        SegmentationMask m = testutil::random_mask(rng, static_cast<std::size_t>(dim(rng)),
                                                   static_cast<std::size_t>(dim(rng)),
                                                   static_cast<std::size_t>(dim(rng)), 1 + rng() % 14);
        const SegmentationMask back = read_mask(write_volume(m));
        if (back.data != m.data || back.shape != m.shape || back.num_classes != m.num_classes) {
            c.pass = false;
            c.detail = "mask round trip " + std::to_string(run) + " not bit-exact";
        }
        ++round_trips;
    }

    // 20 corrupted buffers, each expected to raise its documented kind
    using nlohmann::json;
    Checkpoint good;
    good.tensors.emplace("w", Tensor({2}, {1.0f, 2.0f}));
    const auto good_bytes = write_archive(good);
    SegmentationMask gm;
    gm.shape = {1, 1, 2};
    gm.data = {0, 1};
    gm.num_classes = 2;
    const auto mask_bytes = write_volume(gm);
    Volume gv;
    gv.shape = {1, 1, 2};
    gv.data = {0.0f, 1.0f};
    const auto vol_bytes = write_volume(gv);

    const json meta_only = {{"__metadata__", json::object()}};
    std::vector<std::pair<std::function<void()>, errc>> cases;
    auto add = [&cases](std::function<void()> f, errc want) { cases.emplace_back(std::move(f), want); };

    // truncations
    add([] { read_archive(std::vector<std::uint8_t>{}); }, errc::truncated);
    add([&] { read_archive({good_bytes.begin(), good_bytes.begin() + 4}); }, errc::truncated);
    add([&] { read_archive({good_bytes.begin(), good_bytes.begin() + 10}); }, errc::truncated);
    add([&] {
        auto b = good_bytes;
        b[0] = 0xff; // declared header far beyond the buffer
        read_archive(b);
    }, errc::truncated);
    // malformed headers
    add([&] {
        auto b = good_bytes;
        b[8] = '!';
        read_archive(b);
    }, errc::bad_json);
    add([] { read_archive(craft(json::array({1, 2, 3}), 0)); }, errc::bad_json);
    add([] {
        json h = meta_only_with("w", {{"dtype", "F32"}, {"shape", {2}}});
        read_archive(craft(h, 8));
    }, errc::bad_json);
    add([] {
        json h = {{"__metadata__", {{"k", 5}}}};
        read_archive(craft(h, 0));
    }, errc::bad_json);
    // offset/shape inconsistencies
    add([] {
        json h = meta_only_with("w", {{"dtype", "F32"}, {"shape", {3}}, {"data_offsets", {0, 8}}});
        read_archive(craft(h, 8));
    }, errc::offset_mismatch);
    add([] {
        json h = meta_only_with("w", {{"dtype", "F32"}, {"shape", {4}}, {"data_offsets", {0, 16}}});
        read_archive(craft(h, 8));
    }, errc::offset_mismatch);
    add([] {
        json h = meta_only_with("w", {{"dtype", "F32"}, {"shape", {1}}, {"data_offsets", {8, 4}}});
        read_archive(craft(h, 12));
    }, errc::offset_mismatch);
    add([] {
        json h = meta_only_with("w", {{"dtype", "F32"}, {"shape", {-2}}, {"data_offsets", {0, 8}}});
        read_archive(craft(h, 8));
    }, errc::offset_mismatch);
    add([&] {
        auto b = vol_bytes;
        b.pop_back();
        read_volume(b);
    }, errc::offset_mismatch);
    // overlaps
    add([] {
        json h = meta_only_with2("a", {{"dtype", "F32"}, {"shape", {2}}, {"data_offsets", {0, 8}}}, "b",
                                 {{"dtype", "F32"}, {"shape", {2}}, {"data_offsets", {4, 12}}});
        read_archive(craft(h, 12));
    }, errc::overlap);
    add([] {
        json h = meta_only_with2("a", {{"dtype", "F32"}, {"shape", {1}}, {"data_offsets", {0, 4}}}, "b",
                                 {{"dtype", "F32"}, {"shape", {1}}, {"data_offsets", {0, 4}}});
        read_archive(craft(h, 4));
    }, errc::overlap);
    // dtypes
    add([] {
        json h = meta_only_with("w", {{"dtype", "F16"}, {"shape", {2}}, {"data_offsets", {0, 4}}});
        read_archive(craft(h, 4));
    }, errc::unsupported_dtype);
    add([] {
        json h = meta_only_with("w", {{"dtype", "I64"}, {"shape", {1}}, {"data_offsets", {0, 8}}});
        read_archive(craft(h, 8));
    }, errc::unsupported_dtype);
    add([&] { read_archive(mask_bytes); }, errc::unsupported_dtype); // U16 payload in a weights archive
    // semantic validation
    add([&] { read_mask(vol_bytes); }, errc::validation); // wrong container kind
    add([&] {
        auto b = mask_bytes;
        const std::string needle = "\"num_classes\":\"2\"";
        const std::string patch = "\"num_classes\":\"1\"";
        auto it = std::search(b.begin(), b.end(), needle.begin(), needle.end());
        std::copy(patch.begin(), patch.end(), it);
        read_mask(b); // voxel value 1 now exceeds num_classes
    }, errc::validation);

    int checked = 0;
    for (const auto& [f, want] : cases) {
        const errc got = thrown_kind(f);
        if (got != want) {
            c.pass = false;
            c.detail = "corruption case " + std::to_string(checked) + " raised '" + errc_name(got) + "', wanted '" +
                       errc_name(want) + "'";
            break;
        }
        ++checked;
    }
    if (c.detail.empty()) {
        c.detail = std::to_string(round_trips) + " round trips, " + std::to_string(checked) + " corruptions typed";
    }
    c.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return c;
}

// ---- criterion 6: window bookkeeping and locality ---------------------------

Criterion window_bookkeeping() {
    Criterion c{"window bookkeeping (index oracle sweep + center-only locality)"};
    const auto t0 = Clock::now();
    std::mt19937 rng(6000);
    for (std::size_t depth = 1; depth <= 12 && c.pass; ++depth) {
        for (std::size_t k : {1, 3, 5}) {
            for (std::size_t s : {1, 2, 3}) {
                WindowSpec w;
                w.size = k;
                w.dilation = s;
                Volume v = testutil::random_volume(rng, {2, 2, depth});
                const auto windows = extract_windows(v, w);
                if (windows.size() != depth) {
                    c.pass = false;
                    c.detail = "window count != depth";
                    break;
                }
                for (std::size_t d = 0; d < depth; ++d) {
                    if (window_slice_indices(d, depth, w) != ref::window_indices(d, depth, k, s)) {
                        c.pass = false;
                        c.detail = "index mismatch at depth " + std::to_string(depth);
                    }
                }
            }
        }
    }

    // locality: perturbing slices outside window d leaves mask slice d alone
    const auto pp = PreprocessSpec::fixed(-175.0f, 250.0f);
    for (std::uint32_t run = 0; run < 4 && c.pass; ++run) {
        std::mt19937 lrng(6100 + run);
        ViTConfig cfg2d = pick_tiny_config(lrng, 1);
        Checkpoint ckpt2d = make_random_checkpoint(cfg2d, run);
        InflationSpec spec;
        spec.strategy = run % 2 ? InflationStrategy::centering : InflationStrategy::average;
        spec.depth = run % 2 ? 3 : 5;
        Checkpoint ckpt3d = inflate_checkpoint(ckpt2d, cfg2d, spec);
        ViTConfig cfg3d = inflated_config(cfg2d, spec);
        WindowSpec w;
        w.size = spec.depth;
        w.dilation = 1 + run % 2;

        const std::size_t depth = 9;
        Volume vol = random_ct_volume(lrng, cfg2d, depth);
        const SegmentationMask base = predict_volume(vol, ckpt3d, cfg3d, w, pp);

        const std::size_t d = 4;
        const auto covered = window_slice_indices(d, depth, w);
        Volume perturbed = vol;
        std::uniform_real_distribution<float> dist(-300.0f, 400.0f);
        for (std::size_t z = 0; z < depth; ++z) {
            if (std::find(covered.begin(), covered.end(), z) != covered.end()) continue;
            for (std::size_t ci = 0; ci < vol.channels(); ++ci) {
                for (std::size_t y = 0; y < vol.height(); ++y) {
                    for (std::size_t x = 0; x < vol.width(); ++x) {
                        perturbed.data[((ci * vol.height() + y) * vol.width() + x) * depth + z] = dist(lrng);
                    }
                }
            }
        }
        const SegmentationMask moved = predict_volume(perturbed, ckpt3d, cfg3d, w, pp);
        for (std::size_t y = 0; y < base.height(); ++y) {
            for (std::size_t x = 0; x < base.width(); ++x) {
                if (moved.at(y, x, d) != base.at(y, x, d)) {
                    c.pass = false;
                    c.detail = "slice " + std::to_string(d) + " changed under outside perturbation";
                }
            }
        }
    }
    if (c.detail.empty()) c.detail = "108 (D,K,s) combinations + 4 locality probes";
    c.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return c;
}

// ---- criterion 7: metrics against the voxel-set oracle ---------------------

Criterion metrics_oracle() {
    Criterion c{"metrics match the voxel-set oracle on 100 masks + endpoint cases"};
    const auto t0 = Clock::now();
    std::mt19937 rng(7000);
    for (int run = 0; run < 100 && c.pass; ++run) {
        const std::size_t h = 2 + rng() % 4, w = 2 + rng() % 4, d = 2 + rng() % 4;
        const std::uint32_t nc = 2 + rng() % 3;
        SegmentationMask pred = testutil::random_mask(rng, h, w, d, nc);
        SegmentationMask label = testutil::random_mask(rng, h, w, d, nc);
        for (std::uint16_t cls = 0; cls < nc && c.pass; ++cls) {
            if (dice(pred, label, cls) != ref::dice(pred, label, cls)) {
                c.pass = false;
                c.detail = "dice mismatch on run " + std::to_string(run);
            }
            const auto [voxels, slices] = ref::class_stats(label, cls);
            const ClassStats stats = class_stats(label, cls);
            if (stats.voxels != voxels || stats.slices != slices) {
                c.pass = false;
                c.detail = "class stats mismatch on run " + std::to_string(run);
            }
            try {
                const double ours = slice_variation(label, cls);
                if (ours != ref::slice_variation(label, cls, false)) {
                    c.pass = false;
                    c.detail = "slice variation mismatch on run " + std::to_string(run);
                }
            } catch (const Error& e) {
                if (e.kind() != errc::undefined_metric) throw;
            }
        }
        std::vector<std::uint16_t> classes;
        for (std::uint16_t cls = 1; cls < nc; ++cls) classes.push_back(cls);
        double want = 0.0;
        for (std::uint16_t cls : classes) want += ref::dice(pred, label, cls);
        want /= static_cast<double>(classes.size());
        if (mean_dice(pred, label, classes) != want) {
            c.pass = false;
            c.detail = "mean dice mismatch on run " + std::to_string(run);
        }
    }

    if (c.pass) {
        SegmentationMask a;
        a.shape = {2, 2, 2};
        a.data = {1, 0, 1, 0, 0, 0, 0, 0};
        a.num_classes = 2;
        SegmentationMask b = a;
        for (auto& v : b.data) v = static_cast<std::uint16_t>(1 - v);
        SegmentationMask empty = a;
        std::fill(empty.data.begin(), empty.data.end(), std::uint16_t{0});
        const bool endpoints = dice(a, a, 1) == 1.0 && dice(a, b, 1) == 0.0 && dice(empty, empty, 1) == 1.0;
        if (!endpoints) {
            c.pass = false;
            c.detail = "endpoint cases failed";
        }
    }
    if (c.detail.empty()) c.detail = "dice, mean, slice variation and stats all exact";
    c.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return c;
}

// ---- criterion 8: K=1 degeneracy --------------------------------------------

Criterion k1_degeneracy() {
    Criterion c{"K=1 pipeline bit-identical to the 2D pipeline (10 models)"};
    const auto t0 = Clock::now();
    const auto pp = PreprocessSpec::fixed(-175.0f, 250.0f);
    for (std::uint32_t run = 0; run < 10 && c.pass; ++run) {
        std::mt19937 rng(8000 + run);
        ViTConfig cfg = pick_tiny_config(rng, 1);
        Checkpoint ckpt = make_random_checkpoint(cfg, run);
        if (run % 2) { // store the kernel in its rank-5 depth-1 form as well
            Tensor k = ckpt.tensors.at("embed.kernel");
            ckpt.tensors.at("embed.kernel") =
                k.reshaped({k.shape[0], k.shape[1], 1, k.shape[2], k.shape[3]});
        }
        Volume vol = random_ct_volume(rng, cfg, 2 + run % 5);
        WindowSpec w;
        w.size = 1;
        const SegmentationMask m3 = predict_volume(vol, ckpt, cfg, w, pp);
        const SegmentationMask m2 = predict_volume_2d(vol, ckpt, cfg, pp);
        if (m3.data != m2.data || m3.shape != m2.shape) {
            c.pass = false;
            c.detail = "masks differ on run " + std::to_string(run);
        }
    }
    if (c.detail.empty()) c.detail = "all masks bit-identical";
    c.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return c;
}

// ---- criterion 9: determinism across thread counts --------------------------

Criterion thread_determinism() {
    Criterion c{"predict with 1 and 8 threads produces identical masks (5 volumes)"};
    const auto t0 = Clock::now();
    const auto pp = PreprocessSpec::fixed(-175.0f, 250.0f);
    for (std::uint32_t run = 0; run < 5 && c.pass; ++run) {
        std::mt19937 rng(9000 + run);
        ViTConfig cfg2d = pick_tiny_config(rng, 1);
        Checkpoint ckpt2d = make_random_checkpoint(cfg2d, run);
        InflationSpec spec;
        spec.strategy = InflationStrategy::centering;
        spec.depth = 3;
        Checkpoint ckpt3d = inflate_checkpoint(ckpt2d, cfg2d, spec);
        ViTConfig cfg3d = inflated_config(cfg2d, spec);
        WindowSpec w;
        w.size = 3;
        w.target = run % 2 ? PredictionTarget::all_slices : PredictionTarget::center_only;

        Volume vol = random_ct_volume(rng, cfg2d, 6 + run);
        const SegmentationMask one = predict_volume(vol, ckpt3d, cfg3d, w, pp, 1);
        const SegmentationMask eight = predict_volume(vol, ckpt3d, cfg3d, w, pp, 8);
        if (one.data != eight.data) {
            c.pass = false;
            c.detail = "thread counts disagree on run " + std::to_string(run);
        }
    }
    if (c.detail.empty()) c.detail = "identical under both thread counts";
    c.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return c;
}

} // namespace

int main() {
    std::vector<Criterion> results;
    results.push_back(centering_equivalence());
    results.push_back(average_replication());
    results.push_back(channel_equivalence());
    results.push_back(flops_claim());
    results.push_back(serialization());
    results.push_back(window_bookkeeping());
    results.push_back(metrics_oracle());
    results.push_back(k1_degeneracy());
    results.push_back(thread_determinism());

    int failures = 0;
    for (std::size_t i = 0; i < results.size(); ++i) {
        const Criterion& c = results[i];
        failures += c.pass ? 0 : 1;
        std::printf("[%s] %zu. %s — %s (%.2fs)\n", c.pass ? "PASS" : "FAIL", i + 1, c.name.c_str(),
                    c.detail.c_str(), c.seconds);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(results.size()) - failures, results.size());
    return failures == 0 ? 0 : 1;
}
