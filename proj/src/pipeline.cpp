#include "vitseg/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <exception>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "vitseg/inflate.hpp"

namespace vitseg {

void WindowSpec::validate() const {
    if (size == 0) throw Error(errc::bad_argument, "window size K must be >= 1");
    if (dilation == 0) throw Error(errc::bad_argument, "window dilation must be >= 1");
}

void PreprocessSpec::validate() const {
    if (mode == Mode::fixed_range && !(clip_lo < clip_hi)) {
        throw Error(errc::bad_argument, "clip range [" + std::to_string(clip_lo) + "," + std::to_string(clip_hi) +
                                            "] is not increasing");
    }
}

Volume preprocess(const Volume& v, const PreprocessSpec& spec) {
    validate(v);
    spec.validate();
    for (float x : v.data) {
        if (!std::isfinite(x)) throw Error(errc::non_finite, "volume contains a non-finite voxel");
    }

    float lo = spec.clip_lo, hi = spec.clip_hi;
    if (spec.mode == PreprocessSpec::Mode::per_volume_max) {
        lo = 0.0f;
        hi = *std::max_element(v.data.begin(), v.data.end());
        if (!(hi > lo)) {
            throw Error(errc::degenerate_range, "per-volume max is " + std::to_string(hi) +
                                                    "; cannot normalize a constant-zero volume");
        }
    }

    Volume out = v;
    const float inv = 2.0f / (hi - lo);
    for (float& x : out.data) x = (std::clamp(x, lo, hi) - lo) * inv - 1.0f;
    out.clip_range = {lo, hi};
    return out;
}

std::vector<std::size_t> window_slice_indices(std::size_t d, std::size_t depth, const WindowSpec& w) {
    w.validate();
    if (depth == 0) throw Error(errc::bad_argument, "volume depth must be >= 1");
    const std::size_t center = center_index(w.size).index;
    std::vector<std::size_t> idx(w.size);
    const std::int64_t dd = static_cast<std::int64_t>(d);
    const std::int64_t last = static_cast<std::int64_t>(depth) - 1;
    for (std::size_t i = 0; i < w.size; ++i) {
        const std::int64_t off = (static_cast<std::int64_t>(i) - static_cast<std::int64_t>(center)) *
                                 static_cast<std::int64_t>(w.dilation);
        idx[i] = static_cast<std::size_t>(std::clamp(dd + off, std::int64_t{0}, last));
    }
    return idx;
}

std::vector<ExtractedWindow> extract_windows(const Volume& v, const WindowSpec& w) {
    validate(v);
    w.validate();
    const std::size_t c = v.channels(), h = v.height(), ww = v.width(), depth = v.depth();
    std::vector<ExtractedWindow> out;
    out.reserve(depth);
    for (std::size_t d = 0; d < depth; ++d) {
        const auto idx = window_slice_indices(d, depth, w);
        Tensor win({c, w.size, h, ww});
        for (std::size_t ci = 0; ci < c; ++ci) {
            for (std::size_t ki = 0; ki < w.size; ++ki) {
                float* dst = win.data.data() + (ci * w.size + ki) * h * ww;
                for (std::size_t y = 0; y < h; ++y) {
                    for (std::size_t x = 0; x < ww; ++x) *dst++ = v.at(ci, y, x, idx[ki]);
                }
            }
        }
        out.push_back({d, std::move(win)});
    }
    return out;
}

Tensor decode(const Tensor& tokens, const ViTConfig& cfg, const Checkpoint& weights) {
    cfg.validate();
    const std::size_t t = cfg.tokens(), d = cfg.hidden_d, p = cfg.patch_p, nc = cfg.num_classes;
    if (tokens.shape != std::vector<std::size_t>{t, d}) {
        throw Error(errc::shape_mismatch,
                    "decode tokens " + shape_str(tokens.shape) + ", config implies [" + std::to_string(t) + "," +
                        std::to_string(d) + "]");
    }
    const Tensor& hw = weights.tensor("head.weight");
    const Tensor& hb = weights.tensor("head.bias");
    if (hw.shape != std::vector<std::size_t>{p * p * nc, d} || hb.shape != std::vector<std::size_t>{p * p * nc}) {
        throw Error(errc::shape_mismatch, "decoder head " + shape_str(hw.shape) + "/" + shape_str(hb.shape) +
                                              " inconsistent with patch " + std::to_string(p) + " and " +
                                              std::to_string(nc) + " classes");
    }

    Tensor per_token = add_row(matmul_nt(tokens, hw), hb); // [T, P*P*NC]
    Tensor logits({cfg.image_h, cfg.image_w, nc});
    const std::size_t gw = cfg.grid_w();
    for (std::size_t tok = 0; tok < t; ++tok) {
        const std::size_t gy = tok / gw, gx = tok % gw;
        const float* src = per_token.data.data() + tok * p * p * nc;
        for (std::size_t py = 0; py < p; ++py) {
            float* dst = logits.data.data() + ((gy * p + py) * cfg.image_w + gx * p) * nc;
            for (std::size_t i = 0; i < p * nc; ++i) dst[i] = src[py * p * nc + i];
        }
    }
    return logits;
}

namespace {

void argmax_into_slice(const Tensor& plane, SegmentationMask& mask, std::size_t d) {
    const std::size_t h = plane.shape[0], w = plane.shape[1], nc = plane.shape[2];
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const float* v = plane.data.data() + (y * w + x) * nc;
            std::size_t best = 0;
            for (std::size_t c = 1; c < nc; ++c) {
                if (v[c] > v[best]) best = c;
            }
            mask.at(y, x, d) = static_cast<std::uint16_t>(best);
        }
    }
}

} // namespace

SegmentationMask aggregate_window_logits(const std::vector<Tensor>& planes,
                                         const std::vector<std::vector<std::size_t>>& coverage,
                                         PredictionTarget target, std::size_t depth,
                                         std::uint32_t num_classes) {
    if (planes.size() != depth || coverage.size() != depth) {
        throw Error(errc::bad_argument, "need one logits plane and coverage list per depth slice");
    }
    const std::size_t h = planes.empty() ? 0 : planes[0].shape[0];
    const std::size_t w = planes.empty() ? 0 : planes[0].shape[1];
    for (const Tensor& plane : planes) {
        if (plane.shape != std::vector<std::size_t>{h, w, num_classes}) {
            throw Error(errc::shape_mismatch, "logits plane " + shape_str(plane.shape) + " does not match [" +
                                                  std::to_string(h) + "," + std::to_string(w) + "," +
                                                  std::to_string(num_classes) + "]");
        }
    }
    SegmentationMask mask;
    mask.shape = {h, w, depth};
    mask.data.assign(h * w * depth, 0);
    mask.num_classes = num_classes;

    if (target == PredictionTarget::center_only) {
        for (std::size_t d = 0; d < depth; ++d) argmax_into_slice(planes[d], mask, d);
        return mask;
    }

    // all_slices: mean of the covering windows' planes, in window order.
    for (std::size_t z = 0; z < depth; ++z) {
        Tensor sum({h, w, num_classes});
        std::size_t count = 0;
        for (std::size_t d = 0; d < depth; ++d) {
            if (std::binary_search(coverage[d].begin(), coverage[d].end(), z)) {
                sum = add(sum, planes[d]);
                ++count;
            }
        }
        if (count == 0) throw Error(errc::validation, "slice " + std::to_string(z) + " is covered by no window");
        argmax_into_slice(scale(sum, 1.0f / static_cast<float>(count)), mask, z);
    }
    return mask;
}

namespace {

Tensor kernel_as_3d(const Tensor& kernel) {
    if (kernel.rank() == 5) return kernel;
    return kernel.reshaped({kernel.shape[0], kernel.shape[1], 1, kernel.shape[2], kernel.shape[3]});
}

Tensor kernel_as_2d(const Tensor& kernel) {
    if (kernel.rank() == 4) return kernel;
    if (kernel.rank() == 5 && kernel.shape[2] == 1) {
        return kernel.reshaped({kernel.shape[0], kernel.shape[1], kernel.shape[3], kernel.shape[4]});
    }
    throw Error(errc::shape_mismatch, "kernel " + shape_str(kernel.shape) + " is not a 2D embedding kernel");
}

void check_volume_matches(const Volume& v, const ViTConfig& cfg) {
    if (v.channels() != cfg.in_channels) {
        throw Error(errc::shape_mismatch, "volume has " + std::to_string(v.channels()) + " channels, model wants " +
                                              std::to_string(cfg.in_channels));
    }
    if (v.height() != cfg.image_h || v.width() != cfg.image_w) {
        throw Error(errc::shape_mismatch, "volume is " + std::to_string(v.height()) + "x" +
                                              std::to_string(v.width()) + " but the model resolution is " +
                                              std::to_string(cfg.image_h) + "x" + std::to_string(cfg.image_w) +
                                              " (resampling is not performed)");
    }
}

int effective_threads(std::size_t threads) {
#ifdef _OPENMP
    return threads == 0 ? omp_get_max_threads() : static_cast<int>(threads);
#else
    (void)threads;
    return 1;
#endif
}

} // namespace

SegmentationMask predict_volume(const Volume& v, const Checkpoint& ckpt, const ViTConfig& cfg,
                                const WindowSpec& w, const PreprocessSpec& p, std::size_t threads) {
    cfg.validate();
    w.validate();
    check_checkpoint(ckpt, cfg);
    check_volume_matches(v, cfg);
    if (w.size != cfg.window_k) {
        throw Error(errc::shape_mismatch, "window size " + std::to_string(w.size) +
                                              " does not match the model's kernel depth " +
                                              std::to_string(cfg.window_k));
    }

    const Volume prepped = preprocess(v, p);
    const std::vector<ExtractedWindow> windows = extract_windows(prepped, w);
    const Tensor kernel = kernel_as_3d(ckpt.tensor("embed.kernel"));
    const Tensor& bias = ckpt.tensor("embed.bias");
    const std::size_t depth = prepped.depth();

    std::vector<Tensor> planes(depth);
    std::vector<std::vector<std::size_t>> coverage(depth);
    std::exception_ptr failure;

    const int nthreads = effective_threads(threads);
    const std::int64_t n = static_cast<std::int64_t>(depth);
#pragma omp parallel for schedule(dynamic) num_threads(nthreads) if (nthreads > 1)
    for (std::int64_t d = 0; d < n; ++d) {
        try {
            const ExtractedWindow& win = windows[d];
            EncoderState state{patch_embed_3d(win.voxels, kernel, bias)};
            planes[d] = decode(encoder_forward(state, ckpt, cfg).tokens, cfg, ckpt);

            auto idx = window_slice_indices(d, depth, w);
            std::sort(idx.begin(), idx.end());
            idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
            coverage[d] = std::move(idx);
        } catch (...) {
#pragma omp critical
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);

    return aggregate_window_logits(planes, coverage, w.target, depth, static_cast<std::uint32_t>(cfg.num_classes));
}

SegmentationMask predict_volume_2d(const Volume& v, const Checkpoint& ckpt, const ViTConfig& cfg,
                                   const PreprocessSpec& p, std::size_t threads) {
    cfg.validate();
    if (cfg.window_k != 1) {
        throw Error(errc::bad_argument, "the 2D pipeline needs a window_k == 1 model");
    }
    check_checkpoint(ckpt, cfg);
    check_volume_matches(v, cfg);

    const Volume prepped = preprocess(v, p);
    const Tensor kernel = kernel_as_2d(ckpt.tensor("embed.kernel"));
    const Tensor& bias = ckpt.tensor("embed.bias");
    const std::size_t c = prepped.channels(), h = prepped.height(), ww = prepped.width(), depth = prepped.depth();

    SegmentationMask mask;
    mask.shape = {h, ww, depth};
    mask.data.assign(h * ww * depth, 0);
    mask.num_classes = static_cast<std::uint32_t>(cfg.num_classes);

    std::vector<Tensor> planes(depth);
    std::exception_ptr failure;

    const int nthreads = effective_threads(threads);
    const std::int64_t n = static_cast<std::int64_t>(depth);
#pragma omp parallel for schedule(dynamic) num_threads(nthreads) if (nthreads > 1)
    for (std::int64_t d = 0; d < n; ++d) {
        try {
            Tensor slice({c, h, ww});
            for (std::size_t ci = 0; ci < c; ++ci) {
                float* dst = slice.data.data() + ci * h * ww;
                for (std::size_t y = 0; y < h; ++y) {
                    for (std::size_t x = 0; x < ww; ++x) *dst++ = prepped.at(ci, y, x, d);
                }
            }
            EncoderState state{patch_embed_2d(slice, kernel, bias)};
            planes[d] = decode(encoder_forward(state, ckpt, cfg).tokens, cfg, ckpt);
        } catch (...) {
#pragma omp critical
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);

    for (std::size_t d = 0; d < depth; ++d) argmax_into_slice(planes[d], mask, d);
    return mask;
}

} // namespace vitseg
