#include "vitseg/reference.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace vitseg::ref {

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0]) {
        throw Error(errc::shape_mismatch,
                    "ref::matmul shapes " + shape_str(a.shape) + " x " + shape_str(b.shape));
    }
    const std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t kk = 0; kk < k; ++kk) {
                acc += static_cast<double>(a.data[i * k + kk]) * static_cast<double>(b.data[kk * n + j]);
            }
            out.data[i * n + j] = static_cast<float>(acc);
        }
    }
    return out;
}

Tensor conv_patch_embed_2d(const Tensor& image, const Tensor& kernel, const Tensor& bias, std::uint64_t* macs) {
    const std::size_t c = image.shape[0], h = image.shape[1], w = image.shape[2];
    const std::size_t dh = kernel.shape[0], p = kernel.shape[2];
    const std::size_t gh = h / p, gw = w / p;
    Tensor out({gh * gw, dh});
    std::uint64_t count = 0;
    for (std::size_t gy = 0; gy < gh; ++gy) {
        for (std::size_t gx = 0; gx < gw; ++gx) {
            for (std::size_t d = 0; d < dh; ++d) {
                double acc = static_cast<double>(bias.data[d]);
                for (std::size_t ci = 0; ci < c; ++ci) {
                    for (std::size_t py = 0; py < p; ++py) {
                        for (std::size_t px = 0; px < p; ++px) {
                            const float pixel = image.data[(ci * h + gy * p + py) * w + gx * p + px];
                            const float weight = kernel.data[((d * c + ci) * p + py) * p + px];
                            acc += static_cast<double>(pixel) * static_cast<double>(weight);
                            ++count;
                        }
                    }
                }
                out.data[(gy * gw + gx) * dh + d] = static_cast<float>(acc);
            }
        }
    }
    if (macs) *macs = count;
    return out;
}

Tensor conv_patch_embed_3d(const Tensor& window, const Tensor& kernel3d, const Tensor& bias, std::uint64_t* macs) {
    const std::size_t c = window.shape[0], k = window.shape[1], h = window.shape[2], w = window.shape[3];
    const std::size_t dh = kernel3d.shape[0], p = kernel3d.shape[3];
    const std::size_t gh = h / p, gw = w / p;
    Tensor out({gh * gw, dh});
    std::uint64_t count = 0;
    for (std::size_t gy = 0; gy < gh; ++gy) {
        for (std::size_t gx = 0; gx < gw; ++gx) {
            for (std::size_t d = 0; d < dh; ++d) {
                double acc = static_cast<double>(bias.data[d]);
                for (std::size_t ci = 0; ci < c; ++ci) {
                    for (std::size_t ki = 0; ki < k; ++ki) {
                        for (std::size_t py = 0; py < p; ++py) {
                            for (std::size_t px = 0; px < p; ++px) {
                                const float voxel = window.data[((ci * k + ki) * h + gy * p + py) * w + gx * p + px];
                                const float weight = kernel3d.data[(((d * c + ci) * k + ki) * p + py) * p + px];
                                acc += static_cast<double>(voxel) * static_cast<double>(weight);
                                ++count;
                            }
                        }
                    }
                }
                out.data[(gy * gw + gx) * dh + d] = static_cast<float>(acc);
            }
        }
    }
    if (macs) *macs = count;
    return out;
}

namespace {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>; // [rows][cols]

Mat to_mat(const Tensor& t) {
    Mat m(t.shape[0], Vec(t.shape[1]));
    for (std::size_t i = 0; i < t.shape[0]; ++i) {
        for (std::size_t j = 0; j < t.shape[1]; ++j) m[i][j] = t.data[i * t.shape[1] + j];
    }
    return m;
}

Vec to_vec(const Tensor& t) {
    Vec v(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) v[i] = t.data[i];
    return v;
}

// y = W x + b with W stored [out, in]
Vec affine(const Mat& w, const Vec& b, const Vec& x) {
    Vec y(w.size());
    for (std::size_t o = 0; o < w.size(); ++o) {
        double acc = b[o];
        for (std::size_t i = 0; i < x.size(); ++i) acc += w[o][i] * x[i];
        y[o] = acc;
    }
    return y;
}

Vec layernorm_vec(const Vec& x, const Vec& gamma, const Vec& beta, double eps) {
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= static_cast<double>(x.size());
    Vec y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] = (x[i] - mean) / std::sqrt(var + eps) * gamma[i] + beta[i];
    }
    return y;
}

} // namespace

Tensor encoder_forward(const Tensor& tokens, const Checkpoint& weights, const ViTConfig& cfg) {
    const std::size_t t = cfg.tokens(), d = cfg.hidden_d, heads = cfg.heads, hd = d / heads;
    const double eps = cfg.layernorm_eps;

    Mat h = to_mat(tokens);
    const Mat pos = to_mat(weights.tensor("embed.pos"));
    for (std::size_t i = 0; i < t; ++i) {
        for (std::size_t j = 0; j < d; ++j) h[i][j] += pos[i][j];
    }

    for (std::size_t l = 0; l < cfg.layers_l; ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        const Mat wqkv = to_mat(weights.tensor(p + "attn.qkv.weight"));
        const Vec bqkv = to_vec(weights.tensor(p + "attn.qkv.bias"));
        const Mat wproj = to_mat(weights.tensor(p + "attn.proj.weight"));
        const Vec bproj = to_vec(weights.tensor(p + "attn.proj.bias"));
        const Vec g1 = to_vec(weights.tensor(p + "ln1.gamma")), b1 = to_vec(weights.tensor(p + "ln1.beta"));
        const Vec g2 = to_vec(weights.tensor(p + "ln2.gamma")), b2 = to_vec(weights.tensor(p + "ln2.beta"));
        const Mat w1 = to_mat(weights.tensor(p + "mlp.fc1.weight"));
        const Vec bf1 = to_vec(weights.tensor(p + "mlp.fc1.bias"));
        const Mat w2 = to_mat(weights.tensor(p + "mlp.fc2.weight"));
        const Vec bf2 = to_vec(weights.tensor(p + "mlp.fc2.bias"));

        Mat qkv(t);
        for (std::size_t i = 0; i < t; ++i) qkv[i] = affine(wqkv, bqkv, layernorm_vec(h[i], g1, b1, eps));

        Mat ctx(t, Vec(d, 0.0));
        for (std::size_t head = 0; head < heads; ++head) {
            const std::size_t qo = head * hd, ko = d + head * hd, vo = 2 * d + head * hd;
            for (std::size_t i = 0; i < t; ++i) {
                Vec scores(t);
                double mx = -1e300;
                for (std::size_t j = 0; j < t; ++j) {
                    double dot = 0.0;
                    for (std::size_t x = 0; x < hd; ++x) dot += qkv[i][qo + x] * qkv[j][ko + x];
                    scores[j] = dot / std::sqrt(static_cast<double>(hd));
                    mx = std::max(mx, scores[j]);
                }
                double sum = 0.0;
                for (std::size_t j = 0; j < t; ++j) {
                    scores[j] = std::exp(scores[j] - mx);
                    sum += scores[j];
                }
                for (std::size_t j = 0; j < t; ++j) scores[j] /= sum;
                for (std::size_t j = 0; j < t; ++j) {
                    for (std::size_t x = 0; x < hd; ++x) ctx[i][qo + x] += scores[j] * qkv[j][vo + x];
                }
            }
        }
        for (std::size_t i = 0; i < t; ++i) {
            const Vec attn_out = affine(wproj, bproj, ctx[i]);
            for (std::size_t j = 0; j < d; ++j) h[i][j] += attn_out[j];
        }

        for (std::size_t i = 0; i < t; ++i) {
            Vec mid = affine(w1, bf1, layernorm_vec(h[i], g2, b2, eps));
            for (double& x : mid) x = 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
            const Vec mlp_out = affine(w2, bf2, mid);
            for (std::size_t j = 0; j < d; ++j) h[i][j] += mlp_out[j];
        }
    }

    const Vec gf = to_vec(weights.tensor("ln_f.gamma")), bf = to_vec(weights.tensor("ln_f.beta"));
    Tensor out({t, d});
    for (std::size_t i = 0; i < t; ++i) {
        const Vec y = layernorm_vec(h[i], gf, bf, eps);
        for (std::size_t j = 0; j < d; ++j) out.data[i * d + j] = static_cast<float>(y[j]);
    }
    return out;
}

Tensor decode(const Tensor& tokens, const ViTConfig& cfg, const Checkpoint& weights) {
    const std::size_t t = cfg.tokens(), d = cfg.hidden_d, p = cfg.patch_p, nc = cfg.num_classes;
    const Tensor& hw = weights.tensor("head.weight");
    const Tensor& hb = weights.tensor("head.bias");
    Tensor logits({cfg.image_h, cfg.image_w, nc});
    for (std::size_t tok = 0; tok < t; ++tok) {
        const std::size_t gy = tok / cfg.grid_w(), gx = tok % cfg.grid_w();
        for (std::size_t py = 0; py < p; ++py) {
            for (std::size_t px = 0; px < p; ++px) {
                for (std::size_t c = 0; c < nc; ++c) {
                    const std::size_t o = (py * p + px) * nc + c;
                    double acc = hb.data[o];
                    for (std::size_t j = 0; j < d; ++j) {
                        acc += static_cast<double>(hw.data[o * d + j]) * static_cast<double>(tokens.data[tok * d + j]);
                    }
                    logits.data[((gy * p + py) * cfg.image_w + gx * p + px) * nc + c] = static_cast<float>(acc);
                }
            }
        }
    }
    return logits;
}

std::vector<std::size_t> window_indices(std::size_t d, std::size_t depth, std::size_t k, std::size_t s) {
    std::vector<std::size_t> out;
    const long long center = static_cast<long long>(k) / 2;
    for (std::size_t i = 0; i < k; ++i) {
        long long idx = static_cast<long long>(d) + (static_cast<long long>(i) - center) * static_cast<long long>(s);
        if (idx < 0) idx = 0;
        if (idx > static_cast<long long>(depth) - 1) idx = static_cast<long long>(depth) - 1;
        out.push_back(static_cast<std::size_t>(idx));
    }
    return out;
}

namespace {

std::set<std::size_t> voxel_set(const SegmentationMask& m, std::uint16_t cls) {
    std::set<std::size_t> s;
    for (std::size_t i = 0; i < m.data.size(); ++i) {
        if (m.data[i] == cls) s.insert(i);
    }
    return s;
}

std::set<std::size_t> slice_set(const SegmentationMask& m, std::uint16_t cls, std::size_t d) {
    std::set<std::size_t> s;
    for (std::size_t y = 0; y < m.height(); ++y) {
        for (std::size_t x = 0; x < m.width(); ++x) {
            if (m.at(y, x, d) == cls) s.insert(y * m.width() + x);
        }
    }
    return s;
}

double set_dice(const std::set<std::size_t>& a, const std::set<std::size_t>& b) {
    if (a.empty() && b.empty()) return 1.0;
    std::vector<std::size_t> inter;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(inter));
    return 2.0 * static_cast<double>(inter.size()) / static_cast<double>(a.size() + b.size());
}

} // namespace

double dice(const SegmentationMask& pred, const SegmentationMask& label, std::uint16_t cls) {
    return set_dice(voxel_set(pred, cls), voxel_set(label, cls));
}

double slice_variation(const SegmentationMask& label, std::uint16_t cls, bool include_empty_pairs) {
    if (voxel_set(label, cls).empty()) {
        throw Error(errc::undefined_metric, "class " + std::to_string(cls) + " never occurs");
    }
    double sum = 0.0;
    std::size_t counted = 0;
    for (std::size_t d = 0; d + 1 < label.depth(); ++d) {
        const auto a = slice_set(label, cls, d);
        const auto b = slice_set(label, cls, d + 1);
        if (a.empty() && b.empty() && !include_empty_pairs) continue;
        sum += set_dice(a, b);
        ++counted;
    }
    if (counted == 0) throw Error(errc::undefined_metric, "no pair contains the class");
    return sum / static_cast<double>(counted);
}

std::pair<std::uint64_t, std::uint64_t> class_stats(const SegmentationMask& label, std::uint16_t cls) {
    std::uint64_t voxels = 0, slices = 0;
    for (std::size_t d = 0; d < label.depth(); ++d) {
        const auto s = slice_set(label, cls, d);
        voxels += s.size();
        slices += !s.empty();
    }
    return {voxels, slices};
}

} // namespace vitseg::ref
