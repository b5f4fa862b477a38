#include "vitseg/metrics.hpp"

#include <json.hpp>

namespace vitseg {

static void check_pair(const SegmentationMask& pred, const SegmentationMask& label) {
    if (pred.shape != label.shape) {
        throw Error(errc::shape_mismatch,
                    "mask shapes differ: " + shape_str(pred.shape) + " vs " + shape_str(label.shape));
    }
}

double dice(const SegmentationMask& pred, const SegmentationMask& label, std::uint16_t cls) {
    check_pair(pred, label);
    std::uint64_t p = 0, l = 0, both = 0;
    const std::int64_t n = static_cast<std::int64_t>(pred.data.size());
#pragma omp parallel for schedule(static) reduction(+ : p, l, both) if (n > 65536)
    for (std::int64_t i = 0; i < n; ++i) {
        const bool in_p = pred.data[i] == cls;
        const bool in_l = label.data[i] == cls;
        p += in_p;
        l += in_l;
        both += in_p && in_l;
    }
    if (p + l == 0) return 1.0;
    return 2.0 * static_cast<double>(both) / static_cast<double>(p + l);
}

double mean_dice(const SegmentationMask& pred, const SegmentationMask& label,
                 const std::vector<std::uint16_t>& classes) {
    if (classes.empty()) throw Error(errc::bad_argument, "mean_dice over an empty class list");
    double sum = 0.0;
    for (std::uint16_t c : classes) sum += dice(pred, label, c);
    return sum / static_cast<double>(classes.size());
}

double slice_variation(const SegmentationMask& label, std::uint16_t cls, SliceVariationOptions opts) {
    if (label.depth() < 2) throw Error(errc::bad_argument, "slice_variation needs depth >= 2");

    const std::size_t h = label.height(), w = label.width(), depth = label.depth();
    std::vector<std::uint64_t> per_slice(depth, 0);
    std::vector<std::uint64_t> pair_inter(depth - 1, 0);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const std::uint16_t* col = label.data.data() + (y * w + x) * depth;
            for (std::size_t d = 0; d < depth; ++d) {
                if (col[d] != cls) continue;
                ++per_slice[d];
                if (d + 1 < depth && col[d + 1] == cls) ++pair_inter[d];
            }
        }
    }

    std::uint64_t total = 0;
    for (std::uint64_t c : per_slice) total += c;
    if (total == 0) {
        throw Error(errc::undefined_metric,
                    "class " + std::to_string(cls) + " never occurs; slice variation is undefined");
    }

    double sum = 0.0;
    std::size_t counted = 0;
    for (std::size_t d = 0; d + 1 < depth; ++d) {
        const std::uint64_t denom = per_slice[d] + per_slice[d + 1];
        if (denom == 0) {
            if (opts.include_empty_pairs) {
                sum += 1.0;
                ++counted;
            }
            continue;
        }
        sum += 2.0 * static_cast<double>(pair_inter[d]) / static_cast<double>(denom);
        ++counted;
    }
    return sum / static_cast<double>(counted);
}

ClassStats class_stats(const SegmentationMask& label, std::uint16_t cls) {
    const std::size_t depth = label.depth();
    std::vector<std::uint64_t> per_slice(depth, 0);
    for (std::size_t i = 0; i < label.data.size(); ++i) {
        if (label.data[i] == cls) ++per_slice[i % depth];
    }
    ClassStats stats;
    for (std::uint64_t c : per_slice) {
        stats.voxels += c;
        stats.slices += c > 0;
    }
    return stats;
}

std::string dice_report(const SegmentationMask& pred, const SegmentationMask& label,
                        const std::vector<std::uint16_t>& classes) {
    nlohmann::json report;
    nlohmann::json per_class = nlohmann::json::object();
    nlohmann::json stats = nlohmann::json::object();
    for (std::uint16_t c : classes) {
        const ClassStats cs = class_stats(label, c);
        per_class[std::to_string(c)] = dice(pred, label, c);
        stats[std::to_string(c)] = {{"voxels", cs.voxels}, {"slices", cs.slices}};
    }
    report["per_class"] = per_class;
    report["mean_dsc"] = mean_dice(pred, label, classes);
    report["label_stats"] = stats;
    return report.dump(2);
}

} // namespace vitseg
