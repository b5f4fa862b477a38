#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vitseg/checkpoint.hpp"

namespace vitseg {

// Dice coefficient of class `cls`: 2|P intersect L| / (|P| + |L|) over
// voxels. Both-empty is 1.0 (absence correctly predicted).
double dice(const SegmentationMask& pred, const SegmentationMask& label, std::uint16_t cls);

// Unweighted mean of per-class dice over a nonempty class list.
double mean_dice(const SegmentationMask& pred, const SegmentationMask& label,
                 const std::vector<std::uint16_t>& classes);

struct SliceVariationOptions {
    // When false (default), adjacent-slice pairs where neither slice
    // contains the class are left out of the mean; when true every pair
    // counts and an empty-empty pair scores 1.0.
    bool include_empty_pairs = false;
};

// Mean dice between the class-`cls` masks of adjacent slices (d, d+1).
// Throws errc::undefined_metric when the class is absent from the volume.
double slice_variation(const SegmentationMask& label, std::uint16_t cls, SliceVariationOptions opts = {});

struct ClassStats {
    std::uint64_t voxels = 0;
    std::uint64_t slices = 0; // depth slices containing at least one voxel
};

ClassStats class_stats(const SegmentationMask& label, std::uint16_t cls);

// JSON evaluation report: per-class DSC, mean over the class list, and
// per-class voxel/slice counts of the label.
std::string dice_report(const SegmentationMask& pred, const SegmentationMask& label,
                        const std::vector<std::uint16_t>& classes);

} // namespace vitseg
