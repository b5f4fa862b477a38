#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vitseg/tensor.hpp"

namespace vitseg {

/*
 * Archive container shared by weights (.tns), volumes (.vol) and masks (.msk):
 *
 *   - 8 bytes: little-endian u64, byte length N of the JSON header
 *   - N bytes: canonical JSON (sorted keys, no insignificant whitespace)
 *     mapping each tensor name to {"dtype","shape","data_offsets":[begin,end)}
 *     plus a "__metadata__" string map
 *   - raw little-endian payloads at the stated offsets, relative to the end
 *     of the header; contiguous and ascending in header order
 *
 * Weights are always F32. Volumes store one F32 payload named "voxels";
 * masks store one U16 payload named "voxels". Identical inputs serialize to
 * identical bytes.
 */

struct Checkpoint {
    std::map<std::string, Tensor> tensors; // sorted name order == header order
    std::map<std::string, std::string> metadata;

    bool has(const std::string& name) const { return tensors.count(name) != 0; }
    const Tensor& tensor(const std::string& name) const; // throws errc::missing_tensor
};

struct Volume {
    std::vector<std::size_t> shape; // [H,W,D] or [C,H,W,D]
    std::vector<float> data;        // row-major, depth fastest
    std::string modality = "other"; // "CT" | "MRI" | "other"
    std::optional<std::pair<float, float>> clip_range;

    std::size_t channels() const { return shape.size() == 4 ? shape[0] : 1; }
    std::size_t height() const { return shape[shape.size() - 3]; }
    std::size_t width() const { return shape[shape.size() - 2]; }
    std::size_t depth() const { return shape.back(); }

    float at(std::size_t c, std::size_t h, std::size_t w, std::size_t d) const {
        const std::size_t hwd = height() * width() * depth();
        return data[c * hwd + (h * width() + w) * depth() + d];
    }
};

struct SegmentationMask {
    std::vector<std::size_t> shape; // [H,W,D]
    std::vector<std::uint16_t> data;
    std::uint32_t num_classes = 1;

    std::size_t height() const { return shape[0]; }
    std::size_t width() const { return shape[1]; }
    std::size_t depth() const { return shape[2]; }

    std::uint16_t at(std::size_t h, std::size_t w, std::size_t d) const {
        return data[(h * shape[1] + w) * shape[2] + d];
    }
    std::uint16_t& at(std::size_t h, std::size_t w, std::size_t d) {
        return data[(h * shape[1] + w) * shape[2] + d];
    }
};

// Checks the type invariants (shape/data consistency, name rules, voxel
// class ids) and throws errc::validation on violation.
void validate(const Checkpoint& ckpt);
void validate(const Volume& v);
void validate(const SegmentationMask& m);

std::vector<std::uint8_t> write_archive(const Checkpoint& ckpt);
Checkpoint read_archive(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> write_volume(const Volume& v);
Volume read_volume(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> write_volume(const SegmentationMask& m);
SegmentationMask read_mask(std::span<const std::uint8_t> bytes);

// Filesystem-level failures (open/read/write) are reported separately from
// format errors so the CLI can map them to a distinct exit code.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& message) : std::runtime_error(message) {}
};

std::vector<std::uint8_t> load_bytes(const std::filesystem::path& path);
void save_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

Checkpoint load_checkpoint(const std::filesystem::path& path);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Volume load_volume(const std::filesystem::path& path);
void save_volume(const std::filesystem::path& path, const Volume& v);
SegmentationMask load_mask(const std::filesystem::path& path);
void save_mask(const std::filesystem::path& path, const SegmentationMask& m);

} // namespace vitseg
