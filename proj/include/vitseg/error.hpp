#pragma once

#include <stdexcept>
#include <string>

namespace vitseg {

// Every failure in the library carries one of these kinds so callers
// (and the CLI exit-code mapping) can react without string matching.
enum class errc {
    shape_mismatch,    // tensor ranks/dims inconsistent with an operation
    truncated,         // byte buffer shorter than its header declares
    bad_json,          // archive header is not parseable JSON
    offset_mismatch,   // data_offsets out of bounds or inconsistent with shape
    overlap,           // two tensor byte spans intersect
    unsupported_dtype, // archive declares a dtype this toolkit does not read
    validation,        // semantic constraint violated (names, class ids, ...)
    missing_tensor,    // checkpoint lacks a canonical tensor name
    degenerate_range,  // preprocessing range collapsed (e.g. all-zero MRI)
    undefined_metric,  // metric has no defined value (class absent)
    non_finite,        // NaN/Inf encountered where finite values are required
    bad_argument,      // invalid spec/config value (K=0, c=0, empty class list)
};

const char* errc_name(errc kind);

class Error : public std::runtime_error {
public:
    Error(errc kind, const std::string& message)
        : std::runtime_error(std::string(errc_name(kind)) + ": " + message), kind_(kind) {}

    errc kind() const { return kind_; }

private:
    errc kind_;
};

} // namespace vitseg
