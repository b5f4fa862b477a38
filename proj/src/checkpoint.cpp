#include "vitseg/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace vitseg {

static_assert(std::endian::native == std::endian::little,
              "archive layout assumes a little-endian host");

using json = nlohmann::json;

const Tensor& Checkpoint::tensor(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw Error(errc::missing_tensor, "checkpoint has no tensor '" + name + "'");
    return it->second;
}

void validate(const Checkpoint& ckpt) {
    for (const auto& [name, t] : ckpt.tensors) {
        if (name.empty()) throw Error(errc::validation, "empty tensor name");
        if (name.find('\0') != std::string::npos) throw Error(errc::validation, "tensor name contains NUL byte");
        if (name == "__metadata__") throw Error(errc::validation, "tensor name '__metadata__' is reserved");
        if (t.size() != shape_product(t.shape)) {
            throw Error(errc::validation, "tensor '" + name + "' data length inconsistent with shape");
        }
    }
    for (const auto& [key, value] : ckpt.metadata) {
        if (key.empty()) throw Error(errc::validation, "empty metadata key");
        (void)value;
    }
}

void validate(const Volume& v) {
    if (v.shape.size() != 3 && v.shape.size() != 4) {
        throw Error(errc::validation, "volume shape must be [H,W,D] or [C,H,W,D], got " + shape_str(v.shape));
    }
    if (v.depth() < 1) throw Error(errc::validation, "volume depth must be >= 1");
    if (v.data.size() != shape_product(v.shape)) {
        throw Error(errc::validation, "volume data length inconsistent with shape " + shape_str(v.shape));
    }
    if (v.modality != "CT" && v.modality != "MRI" && v.modality != "other") {
        throw Error(errc::validation, "unknown modality '" + v.modality + "'");
    }
}

void validate(const SegmentationMask& m) {
    if (m.shape.size() != 3) {
        throw Error(errc::validation, "mask shape must be [H,W,D], got " + shape_str(m.shape));
    }
    if (m.data.size() != shape_product(m.shape)) {
        throw Error(errc::validation, "mask data length inconsistent with shape " + shape_str(m.shape));
    }
    for (std::uint16_t id : m.data) {
        if (id >= m.num_classes) {
            throw Error(errc::validation, "mask voxel class id " + std::to_string(id) + " >= num_classes " +
                                              std::to_string(m.num_classes));
        }
    }
}

static std::string format_float(float x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(x));
    return buf;
}

static void append_u64_le(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

static std::uint64_t read_u64_le(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

namespace {

struct Entry {
    std::string name;
    std::string dtype;
    std::vector<std::size_t> shape;
    const void* bytes;
    std::size_t nbytes;
};

std::vector<std::uint8_t> write_container(const std::vector<Entry>& entries,
                                          const std::map<std::string, std::string>& metadata) {
    json header = json::object();
    json meta = json::object();
    for (const auto& [k, v] : metadata) meta[k] = v;
    header["__metadata__"] = meta;

    std::size_t offset = 0;
    for (const Entry& e : entries) {
        json ent = json::object();
        ent["dtype"] = e.dtype;
        ent["shape"] = e.shape;
        ent["data_offsets"] = {offset, offset + e.nbytes};
        header[e.name] = ent;
        offset += e.nbytes;
    }

    // nlohmann objects are backed by std::map, so dump() emits sorted keys
    // with no whitespace: the canonical header this format requires.
    const std::string header_str = header.dump();

    std::vector<std::uint8_t> out;
    out.reserve(8 + header_str.size() + offset);
    append_u64_le(out, header_str.size());
    out.insert(out.end(), header_str.begin(), header_str.end());
    for (const Entry& e : entries) {
        const auto* p = static_cast<const std::uint8_t*>(e.bytes);
        out.insert(out.end(), p, p + e.nbytes);
    }
    return out;
}

struct ParsedEntry {
    std::string dtype;
    std::vector<std::size_t> shape;
    std::size_t begin = 0;
    std::size_t end = 0;
};

struct ParsedContainer {
    std::map<std::string, ParsedEntry> entries;
    std::map<std::string, std::string> metadata;
    std::span<const std::uint8_t> payload;
};

std::size_t dtype_size(const std::string& dtype) {
    if (dtype == "F32") return 4;
    if (dtype == "U16") return 2;
    throw Error(errc::unsupported_dtype, "dtype '" + dtype + "' is not supported");
}

ParsedContainer parse_container(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8) throw Error(errc::truncated, "buffer shorter than the 8-byte header length field");
    const std::uint64_t header_len = read_u64_le(bytes.data());
    if (bytes.size() < 8 + header_len) {
        throw Error(errc::truncated, "buffer shorter than declared header length " + std::to_string(header_len));
    }

    json header;
    try {
        header = json::parse(bytes.begin() + 8, bytes.begin() + 8 + header_len);
    } catch (const json::exception& e) {
        throw Error(errc::bad_json, e.what());
    }
    if (!header.is_object()) throw Error(errc::bad_json, "header is not a JSON object");

    ParsedContainer out;
    out.payload = bytes.subspan(8 + header_len);

    std::vector<std::pair<std::size_t, std::size_t>> spans;
    for (const auto& [name, value] : header.items()) {
        if (name == "__metadata__") {
            if (!value.is_object()) throw Error(errc::bad_json, "__metadata__ is not an object");
            for (const auto& [k, v] : value.items()) {
                if (!v.is_string()) throw Error(errc::bad_json, "metadata value for '" + k + "' is not a string");
                out.metadata[k] = v.get<std::string>();
            }
            continue;
        }
        if (!value.is_object() || !value.contains("dtype") || !value.contains("shape") ||
            !value.contains("data_offsets")) {
            throw Error(errc::bad_json, "tensor entry '" + name + "' lacks dtype/shape/data_offsets");
        }
        ParsedEntry e;
        try {
            e.dtype = value.at("dtype").get<std::string>();
            for (const std::int64_t d : value.at("shape").get<std::vector<std::int64_t>>()) {
                if (d < 1) throw Error(errc::offset_mismatch, "tensor '" + name + "' has non-positive dimension");
                e.shape.push_back(static_cast<std::size_t>(d));
            }
            const auto offs = value.at("data_offsets").get<std::vector<std::uint64_t>>();
            if (offs.size() != 2) throw Error(errc::bad_json, "data_offsets of '" + name + "' is not a pair");
            e.begin = offs[0];
            e.end = offs[1];
        } catch (const json::exception& ex) {
            throw Error(errc::bad_json, std::string("tensor entry '") + name + "': " + ex.what());
        }

        const std::size_t elem = dtype_size(e.dtype);
        if (e.end < e.begin || e.end > out.payload.size()) {
            throw Error(errc::offset_mismatch, "tensor '" + name + "' span [" + std::to_string(e.begin) + "," +
                                                   std::to_string(e.end) + ") exceeds data section of " +
                                                   std::to_string(out.payload.size()) + " bytes");
        }
        if (e.end - e.begin != shape_product(e.shape) * elem) {
            throw Error(errc::offset_mismatch, "tensor '" + name + "' shape " + shape_str(e.shape) + " needs " +
                                                   std::to_string(shape_product(e.shape) * elem) +
                                                   " bytes but span holds " + std::to_string(e.end - e.begin));
        }
        if (e.begin != e.end) spans.emplace_back(e.begin, e.end);
        out.entries.emplace(name, std::move(e));
    }

    std::sort(spans.begin(), spans.end());
    for (std::size_t i = 1; i < spans.size(); ++i) {
        if (spans[i].first < spans[i - 1].second) {
            throw Error(errc::overlap, "tensor byte spans overlap at offset " + std::to_string(spans[i].first));
        }
    }
    return out;
}

} // namespace

std::vector<std::uint8_t> write_archive(const Checkpoint& ckpt) {
    validate(ckpt);
    std::vector<Entry> entries;
    entries.reserve(ckpt.tensors.size());
    for (const auto& [name, t] : ckpt.tensors) {
        entries.push_back({name, "F32", t.shape, t.data.data(), t.data.size() * sizeof(float)});
    }
    return write_container(entries, ckpt.metadata);
}

Checkpoint read_archive(std::span<const std::uint8_t> bytes) {
    ParsedContainer pc = parse_container(bytes);
    Checkpoint ckpt;
    ckpt.metadata = std::move(pc.metadata);
    for (const auto& [name, e] : pc.entries) {
        if (e.dtype != "F32") {
            throw Error(errc::unsupported_dtype, "weight tensor '" + name + "' has dtype " + e.dtype + ", want F32");
        }
        std::vector<float> data(shape_product(e.shape));
        std::memcpy(data.data(), pc.payload.data() + e.begin, e.end - e.begin);
        ckpt.tensors.emplace(name, Tensor(e.shape, std::move(data)));
    }
    return ckpt;
}

std::vector<std::uint8_t> write_volume(const Volume& v) {
    validate(v);
    std::map<std::string, std::string> meta;
    meta["kind"] = "volume";
    meta["modality"] = v.modality;
    if (v.clip_range) {
        meta["clip_range"] = "[" + format_float(v.clip_range->first) + "," + format_float(v.clip_range->second) + "]";
    }
    Entry e{"voxels", "F32", v.shape, v.data.data(), v.data.size() * sizeof(float)};
    return write_container({e}, meta);
}

static const ParsedEntry& single_payload(const ParsedContainer& pc, const char* want_kind) {
    auto kind = pc.metadata.find("kind");
    if (kind == pc.metadata.end() || kind->second != want_kind) {
        throw Error(errc::validation, std::string("container is not a ") + want_kind);
    }
    auto it = pc.entries.find("voxels");
    if (it == pc.entries.end()) throw Error(errc::validation, "container lacks the 'voxels' payload");
    return it->second;
}

Volume read_volume(std::span<const std::uint8_t> bytes) {
    ParsedContainer pc = parse_container(bytes);
    const ParsedEntry& e = single_payload(pc, "volume");
    if (e.dtype != "F32") throw Error(errc::unsupported_dtype, "volume voxels are " + e.dtype + ", want F32");

    Volume v;
    v.shape = e.shape;
    v.data.resize(shape_product(e.shape));
    std::memcpy(v.data.data(), pc.payload.data() + e.begin, e.end - e.begin);
    if (auto it = pc.metadata.find("modality"); it != pc.metadata.end()) v.modality = it->second;
    if (auto it = pc.metadata.find("clip_range"); it != pc.metadata.end()) {
        float lo = 0, hi = 0;
        if (std::sscanf(it->second.c_str(), "[%f,%f]", &lo, &hi) != 2) {
            throw Error(errc::validation, "clip_range metadata '" + it->second + "' is not [lo,hi]");
        }
        v.clip_range = {lo, hi};
    }
    validate(v);
    return v;
}

std::vector<std::uint8_t> write_volume(const SegmentationMask& m) {
    validate(m);
    std::map<std::string, std::string> meta;
    meta["kind"] = "mask";
    meta["num_classes"] = std::to_string(m.num_classes);
    Entry e{"voxels", "U16", m.shape, m.data.data(), m.data.size() * sizeof(std::uint16_t)};
    return write_container({e}, meta);
}

SegmentationMask read_mask(std::span<const std::uint8_t> bytes) {
    ParsedContainer pc = parse_container(bytes);
    const ParsedEntry& e = single_payload(pc, "mask");
    if (e.dtype != "U16") throw Error(errc::unsupported_dtype, "mask voxels are " + e.dtype + ", want U16");

    SegmentationMask m;
    m.shape = e.shape;
    m.data.resize(shape_product(e.shape));
    std::memcpy(m.data.data(), pc.payload.data() + e.begin, e.end - e.begin);
    auto it = pc.metadata.find("num_classes");
    if (it == pc.metadata.end()) throw Error(errc::validation, "mask lacks num_classes metadata");
    try {
        m.num_classes = static_cast<std::uint32_t>(std::stoul(it->second));
    } catch (const std::exception&) {
        throw Error(errc::validation, "num_classes metadata '" + it->second + "' is not a number");
    }
    validate(m);
    return m;
}

std::vector<std::uint8_t> load_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    in.seekg(0, std::ios::end);
    const std::streamoff n = in.tellg();
    in.seekg(0, std::ios::beg);
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(n));
    in.read(reinterpret_cast<char*>(bytes.data()), n);
    if (!in) throw IoError("failed reading '" + path.string() + "'");
    return bytes;
}

void save_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return read_archive(load_bytes(path)); }
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    save_bytes(path, write_archive(ckpt));
}
Volume load_volume(const std::filesystem::path& path) { return read_volume(load_bytes(path)); }
void save_volume(const std::filesystem::path& path, const Volume& v) { save_bytes(path, write_volume(v)); }
SegmentationMask load_mask(const std::filesystem::path& path) { return read_mask(load_bytes(path)); }
void save_mask(const std::filesystem::path& path, const SegmentationMask& m) { save_bytes(path, write_volume(m)); }

} // namespace vitseg
