#pragma once

// GRADCKPT layout (little-endian):
//
//   "GRADCKPT" | u32 version=1
//   u32 extractor kind (0 stub, 1 external) | u64 extractor seed
//   u32 channels
//   u32 local rows, cols | u32 global rows, cols | u32 abnormal rows, cols
//   f64 lambda | f64 th
//   5 parameter blocks, each u64 element count followed by f32 values:
//     normal.local, normal.global, normal content map, abnormal.grid, abnormal content map
//
// Grid blocks are node-major (rows, cols, channels). Content map blocks hold
// the 2 x C weights row-major followed by the 2 biases.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "grad/io.hpp"
#include "grad/training.hpp"

namespace grad {

namespace detail {
inline void write_block(ByteWriter& w, std::span<const float> values) {
    w.u64(values.size());
    for (float v : values) w.f32(v);
}

inline std::vector<float> read_block(ByteReader& r, std::size_t expected, const char* name) {
    const std::uint64_t n = r.u64();
    if (n != expected)
        throw Error(ErrorKind::data, r.source() + ": parameter block '" + name + "' has " + std::to_string(n) +
                                         " values, expected " + std::to_string(expected));
    r.need_payload(n, 4);
    std::vector<float> out(static_cast<std::size_t>(n));
    for (auto& v : out) {
        v = r.f32();
        if (!std::isfinite(v)) throw Error(ErrorKind::numeric, r.source() + ": non-finite parameter in '" + name + "'");
    }
    return out;
}

inline std::vector<float> map_values(const ContentCoordMap& m) {
    std::vector<float> out(m.weights);
    out.push_back(m.bias[0]);
    out.push_back(m.bias[1]);
    return out;
}

inline ContentCoordMap map_from_values(std::size_t channels, const std::vector<float>& v) {
    ContentCoordMap m(channels);
    std::copy(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(2 * channels), m.weights.begin());
    m.bias = {v[2 * channels], v[2 * channels + 1]};
    return m;
}

inline ContinuousGrid grid_from_values(std::size_t channels, std::size_t rows, std::size_t cols, const std::vector<float>& v) {
    ContinuousGrid g(channels, rows, cols);
    std::copy(v.begin(), v.end(), g.values().begin());
    return g;
}
}  // namespace detail

inline std::vector<char> encode_checkpoint(const GradModel& m) {
    m.validate();
    ByteWriter w;
    w.magic("GRADCKPT");
    w.u32(kFormatVersion);
    w.u32(static_cast<std::uint32_t>(m.extractor.kind));
    w.u64(m.extractor.seed);
    w.u32(detail::dim32(m.channels()));
    for (const auto* g : {&m.normal.local, &m.normal.global, &m.abnormal.grid}) {
        w.u32(detail::dim32(g->rows()));
        w.u32(detail::dim32(g->cols()));
    }
    w.f64(m.lambda);
    w.f64(m.th);
    detail::write_block(w, m.normal.local.values());
    detail::write_block(w, m.normal.global.values());
    detail::write_block(w, detail::map_values(m.normal.content_map));
    detail::write_block(w, m.abnormal.grid.values());
    detail::write_block(w, detail::map_values(m.abnormal.content_map));
    return w.bytes();
}

inline GradModel decode_checkpoint(const std::vector<char>& bytes, const std::string& source = "GRADCKPT") {
    ByteReader r(bytes, source);
    r.expect_magic("GRADCKPT");
    r.expect_version(kFormatVersion);
    GradModel m;
    const std::uint32_t kind = r.u32();
    if (kind > 1) throw Error(ErrorKind::data, source + ": unknown extractor kind " + std::to_string(kind));
    m.extractor.kind = static_cast<ExtractorDescriptor::Kind>(kind);
    m.extractor.seed = r.u64();
    const std::uint32_t C = r.u32();
    std::uint32_t dims[6];
    for (auto& d : dims) d = r.u32();
    if (C == 0) throw Error(ErrorKind::data, source + ": zero channel count");
    for (auto d : dims)
        if (d < 2) throw Error(ErrorKind::data, source + ": grid dims must be >= 2");
    for (int g = 0; g < 3; ++g) detail::checked_count({C, dims[2 * g], dims[2 * g + 1]}, source);
    m.lambda = r.f64();
    m.th = r.f64();
    if (!(m.lambda >= 0.0 && m.lambda <= 1.0)) throw Error(ErrorKind::data, source + ": lambda outside [0, 1]");
    if (!(m.th > 0.0 && m.th < 1.0)) throw Error(ErrorKind::data, source + ": th outside (0, 1)");

    const std::size_t map_len = 2 * static_cast<std::size_t>(C) + 2;
    const auto local = detail::read_block(r, std::size_t{C} * dims[0] * dims[1], "normal.local");
    const auto global = detail::read_block(r, std::size_t{C} * dims[2] * dims[3], "normal.global");
    const auto nmap = detail::read_block(r, map_len, "normal.content_map");
    const auto agrid = detail::read_block(r, std::size_t{C} * dims[4] * dims[5], "abnormal.grid");
    const auto amap = detail::read_block(r, map_len, "abnormal.content_map");
    r.expect_end();

    m.normal.local = detail::grid_from_values(C, dims[0], dims[1], local);
    m.normal.global = detail::grid_from_values(C, dims[2], dims[3], global);
    m.normal.content_map = detail::map_from_values(C, nmap);
    m.abnormal.grid = detail::grid_from_values(C, dims[4], dims[5], agrid);
    m.abnormal.content_map = detail::map_from_values(C, amap);
    return m;
}

inline void save_checkpoint(const GradModel& m, const std::filesystem::path& path) {
    write_file_bytes(path, encode_checkpoint(m));
}

inline GradModel load_checkpoint(const std::filesystem::path& path) {
    return decode_checkpoint(read_file_bytes(path), path.string());
}

}  // namespace grad
