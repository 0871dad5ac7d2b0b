#pragma once

// GRADFEAT / GRADMASK binary files.
//
//   GRADFEAT: "GRADFEAT" | u32 version=1 | u32 N, C, H, W | N*C*H*W f32, (n,c,h,w) row-major
//   GRADMASK: "GRADMASK" | u32 version=1 | u32 N, H, W    | N*H*W u8 in {0, 1}
//
// All integers and floats are little-endian.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "grad/error.hpp"
#include "grad/feature_map.hpp"

namespace grad {

inline constexpr std::uint32_t kFormatVersion = 1;

class ByteWriter {
public:
    void magic(std::string_view m) { bytes_.insert(bytes_.end(), m.begin(), m.end()); }

    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
    }

    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
    }

    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void u8(std::uint8_t v) { bytes_.push_back(static_cast<char>(v)); }

    const std::vector<char>& bytes() const noexcept { return bytes_; }

private:
    std::vector<char> bytes_;
};

class ByteReader {
public:
    ByteReader(const std::vector<char>& bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

    void expect_magic(std::string_view m) {
        if (remaining() < m.size() || std::memcmp(bytes_.data() + pos_, m.data(), m.size()) != 0)
            throw Error(ErrorKind::data, source_ + ": bad magic (expected " + std::string(m) + ")");
        pos_ += m.size();
    }

    void expect_version(std::uint32_t expected) {
        const std::uint32_t v = u32();
        if (v != expected)
            throw Error(ErrorKind::data, source_ + ": unsupported version " + std::to_string(v) + " (expected " +
                                             std::to_string(expected) + ")");
    }

    std::uint32_t u32() {
        need(4, "header");
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }

    std::uint64_t u64() {
        need(8, "header");
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return v;
    }

    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }

    std::uint8_t u8() {
        need(1, "payload");
        return static_cast<std::uint8_t>(bytes_[pos_++]);
    }

    /// Throws "truncated payload" unless `count` items of `item_size` bytes remain.
    void need_payload(std::uint64_t count, std::size_t item_size) {
        if (count > remaining() / item_size)
            throw Error(ErrorKind::data, source_ + ": truncated payload (header declares " + std::to_string(count) +
                                             " items, " + std::to_string(remaining()) + " bytes remain)");
    }

    void expect_end() {
        if (remaining() != 0)
            throw Error(ErrorKind::data, source_ + ": " + std::to_string(remaining()) + " trailing bytes after payload");
    }

    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
    const std::string& source() const noexcept { return source_; }

private:
    void need(std::size_t n, const char* what) {
        if (remaining() < n) throw Error(ErrorKind::data, source_ + ": truncated " + std::string(what));
    }

    const std::vector<char>& bytes_;
    std::string source_;
    std::size_t pos_ = 0;
};

inline std::vector<char> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require_data(static_cast<bool>(in), "cannot open " + path.string());
    return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file_bytes(const std::filesystem::path& path, const std::vector<char>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require_data(static_cast<bool>(out), "cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    require_data(static_cast<bool>(out), "write failed: " + path.string());
}

namespace detail {

/// Product of dims, or throws "dim overflow" when it does not fit the address space.
inline std::uint64_t checked_count(std::initializer_list<std::uint32_t> dims, const std::string& source) {
    std::uint64_t total = 1;
    for (std::uint32_t d : dims) {
        if (d == 0) throw Error(ErrorKind::data, source + ": zero dimension in header");
        if (total > std::numeric_limits<std::uint64_t>::max() / d)
            throw Error(ErrorKind::data, source + ": dim overflow");
        total *= d;
    }
    if (total > std::numeric_limits<std::size_t>::max() / sizeof(float))
        throw Error(ErrorKind::data, source + ": dim overflow");
    return total;
}

inline std::uint32_t dim32(std::size_t v) {
    require_usage(v <= std::numeric_limits<std::uint32_t>::max(), "dimension exceeds u32 range");
    return static_cast<std::uint32_t>(v);
}

}  // namespace detail

inline std::vector<char> encode_featfile(const FeatureMap& fm) {
    ByteWriter w;
    w.magic("GRADFEAT");
    w.u32(kFormatVersion);
    w.u32(detail::dim32(fm.n()));
    w.u32(detail::dim32(fm.c()));
    w.u32(detail::dim32(fm.h()));
    w.u32(detail::dim32(fm.w()));
    for (float v : fm.data()) w.f32(v);
    return w.bytes();
}

inline FeatureMap decode_featfile(const std::vector<char>& bytes, const std::string& source = "GRADFEAT") {
    ByteReader r(bytes, source);
    r.expect_magic("GRADFEAT");
    r.expect_version(kFormatVersion);
    const std::uint32_t n = r.u32(), c = r.u32(), h = r.u32(), w = r.u32();
    const std::uint64_t count = detail::checked_count({n, c, h, w}, source);
    r.need_payload(count, 4);
    std::vector<float> data(static_cast<std::size_t>(count));
    for (auto& v : data) {
        v = r.f32();
        if (!std::isfinite(v)) throw Error(ErrorKind::numeric, source + ": non-finite value in payload");
    }
    r.expect_end();
    return FeatureMap({n, c, h, w}, std::move(data));
}

inline void write_featfile(const FeatureMap& fm, const std::filesystem::path& path) {
    require_numeric(fm.all_finite(), "write_featfile: feature map contains non-finite values");
    write_file_bytes(path, encode_featfile(fm));
}

inline FeatureMap read_featfile(const std::filesystem::path& path) {
    return decode_featfile(read_file_bytes(path), path.string());
}

inline std::vector<char> encode_maskfile(const AnomalyMask& m) {
    ByteWriter w;
    w.magic("GRADMASK");
    w.u32(kFormatVersion);
    w.u32(detail::dim32(m.n()));
    w.u32(detail::dim32(m.h()));
    w.u32(detail::dim32(m.w()));
    for (std::uint8_t v : m.cells()) w.u8(v);
    return w.bytes();
}

inline AnomalyMask decode_maskfile(const std::vector<char>& bytes, const std::string& source = "GRADMASK") {
    ByteReader r(bytes, source);
    r.expect_magic("GRADMASK");
    r.expect_version(kFormatVersion);
    const std::uint32_t n = r.u32(), h = r.u32(), w = r.u32();
    const std::uint64_t count = detail::checked_count({n, h, w}, source);
    r.need_payload(count, 1);
    std::vector<std::uint8_t> cells(static_cast<std::size_t>(count));
    for (auto& v : cells) {
        v = r.u8();
        if (v > 1) throw Error(ErrorKind::data, source + ": mask value " + std::to_string(v) + " is not 0 or 1");
    }
    r.expect_end();
    return AnomalyMask(n, h, w, std::move(cells));
}

inline void write_maskfile(const AnomalyMask& m, const std::filesystem::path& path) {
    write_file_bytes(path, encode_maskfile(m));
}

inline AnomalyMask read_maskfile(const std::filesystem::path& path) {
    return decode_maskfile(read_file_bytes(path), path.string());
}

}  // namespace grad
