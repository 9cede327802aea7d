#pragma once

// Byte-level helpers shared by the binary formats. Internal header.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "weedout/errors.hpp"

namespace weedout::bytes {

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!out) throw Error("short write to " + path.string());
}

inline std::uint32_t read_be32(std::span<const std::uint8_t> b, std::size_t offset) {
    return (std::uint32_t{b[offset]} << 24) | (std::uint32_t{b[offset + 1]} << 16) |
           (std::uint32_t{b[offset + 2]} << 8) | std::uint32_t{b[offset + 3]};
}

inline void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

inline void put_le64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_le32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_f64(std::vector<std::uint8_t>& out, double v) {
    put_le64(out, std::bit_cast<std::uint64_t>(v));
}

inline void put_string(std::vector<std::uint8_t>& out, const std::string& s) {
    put_le32(out, static_cast<std::uint32_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
}

/// Little-endian cursor that reports the failing offset on truncation.
class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

    std::size_t offset() const noexcept { return pos_; }
    bool done() const noexcept { return pos_ == data_.size(); }

    std::span<const std::uint8_t> take(std::size_t n, const char* what) {
        if (data_.size() - pos_ < n) throw FormatError(pos_, std::string("truncated while reading ") + what);
        auto s = data_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    std::uint64_t le64(const char* what) {
        auto s = take(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t{s[i]} << (8 * i);
        return v;
    }
    std::uint32_t le32(const char* what) {
        auto s = take(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t{s[i]} << (8 * i);
        return v;
    }
    double f64(const char* what) { return std::bit_cast<double>(le64(what)); }
    std::string str(const char* what) {
        const std::uint32_t n = le32(what);
        auto s = take(n, what);
        return {s.begin(), s.end()};
    }

private:
    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

}  // namespace weedout::bytes
