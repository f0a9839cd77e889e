// Copyright Contributors to the Smoke-GS Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "smokegs/core/errors.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

namespace smokegs::binio {

/// Little-endian append helpers over a byte buffer.
inline void append_u32(std::string& out, uint32_t v) {
    const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                       static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.append(b, 4);
}

inline void append_u64(std::string& out, uint64_t v) {
    append_u32(out, static_cast<uint32_t>(v & 0xffffffffu));
    append_u32(out, static_cast<uint32_t>(v >> 32));
}

inline void append_f32_array(std::string& out, const std::vector<float>& v) {
    if constexpr (std::endian::native == std::endian::little) {
        out.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(float));
    } else {
        for (float f : v) {
            append_u32(out, std::bit_cast<uint32_t>(f));
        }
    }
}

inline uint32_t crc32_bytes(const char* data, size_t n) {
    uLong crc = crc32(0L, Z_NULL, 0);
    while (n > 0) {
        const uInt chunk = static_cast<uInt>(std::min<size_t>(n, 1u << 30));
        crc = crc32(crc, reinterpret_cast<const Bytef*>(data), chunk);
        data += chunk;
        n -= chunk;
    }
    return static_cast<uint32_t>(crc);
}

/// Little-endian cursor over an in-memory file image. Short reads raise
/// truncated_file_error.
class Reader {
  public:
    Reader(const char* data, size_t size) : data_(data), size_(size) {}

    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 3; i >= 0; --i) {
            v = (v << 8) | static_cast<uint8_t>(data_[off_ + i]);
        }
        off_ += 4;
        return v;
    }

    uint64_t u64() {
        const uint64_t lo = u32();
        const uint64_t hi = u32();
        return lo | (hi << 32);
    }

    void f32_array(std::vector<float>& out, size_t n) {
        need(n * sizeof(float));
        out.resize(n);
        if constexpr (std::endian::native == std::endian::little) {
            std::memcpy(out.data(), data_ + off_, n * sizeof(float));
            off_ += n * sizeof(float);
        } else {
            for (size_t i = 0; i < n; ++i) {
                out[i] = std::bit_cast<float>(u32());
            }
        }
    }

    void magic(const char* want, const char* what) {
        need(4);
        if (std::memcmp(data_ + off_, want, 4) != 0) {
            throw decode_error(std::string("not a ") + what + " (bad magic)");
        }
        off_ += 4;
    }

    size_t offset() const { return off_; }
    size_t remaining() const { return size_ - off_; }
    const char* at(size_t off) const { return data_ + off; }

  private:
    void need(size_t n) {
        if (size_ - off_ < n) {
            throw truncated_file_error("file ends early");
        }
    }

    const char* data_;
    size_t size_;
    size_t off_ = 0;
};

inline void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw io_error("cannot open for writing: " + path);
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
        throw io_error("short write: " + path);
    }
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw io_error("cannot open: " + path);
    }
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (!in.good() && !in.eof()) {
        throw io_error("read failure: " + path);
    }
    return bytes;
}

} // namespace smokegs::binio
