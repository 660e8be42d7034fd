#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include "balgrad/errors.hpp"

namespace balgrad::binio {

// Little-endian byte (de)serialization shared by the binary file formats,
// plus atomic file writes (temp + rename) so partially written artifacts
// never appear under their final name.

inline void append_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void append_u64(std::string& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void append_f64(std::string& buf, double v) {
    append_u64(buf, std::bit_cast<std::uint64_t>(v));
}

struct Reader {
    const std::string& buf;
    const char* context;
    std::size_t pos = 0;

    Reader(const std::string& b, const char* ctx) : buf(b), context(ctx) {}

    void need(std::size_t n) {
        if (buf.size() - pos < n) {
            throw FormatError(std::string(context) + ": unexpected end of file", buf.size());
        }
    }
    std::uint8_t read_u8() {
        need(1);
        return static_cast<std::uint8_t>(static_cast<unsigned char>(buf[pos++]));
    }
    std::uint32_t read_u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t read_u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    double read_f64() { return std::bit_cast<double>(read_u64()); }
};

inline void write_file_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw InvalidInput("cannot open for writing: " + tmp);
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw InvalidInput("write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::string& path, const char* context) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput(std::string("cannot open ") + context + ": " + path);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace balgrad::binio
