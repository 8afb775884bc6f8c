#pragma once

// Little-endian primitives shared by the EMBF and TMAP containers.

#include <array>
#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "error.hpp"

namespace seqembed::binio {

inline void put_u8(std::ostream & out, std::uint8_t v) {
    out.put(static_cast<char>(v));
}

inline void put_u32(std::ostream & out, std::uint32_t v) {
    std::array<char, 4> bytes{};
    for (int i = 0; i < 4; ++i) {
        bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
    }
    out.write(bytes.data(), bytes.size());
}

inline void put_f32(std::ostream & out, float v) {
    put_u32(out, std::bit_cast<std::uint32_t>(v));
}

inline void put_bytes(std::ostream & out, const std::string & s) {
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline void read_exact(std::istream & in, char * dst, std::size_t count, const char * what) {
    in.read(dst, static_cast<std::streamsize>(count));
    if (static_cast<std::size_t>(in.gcount()) != count) {
        fail(ErrorKind::Truncated, std::string("unexpected end of data while reading ") + what);
    }
}

inline std::uint8_t get_u8(std::istream & in, const char * what) {
    char c = 0;
    read_exact(in, &c, 1, what);
    return static_cast<std::uint8_t>(c);
}

inline std::uint32_t get_u32(std::istream & in, const char * what) {
    std::array<unsigned char, 4> bytes{};
    read_exact(in, reinterpret_cast<char *>(bytes.data()), 4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= static_cast<std::uint32_t>(bytes[i]) << (8 * i);
    }
    return v;
}

inline float get_f32(std::istream & in, const char * what) {
    return std::bit_cast<float>(get_u32(in, what));
}

inline std::string get_string(std::istream & in, std::size_t length, const char * what) {
    std::string s(length, '\0');
    if (length > 0) {
        read_exact(in, s.data(), length, what);
    }
    return s;
}

// Reads `count` floats in chunks so a lying header cannot force a huge allocation up front.
inline std::vector<float> get_f32_array(std::istream & in, std::size_t count, const char * what) {
    constexpr std::size_t chunk = 1u << 16;
    std::vector<float> values;
    values.reserve(count < chunk ? count : chunk);
    std::vector<unsigned char> buf;
    std::size_t remaining = count;
    while (remaining > 0) {
        const std::size_t take = remaining < chunk ? remaining : chunk;
        buf.resize(take * 4);
        read_exact(in, reinterpret_cast<char *>(buf.data()), buf.size(), what);
        for (std::size_t i = 0; i < take; ++i) {
            std::uint32_t v = 0;
            for (int b = 0; b < 4; ++b) {
                v |= static_cast<std::uint32_t>(buf[4 * i + b]) << (8 * b);
            }
            values.push_back(std::bit_cast<float>(v));
        }
        remaining -= take;
    }
    return values;
}

} // namespace seqembed::binio
