#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "nestfuse/error.hpp"

namespace nestfuse::detail {

static_assert(sizeof(float) == 4);

template <typename T>
T byteswap_if_big(T v) {
    if constexpr (std::endian::native == std::endian::big) {
        unsigned char b[sizeof(T)];
        std::memcpy(b, &v, sizeof(T));
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
        std::memcpy(&v, b, sizeof(T));
    }
    return v;
}

template <typename T>
void append_le(std::string &out, T v) {
    v = byteswap_if_big(v);
    char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    out.append(b, sizeof(T));
}

template <typename T>
T read_le(const std::string &buf, std::size_t &pos) {
    if (pos + sizeof(T) > buf.size()) fail(ErrorKind::kFormat, "unexpected end of binary data");
    T v;
    std::memcpy(&v, buf.data() + pos, sizeof(T));
    pos += sizeof(T);
    return byteswap_if_big(v);
}

inline std::string slurp(const std::filesystem::path &p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) fail(ErrorKind::kFormat, "cannot open '" + p.string() + "'");
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void spit(const std::filesystem::path &p, const std::string &bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::kFormat, "cannot write '" + p.string() + "'");
    out.write(bytes.data(), std::streamsize(bytes.size()));
    if (!out) fail(ErrorKind::kFormat, "short write to '" + p.string() + "'");
}

}  // namespace nestfuse::detail
