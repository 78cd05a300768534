#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace partialseg {

// FNV-1a 64-bit; used for content hashes embedded in artifact headers.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 1469598103934665603ULL) {
    std::uint64_t hash = seed;
    for (unsigned char c : bytes) {
        hash ^= c;
        hash *= 1099511628211ULL;
    }
    return hash;
}

inline std::string hash_hex(std::uint64_t hash) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[i] = digits[hash & 0xf];
        hash >>= 4;
    }
    return out;
}

}  // namespace partialseg
