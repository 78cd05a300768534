#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace partialseg {

// Minimal binary (P5) PGM codec. Images use maxval 65535 (big-endian words),
// masks maxval 255. Throws CorruptFile on malformed input.
struct PgmImage {
    int height = 0, width = 0;
    int maxval = 0;
    std::vector<std::uint16_t> pixels;  // row-major
};

void write_pgm(const std::filesystem::path& path, const PgmImage& image);
PgmImage read_pgm(const std::filesystem::path& path);

}  // namespace partialseg
