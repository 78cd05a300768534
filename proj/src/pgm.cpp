#include "partialseg/pgm.hpp"

#include <fstream>
#include <string>

#include "partialseg/errors.hpp"

namespace partialseg {

void write_pgm(const std::filesystem::path& path, const PgmImage& image) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out << "P5\n" << image.width << " " << image.height << "\n" << image.maxval << "\n";
    if (image.maxval > 255) {
        for (std::uint16_t v : image.pixels) {
            out.put(static_cast<char>(v >> 8));
            out.put(static_cast<char>(v & 0xff));
        }
    } else {
        for (std::uint16_t v : image.pixels) out.put(static_cast<char>(v & 0xff));
    }
    if (!out) throw Error("short write to " + path.string());
}

namespace {

int next_token(std::istream& in, const std::filesystem::path& path) {
    // Skip whitespace and '#' comment lines between header tokens.
    int c = in.get();
    while (c != EOF && (std::isspace(c) || c == '#')) {
        if (c == '#')
            while (c != EOF && c != '\n') c = in.get();
        c = in.get();
    }
    if (c == EOF) throw CorruptFile(path.string() + ": truncated PGM header");
    int value = 0;
    bool any = false;
    while (c != EOF && std::isdigit(c)) {
        value = value * 10 + (c - '0');
        any = true;
        c = in.get();
    }
    if (!any) throw CorruptFile(path.string() + ": malformed PGM header token");
    return value;
}

}  // namespace

PgmImage read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CorruptFile("cannot open " + path.string());

    char magic[2] = {0, 0};
    in.read(magic, 2);
    if (!in || magic[0] != 'P' || magic[1] != '5')
        throw CorruptFile(path.string() + ": not a binary PGM file");

    PgmImage image;
    image.width = next_token(in, path);
    image.height = next_token(in, path);
    image.maxval = next_token(in, path);
    if (image.width <= 0 || image.height <= 0 || image.maxval <= 0 || image.maxval > 65535)
        throw CorruptFile(path.string() + ": invalid PGM dimensions");

    const std::size_t count = static_cast<std::size_t>(image.width) * image.height;
    image.pixels.resize(count);
    if (image.maxval > 255) {
        std::vector<char> raw(count * 2);
        in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
        if (static_cast<std::size_t>(in.gcount()) != raw.size())
            throw CorruptFile(path.string() + ": truncated PGM payload");
        for (std::size_t i = 0; i < count; ++i)
            image.pixels[i] = static_cast<std::uint16_t>(
                (static_cast<unsigned char>(raw[2 * i]) << 8) |
                static_cast<unsigned char>(raw[2 * i + 1]));
    } else {
        std::vector<char> raw(count);
        in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
        if (static_cast<std::size_t>(in.gcount()) != raw.size())
            throw CorruptFile(path.string() + ": truncated PGM payload");
        for (std::size_t i = 0; i < count; ++i)
            image.pixels[i] = static_cast<unsigned char>(raw[i]);
    }
    return image;
}

}  // namespace partialseg
