#include "coir/image.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "coir/errors.hpp"

namespace coir {

namespace {

void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in, std::size_t& offset) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw FormatError("unexpected end of file reading u32", offset);
    offset += 4;
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

} // namespace

Image read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestionError("cannot open image file: " + path);
    std::string magic;
    in >> magic;
    if (magic != "P6") throw FormatError("not a P6 ppm: " + path, 0);
    int w = 0, h = 0, maxval = 0;
    in >> w >> h >> maxval;
    if (!in || w <= 0 || h <= 0 || maxval != 255)
        throw FormatError("bad ppm header in " + path, static_cast<std::size_t>(in.tellg()));
    in.get(); // single whitespace after maxval
    std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * h * 3);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (static_cast<std::size_t>(in.gcount()) != bytes.size())
        throw FormatError("truncated ppm payload in " + path,
                          static_cast<std::size_t>(in.gcount()));
    Image img = Image::zeros(h, w, 3);
    for (std::size_t i = 0; i < bytes.size(); ++i)
        img.data[i] = static_cast<float>(bytes[i]) / 255.0f;
    return img;
}

void write_ppm(const std::string& path, const Image& img) {
    if (img.channels != 3) throw ContractError("write_ppm: need 3 channels");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IngestionError("cannot write image file: " + path);
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> bytes(img.data.size());
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        float v = img.data[i];
        v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
        bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0f));
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Image read_f32t(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestionError("cannot open image file: " + path);
    std::size_t offset = 0;
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "F32T", 4) != 0)
        throw FormatError("bad f32t magic in " + path, 0);
    offset += 4;
    const std::uint32_t version = read_u32(in, offset);
    if (version != 1)
        throw FormatError("unsupported f32t version " + std::to_string(version), offset - 4);
    const std::uint32_t ndims = read_u32(in, offset);
    if (ndims != 3) throw FormatError("f32t image must have 3 dims", offset - 4);
    const int h = static_cast<int>(read_u32(in, offset));
    const int w = static_cast<int>(read_u32(in, offset));
    const int c = static_cast<int>(read_u32(in, offset));
    Image img = Image::zeros(h, w, c);
    in.read(reinterpret_cast<char*>(img.data.data()),
            static_cast<std::streamsize>(img.data.size() * sizeof(float)));
    if (static_cast<std::size_t>(in.gcount()) != img.data.size() * sizeof(float))
        throw FormatError("truncated f32t payload in " + path,
                          offset + static_cast<std::size_t>(in.gcount()));
    return img;
}

void write_f32t(const std::string& path, const Image& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IngestionError("cannot write image file: " + path);
    out.write("F32T", 4);
    write_u32(out, 1);
    write_u32(out, 3);
    write_u32(out, static_cast<std::uint32_t>(img.height));
    write_u32(out, static_cast<std::uint32_t>(img.width));
    write_u32(out, static_cast<std::uint32_t>(img.channels));
    out.write(reinterpret_cast<const char*>(img.data.data()),
              static_cast<std::streamsize>(img.data.size() * sizeof(float)));
}

Image read_image(const std::string& path, const std::string& format) {
    if (format == "ppm") return read_ppm(path);
    if (format == "f32t") return read_f32t(path);
    throw IngestionError("unknown image format tag: " + format);
}

void write_image(const std::string& path, const std::string& format, const Image& img) {
    if (format == "ppm") return write_ppm(path, img);
    if (format == "f32t") return write_f32t(path, img);
    throw IngestionError("unknown image format tag: " + format);
}

} // namespace coir
