#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace coir {

// H x W x C float image, row-major, channel-minor, values in [0,1].
struct Image {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<float> data;

    static Image zeros(int h, int w, int c) {
        Image img;
        img.height = h;
        img.width = w;
        img.channels = c;
        img.data.assign(static_cast<std::size_t>(h) * w * c, 0.0f);
        return img;
    }

    float& at(int y, int x, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    float at(int y, int x, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }

    std::size_t numel() const { return data.size(); }
};

// Binary PPM (P6), 8 bits per channel. Pixel bytes b map to b / 255.0f.
Image read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Image& img);

// Raw float32 tensor file: magic "F32T", u32 version, u32 ndims,
// u32 dims[ndims], float32 little-endian payload.
Image read_f32t(const std::string& path);
void write_f32t(const std::string& path, const Image& img);

// Dispatch on format tag ("ppm" | "f32t").
Image read_image(const std::string& path, const std::string& format);
void write_image(const std::string& path, const std::string& format, const Image& img);

} // namespace coir
