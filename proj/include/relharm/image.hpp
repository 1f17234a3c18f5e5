#pragma once

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace relharm {

/// Planar (channel-major) float image. Layout matches the NCHW tensors used by
/// the networks, so a single image is a batch of one without copying.
struct Image {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> data;

    Image() = default;
    Image(int c, int h, int w, float fill = 0.0f)
        : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

    std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
    std::size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }

    float& at(int c, int y, int x) { return data[c * plane() + static_cast<std::size_t>(y) * width + x]; }
    float at(int c, int y, int x) const { return data[c * plane() + static_cast<std::size_t>(y) * width + x]; }

    bool same_shape(const Image& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }
};

/// Single-channel image used for alpha mattes.
using Mask = Image;

class ShapeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void require_same_shape(const Image& a, const Image& b, const char* what);

Image flip_horizontal(const Image& img);

/// Bilinear resize with edge clamping.
Image resize_bilinear(const Image& img, int out_h, int out_w);

/// [0,1] <-> [-1,1] affine maps used at the network boundary.
Image to_signed(const Image& img);
Image to_unit(const Image& img);
Image clamp01(Image img);

/// 8-bit PNG I/O. Values are clamped to [0,1] and rounded on write. Writing is
/// byte-deterministic for identical pixel data.
void write_png(const std::filesystem::path& path, const Image& img);
Image read_png(const std::filesystem::path& path);

/// Quantize through the 8-bit representation PNG files use, so in-memory
/// images can be compared with what a reader of the dataset would see.
Image quantize8(Image img);

}  // namespace relharm
