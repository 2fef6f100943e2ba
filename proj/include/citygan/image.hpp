#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "citygan/tensor.hpp"

namespace citygan {

class ImageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// 8-bit RGB raster, interleaved, row-major.
struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    RgbImage() = default;
    RgbImage(int w, int h, std::uint8_t fill = 0)
        : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, fill)
    {
    }

    std::uint8_t& at(int x, int y, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    std::uint8_t at(int x, int y, int c) const
    {
        return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }

    bool operator==(const RgbImage&) const = default;
};

/// Decodes PNG/JPEG (anything OpenCV reads). Grayscale is replicated to
/// three channels and alpha is dropped.
RgbImage decode_image(const std::filesystem::path& path);
RgbImage decode_image_bytes(const std::vector<std::uint8_t>& bytes);

std::vector<std::uint8_t> encode_png(const RgbImage& image);
void write_png(const std::filesystem::path& path, const RgbImage& image);

/// True if OpenCV recognises the file signature.
bool is_readable_image(const std::filesystem::path& path);

RgbImage resize_bilinear(const RgbImage& image, int width, int height);
RgbImage crop(const RgbImage& image, int x, int y, int width, int height);

/// [0, 255] -> [-1, 1]
inline float normalize_pixel(std::uint8_t v) { return static_cast<float>(v) / 127.5f - 1.0f; }

/// round((v + 1) * 127.5), clamped to [0, 255].
std::uint8_t denormalize_pixel(float v);

/// Writes an image into one (3, H, W) sample of a tensor, normalized.
void image_to_sample(const RgbImage& image, Tensor4<float>& out, Index n);

/// One (3, H, W) sample of a tensor as an 8-bit image.
RgbImage sample_to_image(const Tensor4<float>& t, Index n);

/// Tiles equally sized cells row by row, separated by a black border of
/// `border` pixels (also around the outside when border > 0).
RgbImage compose_grid(const std::vector<std::vector<RgbImage>>& rows, int border = 2);

} // namespace citygan
