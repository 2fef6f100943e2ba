#include "citygan/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace citygan {

namespace {

RgbImage from_bgr(const cv::Mat& bgr)
{
    cv::Mat rgb;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    RgbImage out(rgb.cols, rgb.rows);
    for (int y = 0; y < rgb.rows; ++y) {
        std::copy_n(rgb.ptr<std::uint8_t>(y), static_cast<std::size_t>(rgb.cols) * 3,
                    out.pixels.begin() + static_cast<std::ptrdiff_t>(y) * rgb.cols * 3);
    }
    return out;
}

cv::Mat as_mat(const RgbImage& image)
{
    // const_cast is safe: the header is only used for reading
    return cv::Mat(image.height, image.width, CV_8UC3, const_cast<std::uint8_t*>(image.pixels.data()));
}

} // namespace

RgbImage decode_image(const std::filesystem::path& path)
{
    const cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (bgr.empty()) throw ImageError("cannot decode image: " + path.string());
    return from_bgr(bgr);
}

RgbImage decode_image_bytes(const std::vector<std::uint8_t>& bytes)
{
    const cv::Mat bgr = cv::imdecode(bytes, cv::IMREAD_COLOR);
    if (bgr.empty()) throw ImageError("cannot decode image bytes");
    return from_bgr(bgr);
}

std::vector<std::uint8_t> encode_png(const RgbImage& image)
{
    cv::Mat bgr;
    cv::cvtColor(as_mat(image), bgr, cv::COLOR_RGB2BGR);
    std::vector<std::uint8_t> bytes;
    if (!cv::imencode(".png", bgr, bytes)) throw ImageError("PNG encoding failed");
    return bytes;
}

void write_png(const std::filesystem::path& path, const RgbImage& image)
{
    const auto bytes = encode_png(image);
    std::ofstream os(path, std::ios::binary);
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw ImageError("cannot write " + path.string());
}

bool is_readable_image(const std::filesystem::path& path) { return cv::haveImageReader(path.string()); }

RgbImage resize_bilinear(const RgbImage& image, int width, int height)
{
    if (image.width == width && image.height == height) return image;
    cv::Mat resized;
    cv::resize(as_mat(image), resized, cv::Size(width, height), 0, 0, cv::INTER_LINEAR);
    RgbImage out(width, height);
    for (int y = 0; y < height; ++y) {
        std::copy_n(resized.ptr<std::uint8_t>(y), static_cast<std::size_t>(width) * 3,
                    out.pixels.begin() + static_cast<std::ptrdiff_t>(y) * width * 3);
    }
    return out;
}

RgbImage crop(const RgbImage& image, int x, int y, int width, int height)
{
    if (x < 0 || y < 0 || x + width > image.width || y + height > image.height) {
        throw ImageError("crop window outside image");
    }
    RgbImage out(width, height);
    for (int row = 0; row < height; ++row) {
        const auto src = image.pixels.begin() + (static_cast<std::ptrdiff_t>(y + row) * image.width + x) * 3;
        std::copy_n(src, static_cast<std::size_t>(width) * 3,
                    out.pixels.begin() + static_cast<std::ptrdiff_t>(row) * width * 3);
    }
    return out;
}

std::uint8_t denormalize_pixel(float v)
{
    const float scaled = std::round((v + 1.0f) * 127.5f);
    return static_cast<std::uint8_t>(std::clamp(scaled, 0.0f, 255.0f));
}

void image_to_sample(const RgbImage& image, Tensor4<float>& out, Index n)
{
    if (out.channels() != 3 || out.height() != image.height || out.width() != image.width) {
        throw ShapeError("image does not match tensor sample shape");
    }
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < image.height; ++y) {
            for (int x = 0; x < image.width; ++x) out(n, c, y, x) = normalize_pixel(image.at(x, y, c));
        }
    }
}

RgbImage sample_to_image(const Tensor4<float>& t, Index n)
{
    if (t.channels() != 3) throw ShapeError("expected a 3-channel tensor, got " + to_string(t.shape()));
    RgbImage out(static_cast<int>(t.width()), static_cast<int>(t.height()));
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < out.height; ++y) {
            for (int x = 0; x < out.width; ++x) out.at(x, y, c) = denormalize_pixel(t(n, c, y, x));
        }
    }
    return out;
}

RgbImage compose_grid(const std::vector<std::vector<RgbImage>>& rows, int border)
{
    if (rows.empty() || rows.front().empty()) return {};
    const int cell_w = rows.front().front().width;
    const int cell_h = rows.front().front().height;
    std::size_t cols = 0;
    for (const auto& r : rows) cols = std::max(cols, r.size());
    const int width = static_cast<int>(cols) * (cell_w + border) + border;
    const int height = static_cast<int>(rows.size()) * (cell_h + border) + border;
    RgbImage out(width, height, 0);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
            const RgbImage& cell = rows[r][c];
            if (cell.width != cell_w || cell.height != cell_h) throw ImageError("grid cells differ in size");
            const int ox = border + static_cast<int>(c) * (cell_w + border);
            const int oy = border + static_cast<int>(r) * (cell_h + border);
            for (int y = 0; y < cell_h; ++y) {
                std::copy_n(cell.pixels.begin() + static_cast<std::ptrdiff_t>(y) * cell_w * 3,
                            static_cast<std::size_t>(cell_w) * 3,
                            out.pixels.begin() + (static_cast<std::ptrdiff_t>(oy + y) * width + ox) * 3);
            }
        }
    }
    return out;
}

} // namespace citygan
