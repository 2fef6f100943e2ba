#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <string>

#include <unistd.h>

#include "citygan/checkpoint.hpp"
#include "citygan/dataset.hpp"
#include "citygan/image.hpp"

namespace citygan::testing {

class TempDir {
public:
    explicit TempDir(const std::string& tag = "citygan")
    {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline RgbImage solid_image(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b)
{
    RgbImage img(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            img.at(x, y, 0) = r;
            img.at(x, y, 1) = g;
            img.at(x, y, 2) = b;
        }
    }
    return img;
}

/// Pixel (x, y) encodes its own coordinates so crops and flips can be read back.
inline RgbImage coordinate_image(int w, int h)
{
    RgbImage img(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            img.at(x, y, 0) = static_cast<std::uint8_t>(x % 256);
            img.at(x, y, 1) = static_cast<std::uint8_t>(y % 256);
            img.at(x, y, 2) = static_cast<std::uint8_t>((x + 3 * y) % 256);
        }
    }
    return img;
}

inline void write_text(const std::filesystem::path& path, const std::string& text)
{
    std::filesystem::create_directories(path.parent_path());
    std::ofstream(path, std::ios::binary) << text;
}

/// Solid red and solid blue images in folder-per-class layout; red is class 0.
inline DatasetManifest red_blue_dataset(const std::filesystem::path& root, int size, int per_class)
{
    for (int i = 0; i < per_class; ++i) {
        std::filesystem::create_directories(root / "0_red");
        std::filesystem::create_directories(root / "1_blue");
        const std::string name = "img" + std::to_string(1000 + i) + ".png";
        write_png(root / "0_red" / name, solid_image(size, size, 255, 0, 0));
        write_png(root / "1_blue" / name, solid_image(size, size, 0, 0, 255));
    }
    return scan_dataset(root, DatasetLayout::FolderPerClass);
}

/// Untrained but fully valid checkpoint at a reduced width.
inline std::filesystem::path write_fixture_checkpoint(const std::filesystem::path& path,
                                                      const std::vector<std::string>& classes,
                                                      Variant variant = Variant::Broadcast, int size = 16)
{
    TrainConfig c;
    c.network = {variant, size, variant == Variant::Plain ? 0 : static_cast<int>(classes.size()), 16, 8};
    c.seed = 42;
    TrainState state = TrainState::initialize(c, classes);
    state.step = 1234;
    save_checkpoint(state, path);
    return path;
}

} // namespace citygan::testing
