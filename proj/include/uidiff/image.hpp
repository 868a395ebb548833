#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace uidiff {

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;

    friend bool operator==(const Rgb&, const Rgb&) = default;
    friend auto operator<=>(const Rgb&, const Rgb&) = default;
};

std::string to_hex(Rgb c);
/// "#rrggbb"; throws InvalidArgument.
Rgb rgb_from_hex(const std::string& hex);

/// 8-bit interleaved RGB raster, row-major, no alpha.
class Image {
public:
    Image() = default;
    Image(int width, int height, Rgb fill = {});

    int width() const { return width_; }
    int height() const { return height_; }
    bool empty() const { return width_ == 0 || height_ == 0; }

    Rgb at(int x, int y) const {
        const auto* p = &pixels_[index(x, y)];
        return {p[0], p[1], p[2]};
    }
    void set(int x, int y, Rgb c) {
        auto* p = &pixels_[index(x, y)];
        p[0] = c.r;
        p[1] = c.g;
        p[2] = c.b;
    }
    void fill_rect(int x0, int y0, int x1, int y1, Rgb c);

    const std::vector<std::uint8_t>& bytes() const { return pixels_; }
    std::vector<std::uint8_t>& bytes() { return pixels_; }

    Image crop(int x0, int y0, int w, int h) const;

    friend bool operator==(const Image&, const Image&) = default;

private:
    size_t index(int x, int y) const {
        return (static_cast<size_t>(y) * static_cast<size_t>(width_) + static_cast<size_t>(x)) * 3;
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> pixels_;
};

/// Reads PNG or JPEG (by signature, not extension). Throws CorruptImage.
Image read_image(const std::filesystem::path& path);
/// Reads only the header to get dimensions. Throws CorruptImage.
std::array<int, 2> read_image_size(const std::filesystem::path& path);

void write_png(const Image& img, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_png(const Image& img);
Image decode_png(const std::vector<std::uint8_t>& data);
void write_jpeg(const Image& img, const std::filesystem::path& path, int quality = 90);

Image resize_bilinear(const Image& src, int width, int height);
Image resize_nearest(const Image& src, int width, int height);

}  // namespace uidiff
