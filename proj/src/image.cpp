#include "uidiff/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

#include <fmt/format.h>
#include <jpeglib.h>
#include <png.h>

#include <csetjmp>

#include "uidiff/error.hpp"

namespace uidiff {

namespace fs = std::filesystem;

std::string to_hex(Rgb c) { return fmt::format("#{:02x}{:02x}{:02x}", c.r, c.g, c.b); }

Rgb rgb_from_hex(const std::string& hex) {
    if (hex.size() != 7 || hex[0] != '#' || hex.find_first_not_of("0123456789abcdefABCDEF", 1) != std::string::npos)
        throw Error(ErrorCode::InvalidArgument, "color must be #rrggbb: " + hex);
    const unsigned long v = std::stoul(hex.substr(1), nullptr, 16);
    return {static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 8), static_cast<std::uint8_t>(v)};
}

Image::Image(int width, int height, Rgb fill) : width_(width), height_(height) {
    if (width < 0 || height < 0) throw Error(ErrorCode::InvalidArgument, "negative image size");
    pixels_.resize(static_cast<size_t>(width) * static_cast<size_t>(height) * 3);
    for (size_t i = 0; i < pixels_.size(); i += 3) {
        pixels_[i] = fill.r;
        pixels_[i + 1] = fill.g;
        pixels_[i + 2] = fill.b;
    }
}

void Image::fill_rect(int x0, int y0, int x1, int y1, Rgb c) {
    x0 = std::clamp(x0, 0, width_);
    x1 = std::clamp(x1, 0, width_);
    y0 = std::clamp(y0, 0, height_);
    y1 = std::clamp(y1, 0, height_);
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) set(x, y, c);
}

Image Image::crop(int x0, int y0, int w, int h) const {
    if (x0 < 0 || y0 < 0 || w < 0 || h < 0 || x0 + w > width_ || y0 + h > height_)
        throw Error(ErrorCode::InvalidArgument, fmt::format("crop {}x{}+{}+{} outside {}x{}", w, h, x0, y0, width_, height_));
    Image out(w, h);
    for (int y = 0; y < h; ++y)
        std::memcpy(&out.pixels_[out.index(0, y)], &pixels_[index(x0, y0 + y)], static_cast<size_t>(w) * 3);
    return out;
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const fs::path& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) {
        const auto code = mode[0] == 'r' ? ErrorCode::CorruptImage : ErrorCode::IOFailure;
        throw Error(code, "cannot open " + path.string());
    }
    return f;
}

bool is_png_signature(const std::uint8_t* sig, size_t n) { return n >= 8 && png_sig_cmp(sig, 0, 8) == 0; }
bool is_jpeg_signature(const std::uint8_t* sig, size_t n) { return n >= 3 && sig[0] == 0xFF && sig[1] == 0xD8 && sig[2] == 0xFF; }

// ---- PNG ------------------------------------------------------------------

struct PngReadSource {
    const std::uint8_t* data;
    size_t size;
    size_t pos;
};

void png_read_from_memory(png_structp png, png_bytep out, png_size_t count) {
    auto* src = static_cast<PngReadSource*>(png_get_io_ptr(png));
    if (src->pos + count > src->size) png_error(png, "read past end");
    std::memcpy(out, src->data + src->pos, count);
    src->pos += count;
}

void png_error_fn(png_structp png, png_const_charp msg) {
    auto* err = static_cast<std::string*>(png_get_error_ptr(png));
    if (err) *err = msg;
    png_longjmp(png, 1);
}
void png_warning_fn(png_structp, png_const_charp) {}

Image decode_png_impl(const std::uint8_t* data, size_t size, const std::string& what) {
    std::string err;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
    if (!png) throw Error(ErrorCode::CorruptImage, what);
    png_infop info = png_create_info_struct(png);
    PngReadSource src{data, size, 0};
    // Heap-held so their state survives a longjmp out of libpng.
    auto img = std::make_unique<Image>();
    auto rows = std::make_unique<std::vector<png_bytep>>();
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error(ErrorCode::CorruptImage, what + ": " + err);
    }
    png_set_read_fn(png, &src, png_read_from_memory);
    png_read_info(png, info);
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);
    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    if (png_get_rowbytes(png, info) != static_cast<size_t>(w) * 3) png_error(png, "unexpected row layout");
    *img = Image(w, h);
    rows->resize(static_cast<size_t>(h));
    for (int y = 0; y < h; ++y) (*rows)[static_cast<size_t>(y)] = img->bytes().data() + static_cast<size_t>(y) * w * 3;
    png_read_image(png, rows->data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return std::move(*img);
}

void png_write_to_vector(png_structp png, png_bytep data, png_size_t len) {
    auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + len);
}
void png_flush_noop(png_structp) {}

// ---- JPEG -----------------------------------------------------------------

struct JpegErrorMgr {
    jpeg_error_mgr pub;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}
void jpeg_silent(j_common_ptr) {}

Image decode_jpeg_impl(const std::uint8_t* data, size_t size, const std::string& what, bool header_only) {
    jpeg_decompress_struct cinfo{};
    JpegErrorMgr jerr{};
    cinfo.err = jpeg_std_error(&jerr.pub);
    jerr.pub.error_exit = jpeg_error_exit;
    jerr.pub.output_message = jpeg_silent;
    auto img = std::make_unique<Image>();
    if (setjmp(jerr.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw Error(ErrorCode::CorruptImage, what + ": " + jerr.message);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, data, static_cast<unsigned long>(size));
    jpeg_read_header(&cinfo, TRUE);
    if (header_only) {
        *img = Image(static_cast<int>(cinfo.image_width), static_cast<int>(cinfo.image_height));
        jpeg_destroy_decompress(&cinfo);
        return std::move(*img);
    }
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    *img = Image(static_cast<int>(cinfo.output_width), static_cast<int>(cinfo.output_height));
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = img->bytes().data() + static_cast<size_t>(cinfo.output_scanline) * cinfo.output_width * 3;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return std::move(*img);
}

std::vector<std::uint8_t> slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::CorruptImage, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

Image read_image(const fs::path& path) {
    const auto data = slurp(path);
    if (is_png_signature(data.data(), data.size())) return decode_png_impl(data.data(), data.size(), path.string());
    if (is_jpeg_signature(data.data(), data.size()))
        return decode_jpeg_impl(data.data(), data.size(), path.string(), false);
    throw Error(ErrorCode::CorruptImage, path.string() + ": not a PNG or JPEG file");
}

std::array<int, 2> read_image_size(const fs::path& path) {
    const auto data = slurp(path);
    if (is_png_signature(data.data(), data.size())) {
        // IHDR is always the first chunk: width/height are big-endian at offsets 16 and 20.
        if (data.size() < 24) throw Error(ErrorCode::CorruptImage, path.string() + ": truncated PNG");
        auto be32 = [&](size_t o) {
            return static_cast<int>((static_cast<std::uint32_t>(data[o]) << 24) | (data[o + 1] << 16) |
                                    (data[o + 2] << 8) | data[o + 3]);
        };
        return {be32(16), be32(20)};
    }
    if (is_jpeg_signature(data.data(), data.size())) {
        auto img = decode_jpeg_impl(data.data(), data.size(), path.string(), true);
        return {img.width(), img.height()};
    }
    throw Error(ErrorCode::CorruptImage, path.string() + ": not a PNG or JPEG file");
}

Image decode_png(const std::vector<std::uint8_t>& data) {
    if (!is_png_signature(data.data(), data.size())) throw Error(ErrorCode::CorruptImage, "not a PNG stream");
    return decode_png_impl(data.data(), data.size(), "png stream");
}

std::vector<std::uint8_t> encode_png(const Image& img) {
    auto out = std::make_unique<std::vector<std::uint8_t>>();
    std::string err;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
    if (!png) throw Error(ErrorCode::IOFailure, "png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    auto rows = std::make_unique<std::vector<png_bytep>>(static_cast<size_t>(img.height()));
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error(ErrorCode::IOFailure, "png encode: " + err);
    }
    png_set_write_fn(png, out.get(), png_write_to_vector, png_flush_noop);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()), static_cast<png_uint_32>(img.height()), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < img.height(); ++y)
        (*rows)[static_cast<size_t>(y)] = const_cast<png_bytep>(img.bytes().data()) + static_cast<size_t>(y) * img.width() * 3;
    png_write_image(png, rows->data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return std::move(*out);
}

void write_png(const Image& img, const fs::path& path) {
    const auto data = encode_png(img);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IOFailure, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!out) throw Error(ErrorCode::IOFailure, "short write " + path.string());
}

void write_jpeg(const Image& img, const fs::path& path, int quality) {
    auto f = open_file(path, "wb");
    jpeg_compress_struct cinfo{};
    JpegErrorMgr jerr{};
    cinfo.err = jpeg_std_error(&jerr.pub);
    jerr.pub.error_exit = jpeg_error_exit;
    if (setjmp(jerr.jump)) {
        jpeg_destroy_compress(&cinfo);
        throw Error(ErrorCode::IOFailure, path.string() + ": " + jerr.message);
    }
    jpeg_create_compress(&cinfo);
    jpeg_stdio_dest(&cinfo, f.get());
    cinfo.image_width = static_cast<JDIMENSION>(img.width());
    cinfo.image_height = static_cast<JDIMENSION>(img.height());
    cinfo.input_components = 3;
    cinfo.in_color_space = JCS_RGB;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, quality, TRUE);
    jpeg_start_compress(&cinfo, TRUE);
    while (cinfo.next_scanline < cinfo.image_height) {
        JSAMPROW row = const_cast<JSAMPROW>(img.bytes().data()) + static_cast<size_t>(cinfo.next_scanline) * img.width() * 3;
        jpeg_write_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_compress(&cinfo);
    jpeg_destroy_compress(&cinfo);
}

Image resize_nearest(const Image& src, int width, int height) {
    Image out(width, height);
    for (int y = 0; y < height; ++y) {
        const int sy = std::min(src.height() - 1, static_cast<int>((static_cast<long>(y) * src.height()) / height));
        for (int x = 0; x < width; ++x) {
            const int sx = std::min(src.width() - 1, static_cast<int>((static_cast<long>(x) * src.width()) / width));
            out.set(x, y, src.at(sx, sy));
        }
    }
    return out;
}

Image resize_bilinear(const Image& src, int width, int height) {
    // Half-pixel-centre sampling. When shrinking by more than 2x, box-average first
    // so the result is not aliased.
    const Image* input = &src;
    Image reduced;
    const int fx = std::max(1, src.width() / (2 * width));
    const int fy = std::max(1, src.height() / (2 * height));
    if (fx > 1 || fy > 1) {
        reduced = Image(src.width() / fx, src.height() / fy);
        for (int y = 0; y < reduced.height(); ++y) {
            for (int x = 0; x < reduced.width(); ++x) {
                int acc[3] = {0, 0, 0};
                for (int dy = 0; dy < fy; ++dy)
                    for (int dx = 0; dx < fx; ++dx) {
                        const Rgb c = src.at(x * fx + dx, y * fy + dy);
                        acc[0] += c.r;
                        acc[1] += c.g;
                        acc[2] += c.b;
                    }
                const int n = fx * fy;
                reduced.set(x, y, {static_cast<std::uint8_t>((acc[0] + n / 2) / n), static_cast<std::uint8_t>((acc[1] + n / 2) / n),
                                   static_cast<std::uint8_t>((acc[2] + n / 2) / n)});
            }
        }
        input = &reduced;
    }

    const Image& in = *input;
    Image out(width, height);
    const double sx = static_cast<double>(in.width()) / width;
    const double sy = static_cast<double>(in.height()) / height;
    for (int y = 0; y < height; ++y) {
        const double fyp = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(in.height() - 1));
        const int y0 = static_cast<int>(fyp);
        const int y1 = std::min(y0 + 1, in.height() - 1);
        const double wy = fyp - y0;
        for (int x = 0; x < width; ++x) {
            const double fxp = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(in.width() - 1));
            const int x0 = static_cast<int>(fxp);
            const int x1 = std::min(x0 + 1, in.width() - 1);
            const double wx = fxp - x0;
            const Rgb a = in.at(x0, y0), b = in.at(x1, y0), c = in.at(x0, y1), d = in.at(x1, y1);
            auto lerp = [&](std::uint8_t pa, std::uint8_t pb, std::uint8_t pc, std::uint8_t pd) {
                const double top = pa + (pb - pa) * wx;
                const double bot = pc + (pd - pc) * wx;
                return static_cast<std::uint8_t>(std::clamp(std::lround(top + (bot - top) * wy), 0L, 255L));
            };
            out.set(x, y, {lerp(a.r, b.r, c.r, d.r), lerp(a.g, b.g, c.g, d.g), lerp(a.b, b.b, c.b, d.b)});
        }
    }
    return out;
}

}  // namespace uidiff
