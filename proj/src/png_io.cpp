#include "toolplay/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <vector>

namespace toolplay {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { if (f) std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_png_impl(const std::string& path, const std::uint8_t* data, int width, int height,
                    int color_type, int channels) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw MissingArtifact("cannot open for write: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw MissingArtifact("png write failed: " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, width, height, 8, color_type, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(height);
    for (int y = 0; y < height; ++y)
        rows[y] = const_cast<png_bytep>(data + static_cast<size_t>(y) * width * channels);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

void read_png_impl(const std::string& path, std::vector<std::uint8_t>& out, int& width,
                   int& height, int want_channels) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw MissingArtifact("cannot open for read: " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw MissingArtifact("png read failed: " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);
    width = png_get_image_width(png, info);
    height = png_get_image_height(png, info);
    int bit_depth = png_get_bit_depth(png, info);
    int color_type = png_get_color_type(png, info);
    if (bit_depth == 16) png_set_strip_16(png);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (want_channels == 3) {
        if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
            png_set_gray_to_rgb(png);
        png_set_strip_alpha(png);
    } else {
        if (color_type == PNG_COLOR_TYPE_RGB || color_type == PNG_COLOR_TYPE_RGB_ALPHA ||
            color_type == PNG_COLOR_TYPE_PALETTE)
            png_set_rgb_to_gray_fixed(png, 1, -1, -1);
        png_set_strip_alpha(png);
    }
    png_read_update_info(png, info);
    out.resize(static_cast<size_t>(width) * height * want_channels);
    std::vector<png_bytep> rows(height);
    for (int y = 0; y < height; ++y)
        rows[y] = out.data() + static_cast<size_t>(y) * width * want_channels;
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);
}

}  // namespace

void write_png(const std::string& path, const ImageRgb8& img) {
    write_png_impl(path, img.data.data(), img.width, img.height, PNG_COLOR_TYPE_RGB, 3);
}

ImageRgb8 read_png(const std::string& path) {
    ImageRgb8 img;
    read_png_impl(path, img.data, img.width, img.height, 3);
    return img;
}

void write_png_gray(const std::string& path, const Plane<std::uint8_t>& img) {
    write_png_impl(path, img.data.data(), img.width, img.height, PNG_COLOR_TYPE_GRAY, 1);
}

Plane<std::uint8_t> read_png_gray(const std::string& path) {
    Plane<std::uint8_t> img;
    read_png_impl(path, img.data, img.width, img.height, 1);
    return img;
}

}  // namespace toolplay
