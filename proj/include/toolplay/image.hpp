#pragma once

#include <cstdint>
#include <vector>

#include "toolplay/errors.hpp"

namespace toolplay {

// Interleaved 8-bit RGB image, row-major.
struct ImageRgb8 {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;  // height * width * 3

    ImageRgb8() = default;
    ImageRgb8(int w, int h, std::uint8_t fill = 0)
        : width(w), height(h), data(static_cast<size_t>(w) * h * 3, fill) {}

    std::uint8_t* px(int x, int y) { return &data[(static_cast<size_t>(y) * width + x) * 3]; }
    const std::uint8_t* px(int x, int y) const {
        return &data[(static_cast<size_t>(y) * width + x) * 3];
    }

    void set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
        auto* p = px(x, y);
        p[0] = r; p[1] = g; p[2] = b;
    }

    bool operator==(const ImageRgb8& o) const {
        return width == o.width && height == o.height && data == o.data;
    }
};

template <typename T>
struct Plane {
    int width = 0;
    int height = 0;
    std::vector<T> data;

    Plane() = default;
    Plane(int w, int h, T fill = T{})
        : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {}

    T& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
    const T& at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
};

using DepthMap = Plane<float>;      // meters, 0 = no hit
using InstanceMap = Plane<int16_t>; // instance ids, -1 = background

// Bilinear resize of an RGB image.
ImageRgb8 resize_bilinear(const ImageRgb8& src, int out_w, int out_h);

// Mean absolute per-channel difference, in 8-bit units.
double mean_abs_diff(const ImageRgb8& a, const ImageRgb8& b);

// Peak signal-to-noise ratio in dB (255 peak).
double psnr(const ImageRgb8& a, const ImageRgb8& b);

}  // namespace toolplay
