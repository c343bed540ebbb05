#pragma once

#include <string>

#include "toolplay/image.hpp"

namespace toolplay {

void write_png(const std::string& path, const ImageRgb8& img);
ImageRgb8 read_png(const std::string& path);

// 8-bit single-channel mask (external segmentation masks).
void write_png_gray(const std::string& path, const Plane<std::uint8_t>& img);
Plane<std::uint8_t> read_png_gray(const std::string& path);

}  // namespace toolplay
