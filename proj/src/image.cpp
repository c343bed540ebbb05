#include "toolplay/image.hpp"

#include <algorithm>
#include <cmath>

namespace toolplay {

ImageRgb8 resize_bilinear(const ImageRgb8& src, int out_w, int out_h) {
    if (src.width == out_w && src.height == out_h) return src;
    ImageRgb8 out(out_w, out_h);
    const double sx = static_cast<double>(src.width) / out_w;
    const double sy = static_cast<double>(src.height) / out_h;
    for (int y = 0; y < out_h; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        int y0 = static_cast<int>(std::floor(fy));
        double wy = fy - y0;
        int y1 = std::min(y0 + 1, src.height - 1);
        y0 = std::max(y0, 0);
        for (int x = 0; x < out_w; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            int x0 = static_cast<int>(std::floor(fx));
            double wx = fx - x0;
            int x1 = std::min(x0 + 1, src.width - 1);
            x0 = std::max(x0, 0);
            const auto* p00 = src.px(x0, y0);
            const auto* p10 = src.px(x1, y0);
            const auto* p01 = src.px(x0, y1);
            const auto* p11 = src.px(x1, y1);
            auto* o = out.px(x, y);
            for (int c = 0; c < 3; ++c) {
                double v = (1 - wy) * ((1 - wx) * p00[c] + wx * p10[c]) +
                           wy * ((1 - wx) * p01[c] + wx * p11[c]);
                o[c] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
            }
        }
    }
    return out;
}

double mean_abs_diff(const ImageRgb8& a, const ImageRgb8& b) {
    if (a.width != b.width || a.height != b.height)
        throw LengthMismatch("mean_abs_diff: image sizes differ");
    if (a.data.empty()) return 0.0;
    double sum = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i)
        sum += std::abs(static_cast<int>(a.data[i]) - static_cast<int>(b.data[i]));
    return sum / a.data.size();
}

double psnr(const ImageRgb8& a, const ImageRgb8& b) {
    if (a.width != b.width || a.height != b.height)
        throw LengthMismatch("psnr: image sizes differ");
    double mse = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        double d = static_cast<int>(a.data[i]) - static_cast<int>(b.data[i]);
        mse += d * d;
    }
    mse /= a.data.size();
    if (mse == 0.0) return 99.0;
    return 10.0 * std::log10(255.0 * 255.0 / mse);
}

}  // namespace toolplay
