#pragma once

#include <utility>

#include "toolplay/reconstruction.hpp"

namespace toolplay {

// Isotropic Gaussian splat; radius is the standard deviation in meters.
struct Splat {
    Vec3 center = Vec3::Zero();
    double radius = 1e-3;
    Vec3 color = Vec3::Zero();  // [0,1]
    double opacity = 0.9;
};

struct NovelViewSpec {
    double cap_deg = 20.0;      // spherical-cap half angle about the base viewpoint
    double radial_jitter = 0.10;
    int count = 6;              // novel views per base view
    std::uint64_t seed = 0;
};

// One splat per cloud point; radius = mean distance to the k nearest
// neighbors, clamped to [0.5 mm, 20 mm]; opacity fixed at 0.9.
std::vector<Splat> cloud_to_splats(const FusedCloud& cloud, int k);

struct SplatRender {
    ImageRgb8 rgb;
    Plane<std::uint8_t> coverage;  // 1 where accumulated alpha >= 0.5
};

// Depth-sorted front-to-back alpha compositing with a 2D Gaussian footprint
// per splat. `camera.pose` is expressed in the cloud's frame. Uncovered
// pixels get the background color. Input order does not affect the output.
SplatRender render_splats(const std::vector<Splat>& splats, const CameraModel& camera);

// Viewpoints on the spherical cap about the base position, centered on
// `look_at`; radius jittered by +-radial_jitter; orientations re-aimed at
// `look_at` by the minimal rotation from the base viewing direction (so a
// zero cap with zero jitter returns exact copies of the base camera).
std::vector<CameraModel> sample_novel_cameras(const CameraModel& base, const Vec3& look_at,
                                              const NovelViewSpec& spec);

// Uniform crop offset used by random_crop; exposed for distribution checks.
std::pair<int, int> crop_offset(int in_w, int in_h, int out_w, int out_h, std::uint64_t seed);

// Axis-aligned crop of out_w x out_h at a uniform random offset, bilinearly
// resized back to the input resolution. Throws DomainError when the crop
// exceeds the input.
ImageRgb8 random_crop(const ImageRgb8& img, int out_w, int out_h, std::uint64_t seed);

}  // namespace toolplay
