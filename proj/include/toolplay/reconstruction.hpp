#pragma once

#include <optional>
#include <vector>

#include "toolplay/render.hpp"

namespace toolplay {

// Per-pixel 3D points in the camera frame, up to an unknown per-view scale.
// Stands in for a pointmap-prediction network: back-projected ground-truth
// depth times a hidden scale, plus isotropic Gaussian noise. The gt_* fields
// are simulation-side ground truth used by the matcher analog and by test
// oracles only.
struct PointMap {
    int width = 0, height = 0;
    std::vector<Vec3> points;          // camera frame, scaled + noisy
    std::vector<Vec3> colors;          // [0,1]
    std::vector<std::uint8_t> valid;
    bool scale_known = false;
    CameraModel camera;

    std::vector<Vec3> gt_world;        // exact world-frame point per pixel
    double hidden_scale = 1.0;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;

    // marker-detector analog: exact fiducial centers, camera frame
    // (scaled + noisy like the rest of the map), and their subpixel locations
    std::vector<Vec3> fiducial_obs;
    std::vector<Eigen::Vector2d> fiducial_uv;

    size_t idx(int x, int y) const { return static_cast<size_t>(y) * width + x; }
};

struct Correspondence {
    int idx1 = 0, idx2 = 0;              // nearest-pixel linear indices
    Eigen::Vector2d uv1, uv2;            // subpixel pixel coordinates
    Vec3 p1, p2;                         // sampled camera-frame points per view
    double weight = 1.0;
    bool is_outlier = false;             // generation-side truth, for tests
};

struct FusedCloud {
    std::vector<Vec3> points;   // view-1 camera frame, metric meters
    std::vector<Vec3> colors;
    std::vector<int> source_view;
    Pose t_cam2_cam1;           // camera 2 expressed in camera 1
    double s1 = 1.0, s2 = 1.0;  // recovered per-view scales
    size_t inlier_count = 0;
};

// forced_scale pins the hidden per-view scale (tests, metric perception
// paths); otherwise it is drawn uniformly from [0.5, 2.0].
// fiducial_centers_world enables the marker-detector analog.
PointMap synth_pointmap(const RenderOutput& render, const CameraModel& camera,
                        double noise_sigma, std::uint64_t seed,
                        std::optional<double> forced_scale = std::nullopt,
                        const std::vector<Vec3>& fiducial_centers_world = {});

// Ground-truth matcher with injected outliers: (1-outlier_frac)*n true
// co-visible matches plus outlier_frac*n uniformly wrong ones.
std::vector<Correspondence> match(const PointMap& pm1, const PointMap& pm2, int n,
                                  double outlier_frac, std::uint64_t seed);

struct SimilarityTransform {
    double scale = 1.0;
    Rotation rotation;
    Vec3 translation = Vec3::Zero();

    Vec3 apply(const Vec3& p) const { return scale * rotation.rotate(p) + translation; }
};

// Closed-form least-squares similarity alignment (SVD with determinant-sign
// correction): minimizes sum ||dst_i - (s R src_i + t)||^2.
SimilarityTransform umeyama(const std::vector<Vec3>& src, const std::vector<Vec3>& dst,
                            bool with_scale);

struct RansacParams {
    int iters = 512;
    double inlier_tol = 0.005;  // meters
    std::uint64_t seed = 0;
};

// RANSAC over minimal 3-point umeyama hypotheses, final refit on the inlier
// set, metric rescale from the fiducial-triad edge lengths.
FusedCloud align_views(const PointMap& pm1, const PointMap& pm2,
                       const std::vector<Correspondence>& matches,
                       const RansacParams& ransac,
                       const std::vector<Vec3>& fiducial_model);

// Task->Camera calibration from the three fiducial observations of a metric
// pointmap (umeyama without scale onto the task-frame model points).
Pose camera_to_task(const std::vector<Vec3>& fiducial_obs_cam, const PointMap& pm,
                    const std::vector<Vec3>& fiducial_model);
inline Pose camera_to_task(const PointMap& pm, const std::vector<Vec3>& fiducial_model) {
    return camera_to_task(pm.fiducial_obs, pm, fiducial_model);
}

// Text export: one point per line "x y z r g b source_view", plus a metadata
// header file with recovered poses and scales.
void export_cloud(const FusedCloud& cloud, const std::string& points_path,
                  const std::string& meta_path);

}  // namespace toolplay
